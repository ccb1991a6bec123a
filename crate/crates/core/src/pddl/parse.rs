use std::collections::BTreeSet;

use super::{
    ActionSchema, Atom, Domain, Literal, LiteralGroup, PddlError, PredicateDecl, Problem, TypedName,
};

const SUPPORTED_REQUIREMENTS: [&str; 3] = [":strips", ":typing", ":negative-preconditions"];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Pos {
    line: usize,
    col: usize,
}

#[derive(Debug, Clone)]
enum Sexp {
    List(Vec<Sexp>, Pos),
    Symbol(String, Pos),
    Comment(String, Pos),
}

impl Sexp {
    fn pos(&self) -> Pos {
        match self {
            Sexp::List(_, p) | Sexp::Symbol(_, p) | Sexp::Comment(_, p) => *p,
        }
    }

    fn symbol(&self) -> Option<&str> {
        match self {
            Sexp::Symbol(s, _) => Some(s),
            _ => None,
        }
    }
}

fn error(pos: Pos, message: impl Into<String>) -> PddlError {
    PddlError::Parse { line: pos.line, col: pos.col, message: message.into() }
}

/// Reads one s-expression. Symbols are lower-cased; comments are kept.
fn read(text: &str) -> Result<Sexp, PddlError> {
    let mut stack: Vec<(Vec<Sexp>, Pos)> = Vec::new();
    let mut result: Option<Sexp> = None;
    let mut chars = text.chars().peekable();
    let (mut line, mut col) = (1usize, 1usize);

    while let Some(c) = chars.next() {
        let here = Pos { line, col };
        if c == '\n' {
            line += 1;
            col = 1;
        } else {
            col += 1;
        }
        match c {
            c if c.is_whitespace() => {}
            ';' => {
                let mut comment = String::new();
                while let Some(&n) = chars.peek() {
                    if n == '\n' {
                        break;
                    }
                    comment.push(n);
                    chars.next();
                    col += 1;
                }
                let comment = comment.trim_start_matches(';').trim().to_string();
                if let Some((items, _)) = stack.last_mut() {
                    items.push(Sexp::Comment(comment, here));
                }
            }
            '(' => {
                if result.is_some() && stack.is_empty() {
                    return Err(error(here, "unexpected content after the closing parenthesis"));
                }
                stack.push((Vec::new(), here));
            }
            ')' => {
                let (items, start) = stack.pop().ok_or_else(|| error(here, "unbalanced `)`"))?;
                let list = Sexp::List(items, start);
                match stack.last_mut() {
                    Some((parent, _)) => parent.push(list),
                    None => result = Some(list),
                }
            }
            _ => {
                let mut sym = c.to_lowercase().to_string();
                while let Some(&n) = chars.peek() {
                    if n.is_whitespace() || n == '(' || n == ')' || n == ';' {
                        break;
                    }
                    sym.extend(n.to_lowercase());
                    chars.next();
                    col += 1;
                }
                match stack.last_mut() {
                    Some((items, _)) => items.push(Sexp::Symbol(sym, here)),
                    None => return Err(error(here, format!("unexpected `{sym}` outside of a list"))),
                }
            }
        }
    }
    if let Some((_, start)) = stack.last() {
        return Err(error(Pos { line, col }, format!("missing `)` for list opened at {}:{}", start.line, start.col)));
    }
    result.ok_or_else(|| error(Pos { line, col }, "empty input"))
}

/// Items of a list with comments dropped.
fn items(list: &[Sexp]) -> Vec<&Sexp> {
    list.iter().filter(|s| !matches!(s, Sexp::Comment(..))).collect()
}

fn expect_list<'a>(s: &'a Sexp, what: &str) -> Result<&'a [Sexp], PddlError> {
    match s {
        Sexp::List(items, _) => Ok(items),
        other => Err(error(other.pos(), format!("expected {what}"))),
    }
}

fn expect_symbol<'a>(s: &'a Sexp, what: &str) -> Result<&'a str, PddlError> {
    s.symbol().ok_or_else(|| error(s.pos(), format!("expected {what}")))
}

/// Splits `(define (<kind> NAME) sections...)`.
fn define<'a>(root: &'a Sexp, kind: &str) -> Result<(String, Vec<&'a Sexp>), PddlError> {
    let top = items(expect_list(root, "(define ...)")?);
    match top.first().and_then(|s| s.symbol()) {
        Some("define") => {}
        _ => return Err(error(root.pos(), "expected (define ...)")),
    }
    let header = top.get(1).ok_or_else(|| error(root.pos(), format!("missing ({kind} <name>)")))?;
    let header_items = items(expect_list(header, &format!("({kind} <name>)"))?);
    match header_items.as_slice() {
        [k, name] if k.symbol() == Some(kind) => Ok((expect_symbol(name, "a name")?.to_string(), top[2..].to_vec())),
        _ => Err(error(header.pos(), format!("expected ({kind} <name>)"))),
    }
}

fn section_keyword<'a>(section: &'a Sexp) -> Result<(&'a str, Vec<&'a Sexp>), PddlError> {
    let list = items(expect_list(section, "a section")?);
    let head = list.first().ok_or_else(|| error(section.pos(), "empty section"))?;
    let key = expect_symbol(head, "a section keyword")?;
    Ok((key, list[1..].to_vec()))
}

fn typed_list(items: &[&Sexp]) -> Result<Vec<TypedName>, PddlError> {
    let mut out = Vec::new();
    let mut pending: Vec<String> = Vec::new();
    let mut i = 0;
    while i < items.len() {
        let s = items[i];
        let sym = expect_symbol(s, "a name")?;
        if sym == "-" {
            let ty = items.get(i + 1).ok_or_else(|| error(s.pos(), "missing type after `-`"))?;
            let ty = match ty {
                Sexp::Symbol(t, _) => t.clone(),
                other => return Err(error(other.pos(), "unsupported type expression (either)")),
            };
            if pending.is_empty() {
                return Err(error(s.pos(), "`-` without names before it"));
            }
            out.extend(pending.drain(..).map(|n| TypedName::new(n, ty.clone())));
            i += 2;
        } else {
            pending.push(sym.to_string());
            i += 1;
        }
    }
    out.extend(pending.into_iter().map(TypedName::object));
    Ok(out)
}

fn requirements(items: &[&Sexp]) -> Result<Vec<String>, PddlError> {
    items
        .iter()
        .map(|s| {
            let r = expect_symbol(s, "a requirement")?;
            if SUPPORTED_REQUIREMENTS.contains(&r) {
                Ok(r.to_string())
            } else {
                Err(PddlError::UnsupportedRequirement(r.to_string()))
            }
        })
        .collect()
}

fn atom(s: &Sexp) -> Result<Atom, PddlError> {
    let list = items(expect_list(s, "an atom")?);
    let head = list.first().ok_or_else(|| error(s.pos(), "empty atom"))?;
    let pred = expect_symbol(head, "a predicate name")?;
    if matches!(pred, "and" | "or" | "not" | "imply" | "forall" | "exists" | "when" | "=" | "increase" | "decrease") {
        return Err(error(s.pos(), format!("unsupported construct `{pred}` in this position")));
    }
    let args = list[1..]
        .iter()
        .map(|a| expect_symbol(a, "an argument").map(str::to_string))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(Atom { predicate: pred.to_string(), args })
}

fn literal(s: &Sexp) -> Result<Literal, PddlError> {
    let list = items(expect_list(s, "a literal")?);
    match list.first().and_then(|h| h.symbol()) {
        Some("not") => match list.as_slice() {
            [_, inner] => Ok(Literal::Neg(atom(inner)?)),
            _ => Err(error(s.pos(), "`not` takes exactly one atom")),
        },
        _ => Ok(Literal::Pos(atom(s)?)),
    }
}

/// A conjunction of literals. Comments inside `(and ...)` start new groups.
fn conjunction(s: &Sexp) -> Result<Vec<LiteralGroup>, PddlError> {
    let list = expect_list(s, "a condition")?;
    let head = items(list).first().and_then(|h| h.symbol()).map(str::to_string);
    match head.as_deref() {
        None if items(list).is_empty() => Ok(Vec::new()),
        Some("and") => {
            let mut groups: Vec<LiteralGroup> = Vec::new();
            let mut seen_head = false;
            for item in list {
                match item {
                    Sexp::Comment(c, _) => groups.push(LiteralGroup { comment: Some(c.clone()), literals: Vec::new() }),
                    Sexp::Symbol(..) if !seen_head => seen_head = true,
                    other => {
                        let lit = literal(other)?;
                        match groups.last_mut() {
                            Some(g) => g.literals.push(lit),
                            None => groups.push(LiteralGroup { comment: None, literals: vec![lit] }),
                        }
                    }
                }
            }
            Ok(groups)
        }
        _ => Ok(vec![LiteralGroup { comment: None, literals: vec![literal(s)?] }]),
    }
}

/// Parses a bare goal condition such as `(and (on a b) (not (on b a)))`.
pub fn parse_goal(text: &str) -> Result<Vec<Literal>, PddlError> {
    let root = read(text)?;
    Ok(conjunction(&root)?.into_iter().flat_map(|g| g.literals).collect())
}

fn action(name_and_body: &[&Sexp], pos: Pos) -> Result<ActionSchema, PddlError> {
    let name = expect_symbol(name_and_body.first().ok_or_else(|| error(pos, "missing action name"))?, "an action name")?;
    let mut parameters = Vec::new();
    let mut precondition = Vec::new();
    let mut effect = Vec::new();
    let mut i = 1;
    while i < name_and_body.len() {
        let key = expect_symbol(name_and_body[i], "an action keyword")?;
        let value = name_and_body.get(i + 1).ok_or_else(|| error(name_and_body[i].pos(), format!("missing value for {key}")))?;
        match key {
            ":parameters" => parameters = typed_list(&items(expect_list(value, "a parameter list")?))?,
            ":precondition" => precondition = conjunction(value)?,
            ":effect" => effect = conjunction(value)?,
            other => return Err(error(name_and_body[i].pos(), format!("unsupported action keyword `{other}`"))),
        }
        i += 2;
    }
    Ok(ActionSchema { name: name.to_string(), parameters, precondition, effect })
}

/// Parses a domain definition and checks it for undeclared symbols.
pub fn parse_domain(text: &str) -> Result<Domain, PddlError> {
    let root = read(text)?;
    let (name, sections) = define(&root, "domain")?;
    let mut domain = Domain {
        name,
        requirements: Vec::new(),
        types: Vec::new(),
        constants: Vec::new(),
        predicates: Vec::new(),
        actions: Vec::new(),
    };
    for section in sections {
        let (key, body) = section_keyword(section)?;
        match key {
            ":requirements" => domain.requirements = requirements(&body)?,
            ":types" => domain.types = typed_list(&body)?,
            ":constants" => domain.constants = typed_list(&body)?,
            ":predicates" => {
                for p in body {
                    let list = items(expect_list(p, "a predicate declaration")?);
                    let head = list.first().ok_or_else(|| error(p.pos(), "empty predicate declaration"))?;
                    domain.predicates.push(PredicateDecl {
                        name: expect_symbol(head, "a predicate name")?.to_string(),
                        params: typed_list(&list[1..])?,
                    });
                }
            }
            ":action" => domain.actions.push(action(&body, section.pos())?),
            ":functions" | ":derived" | ":durative-action" | ":constraints" => {
                return Err(PddlError::UnsupportedRequirement(key.to_string()))
            }
            other => return Err(error(section.pos(), format!("unknown domain section `{other}`"))),
        }
    }
    check_domain(&domain)?;
    Ok(domain)
}

fn check_domain(domain: &Domain) -> Result<(), PddlError> {
    for t in domain.types.iter().chain(&domain.constants) {
        if !domain.has_type(&t.ty) {
            return Err(PddlError::UndeclaredSymbol { kind: "type", name: t.ty.clone(), context: "domain".into() });
        }
    }
    for p in &domain.predicates {
        for param in &p.params {
            if !domain.has_type(&param.ty) {
                let context = format!("predicate {}", p.name);
                return Err(PddlError::UndeclaredSymbol { kind: "type", name: param.ty.clone(), context });
            }
        }
    }
    let mut names = BTreeSet::new();
    for a in &domain.actions {
        if !names.insert(a.name.as_str()) {
            return Err(PddlError::DuplicateAction(a.name.clone()));
        }
        let context = format!("action {}", a.name);
        for p in &a.parameters {
            if !p.name.starts_with('?') {
                return Err(PddlError::UndeclaredSymbol { kind: "parameter", name: p.name.clone(), context });
            }
            if !domain.has_type(&p.ty) {
                return Err(PddlError::UndeclaredSymbol { kind: "type", name: p.ty.clone(), context });
            }
        }
        for lit in a.precondition_literals().chain(a.effect_literals()) {
            check_atom(domain, lit.atom(), &context, |arg| {
                if arg.starts_with('?') {
                    a.parameters.iter().any(|p| p.name == arg)
                } else {
                    domain.is_constant(arg)
                }
            })?;
        }
    }
    Ok(())
}

fn check_atom(domain: &Domain, atom: &Atom, context: &str, known: impl Fn(&str) -> bool) -> Result<(), PddlError> {
    let decl = domain.predicate(&atom.predicate).ok_or_else(|| PddlError::UndeclaredSymbol {
        kind: "predicate",
        name: atom.predicate.clone(),
        context: context.to_string(),
    })?;
    if decl.params.len() != atom.args.len() {
        return Err(PddlError::ArityMismatch {
            predicate: atom.predicate.clone(),
            expected: decl.params.len(),
            found: atom.args.len(),
            context: context.to_string(),
        });
    }
    for arg in &atom.args {
        if !known(arg) {
            let kind = if arg.starts_with('?') { "variable" } else { "object" };
            return Err(PddlError::UndeclaredSymbol { kind, name: arg.clone(), context: context.to_string() });
        }
    }
    Ok(())
}

/// Parses a problem definition against `domain`.
pub fn parse_problem(text: &str, domain: &Domain) -> Result<Problem, PddlError> {
    let root = read(text)?;
    let (name, sections) = define(&root, "problem")?;
    let mut problem = Problem { name, domain: String::new(), objects: Vec::new(), init: BTreeSet::new(), goal: Vec::new() };
    let mut saw_goal = false;
    for section in sections {
        let (key, body) = section_keyword(section)?;
        match key {
            ":domain" => match body.as_slice() {
                [name] => problem.domain = expect_symbol(name, "a domain name")?.to_string(),
                _ => return Err(error(section.pos(), "expected (:domain <name>)")),
            },
            ":requirements" => {
                requirements(&body)?;
            }
            ":objects" => problem.objects = typed_list(&body)?,
            ":init" => {
                for item in body {
                    match literal(item)? {
                        Literal::Pos(a) => {
                            problem.init.insert(a);
                        }
                        Literal::Neg(a) => return Err(PddlError::NegativeInit(a)),
                    }
                }
            }
            ":goal" => {
                let [cond] = body.as_slice() else {
                    return Err(error(section.pos(), "expected exactly one goal condition"));
                };
                problem.goal = conjunction(cond)?.into_iter().flat_map(|g| g.literals).collect();
                saw_goal = true;
            }
            ":metric" | ":constraints" => return Err(PddlError::UnsupportedRequirement(key.to_string())),
            other => return Err(error(section.pos(), format!("unknown problem section `{other}`"))),
        }
    }
    if !saw_goal {
        return Err(error(root.pos(), "problem has no (:goal ...)"));
    }
    if problem.domain != domain.name {
        return Err(PddlError::DomainMismatch { expected: domain.name.clone(), found: problem.domain.clone() });
    }
    check_problem(&problem, domain)?;
    Ok(problem)
}

pub(super) fn check_problem(problem: &Problem, domain: &Domain) -> Result<(), PddlError> {
    for o in &problem.objects {
        if !domain.has_type(&o.ty) {
            return Err(PddlError::UndeclaredSymbol { kind: "type", name: o.ty.clone(), context: "objects".into() });
        }
    }
    let known = |arg: &str| problem.has_object(arg) || domain.is_constant(arg);
    for a in &problem.init {
        check_atom(domain, a, "init", known)?;
    }
    for l in &problem.goal {
        check_atom(domain, l.atom(), "goal", known)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pddl::builtin_blockworld_domain;

    #[test]
    fn reports_position_of_unbalanced_input() {
        let err = read("(define (problem p)\n  (:domain d)\n").unwrap_err();
        assert!(matches!(err, PddlError::Parse { line: 3, .. }), "{err:?}");
        let err = read("(a))").unwrap_err();
        assert!(matches!(err, PddlError::Parse { line: 1, col: 4, .. }), "{err:?}");
    }

    #[test]
    fn rejects_unsupported_requirements_and_constructs() {
        let d = "(define (domain x) (:requirements :strips :adl))";
        assert_eq!(parse_domain(d), Err(PddlError::UnsupportedRequirement(":adl".into())));
        let d = "(define (domain x) (:predicates (p ?a)) (:action a :parameters (?a) :precondition (or (p ?a)) :effect (p ?a)))";
        assert!(matches!(parse_domain(d), Err(PddlError::Parse { .. })));
    }

    #[test]
    fn undeclared_goal_object() {
        let domain = builtin_blockworld_domain();
        let p = "(define (problem p) (:domain blockworld) (:objects b1 table)
                 (:init (on table b1)) (:goal (on table ghost_block)))";
        match parse_problem(p, &domain) {
            Err(PddlError::UndeclaredSymbol { kind, name, .. }) => {
                assert_eq!(kind, "object");
                assert_eq!(name, "ghost_block");
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn negative_init_and_arity() {
        let domain = builtin_blockworld_domain();
        let p = "(define (problem p) (:domain blockworld) (:objects b1) (:init (not (on b1 air))) (:goal (and)))";
        assert!(matches!(parse_problem(p, &domain), Err(PddlError::NegativeInit(_))));
        let p = "(define (problem p) (:domain blockworld) (:objects b1) (:init (on b1)) (:goal (and)))";
        assert!(matches!(parse_problem(p, &domain), Err(PddlError::ArityMismatch { .. })));
        let p = "(define (problem p) (:domain other) (:objects b1) (:init) (:goal (and)))";
        assert!(matches!(parse_problem(p, &domain), Err(PddlError::DomainMismatch { .. })));
    }

    #[test]
    fn typed_lists() {
        let domain = parse_domain(
            "(define (domain t) (:requirements :strips :typing) (:types block - object)
             (:predicates (on ?x ?y - object)) )",
        )
        .unwrap();
        assert_eq!(domain.types, vec![TypedName::new("block", "object")]);
        assert_eq!(domain.predicates[0].params, vec![TypedName::object("?x"), TypedName::object("?y")]);
        assert!(domain.is_subtype("block", "object"));
        assert!(!domain.is_subtype("object", "block"));
    }

    #[test]
    fn goal_text() {
        let g = parse_goal("(and (on a b) (not (under b a)))").unwrap();
        assert_eq!(g, vec![Literal::Pos(Atom::binary("on", "a", "b")), Literal::Neg(Atom::binary("under", "b", "a"))]);
        assert_eq!(parse_goal("(on a b)").unwrap().len(), 1);
    }
}
