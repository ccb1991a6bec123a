use std::fmt::Write;

use super::{Domain, LiteralGroup, Problem, TypedName};

/// `a b - t1 c - t2`, grouping consecutive names of one type.
fn grouped(names: &[TypedName]) -> String {
    let mut parts: Vec<String> = Vec::new();
    let mut i = 0;
    while i < names.len() {
        let ty = &names[i].ty;
        let mut j = i;
        while j < names.len() && names[j].ty == *ty {
            parts.push(names[j].name.clone());
            j += 1;
        }
        parts.push(format!("- {ty}"));
        i = j;
    }
    parts.join(" ")
}

fn individually(names: &[TypedName]) -> String {
    names.iter().map(|n| format!("{} - {}", n.name, n.ty)).collect::<Vec<_>>().join(" ")
}

/// Writes `(and ...)` with one literal per line; the closing paren of the
/// `and` is appended to the last line.
fn conjunction(out: &mut String, groups: &[LiteralGroup], indent: &str) {
    let mut lines: Vec<String> = Vec::new();
    for g in groups {
        if let Some(c) = &g.comment {
            lines.push(format!("{indent}; {c}"));
        }
        for l in &g.literals {
            lines.push(format!("{indent}{l}"));
        }
    }
    // a trailing comment would swallow the closing paren
    if lines.last().is_some_and(|l| l.trim_start().starts_with(';')) {
        lines.push(indent.to_string());
    }
    if lines.is_empty() {
        out.push_str("(and)");
        return;
    }
    out.push_str("(and\n");
    out.push_str(&lines.join("\n"));
    out.push(')');
}

/// Canonical domain text. Parsing the result yields the same [`Domain`].
pub fn print_domain(domain: &Domain) -> String {
    let mut out = String::new();
    writeln!(out, "(define (domain {})", domain.name).unwrap();
    if !domain.requirements.is_empty() {
        writeln!(out, "  (:requirements {})", domain.requirements.join(" ")).unwrap();
    }
    if !domain.types.is_empty() {
        writeln!(out, "  (:types {})", grouped(&domain.types)).unwrap();
    }
    if !domain.constants.is_empty() {
        writeln!(out, "  (:constants {})", grouped(&domain.constants)).unwrap();
    }
    if !domain.predicates.is_empty() {
        out.push_str("  (:predicates");
        for p in &domain.predicates {
            if p.params.is_empty() {
                write!(out, "\n    ({})", p.name).unwrap();
            } else {
                write!(out, "\n    ({} {})", p.name, individually(&p.params)).unwrap();
            }
        }
        out.push_str(")\n");
    }
    for a in &domain.actions {
        writeln!(out, "  (:action {}", a.name).unwrap();
        writeln!(out, "    :parameters ({})", individually(&a.parameters)).unwrap();
        out.push_str("    :precondition ");
        conjunction(&mut out, &a.precondition, "      ");
        out.push_str("\n    :effect ");
        conjunction(&mut out, &a.effect, "      ");
        out.push_str(")\n");
    }
    out.push_str(")\n");
    out
}

/// Canonical problem text. Init atoms are printed in sorted order.
pub fn print_problem(problem: &Problem) -> String {
    let mut out = String::new();
    writeln!(out, "(define (problem {})", problem.name).unwrap();
    writeln!(out, "  (:domain {})", problem.domain).unwrap();
    if problem.objects.is_empty() {
        out.push_str("  (:objects)\n");
    } else {
        writeln!(out, "  (:objects {})", grouped(&problem.objects)).unwrap();
    }
    if problem.init.is_empty() {
        out.push_str("  (:init)\n");
    } else {
        out.push_str("  (:init");
        for a in &problem.init {
            write!(out, "\n    {a}").unwrap();
        }
        out.push_str(")\n");
    }
    out.push_str("  (:goal ");
    let group = LiteralGroup { comment: None, literals: problem.goal.clone() };
    conjunction(&mut out, std::slice::from_ref(&group), "    ");
    out.push_str(")\n)\n");
    out
}
