//! PDDL data model for the STRIPS + typing + negative-preconditions subset,
//! with a parser, a canonical printer, the built-in pick/place domain and
//! grounding to a propositional task.

mod builtin;
mod ground;
mod parse;
mod print;

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use builtin::{builtin_blockworld_domain, AIR, BLOCKWORLD_DOMAIN, HAND};
pub use ground::{ground, ground_with, FactSet, GroundAction, GroundingOptions, StripsTask};
pub use parse::{parse_domain, parse_goal, parse_problem};
pub use print::{print_domain, print_problem};

pub const OBJECT_TYPE: &str = "object";

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum PddlError {
    #[error("parse error at {line}:{col}: {message}")]
    Parse { line: usize, col: usize, message: String },
    #[error("unsupported requirement `{0}`")]
    UnsupportedRequirement(String),
    #[error("undeclared {kind} `{name}` in {context}")]
    UndeclaredSymbol { kind: &'static str, name: String, context: String },
    #[error("`{predicate}` expects {expected} arguments, found {found} in {context}")]
    ArityMismatch { predicate: String, expected: usize, found: usize, context: String },
    #[error("action `{0}` defined twice")]
    DuplicateAction(String),
    #[error("problem is for domain `{found}`, expected `{expected}`")]
    DomainMismatch { expected: String, found: String },
    #[error("initial state contains a negated atom {0}")]
    NegativeInit(Atom),
}

/// A predicate applied to object (or variable) names, e.g. `(on table b1)`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Atom {
    pub predicate: String,
    pub args: Vec<String>,
}

impl Atom {
    pub fn new<S: Into<String>>(predicate: impl Into<String>, args: impl IntoIterator<Item = S>) -> Self {
        Atom { predicate: predicate.into(), args: args.into_iter().map(Into::into).collect() }
    }

    /// Shorthand for binary atoms.
    pub fn binary(predicate: &str, a: &str, b: &str) -> Self {
        Atom::new(predicate, [a, b])
    }
}

impl fmt::Display for Atom {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}", self.predicate)?;
        for a in &self.args {
            write!(f, " {a}")?;
        }
        f.write_str(")")
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Literal {
    Pos(Atom),
    Neg(Atom),
}

impl Literal {
    pub fn atom(&self) -> &Atom {
        match self {
            Literal::Pos(a) | Literal::Neg(a) => a,
        }
    }

    pub fn is_positive(&self) -> bool {
        matches!(self, Literal::Pos(_))
    }
}

impl fmt::Display for Literal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Literal::Pos(a) => write!(f, "{a}"),
            Literal::Neg(a) => write!(f, "(not {a})"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TypedName {
    pub name: String,
    pub ty: String,
}

impl TypedName {
    pub fn new(name: impl Into<String>, ty: impl Into<String>) -> Self {
        TypedName { name: name.into(), ty: ty.into() }
    }

    pub fn object(name: impl Into<String>) -> Self {
        TypedName::new(name, OBJECT_TYPE)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PredicateDecl {
    pub name: String,
    pub params: Vec<TypedName>,
}

/// Literals of a precondition or effect, optionally headed by a comment line.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LiteralGroup {
    pub comment: Option<String>,
    pub literals: Vec<Literal>,
}

impl LiteralGroup {
    pub fn new(comment: Option<&str>, literals: Vec<Literal>) -> Self {
        LiteralGroup { comment: comment.map(str::to_string), literals }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ActionSchema {
    pub name: String,
    pub parameters: Vec<TypedName>,
    pub precondition: Vec<LiteralGroup>,
    pub effect: Vec<LiteralGroup>,
}

impl ActionSchema {
    pub fn precondition_literals(&self) -> impl Iterator<Item = &Literal> {
        self.precondition.iter().flat_map(|g| g.literals.iter())
    }

    pub fn effect_literals(&self) -> impl Iterator<Item = &Literal> {
        self.effect.iter().flat_map(|g| g.literals.iter())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Domain {
    pub name: String,
    pub requirements: Vec<String>,
    /// Declared types with their parent type.
    pub types: Vec<TypedName>,
    pub constants: Vec<TypedName>,
    pub predicates: Vec<PredicateDecl>,
    pub actions: Vec<ActionSchema>,
}

impl Domain {
    pub fn predicate(&self, name: &str) -> Option<&PredicateDecl> {
        self.predicates.iter().find(|p| p.name == name)
    }

    pub fn action(&self, name: &str) -> Option<&ActionSchema> {
        self.actions.iter().find(|a| a.name == name)
    }

    pub fn is_constant(&self, name: &str) -> bool {
        self.constants.iter().any(|c| c.name == name)
    }

    pub fn has_type(&self, ty: &str) -> bool {
        ty == OBJECT_TYPE || self.types.iter().any(|t| t.name == ty)
    }

    /// Whether `ty` equals `ancestor` or inherits from it.
    pub fn is_subtype(&self, ty: &str, ancestor: &str) -> bool {
        if ancestor == OBJECT_TYPE {
            return true;
        }
        let mut current = ty;
        for _ in 0..=self.types.len() {
            if current == ancestor {
                return true;
            }
            match self.types.iter().find(|t| t.name == current) {
                Some(t) if t.ty != current => current = &t.ty,
                _ => return false,
            }
        }
        false
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Problem {
    pub name: String,
    pub domain: String,
    pub objects: Vec<TypedName>,
    pub init: BTreeSet<Atom>,
    pub goal: Vec<Literal>,
}

impl Problem {
    pub fn has_object(&self, name: &str) -> bool {
        self.objects.iter().any(|o| o.name == name)
    }
}

/// One ground action of a plan, e.g. `(place b2 b1)`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ActionCall {
    pub name: String,
    pub args: Vec<String>,
}

impl ActionCall {
    pub fn new<S: Into<String>>(name: impl Into<String>, args: impl IntoIterator<Item = S>) -> Self {
        ActionCall { name: name.into(), args: args.into_iter().map(Into::into).collect() }
    }
}

impl fmt::Display for ActionCall {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}", self.name)?;
        for a in &self.args {
            write!(f, " {a}")?;
        }
        f.write_str(")")
    }
}
