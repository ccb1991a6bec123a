//! Object-level plans (FOONs): functional units of object-state transitions
//! and their JSON codification.
//!
//! A plan document looks like
//!
//! ```json
//! {
//!   "plan": [{
//!     "step": 1,
//!     "action": "pick and place",
//!     "required_objects": ["first block", "second block"],
//!     "object_states": {
//!       "first block": {"preconditions": ["under nothing", "on table"],
//!                       "effects": ["under second block", "on table"]},
//!       "second block": {"preconditions": ["under nothing", "on table"],
//!                        "effects": ["on first block", "under nothing"]}
//!     },
//!     "instruction": "Pick and place second block from table on first block."
//!   }]
//! }
//! ```
//!
//! Every state string is `"<relation> <object>"` with the relation drawn from
//! the closed vocabulary `in`, `on`, `under`, `contains`.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde::ser::{SerializeMap, Serializer};
use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

/// Distinguished state targets that never name a plan object.
pub const TABLE: &str = "table";
pub const NOTHING: &str = "nothing";
pub const AIR: &str = "air";

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FoonError {
    #[error("malformed JSON: {0}")]
    MalformedJson(String),
    #[error("schema violation at `{path}`: {message}")]
    SchemaViolation { path: String, message: String },
    #[error("unknown relation `{token}` at `{path}`")]
    UnknownRelation { path: String, token: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Relation {
    In,
    On,
    Under,
    Contains,
}

impl Relation {
    pub const ALL: [Relation; 4] = [Relation::In, Relation::On, Relation::Under, Relation::Contains];

    pub fn as_str(self) -> &'static str {
        match self {
            Relation::In => "in",
            Relation::On => "on",
            Relation::Under => "under",
            Relation::Contains => "contains",
        }
    }
}

impl fmt::Display for Relation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Relation {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "in" => Ok(Relation::In),
            "on" => Ok(Relation::On),
            "under" => Ok(Relation::Under),
            "contains" => Ok(Relation::Contains),
            _ => Err(s.to_string()),
        }
    }
}

/// One object state, e.g. `on table` or `under second block`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct StateRelation {
    pub relation: Relation,
    pub target: String,
}

impl StateRelation {
    pub fn new(relation: Relation, target: impl Into<String>) -> Self {
        StateRelation { relation, target: target.into() }
    }

    /// Parses `"<relation> <obj>"`. The object may contain spaces.
    pub fn parse(text: &str) -> Result<Self, StateParseError> {
        let text = text.trim();
        let (head, rest) = match text.split_once(char::is_whitespace) {
            Some((h, r)) => (h, r.trim()),
            None => (text, ""),
        };
        let relation = head.parse::<Relation>().map_err(StateParseError::UnknownRelation)?;
        if rest.is_empty() {
            return Err(StateParseError::MissingTarget);
        }
        Ok(StateRelation::new(relation, rest))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum StateParseError {
    UnknownRelation(String),
    MissingTarget,
}

impl fmt::Display for StateRelation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {}", self.relation, self.target)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ObjectNode {
    pub alias: String,
    pub states: Vec<StateRelation>,
    pub composition: Vec<String>,
}

impl ObjectNode {
    pub fn new(alias: impl Into<String>, states: Vec<StateRelation>) -> Self {
        ObjectNode { alias: alias.into(), states, composition: Vec::new() }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MotionNode {
    pub verb: String,
}

/// One object-level action: input object states, a motion, output states.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FunctionalUnit {
    pub step: u32,
    pub motion: MotionNode,
    pub required_objects: Vec<String>,
    pub inputs: BTreeMap<String, ObjectNode>,
    pub outputs: BTreeMap<String, ObjectNode>,
    pub instruction: String,
}

impl FunctionalUnit {
    /// Aliases in `required_objects` order.
    pub fn aliases(&self) -> impl Iterator<Item = &str> {
        self.required_objects.iter().map(String::as_str)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ObjectLevelPlan {
    pub task: String,
    pub units: Vec<FunctionalUnit>,
}

impl ObjectLevelPlan {
    /// Distinct aliases across all units, in first-appearance order.
    pub fn aliases(&self) -> Vec<String> {
        let mut seen = BTreeSet::new();
        let mut out = Vec::new();
        for unit in &self.units {
            for alias in unit.aliases() {
                if seen.insert(alias.to_string()) {
                    out.push(alias.to_string());
                }
            }
        }
        out
    }

    /// Step-by-step language rendering used when showing a plan as an example.
    pub fn instruction_lines(&self) -> Vec<String> {
        self.units.iter().map(|u| u.instruction.clone()).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum ViolationKind {
    StepSequence,
    EmptyVerb,
    EmptyAlias,
    EmptyTarget,
    DuplicateState,
    DuplicateComposition,
    ObjectKeyMismatch,
    DanglingTarget,
    ChainInconsistency,
    UnknownRelation,
    Schema,
}

/// An invariant violation. `unit` is the 0-based position in `units`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Violation {
    pub unit: Option<usize>,
    pub kind: ViolationKind,
    pub message: String,
}

impl Violation {
    fn at(unit: usize, kind: ViolationKind, message: String) -> Self {
        Violation { unit: Some(unit), kind, message }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.unit {
            Some(u) => write!(f, "step {}: {}", u + 1, self.message),
            None => f.write_str(&self.message),
        }
    }
}

fn is_reserved_target(target: &str) -> bool {
    matches!(target, TABLE | NOTHING | AIR)
}

/// Returns every invariant violation of `plan`; empty iff the plan is valid.
pub fn validate_olp(plan: &ObjectLevelPlan) -> Vec<Violation> {
    use ViolationKind::*;
    let mut out = Vec::new();

    for (i, unit) in plan.units.iter().enumerate() {
        let expected = i as u32 + 1;
        if unit.step != expected {
            out.push(Violation::at(i, StepSequence, format!("step is {} but should be {expected}", unit.step)));
        }
        if unit.motion.verb.trim().is_empty() {
            out.push(Violation::at(i, EmptyVerb, "action verb is empty".into()));
        }

        let mut required = BTreeSet::new();
        for alias in &unit.required_objects {
            if alias.trim().is_empty() {
                out.push(Violation::at(i, EmptyAlias, "required object with empty name".into()));
            }
            if !required.insert(alias.as_str()) {
                out.push(Violation::at(i, ObjectKeyMismatch, format!("`{alias}` listed twice in required_objects")));
            }
        }
        for (label, map) in [("preconditions", &unit.inputs), ("effects", &unit.outputs)] {
            let keys: BTreeSet<&str> = map.keys().map(String::as_str).collect();
            if keys != required {
                let missing: Vec<_> = required.difference(&keys).collect();
                let extra: Vec<_> = keys.difference(&required).collect();
                out.push(Violation::at(
                    i,
                    ObjectKeyMismatch,
                    format!("{label} objects do not match required_objects (missing {missing:?}, extra {extra:?})"),
                ));
            }
            for (key, node) in map {
                if node.alias != *key {
                    out.push(Violation::at(i, ObjectKeyMismatch, format!("node `{}` stored under key `{key}`", node.alias)));
                }
                let mut seen = BTreeSet::new();
                for state in &node.states {
                    if !seen.insert(state) {
                        out.push(Violation::at(i, DuplicateState, format!("`{key}` {label} repeat `{state}`")));
                    }
                    let target = state.target.trim();
                    if target.is_empty() {
                        out.push(Violation::at(i, EmptyTarget, format!("`{key}` has a `{}` state without object", state.relation)));
                    } else if !is_reserved_target(target) && !required.contains(target) {
                        out.push(Violation::at(
                            i,
                            DanglingTarget,
                            format!("`{key} {state}` refers to `{target}`, which is not a required object"),
                        ));
                    }
                }
                let mut parts = BTreeSet::new();
                for part in &node.composition {
                    if !parts.insert(part) {
                        out.push(Violation::at(i, DuplicateComposition, format!("`{key}` lists `{part}` twice in its composition")));
                    }
                }
            }
        }
    }

    for (i, pair) in plan.units.windows(2).enumerate() {
        let (before, after) = (&pair[0], &pair[1]);
        for (alias, produced) in &before.outputs {
            let Some(consumed) = after.inputs.get(alias) else { continue };
            for relation in Relation::ALL {
                let lhs = targets(produced, relation);
                let rhs = targets(consumed, relation);
                if !lhs.is_empty() && !rhs.is_empty() && lhs != rhs {
                    out.push(Violation::at(
                        i + 1,
                        ChainInconsistency,
                        format!(
                            "`{alias}` is `{relation} {}` after step {} but `{relation} {}` before step {}",
                            join(&lhs),
                            i + 1,
                            join(&rhs),
                            i + 2
                        ),
                    ));
                }
            }
        }
    }
    out
}

fn targets(node: &ObjectNode, relation: Relation) -> BTreeSet<&str> {
    node.states.iter().filter(|s| s.relation == relation).map(|s| s.target.as_str()).collect()
}

fn join(set: &BTreeSet<&str>) -> String {
    set.iter().copied().collect::<Vec<_>>().join(", ")
}

/// Parses a plan document. Extra fields are ignored with a logged warning.
pub fn parse_olp_json(text: &str) -> Result<ObjectLevelPlan, FoonError> {
    let (plan, warnings) = parse_olp_json_with_warnings(text)?;
    for w in warnings {
        log::warn!("{w}");
    }
    Ok(plan)
}

/// Like [`parse_olp_json`], returning the ignored-field warnings instead of logging them.
pub fn parse_olp_json_with_warnings(text: &str) -> Result<(ObjectLevelPlan, Vec<String>), FoonError> {
    let mut reader = Reader::strict();
    let plan = reader.document(text)?;
    Ok((plan, reader.warnings))
}

/// Collects every problem with a plan document, from unknown relation tokens
/// through chain inconsistencies, without stopping at the first one.
pub fn lint_olp_json(text: &str) -> Vec<Violation> {
    let mut reader = Reader::lenient();
    match reader.document(text) {
        Ok(plan) => {
            let mut out = reader.issues;
            out.extend(validate_olp(&plan));
            out
        }
        Err(err) => {
            let mut out = reader.issues;
            let kind = match err {
                FoonError::UnknownRelation { .. } => ViolationKind::UnknownRelation,
                _ => ViolationKind::Schema,
            };
            out.push(Violation { unit: None, kind, message: err.to_string() });
            out
        }
    }
}

struct Reader {
    lenient: bool,
    warnings: Vec<String>,
    issues: Vec<Violation>,
}

fn schema(path: impl Into<String>, message: impl Into<String>) -> FoonError {
    FoonError::SchemaViolation { path: path.into(), message: message.into() }
}

impl Reader {
    fn strict() -> Self {
        Reader { lenient: false, warnings: Vec::new(), issues: Vec::new() }
    }

    fn lenient() -> Self {
        Reader { lenient: true, ..Reader::strict() }
    }

    fn document(&mut self, text: &str) -> Result<ObjectLevelPlan, FoonError> {
        let cleaned = strip_trailing_commas(text);
        let root: Value = serde_json::from_str(&cleaned).map_err(|e| FoonError::MalformedJson(e.to_string()))?;
        let root = root.as_object().ok_or_else(|| schema("", "top level must be an object"))?;

        let mut task = String::new();
        for (key, value) in root {
            match key.as_str() {
                "plan" => {}
                "task" => {
                    task = value.as_str().ok_or_else(|| schema("task", "must be a string"))?.to_string();
                }
                other => self.warnings.push(format!("ignoring unknown field `{other}`")),
            }
        }
        let units = root
            .get("plan")
            .ok_or_else(|| schema("plan", "missing"))?
            .as_array()
            .ok_or_else(|| schema("plan", "must be an array"))?;

        let units = units
            .iter()
            .enumerate()
            .map(|(i, v)| self.unit(i, v))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(ObjectLevelPlan { task, units })
    }

    fn unit(&mut self, index: usize, value: &Value) -> Result<FunctionalUnit, FoonError> {
        let base = format!("plan[{index}]");
        let obj = value.as_object().ok_or_else(|| schema(&base, "must be an object"))?;
        for key in obj.keys() {
            if !matches!(key.as_str(), "step" | "action" | "required_objects" | "object_states" | "instruction") {
                self.warnings.push(format!("ignoring unknown field `{base}.{key}`"));
            }
        }

        let step = obj
            .get("step")
            .ok_or_else(|| schema(format!("{base}.step"), "missing"))?
            .as_u64()
            .filter(|s| *s >= 1 && *s <= u32::MAX as u64)
            .ok_or_else(|| schema(format!("{base}.step"), "must be a positive integer"))? as u32;
        let verb = obj
            .get("action")
            .ok_or_else(|| schema(format!("{base}.action"), "missing"))?
            .as_str()
            .ok_or_else(|| schema(format!("{base}.action"), "must be a string"))?
            .to_string();
        let required = string_list(obj.get("required_objects"), &format!("{base}.required_objects"))?;
        let instruction = match obj.get("instruction") {
            None => {
                self.warnings.push(format!("`{base}.instruction` missing; using empty instruction"));
                String::new()
            }
            Some(v) => v.as_str().ok_or_else(|| schema(format!("{base}.instruction"), "must be a string"))?.to_string(),
        };

        let states_path = format!("{base}.object_states");
        let states = obj
            .get("object_states")
            .ok_or_else(|| schema(&states_path, "missing"))?
            .as_object()
            .ok_or_else(|| schema(&states_path, "must be an object"))?;

        let keys: BTreeSet<&str> = states.keys().map(String::as_str).collect();
        let wanted: BTreeSet<&str> = required.iter().map(String::as_str).collect();
        if keys != wanted {
            let missing: Vec<_> = wanted.difference(&keys).collect();
            let extra: Vec<_> = keys.difference(&wanted).collect();
            return Err(schema(
                &states_path,
                format!("keys must equal required_objects (missing {missing:?}, extra {extra:?})"),
            ));
        }

        let mut inputs = BTreeMap::new();
        let mut outputs = BTreeMap::new();
        for (alias, entry) in states {
            let path = format!("{states_path}.{alias}");
            let entry = entry.as_object().ok_or_else(|| schema(&path, "must be an object"))?;
            for key in entry.keys() {
                if !matches!(key.as_str(), "preconditions" | "effects" | "composition") {
                    self.warnings.push(format!("ignoring unknown field `{path}.{key}`"));
                }
            }
            let pre = self.states(index, entry.get("preconditions"), &format!("{path}.preconditions"))?;
            let eff = self.states(index, entry.get("effects"), &format!("{path}.effects"))?;
            let (pre_parts, eff_parts) = match entry.get("composition") {
                None => (Vec::new(), Vec::new()),
                Some(c) => {
                    let cpath = format!("{path}.composition");
                    let c = c.as_object().ok_or_else(|| schema(&cpath, "must be an object"))?;
                    (
                        optional_list(c.get("preconditions"), &format!("{cpath}.preconditions"))?,
                        optional_list(c.get("effects"), &format!("{cpath}.effects"))?,
                    )
                }
            };
            inputs.insert(alias.clone(), ObjectNode { alias: alias.clone(), states: pre, composition: pre_parts });
            outputs.insert(alias.clone(), ObjectNode { alias: alias.clone(), states: eff, composition: eff_parts });
        }

        Ok(FunctionalUnit {
            step,
            motion: MotionNode { verb },
            required_objects: required,
            inputs,
            outputs,
            instruction,
        })
    }

    fn states(&mut self, unit: usize, value: Option<&Value>, path: &str) -> Result<Vec<StateRelation>, FoonError> {
        let mut out = Vec::new();
        for (j, text) in string_list(value, path)?.iter().enumerate() {
            match StateRelation::parse(text) {
                Ok(s) => out.push(s),
                Err(StateParseError::UnknownRelation(token)) => {
                    let err = FoonError::UnknownRelation { path: format!("{path}[{j}]"), token };
                    if !self.lenient {
                        return Err(err);
                    }
                    self.issues.push(Violation::at(unit, ViolationKind::UnknownRelation, err.to_string()));
                }
                Err(StateParseError::MissingTarget) => {
                    return Err(schema(format!("{path}[{j}]"), format!("`{text}` is not of the form \"<relation> <obj>\"")));
                }
            }
        }
        Ok(out)
    }
}

fn string_list(value: Option<&Value>, path: &str) -> Result<Vec<String>, FoonError> {
    let items = value
        .ok_or_else(|| schema(path, "missing"))?
        .as_array()
        .ok_or_else(|| schema(path, "must be an array of strings"))?;
    items
        .iter()
        .enumerate()
        .map(|(j, v)| v.as_str().map(str::to_string).ok_or_else(|| schema(format!("{path}[{j}]"), "must be a string")))
        .collect()
}

fn optional_list(value: Option<&Value>, path: &str) -> Result<Vec<String>, FoonError> {
    match value {
        None => Ok(Vec::new()),
        Some(_) => string_list(value, path),
    }
}

/// Drops commas that directly precede `}` or `]` outside of string literals.
fn strip_trailing_commas(text: &str) -> String {
    let chars: Vec<char> = text.chars().collect();
    let mut out = String::with_capacity(text.len());
    let mut in_string = false;
    let mut escaped = false;
    for (i, &c) in chars.iter().enumerate() {
        if in_string {
            out.push(c);
            if escaped {
                escaped = false;
            } else if c == '\\' {
                escaped = true;
            } else if c == '"' {
                in_string = false;
            }
            continue;
        }
        match c {
            '"' => {
                in_string = true;
                out.push(c);
            }
            ',' => {
                let next = chars[i + 1..].iter().find(|c| !c.is_whitespace());
                if !matches!(next, Some('}') | Some(']')) {
                    out.push(c);
                }
            }
            _ => out.push(c),
        }
    }
    out
}

struct WirePlan<'a>(&'a ObjectLevelPlan);
struct WireUnit<'a>(&'a FunctionalUnit);
struct WireStates<'a>(&'a FunctionalUnit);
struct WireEntry<'a>(Option<&'a ObjectNode>, Option<&'a ObjectNode>);
struct WireComposition<'a>(&'a [String], &'a [String]);

impl Serialize for WirePlan<'_> {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        let mut map = s.serialize_map(None)?;
        if !self.0.task.is_empty() {
            map.serialize_entry("task", &self.0.task)?;
        }
        let units: Vec<_> = self.0.units.iter().map(WireUnit).collect();
        map.serialize_entry("plan", &units)?;
        map.end()
    }
}

impl Serialize for WireUnit<'_> {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        let u = self.0;
        let mut map = s.serialize_map(Some(5))?;
        map.serialize_entry("step", &u.step)?;
        map.serialize_entry("action", &u.motion.verb)?;
        map.serialize_entry("required_objects", &u.required_objects)?;
        map.serialize_entry("object_states", &WireStates(u))?;
        map.serialize_entry("instruction", &u.instruction)?;
        map.end()
    }
}

impl Serialize for WireStates<'_> {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        let u = self.0;
        let mut map = s.serialize_map(Some(u.required_objects.len()))?;
        let mut done = BTreeSet::new();
        for alias in &u.required_objects {
            if done.insert(alias.as_str()) {
                map.serialize_entry(alias, &WireEntry(u.inputs.get(alias), u.outputs.get(alias)))?;
            }
        }
        map.end()
    }
}

fn composition<'a>(n: Option<&'a ObjectNode>) -> &'a [String] {
    n.map_or(&[], |n| n.composition.as_slice())
}

impl Serialize for WireEntry<'_> {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        let render = |n: Option<&ObjectNode>| -> Vec<String> {
            n.map(|n| n.states.iter().map(ToString::to_string).collect()).unwrap_or_default()
        };
        let mut map = s.serialize_map(None)?;
        map.serialize_entry("preconditions", &render(self.0))?;
        map.serialize_entry("effects", &render(self.1))?;
        let (pre, eff) = (composition(self.0), composition(self.1));
        if !pre.is_empty() || !eff.is_empty() {
            map.serialize_entry("composition", &WireComposition(pre, eff))?;
        }
        map.end()
    }
}

impl Serialize for WireComposition<'_> {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        let mut map = s.serialize_map(Some(2))?;
        map.serialize_entry("preconditions", self.0)?;
        map.serialize_entry("effects", self.1)?;
        map.end()
    }
}

/// Serializes a plan as a pretty-printed plan document.
pub fn serialize_olp(plan: &ObjectLevelPlan) -> String {
    serde_json::to_string_pretty(&WirePlan(plan)).expect("plan serialization is infallible")
}
