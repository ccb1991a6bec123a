//! From geometry to object-centered predicates, and from functional units to
//! subgoal problems.
//!
//! `(on A B)` reads "B lies on top of A" and `(under B A)` "A is under B";
//! the virtual object `air` marks free space, so `(on X air)` means nothing
//! rests on X.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::foon::{self, FunctionalUnit, ObjectLevelPlan, Relation, StateRelation};
use crate::pddl::{Atom, Domain, Literal, Problem, TypedName, AIR, HAND};
use crate::scene::{SceneError, SceneObject, SceneState, TABLE};

#[derive(Debug, Error)]
pub enum GroundingError {
    #[error("alias `{0}` is not bound to a scene instance")]
    UnboundAlias(String),
    #[error("`{object}` touches several supports: {supports:?}")]
    AmbiguousSupport { object: String, supports: Vec<String> },
    #[error(transparent)]
    Scene(#[from] SceneError),
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum BindingError {
    #[error("aliases `{0}` and `{1}` are bound to the same instance `{2}`")]
    NotInjective(String, String, String),
    #[error("alias `{0}` is not bound")]
    Missing(String),
}

/// Alias (as written in an object-level plan) to scene instance id.
/// Always injective.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize)]
#[serde(transparent)]
pub struct AliasBinding(BTreeMap<String, String>);

impl AliasBinding {
    pub fn new(map: BTreeMap<String, String>) -> Result<Self, BindingError> {
        let mut seen: BTreeMap<&str, &str> = BTreeMap::new();
        for (alias, instance) in &map {
            if let Some(other) = seen.insert(instance, alias) {
                return Err(BindingError::NotInjective(other.to_string(), alias.clone(), instance.clone()));
            }
        }
        Ok(AliasBinding(map))
    }

    pub fn get(&self, alias: &str) -> Option<&str> {
        self.0.get(alias).map(String::as_str)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &str)> {
        self.0.iter().map(|(a, i)| (a.as_str(), i.as_str()))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Checks that every alias of `plan` is bound.
    pub fn check_total(&self, plan: &ObjectLevelPlan) -> Result<(), BindingError> {
        match plan.aliases().into_iter().find(|a| !self.0.contains_key(a)) {
            Some(a) => Err(BindingError::Missing(a)),
            None => Ok(()),
        }
    }
}

impl<'de> Deserialize<'de> for AliasBinding {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let map = BTreeMap::<String, String>::deserialize(d)?;
        AliasBinding::new(map).map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeomThresholds {
    /// Largest vertical gap (m) still counted as contact.
    pub contact_eps: f64,
    /// Fraction of the upper footprint that must overlap the lower one.
    pub support_overlap_min: f64,
}

impl Default for GeomThresholds {
    fn default() -> Self {
        GeomThresholds { contact_eps: 0.01, support_overlap_min: 0.5 }
    }
}

impl GeomThresholds {
    pub fn is_valid(&self) -> bool {
        self.contact_eps > 0.0 && self.support_overlap_min > 0.0 && self.support_overlap_min <= 1.0
    }
}

fn overlap_fraction(lower: &SceneObject, upper: &SceneObject) -> f64 {
    let [ax0, ay0, ax1, ay1] = lower.footprint();
    let [bx0, by0, bx1, by1] = upper.footprint();
    let w = (ax1.min(bx1) - ax0.max(bx0)).max(0.0);
    let h = (ay1.min(by1) - ay0.max(by0)).max(0.0);
    let area = (bx1 - bx0) * (by1 - by0);
    w * h / area
}

fn centroid_inside(lower: &SceneObject, upper: &SceneObject) -> bool {
    let [x0, y0, x1, y1] = lower.footprint();
    let [x, y, _] = upper.position;
    x >= x0 && x <= x1 && y >= y0 && y <= y1
}

fn supports(lower: &SceneObject, upper: &SceneObject, thr: &GeomThresholds) -> bool {
    (upper.bottom() - lower.top()).abs() <= thr.contact_eps
        && (overlap_fraction(lower, upper) >= thr.support_overlap_min || centroid_inside(lower, upper))
}

fn inside(container: &SceneObject, item: &SceneObject) -> bool {
    let [cx0, cy0, cx1, cy1] = container.footprint();
    let [ix0, iy0, ix1, iy1] = item.footprint();
    ix0 >= cx0 && iy0 >= cy0 && ix1 <= cx1 && iy1 <= cy1 && item.bottom() >= container.bottom() && item.top() <= container.top()
}

/// The support relation of a scene: `upper → lower` where lower is an
/// instance id or `table`. Held and contained objects have no entry.
pub fn support_map(scene: &SceneState, thr: &GeomThresholds) -> Result<BTreeMap<String, String>, GroundingError> {
    let contained = containment(scene);
    let free: Vec<(&String, &SceneObject)> = scene
        .objects
        .iter()
        .filter(|(id, _)| !scene.is_held(id) && !contained.contains_key(id.as_str()))
        .collect();
    let mut out = BTreeMap::new();
    for (id, upper) in &free {
        let mut found = Vec::new();
        if (upper.bottom() - scene.table.height).abs() <= thr.contact_eps {
            found.push(TABLE.to_string());
        }
        for (other, lower) in &free {
            if other != id && supports(lower, upper, thr) {
                found.push((*other).clone());
            }
        }
        match found.len() {
            0 => {}
            1 => {
                out.insert((*id).clone(), found.pop().unwrap());
            }
            _ => return Err(GroundingError::AmbiguousSupport { object: (*id).clone(), supports: found }),
        }
    }
    Ok(out)
}

/// `item → container` for objects lying inside a container's box.
fn containment(scene: &SceneState) -> BTreeMap<&str, &str> {
    let mut out = BTreeMap::new();
    for (cid, c) in scene.objects.iter().filter(|(id, o)| o.container && !scene.is_held(id)) {
        for (iid, item) in &scene.objects {
            if iid != cid && !scene.is_held(iid) && inside(c, item) {
                out.insert(iid.as_str(), cid.as_str());
            }
        }
    }
    out
}

/// Object-centered predicates holding in `scene`.
pub fn derive_predicates(scene: &SceneState, thr: &GeomThresholds) -> Result<BTreeSet<Atom>, GroundingError> {
    scene.validate()?;
    let mut atoms = BTreeSet::new();
    atoms.insert(Atom::binary("on", TABLE, AIR));

    let contained = containment(scene);
    for (item, container) in &contained {
        atoms.insert(Atom::binary("in", container, item));
    }

    let support = support_map(scene, thr)?;
    let mut covered: BTreeSet<&str> = BTreeSet::new();
    for (upper, lower) in &support {
        atoms.insert(Atom::binary("on", lower, upper));
        atoms.insert(Atom::binary("under", upper, lower));
        covered.insert(lower);
    }
    for id in scene.objects.keys() {
        if !scene.is_held(id) && !contained.contains_key(id.as_str()) && !covered.contains(id.as_str()) {
            atoms.insert(Atom::binary("on", id, AIR));
        }
    }

    match &scene.hand {
        Some(held) => {
            atoms.insert(Atom::binary("in", HAND, held));
            atoms.insert(Atom::binary("on", held, HAND));
            atoms.insert(Atom::binary("under", held, AIR));
        }
        None => {
            atoms.insert(Atom::binary("in", HAND, AIR));
        }
    }
    Ok(atoms)
}

enum Target<'a> {
    Nothing,
    Named(&'a str),
}

fn resolve<'a>(name: &str, binding: &'a AliasBinding) -> Result<Target<'a>, GroundingError> {
    match name {
        foon::NOTHING | foon::AIR => Ok(Target::Nothing),
        foon::TABLE => Ok(Target::Named(TABLE)),
        alias => binding.get(alias).map(Target::Named).ok_or_else(|| GroundingError::UnboundAlias(alias.to_string())),
    }
}

/// Predicates expressing one object state. `contains` is folded into `in`.
pub fn foon_state_to_literals(
    alias: &str,
    state: &StateRelation,
    binding: &AliasBinding,
) -> Result<BTreeSet<Atom>, GroundingError> {
    let x = match resolve(alias, binding)? {
        Target::Named(x) => x,
        Target::Nothing => return Ok(BTreeSet::new()),
    };
    let target = resolve(state.target.trim(), binding)?;
    let atoms = match (state.relation, target) {
        (Relation::On, Target::Named(t)) => vec![Atom::binary("on", t, x), Atom::binary("under", x, t)],
        (Relation::On, Target::Nothing) => vec![Atom::binary("under", x, AIR)],
        (Relation::Under, Target::Named(t)) => vec![Atom::binary("on", x, t), Atom::binary("under", t, x)],
        (Relation::Under, Target::Nothing) => vec![Atom::binary("on", x, AIR)],
        (Relation::In, Target::Named(t)) => vec![Atom::binary("in", t, x)],
        (Relation::In, Target::Nothing) => vec![],
        (Relation::Contains, Target::Named(t)) => vec![Atom::binary("in", x, t)],
        (Relation::Contains, Target::Nothing) => vec![Atom::binary("in", x, AIR)],
    };
    Ok(atoms.into_iter().collect())
}

/// An input state of a unit that does not hold in the initial state.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct PreconditionMismatch {
    pub alias: String,
    pub state: String,
    pub missing: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct SubgoalProblem {
    pub problem: Problem,
    pub warnings: Vec<PreconditionMismatch>,
}

fn unit_literals(
    nodes: &BTreeMap<String, foon::ObjectNode>,
    binding: &AliasBinding,
) -> Result<Vec<(String, StateRelation, BTreeSet<Atom>)>, GroundingError> {
    let mut out = Vec::new();
    for (alias, node) in nodes {
        for s in &node.states {
            out.push((alias.clone(), s.clone(), foon_state_to_literals(alias, s, binding)?));
        }
    }
    Ok(out)
}

/// Problem objects for a scene: every instance plus the table.
pub fn scene_objects(scene: &SceneState) -> Vec<String> {
    let mut v = scene.instance_ids();
    v.push(TABLE.to_string());
    v
}

/// Builds the subgoal problem of `unit` from an explicit symbolic state.
pub fn subgoal_problem_from_state(
    unit: &FunctionalUnit,
    binding: &AliasBinding,
    init: &BTreeSet<Atom>,
    objects: &[String],
    domain: &Domain,
) -> Result<SubgoalProblem, GroundingError> {
    for alias in unit.aliases() {
        if binding.get(alias).is_none() {
            return Err(GroundingError::UnboundAlias(alias.to_string()));
        }
    }
    let mut goal = BTreeSet::new();
    for (_, _, atoms) in unit_literals(&unit.outputs, binding)? {
        goal.extend(atoms);
    }
    let mut warnings = Vec::new();
    for (alias, state, atoms) in unit_literals(&unit.inputs, binding)? {
        let missing: Vec<String> = atoms.iter().filter(|a| !init.contains(a)).map(ToString::to_string).collect();
        if !missing.is_empty() {
            warnings.push(PreconditionMismatch { alias, state: state.to_string(), missing });
        }
    }
    for w in &warnings {
        log::warn!("step {}: `{} {}` does not hold initially ({})", unit.step, w.alias, w.state, w.missing.join(" "));
    }
    let problem = Problem {
        name: format!("subgoal-{}", unit.step),
        domain: domain.name.clone(),
        objects: objects.iter().map(TypedName::object).collect(),
        init: init.clone(),
        goal: goal.into_iter().map(Literal::Pos).collect(),
    };
    Ok(SubgoalProblem { problem, warnings })
}

/// Subgoal problem for `unit` with the initial state read off `scene`.
pub fn make_subgoal_problem(
    unit: &FunctionalUnit,
    binding: &AliasBinding,
    scene: &SceneState,
    domain: &Domain,
    thr: &GeomThresholds,
) -> Result<SubgoalProblem, GroundingError> {
    let init = derive_predicates(scene, thr)?;
    subgoal_problem_from_state(unit, binding, &init, &scene_objects(scene), domain)
}
