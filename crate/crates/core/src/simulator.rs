//! Deterministic kinematic executor for pick/place plans, and task success
//! checks.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::grounding::{derive_predicates, support_map, GeomThresholds};
use crate::pddl::{ActionCall, Atom, AIR, HAND};
use crate::scene::{SceneObject, SceneState, Table, TABLE};

/// Edge length of the default cube blocks (m).
pub const BLOCK_SIZE: f64 = 0.05;
/// Gap added around the largest footprint when laying out table cells.
pub const CELL_MARGIN: f64 = 0.02;
/// Height of the hold pose above the table.
pub const HOLD_HEIGHT: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlockType {
    pub name: String,
    pub count: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum TaskSpec {
    Tower { height: u32 },
    Spelling { word: String },
    Organize { types: Vec<BlockType> },
}

impl TaskSpec {
    pub fn family(&self) -> &'static str {
        match self {
            TaskSpec::Tower { .. } => "tower",
            TaskSpec::Spelling { .. } => "spelling",
            TaskSpec::Organize { .. } => "organize",
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        match self {
            TaskSpec::Tower { height } if !(3..=7).contains(height) => {
                Err(format!("tower height {height} outside 3..=7"))
            }
            TaskSpec::Spelling { word } if word.is_empty() || !word.chars().all(|c| c.is_ascii_alphabetic()) => {
                Err(format!("word `{word}` must be non-empty ASCII letters"))
            }
            TaskSpec::Organize { types } if types.len() != 3 => {
                Err(format!("organize needs 3 block types, got {}", types.len()))
            }
            TaskSpec::Organize { types } if types.iter().any(|t| !(2..=4).contains(&t.count)) => {
                Err("organize instance counts must lie in 2..=4".into())
            }
            _ => Ok(()),
        }
    }

    /// Natural-language statement of the task.
    pub fn instruction(&self) -> String {
        match self {
            TaskSpec::Tower { height } => format!("Make a tower of {height} red blocks."),
            TaskSpec::Spelling { word } => {
                format!("Make a tower of letter blocks that spells the word {} from top to bottom.", word.to_uppercase())
            }
            TaskSpec::Organize { .. } => {
                "Organize the table by stacking all alike blocks into separate piles, one pile per block type.".into()
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Failure {
    HandOccupied,
    ObjectNotClear,
    NotOnSurface,
    OutOfWorkspace,
    NotHolding,
    SurfaceOccupied,
    NoFreeTableCell,
    UnknownObject,
    UnknownAction,
    MotionFailure,
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = serde_json::to_value(self).expect("unit variant");
        f.write_str(s.as_str().unwrap_or("failure"))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "status", content = "reason", rename_all = "lowercase")]
pub enum Outcome {
    Ok,
    Failed(Failure),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceStep {
    pub action: String,
    pub outcome: Outcome,
    pub scene_digest: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExecutionTrace {
    pub steps: Vec<TraceStep>,
    pub completed: bool,
    pub succeeded: bool,
    #[serde(skip)]
    pub final_scene: SceneState,
}

impl ExecutionTrace {
    /// JSON lines, one record per executed action.
    pub fn to_jsonl(&self) -> String {
        self.steps.iter().map(|s| serde_json::to_string(s).expect("trace step serializes") + "\n").collect()
    }
}

/// Executor settings. `motion_failure_rate` injects deterministic
/// pseudo-random motion failures keyed by `seed`, step and scene.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Simulator {
    pub thresholds: GeomThresholds,
    pub motion_failure_rate: f64,
    pub seed: u64,
}

impl Default for Simulator {
    fn default() -> Self {
        Simulator { thresholds: GeomThresholds::default(), motion_failure_rate: 0.0, seed: 0 }
    }
}

fn holds(atoms: &BTreeSet<Atom>, p: &str, a: &str, b: &str) -> bool {
    atoms.contains(&Atom::binary(p, a, b))
}

impl Simulator {
    fn derived(&self, scene: &SceneState) -> BTreeSet<Atom> {
        // Ambiguous geometry counts as "nothing derivable"
        derive_predicates(scene, &self.thresholds).unwrap_or_default()
    }

    pub fn apply_pick(&self, scene: &SceneState, obj: &str, surface: &str) -> Result<SceneState, Failure> {
        let Some(o) = scene.objects.get(obj) else {
            return Err(Failure::UnknownObject);
        };
        if surface != TABLE && !scene.objects.contains_key(surface) {
            return Err(Failure::UnknownObject);
        }
        let atoms = self.derived(scene);
        if !holds(&atoms, "in", HAND, AIR) {
            return Err(Failure::HandOccupied);
        }
        if !scene.table.workspace.contains(o.position[0], o.position[1]) {
            return Err(Failure::OutOfWorkspace);
        }
        if !holds(&atoms, "on", obj, AIR) {
            return Err(Failure::ObjectNotClear);
        }
        if !holds(&atoms, "on", surface, obj) || !holds(&atoms, "under", obj, surface) {
            return Err(Failure::NotOnSurface);
        }
        let mut next = scene.clone();
        let held = next.objects.get_mut(obj).expect("checked above");
        held.position[2] = scene.table.height + HOLD_HEIGHT;
        next.hand = Some(obj.to_string());
        Ok(next)
    }

    pub fn apply_place(&self, scene: &SceneState, obj: &str, surface: &str) -> Result<SceneState, Failure> {
        if !scene.objects.contains_key(obj) || (surface != TABLE && !scene.objects.contains_key(surface)) {
            return Err(Failure::UnknownObject);
        }
        if !scene.is_held(obj) {
            return Err(Failure::NotHolding);
        }
        let half = scene.objects[obj].half_height();
        let position = if surface == TABLE {
            let Some([x, y]) = free_table_cell(scene, obj) else {
                return Err(Failure::NoFreeTableCell);
            };
            [x, y, scene.table.height + half]
        } else {
            let atoms = self.derived(scene);
            if !holds(&atoms, "on", surface, AIR) {
                return Err(Failure::SurfaceOccupied);
            }
            let s = &scene.objects[surface];
            [s.position[0], s.position[1], s.top() + half]
        };
        let mut next = scene.clone();
        next.objects.get_mut(obj).expect("checked above").position = position;
        next.hand = None;
        Ok(next)
    }

    pub fn apply(&self, scene: &SceneState, action: &ActionCall) -> Result<SceneState, Failure> {
        match (action.name.as_str(), action.args.as_slice()) {
            ("pick", [o, s]) => self.apply_pick(scene, o, s),
            ("place", [o, s]) => self.apply_place(scene, o, s),
            _ => Err(Failure::UnknownAction),
        }
    }

    fn motion_fails(&self, step: usize, scene: &SceneState) -> bool {
        if self.motion_failure_rate <= 0.0 {
            return false;
        }
        let mut h = Sha256::new();
        h.update(self.seed.to_le_bytes());
        h.update((step as u64).to_le_bytes());
        h.update(scene.digest().as_bytes());
        let bytes: [u8; 8] = h.finalize()[..8].try_into().expect("digest is 32 bytes");
        let u = u64::from_le_bytes(bytes) as f64 / u64::MAX as f64;
        u < self.motion_failure_rate
    }

    /// Runs `plan` and stops at the first failing action.
    pub fn execute_plan(&self, scene: &SceneState, plan: &[ActionCall], spec: &TaskSpec) -> ExecutionTrace {
        let mut current = scene.clone();
        let mut steps = Vec::with_capacity(plan.len());
        let mut completed = true;
        for (i, action) in plan.iter().enumerate() {
            let result = if self.motion_fails(i, &current) {
                Err(Failure::MotionFailure)
            } else {
                self.apply(&current, action)
            };
            let outcome = match result {
                Ok(next) => {
                    current = next;
                    Outcome::Ok
                }
                Err(f) => {
                    completed = false;
                    Outcome::Failed(f)
                }
            };
            steps.push(TraceStep { action: action.to_string(), outcome, scene_digest: current.digest() });
            if !completed {
                break;
            }
        }
        let succeeded = completed && self.check_success(&current, spec);
        ExecutionTrace { steps, completed, succeeded, final_scene: current }
    }

    pub fn check_success(&self, scene: &SceneState, spec: &TaskSpec) -> bool {
        let Some(stacks) = table_stacks(scene, &self.thresholds) else {
            return false;
        };
        match spec {
            TaskSpec::Tower { height } => stacks.iter().any(|s| s.len() == *height as usize),
            TaskSpec::Spelling { word } => {
                let want: Vec<String> = word.chars().rev().map(|c| c.to_ascii_uppercase().to_string()).collect();
                stacks.iter().any(|s| {
                    s.len() == want.len()
                        && s.iter().zip(&want).all(|(id, l)| {
                            scene.objects[id].letter.as_deref().is_some_and(|x| x.eq_ignore_ascii_case(l))
                        })
                })
            }
            TaskSpec::Organize { .. } => {
                if scene.hand.is_some() {
                    return false;
                }
                let placed: usize = stacks.iter().map(Vec::len).sum();
                if placed != scene.objects.len() {
                    return false;
                }
                let mut kinds = BTreeSet::new();
                for s in &stacks {
                    let kind = &scene.objects[&s[0]].kind;
                    if s.iter().any(|id| &scene.objects[id].kind != kind) || !kinds.insert(kind.clone()) {
                        return false;
                    }
                }
                true
            }
        }
    }
}

pub fn apply_pick(scene: &SceneState, obj: &str, surface: &str) -> Result<SceneState, Failure> {
    Simulator::default().apply_pick(scene, obj, surface)
}

pub fn apply_place(scene: &SceneState, obj: &str, surface: &str) -> Result<SceneState, Failure> {
    Simulator::default().apply_place(scene, obj, surface)
}

pub fn execute_plan(scene: &SceneState, plan: &[ActionCall], spec: &TaskSpec) -> ExecutionTrace {
    Simulator::default().execute_plan(scene, plan, spec)
}

pub fn check_success(scene: &SceneState, spec: &TaskSpec) -> bool {
    Simulator::default().check_success(scene, spec)
}

/// Every maximal table-rooted stack, bottom first. `None` when the support
/// relation cannot be derived.
pub fn table_stacks(scene: &SceneState, thr: &GeomThresholds) -> Option<Vec<Vec<String>>> {
    let support = support_map(scene, thr).ok()?;
    let mut above: BTreeMap<&str, &str> = BTreeMap::new();
    for (upper, lower) in &support {
        if lower != TABLE {
            above.insert(lower, upper);
        }
    }
    let mut stacks = Vec::new();
    for (id, lower) in &support {
        if lower == TABLE {
            let mut stack = vec![id.clone()];
            let mut top = id.as_str();
            while let Some(&next) = above.get(top) {
                stack.push(next.to_string());
                top = next;
            }
            stacks.push(stack);
        }
    }
    Some(stacks)
}

/// Side length of one table cell for `scene`.
pub fn cell_size(scene: &SceneState) -> f64 {
    let widest = scene
        .objects
        .values()
        .map(|o| 2.0 * o.half_extents[0].max(o.half_extents[1]))
        .fold(BLOCK_SIZE, f64::max);
    widest + CELL_MARGIN
}

/// Cell centers over the workspace, row-major (y outer, x inner).
pub fn table_cells(table: &Table, cell: f64) -> Vec<[f64; 2]> {
    let ws = &table.workspace;
    let nx = ((ws.max[0] - ws.min[0]) / cell).floor() as usize;
    let ny = ((ws.max[1] - ws.min[1]) / cell).floor() as usize;
    let mut out = Vec::with_capacity(nx * ny);
    for j in 0..ny {
        for i in 0..nx {
            out.push([ws.min[0] + cell * (i as f64 + 0.5), ws.min[1] + cell * (j as f64 + 0.5)]);
        }
    }
    out
}

/// First cell whose square is not touched by any footprint other than `obj`'s.
pub fn free_table_cell(scene: &SceneState, obj: &str) -> Option<[f64; 2]> {
    let cell = cell_size(scene);
    let half = cell / 2.0;
    let footprints: Vec<[f64; 4]> = scene
        .objects
        .iter()
        .filter(|(id, _)| id.as_str() != obj && !scene.is_held(id))
        .map(|(_, o)| o.footprint())
        .collect();
    table_cells(&scene.table, cell).into_iter().find(|[cx, cy]| {
        footprints.iter().all(|[x0, y0, x1, y1]| *x1 <= cx - half || *x0 >= cx + half || *y1 <= cy - half || *y0 >= cy + half)
    })
}

/// A scene of cubes arranged as stacks, each listed bottom first, standing
/// on consecutive table cells. `kinds` maps ids to types ("block" if absent).
pub fn stacks_scene(stacks: &[Vec<String>], kinds: &BTreeMap<String, String>, table: Table) -> SceneState {
    let mut scene = SceneState::new(table);
    let half = BLOCK_SIZE / 2.0;
    let cells = table_cells(&scene.table, BLOCK_SIZE + CELL_MARGIN);
    for (stack, [x, y]) in stacks.iter().zip(cells) {
        for (level, id) in stack.iter().enumerate() {
            let kind = kinds.get(id).map_or("block", String::as_str);
            let z = scene.table.height + half + level as f64 * BLOCK_SIZE;
            scene.objects.insert(id.clone(), SceneObject::cube(kind, [x, y, z], half));
        }
    }
    scene
}
