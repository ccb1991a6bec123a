//! Optimal forward search over grounded STRIPS tasks, and chaining of
//! per-unit plan segments into a full task plan.

use std::cmp::Reverse;
use std::collections::hash_map::Entry;
use std::collections::{BTreeSet, BinaryHeap, HashMap, HashSet, VecDeque};
use std::fmt;
use std::time::Instant;

use serde::Serialize;
use thiserror::Error;

use crate::foon::ObjectLevelPlan;
use crate::grounding::{scene_objects, subgoal_problem_from_state, AliasBinding, GeomThresholds, GroundingError, PreconditionMismatch};
use crate::pddl::{ground, ActionCall, Atom, Domain, FactSet, StripsTask};
use crate::scene::SceneState;

/// States explored by [`bfs_oracle`] before giving up.
pub const ORACLE_STATE_LIMIT: usize = 1_000_000;

#[derive(Debug, Error)]
pub enum PlannerError {
    #[error("no plan for the subgoal of unit {0}")]
    SubgoalUnsolvable(usize),
    #[error("state space exceeds {0} states")]
    StateSpaceTooLarge(usize),
    #[error(transparent)]
    Grounding(#[from] GroundingError),
}

#[derive(Debug, Error, PartialEq, Eq)]
#[error("line {line}: {message}")]
pub struct PlanTextError {
    pub line: usize,
    pub message: String,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct SearchStats {
    pub expanded: u64,
    pub generated: u64,
    pub wall_time_s: f64,
}

impl SearchStats {
    pub fn absorb(&mut self, other: &SearchStats) {
        self.expanded += other.expanded;
        self.generated += other.generated;
        self.wall_time_s += other.wall_time_s;
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct PlanSegment {
    /// Index of the functional unit this segment solves.
    pub unit: usize,
    pub actions: Vec<ActionCall>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct Plan {
    pub segments: Vec<PlanSegment>,
}

impl Plan {
    pub fn cost(&self) -> usize {
        self.segments.iter().map(|s| s.actions.len()).sum()
    }

    pub fn actions(&self) -> Vec<ActionCall> {
        self.segments.iter().flat_map(|s| s.actions.iter().cloned()).collect()
    }
}

impl fmt::Display for Plan {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&format_plan(&self.actions()))
    }
}

/// One action per line.
pub fn format_plan(actions: &[ActionCall]) -> String {
    actions.iter().map(|a| format!("{a}\n")).collect()
}

/// Reads `(name arg ...)` lines. Blank lines and `;` comments are skipped.
pub fn parse_plan_text(text: &str) -> Result<Vec<ActionCall>, PlanTextError> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split(';').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let err = |m: &str| PlanTextError { line: i + 1, message: m.to_string() };
        let inner = line
            .strip_prefix('(')
            .and_then(|l| l.strip_suffix(')'))
            .ok_or_else(|| err("expected `(name arg ...)`"))?;
        let mut words = inner.split_whitespace().map(str::to_lowercase);
        let name = words.next().ok_or_else(|| err("empty action"))?;
        out.push(ActionCall { name, args: words.collect() });
    }
    Ok(out)
}

/// A goal-distance estimate; `None` means the goal is unreachable.
pub trait Heuristic {
    fn estimate(&self, task: &StripsTask, state: &FactSet) -> Option<u32>;
}

/// Max-cost over the delete relaxation.
#[derive(Debug, Clone, Copy, Default)]
pub struct HMax;

impl Heuristic for HMax {
    fn estimate(&self, task: &StripsTask, state: &FactSet) -> Option<u32> {
        hmax(state, task)
    }
}

/// Always zero: turns A* into uniform-cost search.
#[derive(Debug, Clone, Copy, Default)]
pub struct Blind;

impl Heuristic for Blind {
    fn estimate(&self, _: &StripsTask, _: &FactSet) -> Option<u32> {
        Some(0)
    }
}

pub fn hmax(state: &FactSet, task: &StripsTask) -> Option<u32> {
    if state.contains_all(&task.goal) {
        return Some(0);
    }
    let mut cost: Vec<Option<u32>> = (0..task.facts.len()).map(|i| state.contains(i).then_some(0)).collect();
    loop {
        let mut changed = false;
        for a in &task.actions {
            let mut pre_cost = 0;
            let mut reachable = true;
            for &p in &a.pre {
                match cost[p] {
                    Some(c) => pre_cost = pre_cost.max(c),
                    None => {
                        reachable = false;
                        break;
                    }
                }
            }
            if !reachable {
                continue;
            }
            let c = pre_cost + a.cost;
            for &f in &a.add {
                if cost[f].is_none_or(|old| c < old) {
                    cost[f] = Some(c);
                    changed = true;
                }
            }
        }
        if !changed {
            break;
        }
    }
    task.goal.iter().try_fold(0, |acc, &g| cost[g].map(|c| acc.max(c)))
}

/// Landmark-cut: sums costs of disjunctive action landmarks found by
/// repeated h_max cuts. Admissible and at least as strong as h_max.
#[derive(Debug, Clone, Copy, Default)]
pub struct LmCut;

impl Heuristic for LmCut {
    fn estimate(&self, task: &StripsTask, state: &FactSet) -> Option<u32> {
        lmcut(state, task)
    }
}

const INF: u32 = u32::MAX;

pub fn lmcut(state: &FactSet, task: &StripsTask) -> Option<u32> {
    if state.contains_all(&task.goal) {
        return Some(0);
    }
    // Fact `n` is an artificial start fact (precondition of actions with
    // none), fact `n + 1` the artificial goal reached by a zero-cost action.
    let n = task.facts.len();
    let (start, goal) = (n, n + 1);
    let mut pre: Vec<Vec<usize>> = task
        .actions
        .iter()
        .map(|a| {
            let mut p = a.pre.clone();
            p.sort_unstable();
            p.dedup();
            if p.is_empty() {
                p.push(start);
            }
            p
        })
        .collect();
    let mut add: Vec<&[usize]> = task.actions.iter().map(|a| a.add.as_slice()).collect();
    let mut cost: Vec<u32> = task.actions.iter().map(|a| a.cost).collect();
    let mut goal_pre = task.goal.clone();
    goal_pre.sort_unstable();
    goal_pre.dedup();
    pre.push(goal_pre);
    let goal_add = [goal];
    add.push(&goal_add);
    cost.push(0);

    let mut pre_of: Vec<Vec<usize>> = vec![Vec::new(); n + 2];
    for (a, p) in pre.iter().enumerate() {
        for &f in p {
            pre_of[f].push(a);
        }
    }
    let init: Vec<usize> = state.iter().chain(std::iter::once(start)).collect();

    let mut total = 0u32;
    let mut hv = vec![INF; n + 2];
    let mut unsat = vec![0usize; pre.len()];
    let mut heap = BinaryHeap::new();
    loop {
        hv.fill(INF);
        for (a, p) in pre.iter().enumerate() {
            unsat[a] = p.len();
        }
        for &f in &init {
            hv[f] = 0;
            heap.push(Reverse((0u32, f)));
        }
        while let Some(Reverse((c, f))) = heap.pop() {
            if c > hv[f] {
                continue;
            }
            for &a in &pre_of[f] {
                unsat[a] -= 1;
                if unsat[a] == 0 {
                    let next = c + cost[a];
                    for &g in add[a] {
                        if next < hv[g] {
                            hv[g] = next;
                            heap.push(Reverse((next, g)));
                        }
                    }
                }
            }
        }
        if hv[goal] == INF {
            return None;
        }
        if hv[goal] == 0 {
            return Some(total);
        }

        // Precondition choice: the costliest precondition of each reachable action.
        let pcf: Vec<Option<usize>> = pre
            .iter()
            .map(|p| {
                if p.iter().any(|&f| hv[f] == INF) {
                    None
                } else {
                    p.iter().copied().max_by_key(|&f| hv[f])
                }
            })
            .collect();

        let mut zone = vec![false; n + 2];
        zone[goal] = true;
        let mut stack = vec![goal];
        let mut achievers: Vec<Vec<usize>> = vec![Vec::new(); n + 2];
        for (a, p) in pcf.iter().enumerate() {
            if p.is_some() && cost[a] == 0 {
                for &g in add[a] {
                    achievers[g].push(a);
                }
            }
        }
        while let Some(f) = stack.pop() {
            for &a in &achievers[f] {
                let p = pcf[a].expect("achiever is reachable");
                if !zone[p] {
                    zone[p] = true;
                    stack.push(p);
                }
            }
        }

        let mut reached = vec![false; n + 2];
        let mut stack = Vec::new();
        for &f in &init {
            if !zone[f] {
                reached[f] = true;
                stack.push(f);
            }
        }
        let mut in_cut = vec![false; pre.len()];
        while let Some(f) = stack.pop() {
            for &a in &pre_of[f] {
                if pcf[a] != Some(f) {
                    continue;
                }
                for &g in add[a] {
                    if zone[g] {
                        in_cut[a] = true;
                    } else if !reached[g] {
                        reached[g] = true;
                        stack.push(g);
                    }
                }
            }
        }
        let m = (0..pre.len()).filter(|&a| in_cut[a]).map(|a| cost[a]).min().expect("cut is non-empty");
        total += m;
        for a in 0..pre.len() {
            if in_cut[a] {
                cost[a] -= m;
            }
        }
    }
}

struct Node {
    state: FactSet,
    g: u32,
    parent: Option<(usize, usize)>,
}

/// A* with ties broken on lower h, then insertion order. The goal test is
/// made at expansion so the returned plan is optimal for admissible `h`.
pub fn astar(task: &StripsTask, heuristic: &dyn Heuristic) -> (Option<Vec<usize>>, SearchStats) {
    let start = Instant::now();
    let mut stats = SearchStats::default();
    let mut nodes: Vec<Node> = Vec::new();
    let mut best: HashMap<FactSet, u32> = HashMap::new();
    let mut open = BinaryHeap::new();

    let result = 'search: {
        let Some(h0) = heuristic.estimate(task, &task.init) else {
            break 'search None;
        };
        nodes.push(Node { state: task.init.clone(), g: 0, parent: None });
        best.insert(task.init.clone(), 0);
        let mut seq = 0u64;
        open.push(Reverse((h0, h0, seq, 0usize)));
        stats.generated = 1;

        while let Some(Reverse((_, _, _, id))) = open.pop() {
            let g = nodes[id].g;
            if best.get(&nodes[id].state).is_some_and(|&b| b < g) {
                continue;
            }
            if task.is_goal(&nodes[id].state) {
                break 'search Some(id);
            }
            stats.expanded += 1;
            for (ai, action) in task.actions.iter().enumerate() {
                if !action.applicable(&nodes[id].state) {
                    continue;
                }
                let next = action.apply(&nodes[id].state);
                let ng = g + action.cost;
                match best.entry(next.clone()) {
                    Entry::Occupied(mut e) => {
                        if *e.get() <= ng {
                            continue;
                        }
                        e.insert(ng);
                    }
                    Entry::Vacant(e) => {
                        e.insert(ng);
                    }
                }
                let Some(h) = heuristic.estimate(task, &next) else {
                    continue;
                };
                stats.generated += 1;
                seq += 1;
                nodes.push(Node { state: next, g: ng, parent: Some((id, ai)) });
                open.push(Reverse((ng + h, h, seq, nodes.len() - 1)));
            }
        }
        None
    };

    stats.wall_time_s = start.elapsed().as_secs_f64();
    let plan = result.map(|mut id| {
        let mut actions = Vec::new();
        while let Some((parent, action)) = nodes[id].parent {
            actions.push(action);
            id = parent;
        }
        actions.reverse();
        actions
    });
    (plan, stats)
}

/// Optimal cost by exhaustive breadth-first search (unit costs only).
pub fn bfs_oracle(task: &StripsTask) -> Result<Option<u32>, PlannerError> {
    let mut seen: HashSet<FactSet> = HashSet::new();
    let mut queue = VecDeque::new();
    seen.insert(task.init.clone());
    queue.push_back((task.init.clone(), 0u32));
    while let Some((state, d)) = queue.pop_front() {
        if task.is_goal(&state) {
            return Ok(Some(d));
        }
        for a in task.actions.iter().filter(|a| a.applicable(&state)) {
            let next = a.apply(&state);
            if seen.insert(next.clone()) {
                if seen.len() > ORACLE_STATE_LIMIT {
                    return Err(PlannerError::StateSpaceTooLarge(ORACLE_STATE_LIMIT));
                }
                queue.push_back((next, d + 1));
            }
        }
    }
    Ok(None)
}

/// Symbolic progression of `actions` from `state`. Returns `None` at the
/// first action that is unknown or inapplicable.
pub fn progress(task: &StripsTask, state: &FactSet, actions: &[usize]) -> Option<FactSet> {
    let mut s = state.clone();
    for &a in actions {
        let action = task.actions.get(a)?;
        if !action.applicable(&s) {
            return None;
        }
        s = action.apply(&s);
    }
    Some(s)
}

#[derive(Debug, Clone)]
pub struct OlpPlanning {
    pub plan: Plan,
    pub stats: SearchStats,
    pub warnings: Vec<(usize, PreconditionMismatch)>,
    /// Predicate state after the last segment.
    pub final_state: BTreeSet<Atom>,
}

/// Plans every functional unit in order, each from the symbolic state the
/// previous segment left behind.
pub fn plan_olp(
    olp: &ObjectLevelPlan,
    binding: &AliasBinding,
    scene: &SceneState,
    domain: &Domain,
    thr: &GeomThresholds,
) -> Result<OlpPlanning, PlannerError> {
    let mut state = crate::grounding::derive_predicates(scene, thr)?;
    let objects = scene_objects(scene);
    let mut plan = Plan::default();
    let mut stats = SearchStats::default();
    let mut warnings = Vec::new();
    for (i, unit) in olp.units.iter().enumerate() {
        let sub = subgoal_problem_from_state(unit, binding, &state, &objects, domain)?;
        warnings.extend(sub.warnings.into_iter().map(|w| (i, w)));
        let task = ground(domain, &sub.problem);
        let (found, s) = astar(&task, &LmCut);
        stats.absorb(&s);
        let steps = found.ok_or(PlannerError::SubgoalUnsolvable(i))?;
        let end = progress(&task, &task.init, &steps).expect("search returns applicable actions");
        state = task.atoms(&end);
        plan.segments.push(PlanSegment { unit: i, actions: steps.iter().map(|&a| task.actions[a].call()).collect() });
    }
    Ok(OlpPlanning { plan, stats, warnings, final_state: state })
}
