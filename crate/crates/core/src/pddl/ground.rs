use std::collections::{BTreeMap, BTreeSet, HashMap};

use super::{ActionCall, ActionSchema, Atom, Domain, Literal, Problem, AIR};

/// A set of fact indices, stored as a fixed-width bitset.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct FactSet {
    words: Box<[u64]>,
}

impl FactSet {
    pub fn empty(len: usize) -> Self {
        FactSet { words: vec![0; len.div_ceil(64)].into_boxed_slice() }
    }

    pub fn contains(&self, i: usize) -> bool {
        self.words[i / 64] & (1 << (i % 64)) != 0
    }

    pub fn insert(&mut self, i: usize) {
        self.words[i / 64] |= 1 << (i % 64);
    }

    pub fn remove(&mut self, i: usize) {
        self.words[i / 64] &= !(1 << (i % 64));
    }

    pub fn contains_all(&self, indices: &[usize]) -> bool {
        indices.iter().all(|&i| self.contains(i))
    }

    pub fn iter(&self) -> impl Iterator<Item = usize> + '_ {
        self.words.iter().enumerate().flat_map(|(w, &bits)| {
            (0..64).filter(move |b| bits & (1 << b) != 0).map(move |b| w * 64 + b)
        })
    }

    pub fn len(&self) -> usize {
        self.words.iter().map(|w| w.count_ones() as usize).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.words.iter().all(|&w| w == 0)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GroundAction {
    pub name: String,
    pub args: Vec<String>,
    pub pre: Vec<usize>,
    pub pre_neg: Vec<usize>,
    pub add: Vec<usize>,
    pub del: Vec<usize>,
    pub cost: u32,
}

impl GroundAction {
    pub fn applicable(&self, state: &FactSet) -> bool {
        state.contains_all(&self.pre) && !self.pre_neg.iter().any(|&i| state.contains(i))
    }

    /// Successor state: deletes first, then adds.
    pub fn apply(&self, state: &FactSet) -> FactSet {
        let mut next = state.clone();
        for &d in &self.del {
            next.remove(d);
        }
        for &a in &self.add {
            next.insert(a);
        }
        next
    }

    pub fn call(&self) -> ActionCall {
        ActionCall { name: self.name.clone(), args: self.args.clone() }
    }
}

/// Propositional STRIPS task with unit action costs.
#[derive(Debug, Clone)]
pub struct StripsTask {
    pub facts: Vec<Atom>,
    index: HashMap<Atom, usize>,
    pub init: FactSet,
    pub goal: Vec<usize>,
    pub goal_neg: Vec<usize>,
    pub actions: Vec<GroundAction>,
}

impl StripsTask {
    pub fn fact_index(&self, atom: &Atom) -> Option<usize> {
        self.index.get(atom).copied()
    }

    pub fn is_goal(&self, state: &FactSet) -> bool {
        state.contains_all(&self.goal) && !self.goal_neg.iter().any(|&i| state.contains(i))
    }

    pub fn atoms(&self, state: &FactSet) -> BTreeSet<Atom> {
        state.iter().map(|i| self.facts[i].clone()).collect()
    }

    /// Encodes `atoms`; atoms outside the fact table are dropped.
    pub fn encode(&self, atoms: &BTreeSet<Atom>) -> FactSet {
        let mut s = FactSet::empty(self.facts.len());
        for a in atoms {
            if let Some(i) = self.fact_index(a) {
                s.insert(i);
            }
        }
        s
    }

    /// The same task started from another state.
    pub fn with_init(&self, init: FactSet) -> StripsTask {
        StripsTask { init, ..self.clone() }
    }

    pub fn find_action(&self, call: &ActionCall) -> Option<usize> {
        self.actions.iter().position(|a| a.name == call.name && a.args == call.args)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GroundingOptions {
    /// Reject assignments that bind one object to two parameters.
    pub distinct_parameters: bool,
    /// Surfaces `s` whose `(on s air)` is never deleted: they always have
    /// free area left.
    pub unbounded_surfaces: Vec<String>,
}

impl Default for GroundingOptions {
    fn default() -> Self {
        GroundingOptions { distinct_parameters: true, unbounded_surfaces: vec!["table".to_string()] }
    }
}

/// Grounds with [`GroundingOptions::default`].
pub fn ground(domain: &Domain, problem: &Problem) -> StripsTask {
    ground_with(domain, problem, &GroundingOptions::default())
}

struct Candidate {
    name: String,
    args: Vec<String>,
    pre: Vec<Atom>,
    pre_neg: Vec<Atom>,
    add: Vec<Atom>,
    del: Vec<Atom>,
}

fn substitute(atom: &Atom, binding: &BTreeMap<&str, &str>) -> Atom {
    Atom {
        predicate: atom.predicate.clone(),
        args: atom.args.iter().map(|a| binding.get(a.as_str()).map_or_else(|| a.clone(), |o| o.to_string())).collect(),
    }
}

fn instantiate(schema: &ActionSchema, objects: &[&str], binding: &BTreeMap<&str, &str>) -> Candidate {
    let mut c = Candidate {
        name: schema.name.clone(),
        args: objects.iter().map(|s| s.to_string()).collect(),
        pre: Vec::new(),
        pre_neg: Vec::new(),
        add: Vec::new(),
        del: Vec::new(),
    };
    for l in schema.precondition_literals() {
        match l {
            Literal::Pos(a) => c.pre.push(substitute(a, binding)),
            Literal::Neg(a) => c.pre_neg.push(substitute(a, binding)),
        }
    }
    for l in schema.effect_literals() {
        match l {
            Literal::Pos(a) => c.add.push(substitute(a, binding)),
            Literal::Neg(a) => c.del.push(substitute(a, binding)),
        }
    }
    c
}

/// Grounds every type-consistent parameter assignment over the problem's
/// objects, keeps the actions reachable in the delete relaxation, and
/// indexes the reachable facts (plus goal atoms) in sorted order.
pub fn ground_with(domain: &Domain, problem: &Problem, options: &GroundingOptions) -> StripsTask {
    let mut candidates = Vec::new();
    for schema in &domain.actions {
        let choices: Vec<Vec<&str>> = schema
            .parameters
            .iter()
            .map(|p| {
                problem
                    .objects
                    .iter()
                    .filter(|o| domain.is_subtype(&o.ty, &p.ty))
                    .map(|o| o.name.as_str())
                    .collect()
            })
            .collect();
        if choices.iter().any(Vec::is_empty) {
            continue;
        }
        let mut cursor = vec![0usize; choices.len()];
        'assignments: loop {
            let objects: Vec<&str> = cursor.iter().zip(&choices).map(|(&i, c)| c[i]).collect();
            let distinct = objects.iter().collect::<BTreeSet<_>>().len() == objects.len();
            if distinct || !options.distinct_parameters {
                let binding: BTreeMap<&str, &str> =
                    schema.parameters.iter().map(|p| p.name.as_str()).zip(objects.iter().copied()).collect();
                candidates.push(instantiate(schema, &objects, &binding));
            }
            // odometer, last parameter fastest
            let mut k = cursor.len();
            while k > 0 {
                k -= 1;
                cursor[k] += 1;
                if cursor[k] < choices[k].len() {
                    continue 'assignments;
                }
                cursor[k] = 0;
            }
            break;
        }
    }

    // relaxed reachability
    let mut reached: BTreeSet<Atom> = problem.init.clone();
    let mut enabled = vec![false; candidates.len()];
    loop {
        let mut changed = false;
        for (i, c) in candidates.iter().enumerate() {
            if !enabled[i] && c.pre.iter().all(|a| reached.contains(a)) {
                enabled[i] = true;
                changed = true;
                reached.extend(c.add.iter().cloned());
            }
        }
        if !changed {
            break;
        }
    }

    let mut fact_set = reached;
    for l in &problem.goal {
        if l.is_positive() {
            fact_set.insert(l.atom().clone());
        }
    }
    let facts: Vec<Atom> = fact_set.into_iter().collect();
    let index: HashMap<Atom, usize> = facts.iter().cloned().enumerate().map(|(i, a)| (a, i)).collect();
    let persistent: BTreeSet<Atom> =
        options.unbounded_surfaces.iter().map(|s| Atom::binary("on", s, AIR)).collect();

    let lookup = |atoms: &[Atom]| -> Vec<usize> {
        let mut v: Vec<usize> = atoms.iter().filter_map(|a| index.get(a).copied()).collect();
        v.sort_unstable();
        v.dedup();
        v
    };

    let actions = candidates
        .into_iter()
        .zip(enabled)
        .filter(|(_, e)| *e)
        .map(|(c, _)| {
            let add = lookup(&c.add);
            let del_atoms: Vec<Atom> = c.del.into_iter().filter(|a| !persistent.contains(a)).collect();
            let del: Vec<usize> = lookup(&del_atoms).into_iter().filter(|d| !add.contains(d)).collect();
            GroundAction { name: c.name, args: c.args, pre: lookup(&c.pre), pre_neg: lookup(&c.pre_neg), add, del, cost: 1 }
        })
        .collect();

    let mut init = FactSet::empty(facts.len());
    for a in &problem.init {
        init.insert(index[a]);
    }
    let mut goal = Vec::new();
    let mut goal_neg = Vec::new();
    for l in &problem.goal {
        match l {
            Literal::Pos(a) => goal.push(index[a]),
            Literal::Neg(a) => {
                if let Some(&i) = index.get(a) {
                    goal_neg.push(i);
                }
            }
        }
    }
    goal.sort_unstable();
    goal.dedup();
    goal_neg.sort_unstable();
    goal_neg.dedup();

    StripsTask { facts, index, init, goal, goal_neg, actions }
}
