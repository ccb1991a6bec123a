//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any fails.

mod common;

use std::collections::{BTreeMap, BTreeSet};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::{Duration, Instant};

use olp_bench::matrix::{scene_seed, Approach, MatrixConfig};
use olp_bench::metrics::aggregate_all;
use olp_bench::report::{emit_report, Format};
use olp_bench::scenes::gen_scene;
use olp_core::foon::{parse_olp_json, serialize_olp, FunctionalUnit, MotionNode, ObjectLevelPlan, ObjectNode, Relation, StateRelation};
use olp_core::grounding::{derive_predicates, support_map, GeomThresholds};
use olp_core::pddl::{builtin_blockworld_domain, ground, print_domain, ActionCall, Atom, Literal, Problem, TypedName};
use olp_core::planner::{astar, bfs_oracle, plan_olp, progress, HMax, LmCut};
use olp_core::scene::SceneState;
use olp_core::simulator::{table_stacks, Simulator, TaskSpec};
use olp_llm::baselines::{delta_baseline, instance_list, llm_planner_baseline, llm_plus_p_baseline, narrate_state};
use olp_llm::library::Exemplar;
use olp_llm::pipeline::{render_candidates, run_olp_pipeline, scene_descriptors};
use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Deserialize;

use common::*;

type Check = fn() -> Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn lits<'a>(it: impl Iterator<Item = &'a Literal>) -> BTreeSet<String> {
    it.map(ToString::to_string).collect()
}

fn set(list: &[&str]) -> BTreeSet<String> {
    list.iter().map(|s| s.to_string()).collect()
}

fn domain_fidelity() -> Result<String, String> {
    let golden = std::fs::read_to_string(data("golden/blocks_domain.pddl")).map_err(|e| e.to_string())?;
    let d = builtin_blockworld_domain();
    ensure(print_domain(&d) == golden, || "printed domain differs from the transcription".into())?;
    let pick = d.action("pick").ok_or("no pick action")?;
    let place = d.action("place").ok_or("no place action")?;
    let want_pick = set(&[
        "(in hand ?obj)",
        "(not (in hand air))",
        "(on ?obj hand)",
        "(under ?obj air)",
        "(not (on ?obj air))",
        "(not (on ?surface ?obj))",
        "(not (under ?obj ?surface))",
        "(on ?surface air)",
    ]);
    let want_place = set(&[
        "(in hand air)",
        "(not (in hand ?obj))",
        "(on ?surface ?obj)",
        "(not (on ?surface air))",
        "(under ?obj ?surface)",
        "(not (under ?obj air))",
        "(not (on ?obj hand))",
        "(on ?obj air)",
    ]);
    ensure(lits(pick.effect_literals()) == want_pick, || format!("pick effects {:?}", lits(pick.effect_literals())))?;
    ensure(lits(place.effect_literals()) == want_place, || format!("place effects {:?}", lits(place.effect_literals())))?;
    Ok("byte-identical print; pick/place effects match".into())
}

fn on_atoms(stacks: &[Vec<String>]) -> Vec<Atom> {
    let mut out = Vec::new();
    for s in stacks {
        out.push(Atom::binary("on", "table", &s[0]));
        for w in s.windows(2) {
            out.push(Atom::binary("on", &w[0], &w[1]));
        }
        out.push(Atom::binary("on", s.last().unwrap(), "air"));
    }
    out
}

/// Initial scene from one random layout; goal: a random non-empty subset of
/// the `on` atoms of another arrangement of the same blocks, not already
/// true initially.
fn random_problem(rng: &mut ChaCha8Rng, max_blocks: usize) -> (SceneState, Problem) {
    loop {
        let (scene, _, _) = random_layout(rng, max_blocks, 0.0, 0.0, false);
        let ids: Vec<String> = scene.objects.keys().cloned().collect();
        let mut target: Vec<Vec<String>> = vec![Vec::new(); ids.len()];
        for id in &ids {
            target[rng.random_range(0..ids.len())].push(id.clone());
        }
        target.retain(|s| !s.is_empty());
        let mut atoms = on_atoms(&target);
        let k = rng.random_range(1..=atoms.len());
        let mut goal = Vec::new();
        for _ in 0..k {
            let i = rng.random_range(0..atoms.len());
            goal.push(Literal::Pos(atoms.swap_remove(i)));
        }
        let init = derive_predicates(&scene, &GeomThresholds::default()).expect("grid scenes ground");
        if goal.iter().all(|g| init.contains(g.atom())) {
            continue;
        }
        let mut objects: Vec<TypedName> = ids.iter().map(TypedName::object).collect();
        objects.push(TypedName::object("table"));
        return (scene, Problem { name: "random".into(), domain: "blockworld".into(), objects, init, goal });
    }
}

fn planner_optimality() -> Result<String, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let domain = builtin_blockworld_domain();
    let mut total = 0;
    for case in 0..200 {
        let (_, p) = random_problem(&mut rng, 6);
        let task = ground(&domain, &p);
        let (plan, _) = astar(&task, &HMax);
        let oracle = bfs_oracle(&task).map_err(|e| format!("case {case}: {e}"))?;
        let got = plan.map(|p| p.len() as u32);
        ensure(got == oracle && oracle.is_some(), || format!("case {case}: A* {got:?}, BFS {oracle:?}"))?;
        total += oracle.unwrap_or(0);
    }
    Ok(format!("200 tasks, 0 deviations, {total} total steps"))
}

fn tower_law() -> Result<String, String> {
    let lib = library();
    let provider = replay();
    let h = harness(&lib, &provider);
    let mut lens = Vec::new();
    for n in 3..=7u32 {
        let rec = h.run_trial(&config(Approach::Olp, TaskSpec::Tower { height: n }, 11), 0);
        let want = 2 * (n as usize - 1);
        ensure(rec.completed && rec.succeeded && rec.plan_length == want, || {
            format!("n={n}: completed {} succeeded {} length {} (want {want}) {:?}", rec.completed, rec.succeeded, rec.plan_length, rec.failure)
        })?;
        lens.push(rec.plan_length.to_string());
    }
    Ok(format!("plan lengths {}", lens.join(",")))
}

fn spelling_order() -> Result<String, String> {
    let word = "ROBOT";
    let spec = TaskSpec::Spelling { word: word.into() };
    let scene = gen_scene(&spec, scene_seed(11, 0)).map_err(|e| e.to_string())?;
    let lib = library();
    let provider = replay();
    let thr = GeomThresholds::default();
    let run = run_olp_pipeline(&spec.instruction(), &scene_descriptors(&scene), &scene.instance_ids(), &lib, &provider);
    let out = run.result.map_err(|e| e.to_string())?;
    let plan = plan_olp(&out.plan, &out.binding, &scene, &builtin_blockworld_domain(), &thr).map_err(|e| e.to_string())?;
    let sim = Simulator::default();
    let trace = sim.execute_plan(&scene, &plan.plan.actions(), &spec);
    ensure(trace.completed && trace.succeeded, || "word plan did not succeed".into())?;
    let end = trace.final_scene;
    let stacks = table_stacks(&end, &thr).ok_or("final scene has ambiguous supports")?;
    let tower = stacks.iter().find(|s| s.len() == word.len()).ok_or("no stack of word length")?;
    let top_down: String = tower.iter().rev().map(|id| end.objects[id].letter.clone().unwrap_or_default()).collect();
    ensure(top_down == word, || format!("top-to-bottom letters {top_down}"))?;

    // Same blocks, same places, letters read the other way round.
    let mut reversed = end.clone();
    for (a, b) in tower.iter().zip(tower.iter().rev()) {
        reversed.objects.get_mut(a).unwrap().letter = end.objects[b].letter.clone();
    }
    let reversed_word: String = tower.iter().rev().map(|id| reversed.objects[id].letter.clone().unwrap_or_default()).collect();
    ensure(reversed_word == "TOBOR", || format!("reversal reads {reversed_word}"))?;
    ensure(!sim.check_success(&reversed, &spec), || "reversed stack accepted".into())?;
    ensure(sim.check_success(&end, &spec), || "check_success rejects the built word".into())?;
    Ok(format!("top-to-bottom {top_down}; reversed {reversed_word} rejected"))
}

#[derive(Deserialize)]
struct GroundingCase {
    name: String,
    scene: SceneState,
    expected: BTreeSet<String>,
}

fn grounding_golden() -> Result<String, String> {
    let text = std::fs::read_to_string(data("golden/grounding_scenes.json")).map_err(|e| e.to_string())?;
    let cases: Vec<GroundingCase> = serde_json::from_str(&text).map_err(|e| e.to_string())?;
    ensure(cases.len() == 10, || format!("{} scenes", cases.len()))?;
    let mut held = 0;
    let mut three_high = 0;
    for c in &cases {
        let got: BTreeSet<String> = derive_predicates(&c.scene, &GeomThresholds::default())
            .map_err(|e| format!("{}: {e}", c.name))?
            .iter()
            .map(ToString::to_string)
            .collect();
        ensure(got == c.expected, || format!("{}: got {got:?}", c.name))?;
        held += usize::from(c.scene.hand.is_some());
        three_high += usize::from(table_stacks(&c.scene, &GeomThresholds::default()).is_some_and(|s| s.iter().any(|s| s.len() >= 3)));
    }
    ensure(held > 0 && three_high > 0, || "golden set lacks held or 3-high scenes".into())?;
    Ok(format!("10 scenes exact ({held} with a held block, {three_high} with 3-high stacks)"))
}

fn replay_regression() -> Result<String, String> {
    let matrix = MatrixConfig::from_toml(&std::fs::read_to_string(data("matrix.toml")).map_err(|e| e.to_string())?)
        .map_err(|e| e.to_string())?;
    let families: BTreeSet<&str> = matrix.tasks.iter().map(|t| t.spec.family()).collect();
    ensure(families.len() == 3 && matrix.approaches.len() == 4 && matrix.seeds.len() == 2, || "matrix shape".into())?;
    let lib = library();
    let provider = replay();
    let mut h = harness(&lib, &provider);
    h.timing = matrix.timing;
    let results = olp_bench::matrix::run_matrix(&matrix.trial_configs(), &h, 0);
    let records: Vec<_> = results.into_iter().flat_map(|r| r.records).collect();
    let rows = aggregate_all(&records);
    let csv = emit_report(&rows, Format::Csv).map_err(|e| e.to_string())?;
    let golden = std::fs::read_to_string(data("golden/bench_report.csv")).map_err(|e| e.to_string())?;
    ensure(csv == golden, || format!("report differs from golden:\n{csv}"))?;
    for r in &rows {
        ensure(r.success_pct <= r.plan_complete_pct, || format!("{} / {}: success above completion", r.setting, r.approach))?;
    }
    Ok(format!("{} rows bit-identical over {} trials; success <= complete in all", rows.len(), records.len()))
}

fn fill(golden: &str, slots: &[(&str, &str)]) -> String {
    let mut text = std::fs::read_to_string(data(&format!("golden/prompts/{golden}.txt"))).expect("golden prompt");
    for (k, v) in slots {
        text = text.replace(&format!("{{{k}}}"), v);
    }
    text
}

fn same(golden: &str, slots: &[(&str, &str)], rendered: &str) -> Result<(), String> {
    let want = squash(&fill(golden, slots));
    let got = squash(rendered);
    ensure(want == got, || format!("{golden}:\n  want {want}\n  got  {got}"))
}

fn prompt_fidelity() -> Result<String, String> {
    let lib = library();
    let thr = GeomThresholds::default();
    let spec = TaskSpec::Tower { height: 3 };
    let task_full = spec.instruction();
    let task = task_full.trim_end_matches('.');
    let scene = gen_scene(&spec, 1).map_err(|e| e.to_string())?;
    let mut checked = 0;

    let cap = Capture::default();
    let run = run_olp_pipeline(&task_full, &scene_descriptors(&scene), &scene.instance_ids(), &lib, &cap);
    run.result.map_err(|e| e.to_string())?;
    let calls = cap.calls.lock().unwrap().clone();
    let user = cap.last_user_texts();
    let ranked = lib.retrieve(&task_full).map_err(|e| e.to_string())?;
    let cands: Vec<&Exemplar> = ranked.iter().map(|r| lib.get(r.index)).collect();
    same("olp_system", &[], &calls[0][0].text)?;
    same("olp_intro", &[("task", task), ("objects", "red block")], &user[0])?;
    same("olp_select", &[("prototypes", &render_candidates(&cands))], &user[1])?;
    same("olp_sketch", &[("task", task)], &user[2])?;
    same("olp_objects", &[], &user[3])?;
    let json_ok = cands.iter().any(|c| same("olp_json", &[("prototype_json", &serialize_olp(&c.plan))], &user[4]).is_ok());
    ensure(json_ok, || format!("olp_json does not match any candidate prototype: {}", user[4]))?;
    checked += 6;

    let objects = instance_list(&scene);
    let mut by_x: Vec<(&String, f64)> = scene.objects.iter().map(|(id, o)| (id, o.position[0])).collect();
    by_x.sort_by(|a, b| a.1.total_cmp(&b.1));
    ensure(by_x.iter().map(|p| p.0).eq(objects.iter()), || "instance list not in left-to-right order".into())?;
    let objects = objects.join(", ");
    let narration = narrate_state(&scene, &thr).map_err(|e| e.to_string())?.text;
    // Templates that add their own period get the sentence without one.
    let state = narration.trim_end_matches('.');

    let cap = Capture::default();
    llm_planner_baseline(&task_full, &scene, &cap, &thr);
    let calls = cap.calls.lock().unwrap().clone();
    let user = cap.last_user_texts();
    ensure(user.len() == 3, || format!("{} LLM-Planner calls", user.len()))?;
    same("llm_planner_system", &[], &calls[0][0].text)?;
    same("llm_planner_scenario", &[("objects", &objects)], &user[0])?;
    same("llm_planner_goal", &[("task", task)], &user[1])?;
    same("llm_planner_plan", &[("state", &narration)], &user[2])?;
    checked += 4;

    let examples = &cands[0].baseline;
    let cap = Capture::default();
    llm_plus_p_baseline(&task_full, &scene, &cap, examples, &thr);
    let user = cap.last_user_texts();
    same(
        "llm_plus_p",
        &[("example", &examples.pddl_problem), ("objects", &objects), ("state", state), ("task", task)],
        &user[0],
    )?;
    checked += 1;

    let cap = Capture::default();
    delta_baseline(&task_full, &scene, &cap, examples, &thr);
    let user = cap.last_user_texts();
    ensure(user.len() == 3, || format!("{} DELTA calls", user.len()))?;
    same("delta_domain", &[("example", &examples.pddl_domain), ("objects", &objects)], &user[0])?;
    same("delta_problem", &[("example", &examples.pddl_problem), ("task", task), ("state", &narration)], &user[1])?;
    same("delta_subgoals", &[("example", &examples.subgoals)], &user[2])?;
    checked += 3;
    Ok(format!("{checked} prompts match their transcriptions"))
}

const CASES: usize = 1000;

fn random_olp(rng: &mut ChaCha8Rng) -> ObjectLevelPlan {
    const POOL: [&str; 6] = ["first block", "second block", "red block", "letter block s", "bowl", "third \"quoted\" block"];
    const TARGETS: [&str; 6] = ["first block", "second block", "red block", "table", "nothing", "bowl"];
    let word = |rng: &mut ChaCha8Rng, max: usize| -> String {
        let alphabet: Vec<char> = "abcdefghijklmnopqrstuvwxyz ,.:\"\\{}[]éü".chars().collect();
        (0..rng.random_range(0..=max)).map(|_| *alphabet.choose(rng).unwrap()).collect()
    };
    let states = |rng: &mut ChaCha8Rng| -> Vec<StateRelation> {
        (0..rng.random_range(0..4))
            .map(|_| StateRelation::new(*Relation::ALL.choose(rng).unwrap(), *TARGETS.choose(rng).unwrap()))
            .collect()
    };
    let units = (0..rng.random_range(0..5))
        .map(|i| {
            let aliases: Vec<&str> = POOL.iter().copied().filter(|_| rng.random_bool(0.5)).collect();
            let aliases = if aliases.is_empty() { vec![POOL[0]] } else { aliases };
            let mut inputs = BTreeMap::new();
            let mut outputs = BTreeMap::new();
            for a in &aliases {
                let composition = (0..rng.random_range(0..3))
                    .map(|_| (0..rng.random_range(1..=6)).map(|_| rng.random_range(b'a'..=b'z') as char).collect())
                    .collect();
                inputs.insert(a.to_string(), ObjectNode { alias: a.to_string(), states: states(rng), composition });
                outputs.insert(a.to_string(), ObjectNode { alias: a.to_string(), states: states(rng), composition: Vec::new() });
            }
            FunctionalUnit {
                step: i + 1,
                motion: MotionNode { verb: format!("verb {}", word(rng, 8).trim()) },
                required_objects: aliases.iter().map(|s| s.to_string()).collect(),
                inputs,
                outputs,
                instruction: word(rng, 30),
            }
        })
        .collect();
    ObjectLevelPlan { task: word(rng, 20), units }
}

fn expected_atoms(stacks: &[Vec<String>], held: Option<&str>) -> BTreeSet<Atom> {
    let a = Atom::binary;
    let mut out = BTreeSet::from([a("on", "table", "air")]);
    for s in stacks {
        out.insert(a("under", &s[0], "table"));
        for w in s.windows(2) {
            out.insert(a("under", &w[1], &w[0]));
        }
    }
    out.extend(on_atoms(stacks));
    match held {
        Some(h) => out.extend([a("in", "hand", h), a("on", h, "hand"), a("under", h, "air")]),
        None => {
            out.insert(a("in", "hand", "air"));
        }
    }
    out
}

fn special(x: &str) -> bool {
    matches!(x, "air" | "hand" | "table")
}

fn property_suites() -> Result<String, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let thr = GeomThresholds::default();
    let sim = Simulator::default();
    let domain = builtin_blockworld_domain();

    for case in 0..CASES {
        let plan = random_olp(&mut rng);
        let back = parse_olp_json(&serialize_olp(&plan)).map_err(|e| format!("foon case {case}: {e}"))?;
        ensure(back == plan, || format!("foon case {case}: round trip changed the plan"))?;
    }

    for case in 0..CASES {
        let (scene, stacks, held) = random_layout(&mut rng, 6, 0.01, 0.004, true);
        let got = derive_predicates(&scene, &thr).map_err(|e| format!("grounding case {case}: {e}"))?;
        ensure(got == expected_atoms(&stacks, held.as_deref()), || format!("grounding case {case}: {got:?}"))?;
        for atom in &got {
            let (x, y) = (atom.args[0].as_str(), atom.args[1].as_str());
            if !special(x) && !special(y) {
                let mirror = if atom.predicate == "on" { "under" } else { "on" };
                ensure(got.contains(&Atom::binary(mirror, y, x)), || format!("grounding case {case}: {atom} without its mirror"))?;
            }
            if atom.predicate == "on" && y == "air" && x != "table" {
                let covered = got.iter().any(|b| b.predicate == "on" && b.args[0] == x && b.args[1] != "air");
                ensure(!covered, || format!("grounding case {case}: {x} both clear and covered"))?;
            }
        }
        let hand = got.iter().filter(|a| a.predicate == "in" && a.args[0] == "hand").count();
        ensure(hand == 1, || format!("grounding case {case}: {hand} hand facts"))?;
    }

    for case in 0..CASES {
        let (scene, _, _) = random_layout(&mut rng, 6, 0.0, 0.0, true);
        let mut names = scene.instance_ids();
        names.push("table".into());
        let ids: Vec<String> = scene.objects.keys().cloned().collect();
        let kinds: Vec<String> = scene.objects.values().map(|o| o.kind.clone()).collect();
        let mut cur = scene;
        for _ in 0..rng.random_range(0..30) {
            let verb = if rng.random_bool(0.5) { "pick" } else { "place" };
            let call = ActionCall::new(verb, [names.choose(&mut rng).unwrap().clone(), names.choose(&mut rng).unwrap().clone()]);
            if let Ok(next) = sim.apply(&cur, &call) {
                cur = next;
            }
            ensure(cur.objects.keys().eq(ids.iter()), || format!("simulator case {case}: object set changed"))?;
            ensure(cur.objects.values().map(|o| &o.kind).eq(kinds.iter()), || format!("simulator case {case}: kinds changed"))?;
            let support = support_map(&cur, &thr).map_err(|e| format!("simulator case {case}: {e}"))?;
            let mut lowers = BTreeSet::new();
            for (upper, lower) in &support {
                if lower != "table" {
                    ensure(lowers.insert(lower), || format!("simulator case {case}: {lower} carries two blocks"))?;
                }
                let mut at = upper.as_str();
                let mut steps = 0;
                while let Some(next) = support.get(at) {
                    at = next;
                    steps += 1;
                    ensure(steps <= support.len(), || format!("simulator case {case}: support cycle through {upper}"))?;
                }
            }
        }
    }

    for case in 0..CASES {
        let (scene, p) = random_problem(&mut rng, 5);
        let task = ground(&domain, &p);
        let plan = astar(&task, &LmCut).0.ok_or_else(|| format!("planner case {case}: no plan"))?;
        let end = progress(&task, &task.init, &plan).ok_or_else(|| format!("planner case {case}: inapplicable step"))?;
        ensure(task.is_goal(&end), || format!("planner case {case}: goal not reached"))?;
        let calls: Vec<ActionCall> = plan.iter().map(|&a| task.actions[a].call()).collect();
        let trace = sim.execute_plan(&scene, &calls, &TaskSpec::Tower { height: 3 });
        ensure(trace.completed, || format!("planner case {case}: simulator rejected the plan"))?;
        let derived = derive_predicates(&trace.final_scene, &thr).map_err(|e| e.to_string())?;
        ensure(p.goal.iter().all(|g| derived.contains(g.atom())), || format!("planner case {case}: goal not realized"))?;
    }
    Ok(format!("{CASES} cases each: foon round trip, grounding, simulator, planner; 0 violations"))
}

fn main() {
    let criteria: [(&str, Check, Option<Duration>); 8] = [
        ("domain fidelity", domain_fidelity, Some(Duration::from_secs(1))),
        ("planner optimality", planner_optimality, Some(Duration::from_secs(60))),
        ("tower plan-length law", tower_law, Some(Duration::from_secs(30))),
        ("spelling order", spelling_order, None),
        ("grounding golden scenes", grounding_golden, None),
        ("end-to-end replay regression", replay_regression, Some(Duration::from_secs(300))),
        ("prompt fidelity", prompt_fidelity, None),
        ("property suites", property_suites, None),
    ];
    let mut failed = 0;
    for (i, (name, check, budget)) in criteria.into_iter().enumerate() {
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|p| {
            Err(p.downcast_ref::<String>().cloned().or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string())).unwrap_or_else(|| "panic".into()))
        });
        let took = start.elapsed();
        let outcome = match (outcome, budget) {
            (Ok(_), Some(b)) if took > b => Err(format!("took {took:.2?}, budget {b:?}")),
            (o, _) => o,
        };
        match outcome {
            Ok(detail) => println!("PASS {}. {name}: {detail} [{took:.2?}]", i + 1),
            Err(why) => {
                failed += 1;
                println!("FAIL {}. {name}: {why} [{took:.2?}]", i + 1);
            }
        }
    }
    if failed > 0 {
        std::process::exit(1);
    }
}
