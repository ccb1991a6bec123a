//! Comparison planners that ask the model for a plan (LLM-Planner), a
//! problem file (LLM+P), or a domain, problem and subgoal list (DELTA).

use std::collections::BTreeSet;
use std::sync::LazyLock;

use olp_core::grounding::{derive_predicates, scene_objects, GeomThresholds, GroundingError};
use olp_core::pddl::{
    builtin_blockworld_domain, ground, parse_domain, parse_goal, parse_problem, ActionCall, Atom, Literal, Problem,
    TypedName, AIR, HAND,
};
use olp_core::planner::{astar, progress, LmCut, Plan, PlanSegment, SearchStats};
use olp_core::scene::{SceneState, TABLE};
use regex::Regex;
use serde::Serialize;
use thiserror::Error;

use crate::library::BaselineExamples;
use crate::pipeline::{describe_instance, parse_numbered_lines, Conversation, PipelineError, Run, Stage};
use crate::prompts;
use crate::provider::{ChatProvider, ProviderError};

#[derive(Debug, Error)]
pub enum BaselineError {
    #[error("{stage} prompt: {source}")]
    Provider { stage: &'static str, source: ProviderError },
    #[error("cannot read a plan from the reply: {0}")]
    PlanParseFailure(String),
    #[error("syntax error in the {stage} reply: {message}")]
    SyntaxFailure { stage: &'static str, message: String },
    #[error("the planner found no plan for the generated problem")]
    NoPlan,
    #[error("subgoal {0} is unsolvable")]
    SubgoalUnsolvable(usize),
    #[error(transparent)]
    Grounding(#[from] GroundingError),
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct BaselineOutput {
    pub actions: Vec<ActionCall>,
    /// Search effort when an offline planner was involved.
    pub stats: SearchStats,
}

/// Text rendering of a scene: an inventory line, then one sentence per
/// derived predicate in atom order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct StateNarration {
    pub text: String,
}

pub fn narrate_state(scene: &SceneState, thr: &GeomThresholds) -> Result<StateNarration, GroundingError> {
    let name = |id: &str| -> String {
        match scene.objects.get(id) {
            Some(o) => format!("{} {id}", describe_instance(o)),
            None if id == TABLE => "the table".into(),
            None if id == HAND => "the hand".into(),
            None => id.to_string(),
        }
    };
    let mut lines = Vec::new();
    if scene.objects.is_empty() {
        lines.push("Objects in the scene: none.".to_string());
    } else {
        let ids: Vec<String> =
            instance_list(scene).iter().map(|id| format!("{id} ({})", describe_instance(&scene.objects[id]))).collect();
        lines.push(format!("Objects in the scene: {}.", ids.join(", ")));
    }
    for atom in derive_predicates(scene, thr)? {
        let [a, b] = [atom.args[0].as_str(), atom.args[1].as_str()];
        let sentence = match (atom.predicate.as_str(), a, b) {
            ("on", TABLE, AIR) => "the table has free space".to_string(),
            ("on", x, AIR) => format!("nothing is on {}", name(x)),
            ("on", x, HAND) => format!("{} is in the hand", name(x)),
            ("on", x, y) => format!("{} is on {}", name(y), name(x)),
            ("under", x, AIR) => format!("nothing is under {}", name(x)),
            ("under", x, y) => format!("{} is under {}", name(y), name(x)),
            ("in", HAND, AIR) => "the hand is empty".to_string(),
            ("in", HAND, y) => format!("the hand holds {}", name(y)),
            ("in", x, AIR) => format!("nothing is in {}", name(x)),
            ("in", x, y) => format!("{} is in {}", name(y), name(x)),
            _ => atom.to_string(),
        };
        lines.push(format!("{sentence}."));
    }
    Ok(StateNarration { text: lines.join("\n") })
}

fn ask(conv: &mut Conversation, stage: &'static str, text: String) -> Result<String, BaselineError> {
    conv.ask(Stage::Sketch, text).map_err(|PipelineError { kind, .. }| match kind {
        crate::pipeline::PipelineErrorKind::Provider(source) => BaselineError::Provider { stage, source },
        other => BaselineError::PlanParseFailure(other.to_string()),
    })
}

static PAREN: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"\(([^()]*)\)").unwrap());

fn action_in(line: &str) -> Option<ActionCall> {
    let inner = PAREN.captures(line)?.get(1)?.as_str();
    let tokens: Vec<String> = inner
        .split_whitespace()
        .map(|t| t.trim_matches(|c| c == '<' || c == '>' || c == ',').to_lowercase())
        .filter(|t| !t.is_empty())
        .collect();
    match tokens.as_slice() {
        [name, a, b] if name == "pick" || name == "place" => Some(ActionCall::new(name.clone(), [a.clone(), b.clone()])),
        _ => None,
    }
}

/// Lenient action-list reader: the first parenthesized action on each line
/// wins. A numbered line without a pick/place action rejects the plan.
pub fn parse_action_list(reply: &str) -> Result<Vec<ActionCall>, BaselineError> {
    let numbered = parse_numbered_lines(reply);
    let mut out = Vec::new();
    if numbered.is_empty() {
        out.extend(reply.lines().filter(|l| l.trim_start().starts_with('(')).filter_map(action_in));
    } else {
        for line in &numbered {
            out.push(action_in(line).ok_or_else(|| BaselineError::PlanParseFailure(format!("step {line:?}")))?);
        }
    }
    if out.is_empty() {
        return Err(BaselineError::PlanParseFailure(format!("no actions in {:?}", reply.trim())));
    }
    Ok(out)
}

/// The first balanced `(define ...)` form, or the whole reply.
pub fn extract_pddl(reply: &str) -> &str {
    let Some(start) = reply.find("(define") else { return reply };
    let mut depth = 0usize;
    for (i, c) in reply[start..].char_indices() {
        match c {
            '(' => depth += 1,
            ')' => {
                depth -= 1;
                if depth == 0 {
                    return &reply[start..start + i + 1];
                }
            }
            _ => {}
        }
    }
    &reply[start..]
}

/// One goal conjunction per line that mentions an atom. Numbering, bullets
/// and labels before the first parenthesis are dropped.
pub fn parse_subgoals(reply: &str) -> Result<Vec<Vec<Literal>>, BaselineError> {
    let mut out = Vec::new();
    for line in reply.lines() {
        let Some(open) = line.find('(') else { continue };
        let body = line[open..].trim();
        let wrapped = if body.starts_with("(and") { body.to_string() } else { format!("(and {body})") };
        let goal = parse_goal(&wrapped)
            .map_err(|e| BaselineError::SyntaxFailure { stage: "subgoals", message: format!("{body}: {e}") })?;
        out.push(goal);
    }
    if out.is_empty() {
        return Err(BaselineError::SyntaxFailure { stage: "subgoals", message: "no subgoals listed".into() });
    }
    Ok(out)
}

/// Plain instance ids, as shown to the baselines: scanned across the table
/// by x, then y, then height.
pub fn instance_list(scene: &SceneState) -> Vec<String> {
    let mut ids: Vec<(&String, [f64; 3])> = scene.objects.iter().map(|(id, o)| (id, o.position)).collect();
    ids.sort_by(|a, b| {
        let [ax, ay, az] = a.1;
        let [bx, by, bz] = b.1;
        ax.total_cmp(&bx).then(ay.total_cmp(&by)).then(az.total_cmp(&bz)).then(a.0.cmp(b.0))
    });
    ids.into_iter().map(|(id, _)| id.clone()).collect()
}

/// System prompt, scenario, goal transformation, then the plan request.
pub fn llm_planner_baseline(
    task: &str,
    scene: &SceneState,
    provider: &dyn ChatProvider,
    thr: &GeomThresholds,
) -> Run<BaselineOutput, BaselineError> {
    let mut conv = Conversation::new(provider, Some(prompts::LLM_PLANNER_SYSTEM));
    let result = (|| {
        let state = narrate_state(scene, thr)?;
        ask(&mut conv, "scenario", prompts::llm_planner_scenario(&instance_list(scene)))?;
        ask(&mut conv, "goal", prompts::llm_planner_goal(task))?;
        let reply = ask(&mut conv, "plan", prompts::llm_planner_plan(&state.text))?;
        Ok(BaselineOutput { actions: parse_action_list(&reply)?, stats: SearchStats::default() })
    })();
    Run { result, transcripts: vec![conv.transcript] }
}

fn solve(problem: &Problem, stats: &mut SearchStats) -> Option<(Vec<ActionCall>, BTreeSet<Atom>)> {
    let task = ground(&builtin_blockworld_domain(), problem);
    let (found, s) = astar(&task, &LmCut);
    stats.absorb(&s);
    let steps = found?;
    let end = progress(&task, &task.init, &steps).expect("search returns applicable actions");
    Some((steps.iter().map(|&a| task.actions[a].call()).collect(), task.atoms(&end)))
}

/// A single prompt for a problem file, solved with the builtin domain.
pub fn llm_plus_p_baseline(
    task: &str,
    scene: &SceneState,
    provider: &dyn ChatProvider,
    examples: &BaselineExamples,
    thr: &GeomThresholds,
) -> Run<BaselineOutput, BaselineError> {
    let mut conv = Conversation::new(provider, None);
    let result = (|| {
        let state = narrate_state(scene, thr)?;
        let prompt = prompts::llm_plus_p(&examples.pddl_problem, &instance_list(scene), &state.text, task);
        let reply = ask(&mut conv, "problem", prompt)?;
        let problem = parse_problem(extract_pddl(&reply), &builtin_blockworld_domain())
            .map_err(|e| BaselineError::SyntaxFailure { stage: "problem", message: e.to_string() })?;
        let mut stats = SearchStats::default();
        let (actions, _) = solve(&problem, &mut stats).ok_or(BaselineError::NoPlan)?;
        Ok(BaselineOutput { actions, stats })
    })();
    Run { result, transcripts: vec![conv.transcript] }
}

/// Domain, problem and subgoal prompts in one conversation. The generated
/// files are syntax-checked only; each subgoal is planned with the builtin
/// domain from the state the previous segment reached.
pub fn delta_baseline(
    task: &str,
    scene: &SceneState,
    provider: &dyn ChatProvider,
    examples: &BaselineExamples,
    thr: &GeomThresholds,
) -> Run<BaselineOutput, BaselineError> {
    let mut conv = Conversation::new(provider, None);
    let result = (|| {
        let state_text = narrate_state(scene, thr)?;
        let objects = instance_list(scene);
        let reply = ask(&mut conv, "domain", prompts::delta_domain(&examples.pddl_domain, &objects))?;
        parse_domain(extract_pddl(&reply))
            .map_err(|e| BaselineError::SyntaxFailure { stage: "domain", message: e.to_string() })?;
        let reply = ask(&mut conv, "problem", prompts::delta_problem(&examples.pddl_problem, task, &state_text.text))?;
        parse_problem(extract_pddl(&reply), &builtin_blockworld_domain())
            .map_err(|e| BaselineError::SyntaxFailure { stage: "problem", message: e.to_string() })?;
        let reply = ask(&mut conv, "subgoals", prompts::delta_subgoals(&examples.subgoals))?;
        let subgoals = parse_subgoals(&reply)?;

        let domain = builtin_blockworld_domain();
        let mut state = derive_predicates(scene, thr)?;
        let object_names: Vec<TypedName> = scene_objects(scene).into_iter().map(TypedName::object).collect();
        let mut plan = Plan::default();
        let mut stats = SearchStats::default();
        for (i, goal) in subgoals.into_iter().enumerate() {
            let problem = Problem {
                name: format!("subgoal-{}", i + 1),
                domain: domain.name.clone(),
                objects: object_names.clone(),
                init: state.clone(),
                goal,
            };
            let (actions, next) = solve(&problem, &mut stats).ok_or(BaselineError::SubgoalUnsolvable(i))?;
            state = next;
            plan.segments.push(PlanSegment { unit: i, actions });
        }
        Ok(BaselineOutput { actions: plan.actions(), stats })
    })();
    Run { result, transcripts: vec![conv.transcript] }
}

#[cfg(test)]
mod tests {
    use super::*;
    use olp_core::scene::{SceneObject, Table};

    fn two_stack() -> SceneState {
        let mut s = SceneState::new(Table::default());
        s.objects.insert("b1".into(), SceneObject::cube("block", [0.0, 0.0, 0.025], 0.025));
        s.objects.insert("b2".into(), SceneObject::cube("block", [0.0, 0.0, 0.075], 0.025));
        s
    }

    #[test]
    fn narration_lines() {
        let thr = GeomThresholds::default();
        let n = narrate_state(&two_stack(), &thr).unwrap();
        assert!(n.text.contains("block b2 is on block b1"), "{}", n.text);
        assert!(n.text.contains("block b1 is on the table"));
        assert_eq!(n, narrate_state(&two_stack(), &thr).unwrap());
        let empty = narrate_state(&SceneState::new(Table::default()), &thr).unwrap();
        assert!(empty.text.starts_with("Objects in the scene: none."));
    }

    #[test]
    fn action_lists() {
        let p = parse_action_list("1. (pick red_block_1 table)\n2. (place red_block_1 red_block_2)").unwrap();
        assert_eq!(p.len(), 2);
        assert_eq!(p[1].to_string(), "(place red_block_1 red_block_2)");
        let swapped = parse_action_list("1. (place red_block_2 red_block_1)").unwrap();
        assert_eq!(swapped[0].args, vec!["red_block_2", "red_block_1"]);
        assert!(matches!(parse_action_list("I cannot help"), Err(BaselineError::PlanParseFailure(_))));
        assert!(parse_action_list("1. (pick a table)\n2. then stack it").is_err());
        let loose = parse_action_list("(pick a table) first\n(place a b) (pick c d)").unwrap();
        assert_eq!(loose.len(), 2);
        assert_eq!(parse_action_list("1. (<pick> A table)").unwrap()[0].to_string(), "(pick a table)");
    }

    #[test]
    fn subgoal_lines() {
        let g = parse_subgoals("Subgoal 1: (on table b1)\n\n2. (and (on b1 b2) (on b2 air))").unwrap();
        assert_eq!(g.len(), 2);
        assert_eq!(g[1].len(), 2);
        assert!(matches!(parse_subgoals("nothing"), Err(BaselineError::SyntaxFailure { stage: "subgoals", .. })));
        assert!(parse_subgoals("(on b1").is_err());
    }

    #[test]
    fn pddl_extraction() {
        assert_eq!(extract_pddl("```pddl\n(define (problem p) (:domain d))\n```"), "(define (problem p) (:domain d))");
        assert_eq!(extract_pddl("(define (problem p)"), "(define (problem p)");
    }
}
