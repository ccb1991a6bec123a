//! A rule-based stand-in for the chat model. It reads the prompt formats the
//! pipelines send and answers the way a capable but fallible model would.
//! Mistakes are chosen by hashing the prompt, so replies are reproducible
//! and can be frozen as fixtures.

use std::collections::{BTreeMap, BTreeSet};

use olp_core::pddl::{builtin_blockworld_domain, print_domain, ActionCall};
use olp_llm::pipeline::greedy_binding;
use olp_llm::provider::{approx_usage, ChatMessage, ChatProvider, ChatReply, ProviderError, Role};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

const ORDINALS: [&str; 10] = ["first", "second", "third", "fourth", "fifth", "sixth", "seventh", "eighth", "ninth", "tenth"];

/// How many instances per block type the responder assumes when it only
/// sees type names.
pub const ASSUMED_PILE_SIZE: usize = 2;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TaskKind {
    Tower { height: usize, kind: String },
    Spelling { word: String },
    Organize,
}

pub fn parse_task(text: &str) -> Option<TaskKind> {
    let lower = text.to_lowercase();
    if let Some(rest) = lower.split("spells the word ").nth(1) {
        let word: String = rest.chars().take_while(|c| c.is_ascii_alphabetic()).collect();
        return (!word.is_empty()).then(|| TaskKind::Spelling { word: word.to_uppercase() });
    }
    if let Some(rest) = lower.split("tower of ").nth(1) {
        let mut words = rest.split_whitespace();
        let height = words.next()?.parse().ok()?;
        let colour: Vec<&str> = words.take_while(|w| !w.starts_with("block")).collect();
        let kind = if colour.is_empty() { "block".to_string() } else { format!("{} block", colour.join(" ")) };
        return Some(TaskKind::Tower { height, kind });
    }
    lower.contains("organize").then_some(TaskKind::Organize)
}

/// Kind and letter encoded in an instance id such as `letter_block_s_2`.
pub fn id_kind(id: &str) -> (String, Option<String>) {
    let mut parts: Vec<&str> = id.split('_').collect();
    if parts.last().is_some_and(|p| p.parse::<usize>().is_ok()) {
        parts.pop();
    }
    if parts.len() == 3 && parts[0] == "letter" && parts[1] == "block" {
        return ("letter block".into(), Some(parts[2].to_uppercase()));
    }
    (parts.join(" "), None)
}

fn id_index(id: &str) -> usize {
    id.rsplit('_').next().and_then(|p| p.parse().ok()).unwrap_or(0)
}

fn sorted_ids<'a>(ids: impl Iterator<Item = &'a String>) -> Vec<String> {
    let mut v: Vec<String> = ids.cloned().collect();
    v.sort_by_key(|id| (id_kind(id), id_index(id)));
    v
}

/// Target stacks (bottom first) over concrete instance ids.
pub fn target_stacks(task: &TaskKind, ids: &[String]) -> Vec<Vec<String>> {
    let ids = sorted_ids(ids.iter());
    match task {
        TaskKind::Tower { height, kind } => {
            let mut pool: Vec<String> = ids.iter().filter(|id| id_kind(id).0 == *kind).cloned().collect();
            if pool.len() < *height {
                pool = ids.clone();
            }
            vec![pool.into_iter().take(*height).collect()]
        }
        TaskKind::Spelling { word } => {
            let mut used = BTreeSet::new();
            let mut stack = Vec::new();
            for c in word.chars().rev() {
                let l = c.to_string();
                if let Some(id) = ids.iter().find(|id| !used.contains(*id) && id_kind(id).1.as_deref() == Some(l.as_str())) {
                    used.insert(id.clone());
                    stack.push(id.clone());
                }
            }
            vec![stack]
        }
        TaskKind::Organize => {
            let mut groups: BTreeMap<String, Vec<String>> = BTreeMap::new();
            for id in &ids {
                groups.entry(id_kind(id).0).or_default().push(id.clone());
            }
            groups.into_values().collect()
        }
    }
}

/// Pick/place sequence that first clears every stack onto the table and
/// then builds `targets`.
pub fn build_actions(support: &BTreeMap<String, String>, targets: &[Vec<String>]) -> Vec<ActionCall> {
    let mut above: BTreeMap<&str, &str> = BTreeMap::new();
    for (upper, lower) in support {
        above.insert(lower, upper);
    }
    let mut out = Vec::new();
    for (id, lower) in support {
        if lower != "table" {
            continue;
        }
        let mut column = vec![id.as_str()];
        while let Some(&next) = above.get(column.last().unwrap()) {
            column.push(next);
        }
        for pair in column.windows(2).rev() {
            out.push(ActionCall::new("pick", [pair[1], pair[0]]));
            out.push(ActionCall::new("place", [pair[1], "table"]));
        }
    }
    for stack in targets {
        for pair in stack.windows(2) {
            out.push(ActionCall::new("pick", [pair[1].as_str(), "table"]));
            out.push(ActionCall::new("place", [pair[1].as_str(), pair[0].as_str()]));
        }
    }
    out
}

/// What a narration says: the instance ids and each block's support.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct NarratedState {
    pub ids: Vec<String>,
    pub support: BTreeMap<String, String>,
}

pub fn parse_narration(text: &str) -> NarratedState {
    let mut st = NarratedState::default();
    for line in text.lines().map(|l| l.trim().trim_end_matches('.')) {
        if let Some(inv) = line.strip_prefix("Objects in the scene: ") {
            for item in inv.split("), ") {
                if let Some((id, _)) = item.split_once(" (") {
                    st.ids.push(id.trim().to_string());
                }
            }
            continue;
        }
        if line.starts_with("nothing") || line.starts_with("the ") {
            continue;
        }
        let Some((left, right)) = line.split_once(" is on ") else { continue };
        let upper = left.rsplit(' ').next().unwrap_or(left).to_string();
        let lower = if right == "the table" { "table".to_string() } else { right.rsplit(' ').next().unwrap_or(right).to_string() };
        st.support.insert(upper, lower);
    }
    st
}

fn between<'a>(text: &'a str, start: &str, end: &str) -> Option<&'a str> {
    let from = text.find(start)? + start.len();
    let rest = &text[from..];
    Some(rest.find(end).map_or(rest, |e| &rest[..e]))
}

fn split_list(text: &str) -> Vec<String> {
    text.split(',').map(|s| s.trim().to_string()).filter(|s| !s.is_empty()).collect()
}

fn ordinal(i: usize) -> String {
    ORDINALS.get(i).map_or_else(|| format!("block {}", i + 1), |s| s.to_string())
}

/// Alias stacks (bottom first) for an object-level plan, written from the
/// task text and the object types shown to the model.
fn alias_stacks(task: &TaskKind, descriptors: &[String], misread_word: bool) -> Vec<Vec<String>> {
    match task {
        TaskKind::Tower { height, kind } => vec![(0..*height).map(|i| format!("{} {kind}", ordinal(i))).collect()],
        TaskKind::Spelling { word } => {
            let letters: Vec<char> = if misread_word { word.chars().collect() } else { word.chars().rev().collect() };
            let mut total: BTreeMap<char, usize> = BTreeMap::new();
            for c in &letters {
                *total.entry(*c).or_default() += 1;
            }
            let mut seen: BTreeMap<char, usize> = BTreeMap::new();
            let stack = letters
                .iter()
                .map(|c| {
                    let k = seen.entry(*c).or_default();
                    *k += 1;
                    if total[c] > 1 {
                        format!("{} letter block {c}", ordinal(*k - 1))
                    } else {
                        format!("letter block {c}")
                    }
                })
                .collect();
            vec![stack]
        }
        TaskKind::Organize => {
            let kinds: BTreeSet<&String> = descriptors.iter().collect();
            kinds.into_iter().map(|k| (0..ASSUMED_PILE_SIZE).map(|i| format!("{} {k}", ordinal(i))).collect()).collect()
        }
    }
}

fn olp_units(stacks: &[Vec<String>], flaw_beside: bool) -> Vec<Value> {
    let mut units = Vec::new();
    for stack in stacks {
        for i in 1..stack.len() {
            let (lower, upper) = (&stack[i - 1], &stack[i]);
            // A lower block that already sits on the pile only names its
            // free top; its support is not a required object of this unit.
            let (lower_pre, lower_eff): (Vec<String>, Vec<String>) = if i == 1 {
                (vec!["under nothing".into(), "on table".into()], vec![format!("under {upper}"), "on table".into()])
            } else {
                (vec!["under nothing".into()], vec![format!("under {upper}")])
            };
            let mut upper_pre = vec!["under nothing".to_string(), "on table".to_string()];
            if flaw_beside && units.is_empty() {
                upper_pre.push(format!("beside {lower}"));
            }
            units.push(json!({
                "step": units.len() + 1,
                "action": "pick and place",
                "required_objects": [lower, upper],
                "object_states": {
                    lower.as_str(): {"preconditions": lower_pre, "effects": lower_eff},
                    upper.as_str(): {"preconditions": upper_pre, "effects": [format!("on {lower}"), "under nothing"]},
                },
                "instruction": format!("Pick and place {upper} from table on {lower}."),
            }));
        }
    }
    units
}

fn problem_text(name: &str, st: &NarratedState, goal_pairs: &[(String, String)], drop_hand: bool) -> String {
    let mut init = Vec::new();
    if !drop_hand {
        init.push("(in hand air)".to_string());
    }
    init.push("(on table air)".to_string());
    let supported: BTreeSet<&String> = st.support.values().collect();
    for id in &st.ids {
        if let Some(lower) = st.support.get(id) {
            init.push(format!("(on {lower} {id})"));
            init.push(format!("(under {id} {lower})"));
        }
        if !supported.contains(id) {
            init.push(format!("(on {id} air)"));
        }
    }
    let goal: Vec<String> = goal_pairs.iter().map(|(l, u)| format!("(on {l} {u})")).collect();
    format!(
        "(define (problem {name})\n  (:domain blockworld)\n  (:objects {} table)\n  (:init\n    {})\n  (:goal (and {}))\n)",
        st.ids.join(" "),
        init.join("\n    "),
        goal.join(" ")
    )
}

fn pairs(stacks: &[Vec<String>]) -> Vec<(String, String)> {
    stacks.iter().flat_map(|s| s.windows(2).map(|w| (w[0].clone(), w[1].clone()))).collect()
}

/// Mistake rates in percent per task family.
fn family_rate(task: &TaskKind, tower: u64, spelling: u64, organize: u64) -> u64 {
    match task {
        TaskKind::Tower { .. } => tower,
        TaskKind::Spelling { .. } => spelling,
        TaskKind::Organize => organize,
    }
}

/// A plausible but wrong set of target stacks.
fn wrong_targets(task: &TaskKind, ids: &[String]) -> Vec<Vec<String>> {
    let mut t = target_stacks(task, ids);
    match task {
        TaskKind::Tower { .. } => {
            t[0].pop();
        }
        TaskKind::Spelling { .. } => t[0].reverse(),
        TaskKind::Organize => {
            if let Some(last) = t.last_mut() {
                last.truncate(1);
            }
        }
    }
    t
}

#[derive(Debug, Clone, Default)]
pub struct ScriptedResponder {
    /// Varies which prompts get a flawed answer.
    pub salt: u64,
}

impl ScriptedResponder {
    pub fn new(salt: u64) -> Self {
        ScriptedResponder { salt }
    }

    /// Deterministic draw in `0..100` for a prompt and decision tag.
    fn roll(&self, key: &str, tag: &str) -> u64 {
        let mut h = Sha256::new();
        h.update(self.salt.to_le_bytes());
        h.update(tag.as_bytes());
        h.update(key.as_bytes());
        let d = h.finalize();
        u64::from_le_bytes(d[..8].try_into().expect("8 bytes")) % 100
    }

    pub fn respond(&self, messages: &[ChatMessage]) -> Result<String, ProviderError> {
        let users: Vec<&str> = messages.iter().filter(|m| m.role == Role::User).map(|m| m.text.as_str()).collect();
        let last = *users.last().ok_or_else(|| ProviderError::Backend("no user turn".into()))?;
        let find = |prefix: &str| users.iter().copied().find(|u| u.starts_with(prefix));
        let unknown = || ProviderError::Backend(format!("scripted responder cannot answer: {:.60}", last));

        if last.starts_with("Your task will be to create") {
            return Ok("Okay!".into());
        }
        if let Some(intro) = find("Your task will be to create") {
            return self.olp_turn(intro, last, &users).ok_or_else(unknown);
        }
        if last.starts_with("Map each object name") {
            return self.alias_turn(last).ok_or_else(unknown);
        }
        if last.starts_with("There is a scenario with the following objects") {
            return Ok("Understood. I will wait for the task.".into());
        }
        if last.starts_with("Your task is as follows:") {
            let objects = split_list(between(find("There is a scenario").ok_or_else(unknown)?, "objects: ", ". Please").unwrap_or(""));
            let task = parse_task(last).ok_or_else(unknown)?;
            let goal: Vec<String> = pairs(&target_stacks(&task, &objects)).iter().map(|(l, u)| format!("(on {l} {u})")).collect();
            return Ok(format!("(and {})", goal.join(" ")));
        }
        if last.starts_with("Find a task plan in PDDL") {
            return self.llm_planner_turn(last, find("Your task is as follows:").ok_or_else(unknown)?).ok_or_else(unknown);
        }
        if last.starts_with("I want you to generate a PDDL problem file") {
            return self.llm_plus_p_turn(last).ok_or_else(unknown);
        }
        if last.starts_with("Role: You are an excellent PDDL domain file generator") {
            let mut text = print_domain(&builtin_blockworld_domain());
            if self.roll(last, "delta-domain") < 10 {
                text = text.trim_end().trim_end_matches(')').to_string();
            }
            return Ok(text);
        }
        if last.starts_with("Role: You are an excellent PDDL problem file generator") {
            let task = parse_task(between(last, "for the task: ", "\n").unwrap_or("")).ok_or_else(unknown)?;
            let st = parse_narration(last.split_once("for the task: ").map_or("", |(_, r)| r));
            return Ok(problem_text("delta-task", &st, &pairs(&target_stacks(&task, &st.ids)), false));
        }
        if last.starts_with("Role: You are an excellent assistant in decomposing") {
            let problem_prompt = find("Role: You are an excellent PDDL problem file generator").ok_or_else(unknown)?;
            return self.delta_subgoals_turn(problem_prompt).ok_or_else(unknown);
        }
        Err(unknown())
    }

    fn olp_turn(&self, intro: &str, last: &str, users: &[&str]) -> Option<String> {
        let task_text = between(intro, "for the following prompt: ", ". The following objects")?;
        let descriptors = split_list(between(intro, "available in the scene: ", ". Say 'Okay!'")?);
        let task = parse_task(task_text)?;
        let misread = matches!(task, TaskKind::Spelling { .. }) && self.roll(intro, "olp-misread") < 20;
        let stacks = alias_stacks(&task, &descriptors, misread);

        if last.starts_with("Below are a list of prototype recipes") {
            let wanted = |t: &str| match parse_task(t) {
                Some(TaskKind::Tower { .. }) => matches!(task, TaskKind::Tower { .. }),
                Some(TaskKind::Spelling { .. }) => matches!(task, TaskKind::Spelling { .. }),
                _ => matches!(task, TaskKind::Organize) && (t.contains("pile") || t.contains("Sort")),
            };
            let choice = last
                .lines()
                .filter_map(|l| l.strip_prefix("Prototype "))
                .filter_map(|l| l.split_once(": "))
                .find(|(_, t)| wanted(t))
                .map_or("1", |(i, _)| i)
                .to_string();
            let r = self.roll(intro, "olp-select");
            return Some(match r {
                0..15 => "Both prototypes look relevant to me.".into(),
                15..40 => format!("The closest one is Prototype {choice}."),
                _ => choice,
            });
        }
        let units = olp_units(&stacks, false);
        if last.starts_with("Generate a concise plan") {
            let steps: Vec<String> = units
                .iter()
                .enumerate()
                .map(|(i, u)| format!("{}. {}", i + 1, u["instruction"].as_str().unwrap_or_default()))
                .collect();
            return Some(format!(
                "{}\n\nEvidence: each step stacks one block on a clear block that already sits in the pile, so every pick and place acts on a free object.",
                steps.join("\n")
            ));
        }
        if last.starts_with("Make a Python list") {
            let names: Vec<String> = stacks.iter().flatten().map(|a| format!("'{a}'")).collect();
            return Some(format!("[{}]", names.join(", ")));
        }
        if last.starts_with("Format your generated plan") {
            let r = self.roll(intro, "olp-json");
            let doc = json!({ "plan": olp_units(&stacks, r < 25) });
            let text = serde_json::to_string_pretty(&doc).ok()?;
            return Some(if (25..45).contains(&r) { format!("Here is the plan:\n```json\n{text}\n```") } else { text });
        }
        if last.starts_with("The JSON plan you generated has the following problems") {
            debug_assert!(users.len() > 1);
            return serde_json::to_string_pretty(&json!({ "plan": units })).ok();
        }
        None
    }

    fn alias_turn(&self, last: &str) -> Option<String> {
        let aliases: Vec<String> = serde_json::from_str(between(last, "Object names: ", ". Object instances")?).ok()?;
        let instances: Vec<String> = serde_json::from_str(between(last, "Object instances: ", ". Reply with")?).ok()?;
        if self.roll(last, "alias") < 20 {
            return Some("Each name refers to the block of the same colour.".into());
        }
        let binding = greedy_binding(&aliases, &instances).ok()?;
        let map: BTreeMap<&str, &str> = binding.iter().collect();
        serde_json::to_string_pretty(&map).ok()
    }

    fn llm_planner_turn(&self, last: &str, goal_prompt: &str) -> Option<String> {
        let task = parse_task(goal_prompt)?;
        let st = parse_narration(between(last, "Initial state: ", "\u{0}")?);
        let targets = target_stacks(&task, &st.ids);
        let mut actions = build_actions(&st.support, &targets);
        if self.roll(last, "planner") < family_rate(&task, 30, 50, 60) && !actions.is_empty() {
            let at = self.roll(last, "planner-at") as usize;
            match self.roll(last, "planner-kind") % 4 {
                0 => {
                    let places: Vec<usize> = (0..actions.len()).filter(|&i| actions[i].name == "place").collect();
                    let i = places[at % places.len()];
                    actions[i].args.swap(0, 1);
                }
                1 => {
                    let picks: Vec<usize> = (0..actions.len()).filter(|&i| actions[i].name == "pick").collect();
                    actions.remove(picks[at % picks.len()]);
                }
                2 => actions = build_actions(&st.support, &wrong_targets(&task, &st.ids)),
                _ => return Some("To solve this, move the blocks so that they form the requested arrangement.".into()),
            }
        }
        Some(actions.iter().enumerate().map(|(i, a)| format!("{}. {a}", i + 1)).collect::<Vec<_>>().join("\n"))
    }

    fn llm_plus_p_turn(&self, last: &str) -> Option<String> {
        let task = parse_task(between(last, "achieve this task: ", ". Provide me")?)?;
        let st = parse_narration(between(last, "The current state of the world is: ", "\n\nYour goal")?);
        let mut goal = pairs(&target_stacks(&task, &st.ids));
        let mut drop_hand = false;
        let mut text;
        let flawed = self.roll(last, "llmp") < family_rate(&task, 40, 50, 60);
        let kind = self.roll(last, "llmp-kind") % 4;
        if flawed && kind == 1 {
            goal = pairs(&wrong_targets(&task, &st.ids));
        }
        if flawed && kind == 2 {
            drop_hand = true;
        }
        text = problem_text("generated-task", &st, &goal, drop_hand);
        if flawed && kind == 0 {
            text.pop();
        }
        if flawed && kind == 3 {
            text = text.replacen("(:goal (and", "(:goal (and (on table block_99)", 1);
        }
        Some(format!("```pddl\n{text}\n```"))
    }

    fn delta_subgoals_turn(&self, problem_prompt: &str) -> Option<String> {
        let task = parse_task(between(problem_prompt, "for the task: ", "\n")?)?;
        let st = parse_narration(problem_prompt.split_once("for the task: ")?.1);
        let mut goal = pairs(&target_stacks(&task, &st.ids));
        let flawed = self.roll(problem_prompt, "delta") < family_rate(&task, 30, 45, 55);
        let kind = self.roll(problem_prompt, "delta-kind") % 3;
        if flawed && kind == 0 {
            goal.reverse();
        }
        let mut lines: Vec<String> =
            goal.iter().enumerate().map(|(i, (l, u))| format!("{}. (and (on {l} {u}) (under {u} {l}))", i + 1)).collect();
        if flawed && kind == 1 {
            lines.push(format!("{}. (and (on {} {}))", lines.len() + 1, goal[0].1, goal[0].0));
            lines.push(format!("{}. (and (on {} {}))", lines.len() + 1, goal[0].0, goal[0].1));
        }
        if flawed && kind == 2 {
            if let Some(l) = lines.last_mut() {
                l.pop();
            }
        }
        Some(lines.join("\n"))
    }
}

impl ChatProvider for ScriptedResponder {
    fn complete(&self, messages: &[ChatMessage]) -> Result<ChatReply, ProviderError> {
        let text = self.respond(messages)?;
        let usage = approx_usage(messages, &text);
        Ok(ChatReply { text, usage })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn task_texts() {
        assert_eq!(
            parse_task("Make a tower of 4 red blocks"),
            Some(TaskKind::Tower { height: 4, kind: "red block".into() })
        );
        assert_eq!(
            parse_task("Make a tower of letter blocks that spells the word ROBOT from top to bottom."),
            Some(TaskKind::Spelling { word: "ROBOT".into() })
        );
        assert_eq!(parse_task("Organize the table by stacking"), Some(TaskKind::Organize));
        assert_eq!(parse_task("hello"), None);
    }

    #[test]
    fn ids_and_targets() {
        assert_eq!(id_kind("letter_block_s_2"), ("letter block".into(), Some("S".into())));
        assert_eq!(id_kind("red_block_10"), ("red block".into(), None));
        let ids: Vec<String> = ["letter_block_o_2", "letter_block_t_1", "letter_block_o_1", "letter_block_b_1", "letter_block_r_1"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        let t = target_stacks(&TaskKind::Spelling { word: "ROBOT".into() }, &ids);
        assert_eq!(t[0], ["letter_block_t_1", "letter_block_o_1", "letter_block_b_1", "letter_block_o_2", "letter_block_r_1"]);
    }

    #[test]
    fn clearing_then_building() {
        let support: BTreeMap<String, String> =
            [("a", "table"), ("b", "a"), ("c", "b"), ("d", "table")].iter().map(|(x, y)| (x.to_string(), y.to_string())).collect();
        let acts: Vec<String> = build_actions(&support, &[vec!["d".into(), "a".into()]]).iter().map(ToString::to_string).collect();
        assert_eq!(
            acts,
            ["(pick c b)", "(place c table)", "(pick b a)", "(place b table)", "(pick a table)", "(place a d)"]
        );
    }

    #[test]
    fn narration_round_trip() {
        let text = "Objects in the scene: a (block), b (red block).\nthe table has free space.\nblock a is on the table.\nred block b is on block a.\nnothing is on red block b";
        let st = parse_narration(text);
        assert_eq!(st.ids, ["a", "b"]);
        assert_eq!(st.support["b"], "a");
        assert_eq!(st.support["a"], "table");
    }
}
