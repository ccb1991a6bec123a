//! Two-stage prompting: exemplar retrieval, prototype selection, sketch,
//! JSON codification with one repair turn, and alias grounding.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::sync::LazyLock;

use olp_core::foon::{lint_olp_json, parse_olp_json, serialize_olp, ObjectLevelPlan};
use olp_core::grounding::{AliasBinding, BindingError};
use olp_core::scene::{SceneObject, SceneState};
use regex::Regex;
use serde::Serialize;
use thiserror::Error;

use crate::library::{Exemplar, ExemplarLibrary, LibraryError};
use crate::prompts;
use crate::provider::{ChatMessage, ChatProvider, ChatTranscript, ProviderError, TokenUsage};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Retrieve,
    Intro,
    Select,
    Sketch,
    Objects,
    Codify,
    Ground,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Stage::Retrieve => "retrieve",
            Stage::Intro => "intro",
            Stage::Select => "select",
            Stage::Sketch => "sketch",
            Stage::Objects => "objects",
            Stage::Codify => "codify",
            Stage::Ground => "ground",
        })
    }
}

#[derive(Debug, Error)]
pub enum PipelineErrorKind {
    #[error("no scene objects given")]
    EmptyScene,
    #[error(transparent)]
    Provider(#[from] ProviderError),
    #[error(transparent)]
    Library(#[from] LibraryError),
    #[error("reply names no prototype in 1..={candidates}: {reply:?}")]
    UnparsableSelection { reply: String, candidates: usize },
    #[error("reply contains no numbered plan steps")]
    EmptySketch,
    #[error("no valid JSON plan after repair: {}", .violations.join("; "))]
    CodificationFailed { violations: Vec<String> },
    #[error("no scene instance matches `{0}`")]
    UnresolvableAlias(String),
    #[error("alias binding: {0}")]
    Binding(#[from] BindingError),
}

#[derive(Debug, Error)]
#[error("{stage} stage: {kind}")]
pub struct PipelineError {
    pub stage: Stage,
    pub kind: PipelineErrorKind,
}

impl PipelineError {
    pub fn new(stage: Stage, kind: impl Into<PipelineErrorKind>) -> Self {
        PipelineError { stage, kind: kind.into() }
    }
}

/// One multi-turn chat with a provider, keeping its transcript and usage.
pub struct Conversation<'a> {
    provider: &'a dyn ChatProvider,
    pub transcript: ChatTranscript,
}

impl<'a> Conversation<'a> {
    pub fn new(provider: &'a dyn ChatProvider, system: Option<&str>) -> Self {
        let mut transcript = ChatTranscript::default();
        if let Some(s) = system {
            transcript.messages.push(ChatMessage::system(s));
        }
        Conversation { provider, transcript }
    }

    /// Sends a user turn and returns the assistant reply.
    pub fn ask(&mut self, stage: Stage, text: impl Into<String>) -> Result<String, PipelineError> {
        self.transcript.messages.push(ChatMessage::user(text));
        match self.provider.complete(&self.transcript.messages) {
            Ok(reply) => {
                self.transcript.usage += reply.usage;
                self.transcript.messages.push(ChatMessage::assistant(reply.text.clone()));
                Ok(reply.text)
            }
            Err(e) => {
                self.transcript.messages.pop();
                Err(PipelineError::new(stage, e))
            }
        }
    }

    pub fn usage(&self) -> TokenUsage {
        self.transcript.usage
    }
}

/// Natural-language name of a scene instance, e.g. `red block` or `letter block S`.
pub fn describe_instance(obj: &SceneObject) -> String {
    match &obj.letter {
        Some(l) => format!("{} {}", obj.kind, l.to_uppercase()),
        None => obj.kind.clone(),
    }
}

/// Distinct instance descriptions in instance-id order.
pub fn scene_descriptors(scene: &SceneState) -> Vec<String> {
    let mut seen = BTreeSet::new();
    scene.objects.values().map(describe_instance).filter(|d| seen.insert(d.clone())).collect()
}

/// `Prototype i: <task>` blocks followed by each exemplar's numbered steps.
pub fn render_candidates(candidates: &[&Exemplar]) -> String {
    candidates
        .iter()
        .enumerate()
        .map(|(i, e)| format!("Prototype {}: {}", i + 1, e.rendering()))
        .collect::<Vec<_>>()
        .join("\n\n")
}

static INTEGER: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"\d+").unwrap());
static NUMBERED: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"^\s*(?:\*\*)?\d+[.)](?:\*\*)?\s+(.*\S)\s*$").unwrap());

/// First integer of `reply` within `1..=n`, as a 0-based index.
pub fn parse_selection(reply: &str, n: usize) -> Option<usize> {
    INTEGER
        .find_iter(reply)
        .filter_map(|m| m.as_str().parse::<usize>().ok())
        .find(|&i| (1..=n).contains(&i))
        .map(|i| i - 1)
}

/// Text of every numbered line (`1. ...` or `1) ...`), numbering stripped.
pub fn parse_numbered_lines(reply: &str) -> Vec<String> {
    reply.lines().filter_map(|l| NUMBERED.captures(l)).map(|c| c[1].to_string()).collect()
}

/// Parses a Python- or JSON-style list of strings. Returns an empty list when
/// nothing list-like is present.
pub fn parse_object_list(reply: &str) -> Vec<String> {
    let (Some(open), Some(close)) = (reply.find('['), reply.rfind(']')) else { return Vec::new() };
    if close < open {
        return Vec::new();
    }
    reply[open + 1..close]
        .split(',')
        .map(|s| s.trim().trim_matches(|c| c == '"' || c == '\'').trim().to_string())
        .filter(|s| !s.is_empty())
        .collect()
}

/// The first balanced `{...}` in `text`, respecting JSON string literals.
/// Markdown fences and surrounding prose are skipped.
pub fn extract_json_object(text: &str) -> Option<&str> {
    let start = text.find('{')?;
    let mut depth = 0usize;
    let mut in_string = false;
    let mut escaped = false;
    for (i, c) in text[start..].char_indices() {
        if in_string {
            match c {
                _ if escaped => escaped = false,
                '\\' => escaped = true,
                '"' => in_string = false,
                _ => {}
            }
            continue;
        }
        match c {
            '"' => in_string = true,
            '{' => depth += 1,
            '}' => {
                depth -= 1;
                if depth == 0 {
                    return Some(&text[start..start + i + 1]);
                }
            }
            _ => {}
        }
    }
    None
}

/// Asks for the prototype choice. The caller falls back to the top-ranked
/// candidate on `UnparsableSelection`.
pub fn select_prototype(conv: &mut Conversation, candidates: &[&Exemplar]) -> Result<usize, PipelineError> {
    let reply = conv.ask(Stage::Select, prompts::olp_select(&render_candidates(candidates)))?;
    parse_selection(&reply, candidates.len()).ok_or_else(|| {
        PipelineError::new(Stage::Select, PipelineErrorKind::UnparsableSelection { reply, candidates: candidates.len() })
    })
}

/// Requests the plan sketch and returns its steps.
pub fn stage1_sketch(conv: &mut Conversation, task: &str) -> Result<Vec<String>, PipelineError> {
    let reply = conv.ask(Stage::Sketch, prompts::olp_sketch(task))?;
    let steps = parse_numbered_lines(&reply);
    if steps.is_empty() {
        return Err(PipelineError::new(Stage::Sketch, PipelineErrorKind::EmptySketch));
    }
    Ok(steps)
}

/// Asks which objects the sketch uses.
pub fn list_used_objects(conv: &mut Conversation) -> Result<Vec<String>, PipelineError> {
    Ok(parse_object_list(&conv.ask(Stage::Objects, prompts::OLP_OBJECTS)?))
}

fn check_codified(reply: &str) -> Result<ObjectLevelPlan, Vec<String>> {
    let Some(json) = extract_json_object(reply) else {
        return Err(vec!["the reply contains no JSON object".into()]);
    };
    let violations = lint_olp_json(json);
    if !violations.is_empty() {
        return Err(violations.iter().map(ToString::to_string).collect());
    }
    let plan = parse_olp_json(json).map_err(|e| vec![e.to_string()])?;
    if plan.units.is_empty() {
        return Err(vec!["the plan has no steps".into()]);
    }
    Ok(plan)
}

#[derive(Debug, Clone)]
pub struct Codified {
    pub plan: ObjectLevelPlan,
    pub repaired: bool,
}

/// Requests the JSON plan, with one repair turn listing every violation.
pub fn stage2_codify(conv: &mut Conversation, prototype_json: &str) -> Result<Codified, PipelineError> {
    let reply = conv.ask(Stage::Codify, prompts::olp_json(prototype_json))?;
    let problems = match check_codified(&reply) {
        Ok(plan) => return Ok(Codified { plan, repaired: false }),
        Err(p) => p,
    };
    log::warn!("codified plan rejected, asking for a repair: {}", problems.join("; "));
    let reply = conv.ask(Stage::Codify, prompts::olp_repair(&problems))?;
    check_codified(&reply)
        .map(|plan| Codified { plan, repaired: true })
        .map_err(|violations| PipelineError::new(Stage::Codify, PipelineErrorKind::CodificationFailed { violations }))
}

const ORDINALS: [&str; 10] = ["first", "second", "third", "fourth", "fifth", "sixth", "seventh", "eighth", "ninth", "tenth"];

fn alias_tokens(alias: &str) -> (Option<usize>, BTreeSet<String>) {
    let mut ordinal = None;
    let mut tokens = BTreeSet::new();
    for t in alias.split(|c: char| !c.is_alphanumeric()).filter(|t| !t.is_empty()) {
        let t = t.to_lowercase();
        if let Some(i) = ORDINALS.iter().position(|o| *o == t) {
            ordinal.get_or_insert(i + 1);
        } else if let Ok(i) = t.parse::<usize>() {
            ordinal.get_or_insert(i);
        } else {
            tokens.insert(t);
        }
    }
    (ordinal, tokens)
}

/// Type tokens and numeric index of an instance id like `red_block_2`.
fn instance_tokens(id: &str) -> (BTreeSet<String>, usize) {
    let mut parts: Vec<String> = id.split('_').filter(|t| !t.is_empty()).map(str::to_lowercase).collect();
    let index = match parts.last().and_then(|p| p.parse::<usize>().ok()) {
        Some(i) => {
            parts.pop();
            i
        }
        None => 0,
    };
    (parts.into_iter().collect(), index)
}

/// Deterministic matcher: aliases in ordinal order each take the
/// lowest-indexed unbound instance whose type tokens cover the alias tokens.
pub fn greedy_binding(aliases: &[String], instances: &[String]) -> Result<AliasBinding, PipelineErrorKind> {
    let mut order: Vec<(usize, usize, &String)> = aliases
        .iter()
        .enumerate()
        .map(|(pos, a)| (alias_tokens(a).0.unwrap_or(usize::MAX), pos, a))
        .collect();
    order.sort();
    let mut pool: Vec<(usize, &String, BTreeSet<String>)> = instances
        .iter()
        .map(|id| {
            let (tokens, index) = instance_tokens(id);
            (index, id, tokens)
        })
        .collect();
    pool.sort();
    let mut used = BTreeSet::new();
    let mut map = BTreeMap::new();
    for (_, _, alias) in order {
        let (_, wanted) = alias_tokens(alias);
        let hit = pool
            .iter()
            .find(|(_, id, tokens)| !used.contains(*id) && !wanted.is_empty() && wanted.is_subset(tokens))
            .ok_or_else(|| PipelineErrorKind::UnresolvableAlias(alias.clone()))?;
        used.insert(hit.1);
        map.insert(alias.clone(), hit.1.clone());
    }
    Ok(AliasBinding::new(map)?)
}

fn llm_binding(reply: &str, aliases: &[String], instances: &[String]) -> Option<AliasBinding> {
    let json = extract_json_object(reply)?;
    let raw: BTreeMap<String, String> = serde_json::from_str(json).ok()?;
    let known: BTreeSet<&str> = instances.iter().map(String::as_str).collect();
    let mut map = BTreeMap::new();
    for alias in aliases {
        let id = raw.get(alias)?;
        if !known.contains(id.as_str()) {
            return None;
        }
        map.insert(alias.clone(), id.clone());
    }
    AliasBinding::new(map).ok()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum BindingSource {
    Llm,
    Greedy,
}

/// Maps every plan alias to a distinct scene instance. With a conversation
/// the model is asked first; an unusable answer falls back to the greedy
/// matcher.
pub fn ground_aliases(
    plan: &ObjectLevelPlan,
    instances: &[String],
    conv: Option<&mut Conversation>,
) -> Result<(AliasBinding, BindingSource), PipelineError> {
    let aliases = plan.aliases();
    let err = |k| PipelineError::new(Stage::Ground, k);
    if let Some(conv) = conv {
        let reply = conv.ask(Stage::Ground, prompts::alias_grounding(&aliases, instances))?;
        match llm_binding(&reply, &aliases, instances) {
            Some(b) => {
                b.check_total(plan).map_err(|e| err(e.into()))?;
                return Ok((b, BindingSource::Llm));
            }
            None => log::warn!("alias mapping reply unusable, matching by name: {reply:?}"),
        }
    }
    let b = greedy_binding(&aliases, instances).map_err(err)?;
    b.check_total(plan).map_err(|e| err(e.into()))?;
    Ok((b, BindingSource::Greedy))
}

#[derive(Debug, Clone, Serialize)]
pub struct OlpOutput {
    #[serde(serialize_with = "ser_plan")]
    pub plan: ObjectLevelPlan,
    pub binding: AliasBinding,
    /// Library index of the chosen prototype.
    pub prototype: usize,
    pub selection_fallback: bool,
    pub sketch: Vec<String>,
    pub used_objects: Vec<String>,
    pub repaired: bool,
    pub binding_source: BindingSource,
}

fn ser_plan<S: serde::Serializer>(plan: &ObjectLevelPlan, s: S) -> Result<S::Ok, S::Error> {
    let v: serde_json::Value = serde_json::from_str(&serialize_olp(plan)).map_err(serde::ser::Error::custom)?;
    v.serialize(s)
}

/// Outcome of a run plus everything spent on it, including failed runs.
#[derive(Debug)]
pub struct Run<T, E> {
    pub result: Result<T, E>,
    pub transcripts: Vec<ChatTranscript>,
}

impl<T, E> Run<T, E> {
    pub fn usage(&self) -> TokenUsage {
        let mut u = TokenUsage::default();
        for t in &self.transcripts {
            u += t.usage;
        }
        u
    }
}

/// Retrieve, select, sketch, codify, ground.
///
/// `scene_objects` are the descriptions shown to the model; `instances` are
/// the scene ids aliases bind to.
pub fn run_olp_pipeline(
    task: &str,
    scene_objects: &[String],
    instances: &[String],
    lib: &ExemplarLibrary,
    provider: &dyn ChatProvider,
) -> Run<OlpOutput, PipelineError> {
    let mut transcripts = Vec::new();
    let result = olp_stages(task, scene_objects, instances, lib, provider, &mut transcripts);
    Run { result, transcripts }
}

fn olp_stages(
    task: &str,
    scene_objects: &[String],
    instances: &[String],
    lib: &ExemplarLibrary,
    provider: &dyn ChatProvider,
    transcripts: &mut Vec<ChatTranscript>,
) -> Result<OlpOutput, PipelineError> {
    if scene_objects.is_empty() || instances.is_empty() {
        return Err(PipelineError::new(Stage::Retrieve, PipelineErrorKind::EmptyScene));
    }
    let ranked = lib.retrieve(task).map_err(|e| PipelineError::new(Stage::Retrieve, e))?;
    let candidates: Vec<&Exemplar> = ranked.iter().map(|r| lib.get(r.index)).collect();

    let mut conv = Conversation::new(provider, Some(prompts::OLP_SYSTEM));
    let main = (|| {
        conv.ask(Stage::Intro, prompts::olp_intro(task, scene_objects))?;
        let (choice, selection_fallback) = match select_prototype(&mut conv, &candidates) {
            Ok(i) => (i, false),
            Err(PipelineError { kind: PipelineErrorKind::UnparsableSelection { reply, .. }, .. }) => {
                log::warn!("prototype selection {reply:?} unparsable, using the top-ranked exemplar");
                (0, true)
            }
            Err(e) => return Err(e),
        };
        let sketch = stage1_sketch(&mut conv, task)?;
        let used_objects = list_used_objects(&mut conv)?;
        let codified = stage2_codify(&mut conv, &serialize_olp(&candidates[choice].plan))?;
        Ok((ranked[choice].index, selection_fallback, sketch, used_objects, codified))
    })();
    transcripts.push(conv.transcript);
    let (prototype, selection_fallback, sketch, used_objects, codified) = main?;

    let mut gconv = Conversation::new(provider, None);
    let grounded = ground_aliases(&codified.plan, instances, Some(&mut gconv));
    transcripts.push(gconv.transcript);
    let (binding, binding_source) = grounded?;

    Ok(OlpOutput {
        plan: codified.plan,
        binding,
        prototype,
        selection_fallback,
        sketch,
        used_objects,
        repaired: codified.repaired,
        binding_source,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::provider::FnProvider;

    fn s(v: &[&str]) -> Vec<String> {
        v.iter().map(|x| x.to_string()).collect()
    }

    #[test]
    fn selection_parsing() {
        assert_eq!(parse_selection("2", 3), Some(1));
        assert_eq!(parse_selection("The best is prototype 1.", 3), Some(0));
        assert_eq!(parse_selection("7", 3), None);
        assert_eq!(parse_selection("Prototype 9 or maybe 3", 3), Some(2));
        assert_eq!(parse_selection("none", 3), None);
    }

    #[test]
    fn numbered_lines() {
        let r = "Sure!\n1. Pick a.\n2) Place b.\n  3. Do c\nEvidence: 4 blocks\n**4.** Last";
        assert_eq!(parse_numbered_lines(r), s(&["Pick a.", "Place b.", "Do c", "Last"]));
        assert!(parse_numbered_lines("no steps here").is_empty());
    }

    #[test]
    fn object_lists() {
        assert_eq!(parse_object_list("['first red block', \"second red block\"]"), s(&["first red block", "second red block"]));
        assert!(parse_object_list("nothing").is_empty());
    }

    #[test]
    fn json_extraction() {
        let r = "Here:\n```json\n{\"a\": {\"b\": \"}\"}}\n```\ntrailing {";
        assert_eq!(extract_json_object(r), Some("{\"a\": {\"b\": \"}\"}}"));
        assert_eq!(extract_json_object("no json"), None);
        assert_eq!(extract_json_object("{ unbalanced"), None);
    }

    #[test]
    fn greedy_grounding() {
        let inst = s(&["blue_block_1", "red_block_1", "red_block_2"]);
        let b = greedy_binding(&s(&["second red block", "first red block"]), &inst).unwrap();
        assert_eq!(b.get("first red block"), Some("red_block_1"));
        assert_eq!(b.get("second red block"), Some("red_block_2"));
        let b = greedy_binding(&s(&["block"]), &s(&["red_block_3"])).unwrap();
        assert_eq!(b.get("block"), Some("red_block_3"));
        assert!(matches!(
            greedy_binding(&s(&["green block"]), &inst),
            Err(PipelineErrorKind::UnresolvableAlias(a)) if a == "green block"
        ));
        let letters = s(&["letter_block_a_1", "letter_block_b_1"]);
        let b = greedy_binding(&s(&["letter block B", "letter block A"]), &letters).unwrap();
        assert_eq!(b.get("letter block A"), Some("letter_block_a_1"));
    }

    #[test]
    fn conversation_pops_failed_turn() {
        let p = FnProvider(|_: &[ChatMessage]| Err(ProviderError::Backend("down".into())));
        let mut c = Conversation::new(&p, Some("sys"));
        let e = c.ask(Stage::Sketch, "hi").unwrap_err();
        assert_eq!(e.stage, Stage::Sketch);
        assert_eq!(e.to_string(), "sketch stage: down");
        assert_eq!(c.transcript.messages.len(), 1);
    }
}
