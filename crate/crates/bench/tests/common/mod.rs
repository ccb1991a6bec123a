#![allow(dead_code)]

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::sync::Mutex;

use olp_bench::matrix::{Approach, Harness, Timing, TrialConfig};
use olp_bench::scripted::ScriptedResponder;
use olp_core::grounding::GeomThresholds;
use olp_core::scene::{SceneObject, SceneState, Table};
use olp_core::simulator::{stacks_scene, Simulator, TaskSpec, BLOCK_SIZE};
use olp_llm::library::ExemplarLibrary;
use olp_llm::provider::{ChatMessage, ChatProvider, ChatReply, ProviderError, ReplayProvider};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub fn data(rel: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data").join(rel)
}

pub fn library() -> ExemplarLibrary {
    ExemplarLibrary::load(&data("exemplars.json")).expect("exemplar library loads")
}

pub fn replay() -> ReplayProvider {
    ReplayProvider::from_dir(&data("fixtures")).expect("fixtures load")
}

pub fn harness<'a>(library: &'a ExemplarLibrary, provider: &'a dyn ChatProvider) -> Harness<'a> {
    Harness {
        library,
        provider,
        thresholds: GeomThresholds::default(),
        simulator: Simulator::default(),
        timing: Timing::Off,
    }
}

pub fn config(approach: Approach, spec: TaskSpec, seed: u64) -> TrialConfig {
    TrialConfig { approach, setting: "test".into(), spec, seed, trials: 1 }
}

/// Forwards to a scripted responder and keeps every message list it saw.
#[derive(Default)]
pub struct Capture {
    pub inner: ScriptedResponder,
    pub calls: Mutex<Vec<Vec<ChatMessage>>>,
}

impl ChatProvider for Capture {
    fn complete(&self, messages: &[ChatMessage]) -> Result<ChatReply, ProviderError> {
        self.calls.lock().unwrap().push(messages.to_vec());
        self.inner.complete(messages)
    }
}

impl Capture {
    pub fn last_user_texts(&self) -> Vec<String> {
        self.calls.lock().unwrap().iter().map(|m| m.last().unwrap().text.clone()).collect()
    }
}

/// A random scene of `b0..bn` stacked at random, each block nudged by up to
/// `jitter` and lifted by up to `gap`; with `hold`, the top of one stack may
/// be held instead. Also returns the stacks (bottom first) and the held id.
pub fn random_layout(
    rng: &mut ChaCha8Rng,
    max_blocks: usize,
    jitter: f64,
    gap: f64,
    hold: bool,
) -> (SceneState, Vec<Vec<String>>, Option<String>) {
    let n = rng.random_range(1..=max_blocks);
    let mut stacks: Vec<Vec<String>> = vec![Vec::new(); n];
    for i in 0..n {
        let s = rng.random_range(0..n);
        stacks[s].push(format!("b{i}"));
    }
    stacks.retain(|s| !s.is_empty());
    let mut scene = stacks_scene(&stacks, &BTreeMap::new(), Table::default());
    for s in &stacks {
        let mut lift = 0.0;
        for (level, id) in s.iter().enumerate() {
            if level > 0 {
                lift += rng.random_range(0.0..=gap);
            }
            let o = scene.objects.get_mut(id).unwrap();
            o.position[0] += rng.random_range(-jitter..=jitter);
            o.position[1] += rng.random_range(-jitter..=jitter);
            o.position[2] += lift;
        }
    }
    let mut held = None;
    if hold && rng.random_bool(0.3) {
        let s = rng.random_range(0..stacks.len());
        let id = stacks[s].pop().unwrap();
        scene.objects.get_mut(&id).unwrap().position[2] = 0.5;
        scene.hand = Some(id.clone());
        held = Some(id);
        stacks.retain(|s| !s.is_empty());
    }
    (scene, stacks, held)
}

pub fn letter_cube(letter: &str, position: [f64; 3]) -> SceneObject {
    let mut o = SceneObject::cube("letter block", position, BLOCK_SIZE / 2.0);
    o.letter = Some(letter.to_string());
    o
}

pub fn squash(text: &str) -> String {
    text.split_whitespace().collect::<Vec<_>>().join(" ")
}
