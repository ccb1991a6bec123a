//! Trial matrices: scene generation, one approach per trial, execution and
//! record keeping.

use std::time::Instant;

use olp_core::grounding::GeomThresholds;
use olp_core::pddl::{builtin_blockworld_domain, ActionCall};
use olp_core::planner::plan_olp;
use olp_core::scene::SceneState;
use olp_core::simulator::{Simulator, TaskSpec};
use olp_llm::baselines::{delta_baseline, llm_planner_baseline, llm_plus_p_baseline};
use olp_llm::library::ExemplarLibrary;
use olp_llm::pipeline::{run_olp_pipeline, scene_descriptors};
use olp_llm::provider::ChatProvider;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::metrics::{aggregate, MetricsRow, TrialRecord};
use crate::scenes::gen_scene;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Approach {
    #[serde(rename = "OLP")]
    Olp,
    #[serde(rename = "LLM-Planner")]
    LlmPlanner,
    #[serde(rename = "LLM+P")]
    LlmPlusP,
    #[serde(rename = "DELTA")]
    Delta,
}

impl Approach {
    pub const ALL: [Approach; 4] = [Approach::Olp, Approach::LlmPlanner, Approach::LlmPlusP, Approach::Delta];

    pub fn name(self) -> &'static str {
        match self {
            Approach::Olp => "OLP",
            Approach::LlmPlanner => "LLM-Planner",
            Approach::LlmPlusP => "LLM+P",
            Approach::Delta => "DELTA",
        }
    }
}

impl std::fmt::Display for Approach {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Approach {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        Approach::ALL.into_iter().find(|a| a.name().eq_ignore_ascii_case(s)).ok_or_else(|| format!("unknown approach `{s}`"))
    }
}

/// Default row label for a task.
pub fn setting_label(spec: &TaskSpec) -> String {
    match spec {
        TaskSpec::Tower { height } => format!("Tower (n={height})"),
        TaskSpec::Spelling { word } => format!("Spelling ({})", word.to_uppercase()),
        TaskSpec::Organize { types } => {
            format!("Organize ({})", types.iter().map(|t| t.count.to_string()).collect::<Vec<_>>().join("/"))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialConfig {
    pub approach: Approach,
    pub setting: String,
    pub spec: TaskSpec,
    pub seed: u64,
    pub trials: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskEntry {
    #[serde(default)]
    pub setting: Option<String>,
    #[serde(flatten)]
    pub spec: TaskSpec,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Timing {
    #[default]
    Wall,
    /// Every plan time reads as zero, which keeps reports byte-stable.
    Off,
}

/// A matrix file: every task is run by every approach under every seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MatrixConfig {
    pub approaches: Vec<Approach>,
    pub seeds: Vec<u64>,
    pub trials: u32,
    #[serde(default)]
    pub timing: Timing,
    #[serde(default)]
    pub motion_failure_rate: f64,
    #[serde(rename = "task")]
    pub tasks: Vec<TaskEntry>,
}

#[derive(Debug, Error)]
pub enum MatrixError {
    #[error("matrix file: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("matrix file: {0}")]
    Invalid(String),
}

impl MatrixConfig {
    pub fn from_toml(text: &str) -> Result<Self, MatrixError> {
        let cfg: MatrixConfig = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), MatrixError> {
        let bad = |m: &str| Err(MatrixError::Invalid(m.to_string()));
        if self.trials < 1 {
            return bad("trials must be at least 1");
        }
        if self.approaches.is_empty() || self.seeds.is_empty() || self.tasks.is_empty() {
            return bad("approaches, seeds and tasks must be non-empty");
        }
        if !(0.0..=1.0).contains(&self.motion_failure_rate) {
            return bad("motion_failure_rate must lie in [0, 1]");
        }
        for t in &self.tasks {
            t.spec.validate().map_err(MatrixError::Invalid)?;
        }
        Ok(())
    }

    /// Task-major, then approach, then seed.
    pub fn trial_configs(&self) -> Vec<TrialConfig> {
        let mut out = Vec::new();
        for t in &self.tasks {
            let setting = t.setting.clone().unwrap_or_else(|| setting_label(&t.spec));
            for &approach in &self.approaches {
                for &seed in &self.seeds {
                    out.push(TrialConfig { approach, setting: setting.clone(), spec: t.spec.clone(), seed, trials: self.trials });
                }
            }
        }
        out
    }
}

/// Scene seed of one trial (splitmix64 over seed and trial index).
pub fn scene_seed(seed: u64, trial: u32) -> u64 {
    let mut z = seed.wrapping_add((trial as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Everything a trial needs besides its config.
pub struct Harness<'a> {
    pub library: &'a ExemplarLibrary,
    pub provider: &'a dyn ChatProvider,
    pub thresholds: GeomThresholds,
    pub simulator: Simulator,
    pub timing: Timing,
}

struct Attempt {
    actions: Result<Vec<ActionCall>, String>,
    tokens: u64,
    seconds: f64,
}

impl Harness<'_> {
    fn plan(&self, approach: Approach, task: &str, scene: &SceneState) -> Attempt {
        let start = Instant::now();
        let (actions, tokens) = match approach {
            Approach::Olp => {
                let run = run_olp_pipeline(task, &scene_descriptors(scene), &scene.instance_ids(), self.library, self.provider);
                let tokens = run.usage().total();
                let actions = run.result.map_err(|e| e.to_string()).and_then(|out| {
                    plan_olp(&out.plan, &out.binding, scene, &builtin_blockworld_domain(), &self.thresholds)
                        .map(|p| p.plan.actions())
                        .map_err(|e| format!("planning: {e}"))
                });
                (actions, tokens)
            }
            _ => {
                let examples = match self.library.retrieve(task) {
                    Ok(ranked) => self.library.get(ranked[0].index).baseline.clone(),
                    Err(e) => return Attempt { actions: Err(e.to_string()), tokens: 0, seconds: 0.0 },
                };
                let thr = &self.thresholds;
                let run = match approach {
                    Approach::LlmPlanner => llm_planner_baseline(task, scene, self.provider, thr),
                    Approach::LlmPlusP => llm_plus_p_baseline(task, scene, self.provider, &examples, thr),
                    _ => delta_baseline(task, scene, self.provider, &examples, thr),
                };
                let tokens = run.usage().total();
                (run.result.map(|o| o.actions).map_err(|e| e.to_string()), tokens)
            }
        };
        let seconds = match self.timing {
            Timing::Wall => start.elapsed().as_secs_f64(),
            Timing::Off => 0.0,
        };
        Attempt { actions, tokens, seconds }
    }

    /// Generates the scene, plans, executes. Never panics on model output;
    /// every failure ends up in the record.
    pub fn run_trial(&self, cfg: &TrialConfig, trial: u32) -> TrialRecord {
        let task = cfg.spec.instruction();
        let sseed = scene_seed(cfg.seed, trial);
        let mut rec = TrialRecord {
            setting: cfg.setting.clone(),
            approach: cfg.approach.name().to_string(),
            task: task.clone(),
            seed: cfg.seed,
            trial,
            scene_seed: sseed,
            completed: false,
            succeeded: false,
            plan_time_s: 0.0,
            tokens: 0,
            plan_length: 0,
            failure: None,
        };
        let scene = match gen_scene(&cfg.spec, sseed) {
            Ok(s) => s,
            Err(e) => {
                rec.failure = Some(format!("scene: {e}"));
                return rec;
            }
        };
        let attempt = self.plan(cfg.approach, &task, &scene);
        rec.tokens = attempt.tokens;
        rec.plan_time_s = attempt.seconds;
        match attempt.actions {
            Ok(actions) => {
                let trace = self.simulator.execute_plan(&scene, &actions, &cfg.spec);
                rec.plan_length = actions.len();
                rec.completed = trace.completed;
                rec.succeeded = trace.succeeded;
                if !trace.completed {
                    let failed = trace.steps.last().map(|s| format!("{} {:?}", s.action, s.outcome));
                    rec.failure = Some(format!("execution: {}", failed.unwrap_or_default()));
                }
            }
            Err(e) => rec.failure = Some(e),
        }
        rec
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConfigResult {
    pub config: TrialConfig,
    pub metrics: MetricsRow,
    pub records: Vec<TrialRecord>,
}

/// Runs every trial of every config on `jobs` threads (0 = rayon default).
/// Results come back in config order regardless of scheduling.
pub fn run_matrix(configs: &[TrialConfig], harness: &Harness, jobs: usize) -> Vec<ConfigResult> {
    let work: Vec<(usize, u32)> = configs.iter().enumerate().flat_map(|(i, c)| (0..c.trials).map(move |t| (i, t))).collect();
    let run = || work.par_iter().map(|&(i, t)| harness.run_trial(&configs[i], t)).collect::<Vec<_>>();
    let records = match rayon::ThreadPoolBuilder::new().num_threads(jobs).build() {
        Ok(pool) => pool.install(run),
        Err(e) => {
            log::warn!("thread pool unavailable ({e}), running trials serially");
            work.iter().map(|&(i, t)| harness.run_trial(&configs[i], t)).collect()
        }
    };
    let mut records = records.into_iter();
    configs
        .iter()
        .map(|c| {
            let recs: Vec<TrialRecord> = records.by_ref().take(c.trials as usize).collect();
            let refs: Vec<&TrialRecord> = recs.iter().collect();
            ConfigResult { config: c.clone(), metrics: aggregate(&c.setting, c.approach.name(), &refs), records: recs }
        })
        .collect()
}

/// All records as JSON lines.
pub fn records_jsonl<'a>(records: impl IntoIterator<Item = &'a TrialRecord>) -> String {
    records.into_iter().map(|r| serde_json::to_string(r).expect("record serializes") + "\n").collect()
}
