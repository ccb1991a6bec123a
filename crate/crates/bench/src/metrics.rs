//! Per-trial records and their aggregation into report rows.

use serde::{Deserialize, Serialize};

/// What one trial produced. Failed trials carry the failure message and
/// count as neither complete nor successful.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub setting: String,
    pub approach: String,
    pub task: String,
    pub seed: u64,
    pub trial: u32,
    pub scene_seed: u64,
    pub completed: bool,
    pub succeeded: bool,
    pub plan_time_s: f64,
    pub tokens: u64,
    pub plan_length: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub failure: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct MeanSd {
    pub mean: f64,
    pub sd: f64,
}

impl MeanSd {
    /// Mean and sample standard deviation; a single value has sd 0.
    pub fn of(values: &[f64]) -> Option<MeanSd> {
        if values.is_empty() {
            return None;
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let sd = if values.len() < 2 {
            0.0
        } else {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        };
        Some(MeanSd { mean, sd })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub setting: String,
    pub approach: String,
    pub trials: usize,
    pub plan_complete_pct: f64,
    pub success_pct: f64,
    pub plan_time_s: MeanSd,
    pub tokens: MeanSd,
    /// Over successful trials only; absent when none succeeded.
    pub plan_length: Option<MeanSd>,
}

/// Aggregates records that share a setting and approach.
pub fn aggregate(setting: &str, approach: &str, records: &[&TrialRecord]) -> MetricsRow {
    let n = records.len();
    let pct = |k: usize| if n == 0 { 0.0 } else { 100.0 * k as f64 / n as f64 };
    let times: Vec<f64> = records.iter().map(|r| r.plan_time_s).collect();
    let tokens: Vec<f64> = records.iter().map(|r| r.tokens as f64).collect();
    let lengths: Vec<f64> = records.iter().filter(|r| r.succeeded).map(|r| r.plan_length as f64).collect();
    MetricsRow {
        setting: setting.to_string(),
        approach: approach.to_string(),
        trials: n,
        plan_complete_pct: pct(records.iter().filter(|r| r.completed).count()),
        success_pct: pct(records.iter().filter(|r| r.succeeded).count()),
        plan_time_s: MeanSd::of(&times).unwrap_or_default(),
        tokens: MeanSd::of(&tokens).unwrap_or_default(),
        plan_length: MeanSd::of(&lengths),
    }
}

/// One row per (setting, approach), in order of first appearance.
pub fn aggregate_all(records: &[TrialRecord]) -> Vec<MetricsRow> {
    let mut keys: Vec<(&str, &str)> = Vec::new();
    for r in records {
        let k = (r.setting.as_str(), r.approach.as_str());
        if !keys.contains(&k) {
            keys.push(k);
        }
    }
    keys.into_iter()
        .map(|(s, a)| {
            let group: Vec<&TrialRecord> = records.iter().filter(|r| r.setting == s && r.approach == a).collect();
            aggregate(s, a, &group)
        })
        .collect()
}
