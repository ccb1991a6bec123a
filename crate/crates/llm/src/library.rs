//! Few-shot exemplar library with similarity retrieval.

use std::path::Path;

use olp_core::foon::{parse_olp_json, serialize_olp, validate_olp, FoonError, ObjectLevelPlan};
use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::embed::{cosine, EmbedError, TfIdf};

pub const DEFAULT_K: usize = 3;

#[derive(Debug, Error)]
pub enum LibraryError {
    #[error("exemplar library is empty")]
    EmptyLibrary,
    #[error("k = {k} is outside 1..={len}")]
    BadK { k: usize, len: usize },
    #[error("cannot read library {path}: {message}")]
    Io { path: String, message: String },
    #[error("invalid library JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("exemplar {index}: {source}")]
    Plan { index: usize, source: FoonError },
    #[error("exemplar {index}: {problems}")]
    Invalid { index: usize, problems: String },
    #[error(transparent)]
    Embed(#[from] EmbedError),
}

/// Example texts for the baselines that solved the same task.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct BaselineExamples {
    #[serde(default)]
    pub pddl_problem: String,
    #[serde(default)]
    pub pddl_domain: String,
    #[serde(default)]
    pub subgoals: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Exemplar {
    pub task: String,
    pub plan: ObjectLevelPlan,
    pub baseline: BaselineExamples,
}

impl Exemplar {
    /// Task statement followed by the numbered step instructions.
    pub fn rendering(&self) -> String {
        let mut out = self.task.clone();
        for (i, line) in self.plan.instruction_lines().iter().enumerate() {
            out.push_str(&format!("\n{}. {}", i + 1, line));
        }
        out
    }
}

#[derive(Deserialize, Serialize)]
struct WireExemplar {
    task: String,
    plan: Value,
    #[serde(flatten)]
    baseline: BaselineExamples,
}

#[derive(Deserialize, Serialize)]
struct WireLibrary {
    #[serde(default = "default_k")]
    k: usize,
    exemplars: Vec<WireExemplar>,
}

fn default_k() -> usize {
    DEFAULT_K
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ranked {
    pub index: usize,
    pub score: f64,
}

#[derive(Debug, Clone)]
pub struct ExemplarLibrary {
    entries: Vec<Exemplar>,
    k: usize,
    model: TfIdf,
    embeddings: Vec<Vec<f64>>,
}

impl ExemplarLibrary {
    pub fn new(entries: Vec<Exemplar>, k: usize) -> Result<Self, LibraryError> {
        if entries.is_empty() {
            return Err(LibraryError::EmptyLibrary);
        }
        if k == 0 || k > entries.len() {
            return Err(LibraryError::BadK { k, len: entries.len() });
        }
        let texts: Vec<String> = entries.iter().map(Exemplar::rendering).collect();
        let model = TfIdf::fit(&texts);
        let embeddings = texts.iter().map(|t| model.embed(t)).collect::<Result<_, _>>()?;
        Ok(ExemplarLibrary { entries, k, model, embeddings })
    }

    pub fn from_json(text: &str) -> Result<Self, LibraryError> {
        let wire: WireLibrary = serde_json::from_str(text)?;
        let entries = wire
            .exemplars
            .into_iter()
            .enumerate()
            .map(|(index, e)| {
                let plan = parse_olp_json(&e.plan.to_string()).map_err(|source| LibraryError::Plan { index, source })?;
                let problems = validate_olp(&plan);
                if !problems.is_empty() {
                    let problems = problems.iter().map(ToString::to_string).collect::<Vec<_>>().join("; ");
                    return Err(LibraryError::Invalid { index, problems });
                }
                Ok(Exemplar { task: e.task, plan, baseline: e.baseline })
            })
            .collect::<Result<Vec<_>, LibraryError>>()?;
        ExemplarLibrary::new(entries, wire.k)
    }

    pub fn load(path: &Path) -> Result<Self, LibraryError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| LibraryError::Io { path: path.display().to_string(), message: e.to_string() })?;
        ExemplarLibrary::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        let wire = WireLibrary {
            k: self.k,
            exemplars: self
                .entries
                .iter()
                .map(|e| WireExemplar {
                    task: e.task.clone(),
                    plan: serde_json::from_str(&serialize_olp(&e.plan)).expect("serialized plan is JSON"),
                    baseline: e.baseline.clone(),
                })
                .collect(),
        };
        serde_json::to_string_pretty(&wire).expect("library serializes")
    }

    pub fn entries(&self) -> &[Exemplar] {
        &self.entries
    }

    pub fn get(&self, index: usize) -> &Exemplar {
        &self.entries[index]
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn with_k(mut self, k: usize) -> Result<Self, LibraryError> {
        if k == 0 || k > self.entries.len() {
            return Err(LibraryError::BadK { k, len: self.entries.len() });
        }
        self.k = k;
        Ok(self)
    }

    pub fn embedding(&self, index: usize) -> &[f64] {
        &self.embeddings[index]
    }

    /// Top-k entries by cosine similarity to `task`, ties in insertion order.
    pub fn retrieve(&self, task: &str) -> Result<Vec<Ranked>, LibraryError> {
        let q = self.model.embed(task)?;
        let mut ranked: Vec<Ranked> =
            self.embeddings.iter().enumerate().map(|(index, e)| Ranked { index, score: cosine(&q, e) }).collect();
        ranked.sort_by(|a, b| b.score.total_cmp(&a.score));
        ranked.truncate(self.k);
        Ok(ranked)
    }
}
