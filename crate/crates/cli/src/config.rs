//! The `olp.toml` configuration file.

use std::path::{Path, PathBuf};

use olp_core::grounding::GeomThresholds;
use olp_llm::provider::ChatProviderConfig;
use serde::Deserialize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Backend {
    /// The built-in rule-based responder.
    #[default]
    Scripted,
    /// A chat-completions endpoint.
    Http,
}

#[derive(Debug, Clone, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct ProviderSection {
    #[serde(default)]
    pub backend: Backend,
    /// Varies the scripted responder's mistakes.
    #[serde(default)]
    pub salt: u64,
    pub endpoint: Option<String>,
    pub model: Option<String>,
    #[serde(default)]
    pub temperature: f64,
    /// Name of the environment variable that holds the API key.
    pub api_key_env: Option<String>,
    pub timeout_s: Option<u64>,
}

impl ProviderSection {
    pub fn http_config(&self) -> Result<ChatProviderConfig, String> {
        let need = |v: &Option<String>, k: &str| v.clone().ok_or_else(|| format!("provider.{k} is required for the http backend"));
        let cfg = ChatProviderConfig {
            endpoint: need(&self.endpoint, "endpoint")?,
            model: need(&self.model, "model")?,
            temperature: self.temperature,
            api_key_env: need(&self.api_key_env, "api_key_env")?,
            timeout_s: self.timeout_s.unwrap_or(120),
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CliConfig {
    #[serde(default = "default_library")]
    pub library: PathBuf,
    #[serde(default = "default_fixtures")]
    pub fixtures: PathBuf,
    /// Seeds used by `bench` instead of the matrix file's own.
    #[serde(default)]
    pub seeds: Option<Vec<u64>>,
    #[serde(default)]
    pub provider: ProviderSection,
    #[serde(default)]
    pub thresholds: GeomThresholds,
}

fn default_library() -> PathBuf {
    PathBuf::from("data/exemplars.json")
}

fn default_fixtures() -> PathBuf {
    PathBuf::from("data/fixtures")
}

impl Default for CliConfig {
    fn default() -> Self {
        CliConfig {
            library: default_library(),
            fixtures: default_fixtures(),
            seeds: None,
            provider: ProviderSection::default(),
            thresholds: GeomThresholds::default(),
        }
    }
}

impl CliConfig {
    /// Reads a config file; relative paths in it are taken relative to the
    /// file's directory.
    pub fn load(path: &Path) -> Result<Self, String> {
        let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
        let mut cfg: CliConfig = toml::from_str(&text).map_err(|e| format!("{}: {e}", path.display()))?;
        let base = path.parent().unwrap_or(Path::new("."));
        for p in [&mut cfg.library, &mut cfg.fixtures] {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(cfg)
    }
}
