//! Chat providers: live HTTP, fixture replay, recording, and in-process
//! responders.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::sync::Mutex;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Role::System => "system",
            Role::User => "user",
            Role::Assistant => "assistant",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: Role,
    #[serde(rename = "content")]
    pub text: String,
}

impl ChatMessage {
    pub fn system(text: impl Into<String>) -> Self {
        ChatMessage { role: Role::System, text: text.into() }
    }

    pub fn user(text: impl Into<String>) -> Self {
        ChatMessage { role: Role::User, text: text.into() }
    }

    pub fn assistant(text: impl Into<String>) -> Self {
        ChatMessage { role: Role::Assistant, text: text.into() }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenUsage {
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
}

impl TokenUsage {
    pub fn total(&self) -> u64 {
        self.prompt_tokens + self.completion_tokens
    }
}

impl std::ops::AddAssign for TokenUsage {
    fn add_assign(&mut self, rhs: TokenUsage) {
        self.prompt_tokens += rhs.prompt_tokens;
        self.completion_tokens += rhs.completion_tokens;
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ChatReply {
    pub text: String,
    pub usage: TokenUsage,
}

/// Message history of one conversation plus its accumulated usage.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct ChatTranscript {
    pub messages: Vec<ChatMessage>,
    pub usage: TokenUsage,
}

impl ChatTranscript {
    /// System prefix first, then strictly alternating user/assistant turns.
    pub fn is_well_formed(&self) -> bool {
        let body = match self.messages.first() {
            Some(m) if m.role == Role::System => &self.messages[1..],
            _ => &self.messages[..],
        };
        body.iter().enumerate().all(|(i, m)| m.role == if i % 2 == 0 { Role::User } else { Role::Assistant })
    }
}

#[derive(Debug, Error)]
pub enum ProviderError {
    #[error("no recorded reply for prompt digest {0}")]
    MissingFixture(String),
    #[error("environment variable `{0}` is not set")]
    MissingCredential(String),
    #[error("HTTP request failed: {0}")]
    Http(String),
    #[error("unexpected response shape: {0}")]
    BadResponse(String),
    #[error("fixture file {path}: {message}")]
    Fixture { path: String, message: String },
    #[error("{0}")]
    Backend(String),
}

pub trait ChatProvider: Send + Sync {
    fn complete(&self, messages: &[ChatMessage]) -> Result<ChatReply, ProviderError>;
}

impl<P: ChatProvider + ?Sized> ChatProvider for Box<P> {
    fn complete(&self, messages: &[ChatMessage]) -> Result<ChatReply, ProviderError> {
        (**self).complete(messages)
    }
}

/// Stable key of a message list: SHA-256 over `role:text` lines with runs of
/// whitespace collapsed to one space.
pub fn prompt_digest(messages: &[ChatMessage]) -> String {
    let mut h = Sha256::new();
    for (i, m) in messages.iter().enumerate() {
        if i > 0 {
            h.update(b"\n");
        }
        h.update(m.role.to_string().as_bytes());
        h.update(b":");
        h.update(m.text.split_whitespace().collect::<Vec<_>>().join(" ").as_bytes());
    }
    hex::encode(h.finalize())
}

/// Offline token estimate: one token per four characters, rounded up.
pub fn approx_tokens(text: &str) -> u64 {
    (text.chars().count() as u64).div_ceil(4)
}

pub fn approx_usage(messages: &[ChatMessage], reply: &str) -> TokenUsage {
    let prompt: u64 = messages.iter().map(|m| approx_tokens(&m.text)).sum();
    TokenUsage { prompt_tokens: prompt, completion_tokens: approx_tokens(reply) }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FixtureEntry {
    pub reply: String,
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
}

/// Recorded replies keyed by prompt digest.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Fixtures(pub BTreeMap<String, FixtureEntry>);

impl Fixtures {
    pub fn load_file(path: &Path) -> Result<Self, ProviderError> {
        let err = |message: String| ProviderError::Fixture { path: path.display().to_string(), message };
        let text = std::fs::read_to_string(path).map_err(|e| err(e.to_string()))?;
        serde_json::from_str(&text).map_err(|e| err(e.to_string()))
    }

    /// Merges every `*.json` file of `dir`, in file-name order. A digest
    /// recorded twice with different replies is an error.
    pub fn load_dir(dir: &Path) -> Result<Self, ProviderError> {
        let err = |message: String| ProviderError::Fixture { path: dir.display().to_string(), message };
        let mut files: Vec<PathBuf> = std::fs::read_dir(dir)
            .map_err(|e| err(e.to_string()))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "json"))
            .collect();
        files.sort();
        let mut all = Fixtures::default();
        for f in files {
            all.merge(Fixtures::load_file(&f)?).map_err(|d| err(format!("conflicting replies for digest {d}")))?;
        }
        Ok(all)
    }

    pub fn merge(&mut self, other: Fixtures) -> Result<(), String> {
        for (k, v) in other.0 {
            match self.0.get(&k) {
                Some(old) if *old != v => return Err(k),
                _ => {
                    self.0.insert(k, v);
                }
            }
        }
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<(), ProviderError> {
        let err = |message: String| ProviderError::Fixture { path: path.display().to_string(), message };
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent).map_err(|e| err(e.to_string()))?;
        }
        let text = serde_json::to_string_pretty(self).expect("fixtures serialize") + "\n";
        std::fs::write(path, text).map_err(|e| err(e.to_string()))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Answers from recorded fixtures only.
#[derive(Debug, Clone, Default)]
pub struct ReplayProvider {
    fixtures: Fixtures,
}

impl ReplayProvider {
    pub fn new(fixtures: Fixtures) -> Self {
        ReplayProvider { fixtures }
    }

    pub fn from_dir(dir: &Path) -> Result<Self, ProviderError> {
        Ok(ReplayProvider::new(Fixtures::load_dir(dir)?))
    }
}

impl ChatProvider for ReplayProvider {
    fn complete(&self, messages: &[ChatMessage]) -> Result<ChatReply, ProviderError> {
        let digest = prompt_digest(messages);
        let e = self.fixtures.0.get(&digest).ok_or(ProviderError::MissingFixture(digest))?;
        Ok(ChatReply {
            text: e.reply.clone(),
            usage: TokenUsage { prompt_tokens: e.prompt_tokens, completion_tokens: e.completion_tokens },
        })
    }
}

/// Forwards to `inner` and keeps every exchange as a fixture.
pub struct RecordingProvider<P> {
    inner: P,
    recorded: Mutex<Fixtures>,
}

impl<P: ChatProvider> RecordingProvider<P> {
    pub fn new(inner: P) -> Self {
        RecordingProvider { inner, recorded: Mutex::new(Fixtures::default()) }
    }

    pub fn fixtures(&self) -> Fixtures {
        self.recorded.lock().expect("recorder lock").clone()
    }
}

impl<P: ChatProvider> ChatProvider for RecordingProvider<P> {
    fn complete(&self, messages: &[ChatMessage]) -> Result<ChatReply, ProviderError> {
        let reply = self.inner.complete(messages)?;
        let entry = FixtureEntry {
            reply: reply.text.clone(),
            prompt_tokens: reply.usage.prompt_tokens,
            completion_tokens: reply.usage.completion_tokens,
        };
        self.recorded.lock().expect("recorder lock").0.insert(prompt_digest(messages), entry);
        Ok(reply)
    }
}

/// An in-process responder; usage is estimated with [`approx_usage`].
pub struct FnProvider<F>(pub F);

impl<F> ChatProvider for FnProvider<F>
where
    F: Fn(&[ChatMessage]) -> Result<String, ProviderError> + Send + Sync,
{
    fn complete(&self, messages: &[ChatMessage]) -> Result<ChatReply, ProviderError> {
        let text = (self.0)(messages)?;
        let usage = approx_usage(messages, &text);
        Ok(ChatReply { text, usage })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatProviderConfig {
    /// Full URL of a chat-completions endpoint.
    pub endpoint: String,
    pub model: String,
    #[serde(default)]
    pub temperature: f64,
    /// Name of the environment variable holding the API key.
    pub api_key_env: String,
    #[serde(default = "default_timeout")]
    pub timeout_s: u64,
}

fn default_timeout() -> u64 {
    120
}

impl ChatProviderConfig {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.temperature >= 0.0) {
            return Err(format!("temperature must be non-negative, got {}", self.temperature));
        }
        if self.endpoint.is_empty() || self.model.is_empty() {
            return Err("endpoint and model must be set".into());
        }
        Ok(())
    }
}

/// Chat-completions over HTTP.
pub struct HttpProvider {
    config: ChatProviderConfig,
    agent: ureq::Agent,
}

impl HttpProvider {
    pub fn new(config: ChatProviderConfig) -> Result<Self, ProviderError> {
        config.validate().map_err(ProviderError::Backend)?;
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs(config.timeout_s)))
            .http_status_as_error(false)
            .build()
            .into();
        Ok(HttpProvider { config, agent })
    }
}

#[derive(Serialize)]
struct WireRequest<'a> {
    model: &'a str,
    temperature: f64,
    messages: &'a [ChatMessage],
}

impl ChatProvider for HttpProvider {
    fn complete(&self, messages: &[ChatMessage]) -> Result<ChatReply, ProviderError> {
        let key = std::env::var(&self.config.api_key_env)
            .map_err(|_| ProviderError::MissingCredential(self.config.api_key_env.clone()))?;
        let body = WireRequest { model: &self.config.model, temperature: self.config.temperature, messages };
        let mut resp = self
            .agent
            .post(&self.config.endpoint)
            .header("Authorization", &format!("Bearer {key}"))
            .send_json(&body)
            .map_err(|e| ProviderError::Http(e.to_string()))?;
        let status = resp.status();
        let value: serde_json::Value = resp.body_mut().read_json().map_err(|e| ProviderError::BadResponse(e.to_string()))?;
        if !status.is_success() {
            return Err(ProviderError::Http(format!("status {status}: {value}")));
        }
        let text = value
            .pointer("/choices/0/message/content")
            .and_then(|v| v.as_str())
            .ok_or_else(|| ProviderError::BadResponse("missing choices[0].message.content".into()))?
            .to_string();
        let count = |k: &str| value.pointer(&format!("/usage/{k}")).and_then(|v| v.as_u64());
        let usage = match (count("prompt_tokens"), count("completion_tokens")) {
            (Some(p), Some(c)) => TokenUsage { prompt_tokens: p, completion_tokens: c },
            _ => approx_usage(messages, &text),
        };
        Ok(ChatReply { text, usage })
    }
}
