//! Language-model backends.
//!
//! Three modes share one interface: `Replay` answers from a recorded
//! transcript, `ScriptedMock` synthesizes answers from the prompt's
//! placeholders and an optional rule script, and `LiveHttp` calls an
//! OpenAI-compatible endpoint. Any mode can record what it answered.

mod live;
mod mock;
mod transcript;

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

pub use live::{Transport, UreqTransport};
pub use mock::{MockRule, ScriptedMock};
pub(crate) use mock::{NO_GUARD, NO_SAFE_EQUIVALENT};
pub use transcript::{Transcript, TranscriptEntry};

pub const DEFAULT_TEMPERATURE: f64 = 0.5;
pub const DEFAULT_MAX_TOKENS: usize = 32_000;
pub const DEFAULT_MODEL: &str = "gpt-4";

#[derive(Debug, Error)]
pub enum ProviderError {
    #[error("no transcript entry for prompt hash {0}")]
    ReplayMiss(String),
    #[error("http request failed: {0}")]
    HttpFailure(String),
    #[error("prompt needs ~{estimated} tokens, limit is {max}")]
    TokenOverflow { estimated: usize, max: usize },
    #[error("invalid provider configuration: {0}")]
    Config(String),
    #[error("transcript storage failed: {0}")]
    Storage(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ProviderMode {
    Replay,
    ScriptedMock,
    LiveHttp,
}

impl std::str::FromStr for ProviderMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().replace(['-', '_'], "").as_str() {
            "replay" => Ok(Self::Replay),
            "mock" | "scriptedmock" => Ok(Self::ScriptedMock),
            "live" | "http" | "livehttp" => Ok(Self::LiveHttp),
            _ => Err(format!("unknown provider mode `{s}` (replay, mock, live)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProviderConfig {
    pub mode: ProviderMode,
    pub model_name: String,
    pub temperature: f64,
    pub max_tokens: usize,
    /// Replay source; for other modes, where to record the session.
    pub transcript_path: Option<PathBuf>,
    /// Rule script for the scripted mock.
    pub script_path: Option<PathBuf>,
    pub max_in_flight: usize,
}

impl Default for ProviderConfig {
    fn default() -> Self {
        Self {
            mode: ProviderMode::ScriptedMock,
            model_name: DEFAULT_MODEL.into(),
            temperature: DEFAULT_TEMPERATURE,
            max_tokens: DEFAULT_MAX_TOKENS,
            transcript_path: None,
            script_path: None,
            max_in_flight: 4,
        }
    }
}

impl ProviderConfig {
    pub fn validate(&self) -> Result<(), ProviderError> {
        if !(0.0..=2.0).contains(&self.temperature) {
            return Err(ProviderError::Config(format!("temperature {} outside [0, 2]", self.temperature)));
        }
        if self.max_tokens == 0 {
            return Err(ProviderError::Config("max_tokens must be positive".into()));
        }
        if self.mode == ProviderMode::Replay {
            match &self.transcript_path {
                Some(p) if p.is_file() => {}
                Some(p) => return Err(ProviderError::Config(format!("transcript `{}` not found", p.display()))),
                None => return Err(ProviderError::Config("replay mode needs a transcript".into())),
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
}

impl Role {
    pub fn as_str(self) -> &'static str {
        match self {
            Role::System => "system",
            Role::User => "user",
            Role::Assistant => "assistant",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Message {
    pub role: Role,
    pub content: String,
}

/// What a prompt asks for; lets the mock answer without parsing prose.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PromptTask {
    Summary,
    Plan,
    SafeReplace,
    AddAssertion,
    ModifySemantics,
    Ast,
}

/// A role-tagged prompt plus the placeholder values it was rendered from.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptRecord {
    pub messages: Vec<Message>,
    pub task: PromptTask,
    /// Placeholder values; not part of the identity hash.
    pub vars: BTreeMap<String, String>,
}

/// Collapses CRLF to LF and drops trailing whitespace.
pub fn normalize_message(text: &str) -> String {
    text.replace("\r\n", "\n").trim_end().to_string()
}

impl PromptRecord {
    pub fn new(task: PromptTask, system: &str, user: String, vars: BTreeMap<String, String>) -> Self {
        Self {
            messages: vec![
                Message { role: Role::System, content: system.to_string() },
                Message { role: Role::User, content: user },
            ],
            task,
            vars,
        }
    }

    /// Stable identity over normalized messages, model name and temperature.
    pub fn hash(&self, model_name: &str, temperature: f64) -> String {
        let mut h = Sha256::new();
        for m in &self.messages {
            let body = normalize_message(&m.content);
            h.update(m.role.as_str().as_bytes());
            h.update([0]);
            h.update((body.len() as u64).to_le_bytes());
            h.update(body.as_bytes());
        }
        h.update([1]);
        h.update(model_name.as_bytes());
        h.update([0]);
        h.update(temperature.to_bits().to_le_bytes());
        hex::encode(h.finalize())
    }

    /// Messages joined for display and transcripts.
    pub fn text(&self) -> String {
        self.messages
            .iter()
            .map(|m| format!("[{}]\n{}", m.role.as_str(), normalize_message(&m.content)))
            .collect::<Vec<_>>()
            .join("\n\n")
    }

    pub fn estimated_tokens(&self) -> usize {
        self.messages.iter().map(|m| crate::target::estimate_tokens(&m.content)).sum()
    }

    pub fn var(&self, key: &str) -> &str {
        self.vars.get(key).map(String::as_str).unwrap_or("")
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Completion {
    pub text: String,
    pub tokens: usize,
}

enum Backend {
    Replay(Transcript),
    Mock(ScriptedMock),
    Live(live::LiveClient),
}

/// A configured provider handle, shareable across sessions.
pub struct Provider {
    config: ProviderConfig,
    backend: Backend,
    recorded: Mutex<Transcript>,
}

impl std::fmt::Debug for Provider {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Provider").field("config", &self.config).finish_non_exhaustive()
    }
}

impl Provider {
    pub fn new(config: ProviderConfig) -> Result<Self, ProviderError> {
        Self::with_transport(config, Arc::new(UreqTransport::default()))
    }

    /// Builds a provider whose live mode sends through `transport`.
    pub fn with_transport(config: ProviderConfig, transport: Arc<dyn Transport>) -> Result<Self, ProviderError> {
        config.validate()?;
        let backend = match config.mode {
            ProviderMode::Replay => {
                let path = config.transcript_path.as_ref().expect("validated");
                Backend::Replay(Transcript::load(path)?)
            }
            ProviderMode::ScriptedMock => {
                let rules = match &config.script_path {
                    Some(p) => MockRule::load(p)?,
                    None => Vec::new(),
                };
                Backend::Mock(ScriptedMock::new(rules))
            }
            ProviderMode::LiveHttp => Backend::Live(live::LiveClient::from_env(transport, config.max_in_flight)?),
        };
        Ok(Self { config, backend, recorded: Mutex::new(Transcript::default()) })
    }

    /// A scripted mock with the given rules and default settings.
    pub fn mock(rules: Vec<MockRule>) -> Self {
        Self {
            config: ProviderConfig::default(),
            backend: Backend::Mock(ScriptedMock::new(rules)),
            recorded: Mutex::new(Transcript::default()),
        }
    }

    pub fn config(&self) -> &ProviderConfig {
        &self.config
    }

    pub fn complete(&self, prompt: &PromptRecord) -> Result<Completion, ProviderError> {
        let estimated = prompt.estimated_tokens();
        if estimated > self.config.max_tokens {
            return Err(ProviderError::TokenOverflow { estimated, max: self.config.max_tokens });
        }
        let hash = prompt.hash(&self.config.model_name, self.config.temperature);
        let (text, tokens) = match &self.backend {
            Backend::Replay(t) => {
                let entry = t.get(&hash).ok_or_else(|| ProviderError::ReplayMiss(hash.clone()))?;
                let text = entry.response.clone();
                let tokens = estimated + crate::target::estimate_tokens(&text);
                (text, tokens)
            }
            Backend::Mock(m) => {
                let text = m.respond(prompt);
                let tokens = estimated + crate::target::estimate_tokens(&text);
                (text, tokens)
            }
            Backend::Live(client) => client.complete(prompt, &self.config)?,
        };
        self.recorded.lock().unwrap_or_else(|p| p.into_inner()).insert(TranscriptEntry {
            hash,
            prompt: prompt.text(),
            response: text.clone(),
            model: self.config.model_name.clone(),
            temperature: self.config.temperature,
        });
        Ok(Completion { text, tokens })
    }

    /// Everything answered so far, deduplicated by hash.
    pub fn recorded(&self) -> Transcript {
        self.recorded.lock().unwrap_or_else(|p| p.into_inner()).clone()
    }

    /// Writes the session transcript, merging into an existing file.
    pub fn record_transcript(&self, path: &std::path::Path) -> Result<usize, ProviderError> {
        let mut merged = if path.is_file() { Transcript::load(path)? } else { Transcript::default() };
        merged.merge(&self.recorded());
        merged.save(path)?;
        Ok(merged.len())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn prompt(user: &str) -> PromptRecord {
        PromptRecord::new(PromptTask::Summary, "sys", user.to_string(), BTreeMap::new())
    }

    #[test]
    fn hash_normalizes_line_endings_and_trailing_space() {
        let a = prompt("line one\r\nline two  \n");
        let b = prompt("line one\nline two");
        assert_eq!(a.hash("m", 0.5), b.hash("m", 0.5));
        assert_ne!(a.hash("m", 0.5), prompt("line one\nline  two").hash("m", 0.5));
    }

    #[test]
    fn configuration_is_part_of_identity() {
        let p = prompt("x");
        assert_ne!(p.hash("m", 0.5), p.hash("m", 0.7));
        assert_ne!(p.hash("m", 0.5), p.hash("n", 0.5));
    }

    #[test]
    fn config_validation() {
        let mut c = ProviderConfig { temperature: 2.5, ..Default::default() };
        assert!(c.validate().is_err());
        c.temperature = 0.5;
        c.mode = ProviderMode::Replay;
        assert!(c.validate().is_err());
        c.transcript_path = Some("/definitely/missing.jsonl".into());
        assert!(c.validate().is_err());
    }

    #[test]
    fn token_overflow_is_reported() {
        let provider = Provider::mock(Vec::new());
        let big = prompt(&"x".repeat(4 * DEFAULT_MAX_TOKENS + 8));
        assert!(matches!(provider.complete(&big), Err(ProviderError::TokenOverflow { .. })));
    }
}
