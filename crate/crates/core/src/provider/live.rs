//! OpenAI-compatible chat completions over HTTP.

use std::sync::{Arc, Condvar, Mutex};
use std::time::Duration;

use serde_json::{json, Value};

use super::{PromptRecord, ProviderConfig, ProviderError};

const DEFAULT_API_BASE: &str = "https://api.openai.com/v1";
const RETRIES: usize = 2;

/// Sends one JSON request; implementations may be instrumented in tests.
pub trait Transport: Send + Sync {
    fn post_json(&self, url: &str, bearer: &str, body: &str) -> Result<String, String>;
}

/// Blocking transport backed by `ureq`.
#[derive(Debug, Clone)]
pub struct UreqTransport {
    timeout: Duration,
}

impl Default for UreqTransport {
    fn default() -> Self {
        Self { timeout: Duration::from_secs(180) }
    }
}

impl Transport for UreqTransport {
    fn post_json(&self, url: &str, bearer: &str, body: &str) -> Result<String, String> {
        let agent: ureq::Agent = ureq::Agent::config_builder().timeout_global(Some(self.timeout)).build().into();
        let mut resp = agent
            .post(url)
            .header("Authorization", &format!("Bearer {bearer}"))
            .header("Content-Type", "application/json")
            .send(body)
            .map_err(|e| e.to_string())?;
        resp.body_mut().read_to_string().map_err(|e| e.to_string())
    }
}

pub(crate) struct LiveClient {
    transport: Arc<dyn Transport>,
    api_base: String,
    api_key: String,
    in_flight: Mutex<usize>,
    slot_free: Condvar,
    max_in_flight: usize,
}

impl LiveClient {
    pub fn from_env(transport: Arc<dyn Transport>, max_in_flight: usize) -> Result<Self, ProviderError> {
        let api_key = std::env::var("RUSTBRAIN_API_KEY")
            .map_err(|_| ProviderError::Config("RUSTBRAIN_API_KEY is not set".into()))?;
        let api_base = std::env::var("RUSTBRAIN_API_BASE").unwrap_or_else(|_| DEFAULT_API_BASE.into());
        Ok(Self {
            transport,
            api_base: api_base.trim_end_matches('/').to_string(),
            api_key,
            in_flight: Mutex::new(0),
            slot_free: Condvar::new(),
            max_in_flight: max_in_flight.max(1),
        })
    }

    pub fn complete(&self, prompt: &PromptRecord, config: &ProviderConfig) -> Result<(String, usize), ProviderError> {
        let body = json!({
            "model": config.model_name,
            "temperature": config.temperature,
            "messages": prompt.messages.iter().map(|m| json!({"role": m.role.as_str(), "content": m.content})).collect::<Vec<_>>(),
        })
        .to_string();
        let url = format!("{}/chat/completions", self.api_base);
        let _slot = self.acquire();
        let mut last = String::new();
        for attempt in 0..=RETRIES {
            match self.transport.post_json(&url, &self.api_key, &body) {
                Ok(raw) => match parse_reply(&raw) {
                    Some((text, tokens)) => {
                        let tokens = tokens.unwrap_or_else(|| prompt.estimated_tokens() + crate::target::estimate_tokens(&text));
                        return Ok((text, tokens));
                    }
                    None => last = format!("unexpected response body: {}", raw.chars().take(200).collect::<String>()),
                },
                Err(e) => last = e,
            }
            tracing::warn!(attempt, error = %last, "provider request failed");
        }
        Err(ProviderError::HttpFailure(last))
    }

    fn acquire(&self) -> SlotGuard<'_> {
        let mut n = self.in_flight.lock().unwrap_or_else(|p| p.into_inner());
        while *n >= self.max_in_flight {
            n = self.slot_free.wait(n).unwrap_or_else(|p| p.into_inner());
        }
        *n += 1;
        SlotGuard(self)
    }
}

struct SlotGuard<'a>(&'a LiveClient);

impl Drop for SlotGuard<'_> {
    fn drop(&mut self) {
        let mut n = self.0.in_flight.lock().unwrap_or_else(|p| p.into_inner());
        *n -= 1;
        self.0.slot_free.notify_one();
    }
}

fn parse_reply(raw: &str) -> Option<(String, Option<usize>)> {
    let v: Value = serde_json::from_str(raw).ok()?;
    let text = v.pointer("/choices/0/message/content")?.as_str()?.to_string();
    let tokens = v.pointer("/usage/total_tokens").and_then(Value::as_u64).map(|t| t as usize);
    Some((text, tokens))
}
