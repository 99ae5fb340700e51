//! Client for chat-completion-compatible HTTP endpoints.

use std::sync::{Condvar, Mutex};
use std::time::Duration;

use base64::Engine;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::{PromptRequest, Provider, ProviderError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HttpConfig {
    /// Full URL of the POST endpoint, e.g. `https://host/v1/chat/completions`.
    pub endpoint: String,
    #[serde(default)]
    pub api_key: Option<String>,
    #[serde(default = "default_model")]
    pub model: String,
    #[serde(default = "default_timeout")]
    pub timeout_secs: u64,
    #[serde(default = "default_in_flight")]
    pub max_in_flight: usize,
    /// Log request and response bodies (credentials never appear in them).
    #[serde(default)]
    pub trace: bool,
}

fn default_model() -> String {
    "gpt-4o".into()
}
fn default_timeout() -> u64 {
    60
}
fn default_in_flight() -> usize {
    4
}

impl HttpConfig {
    pub fn new(endpoint: impl Into<String>) -> Self {
        Self {
            endpoint: endpoint.into(),
            api_key: None,
            model: default_model(),
            timeout_secs: default_timeout(),
            max_in_flight: default_in_flight(),
            trace: false,
        }
    }
}

/// Counting gate bounding concurrent requests.
struct Gate {
    free: Mutex<usize>,
    cv: Condvar,
}

impl Gate {
    fn acquire(&self) -> GateGuard<'_> {
        let mut free = self.free.lock().expect("gate lock");
        while *free == 0 {
            free = self.cv.wait(free).expect("gate lock");
        }
        *free -= 1;
        GateGuard(self)
    }
}

struct GateGuard<'a>(&'a Gate);

impl Drop for GateGuard<'_> {
    fn drop(&mut self) {
        *self.0.free.lock().expect("gate lock") += 1;
        self.0.cv.notify_one();
    }
}

pub struct HttpProvider {
    config: HttpConfig,
    client: reqwest::blocking::Client,
    gate: Gate,
}

impl HttpProvider {
    pub fn new(config: HttpConfig) -> Result<Self, ProviderError> {
        if config.endpoint.trim().is_empty() {
            return Err(ProviderError::Config("endpoint is empty".into()));
        }
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(config.timeout_secs))
            .build()
            .map_err(|e| ProviderError::Config(e.to_string()))?;
        let gate = Gate { free: Mutex::new(config.max_in_flight.max(1)), cv: Condvar::new() };
        Ok(Self { config, client, gate })
    }

    pub fn body(&self, request: &PromptRequest) -> Value {
        let mut content = vec![json!({"type": "text", "text": request.user_text})];
        for a in &request.attachments {
            let b64 = base64::engine::general_purpose::STANDARD.encode(a);
            content.push(json!({"type": "image_url", "image_url": {"url": format!("data:image/png;base64,{b64}")}}));
        }
        json!({
            "model": self.config.model,
            "temperature": 0,
            "messages": [
                {"role": "system", "content": request.system_text},
                {"role": "user", "content": content},
            ],
        })
    }
}

/// Reply text from a chat-completion envelope; the raw body when the
/// envelope itself is unrecognized, so decoding reports it.
fn reply_text(body: &str) -> String {
    serde_json::from_str::<Value>(body)
        .ok()
        .and_then(|v| v.pointer("/choices/0/message/content").and_then(Value::as_str).map(str::to_string))
        .unwrap_or_else(|| body.to_string())
}

impl Provider for HttpProvider {
    fn id(&self) -> &str {
        &self.config.model
    }

    fn send(&self, request: &PromptRequest, attempt: u32) -> Result<String, ProviderError> {
        let _slot = self.gate.acquire();
        let body = self.body(request);
        if self.config.trace {
            log::info!(target: "mirage::trace", "POST {} {}", self.config.endpoint, body);
        }
        let mut req = self.client.post(&self.config.endpoint).json(&body);
        if let Some(key) = &self.config.api_key {
            req = req.bearer_auth(key);
        }
        let transport = |message: String| ProviderError::Transport { attempts: attempt, message };
        let resp = req.send().map_err(|e| transport(e.to_string()))?;
        let status = resp.status();
        let text = resp.text().map_err(|e| transport(e.to_string()))?;
        if self.config.trace {
            log::info!(target: "mirage::trace", "<- {status} {text}");
        }
        if !status.is_success() {
            return Err(transport(format!("HTTP {status}")));
        }
        Ok(reply_text(&text))
    }
}
