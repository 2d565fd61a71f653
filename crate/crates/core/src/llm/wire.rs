//! Chat-completions HTTP client.

use std::sync::{Condvar, Mutex};
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::{Backend, CompletionRequest, LlmError};

/// Environment variable holding the bearer token.
pub const API_KEY_ENV: &str = "KGTHOUGHT_API_KEY";

#[derive(Debug, Clone, PartialEq)]
pub struct WireConfig {
    /// Full URL of the chat-completions endpoint.
    pub endpoint: String,
    pub model: String,
    pub api_key: Option<String>,
    /// Maximum in-flight requests across all threads sharing the backend.
    pub max_in_flight: usize,
    pub timeout: Duration,
    /// Sent with every request for providers that support seeded sampling.
    pub seed: Option<u64>,
}

impl WireConfig {
    pub fn new(endpoint: impl Into<String>, model: impl Into<String>) -> Self {
        Self {
            endpoint: endpoint.into(),
            model: model.into(),
            api_key: std::env::var(API_KEY_ENV).ok(),
            max_in_flight: 4,
            timeout: Duration::from_secs(120),
            seed: None,
        }
    }
}

#[derive(Serialize)]
struct Message<'a> {
    role: &'a str,
    content: &'a str,
}

#[derive(Serialize)]
struct ChatRequest<'a> {
    model: &'a str,
    messages: Vec<Message<'a>>,
    temperature: f64,
    max_tokens: u32,
    #[serde(skip_serializing_if = "<[String]>::is_empty")]
    stop: &'a [String],
    #[serde(skip_serializing_if = "Option::is_none")]
    seed: Option<u64>,
}

#[derive(Deserialize)]
struct ChatResponse {
    choices: Vec<Choice>,
}

#[derive(Deserialize)]
struct Choice {
    message: ChoiceMessage,
}

#[derive(Deserialize)]
struct ChoiceMessage {
    content: Option<String>,
}

struct Semaphore {
    permits: Mutex<usize>,
    freed: Condvar,
}

impl Semaphore {
    fn acquire(&self) -> Permit<'_> {
        let mut p = self.permits.lock().expect("semaphore poisoned");
        while *p == 0 {
            p = self.freed.wait(p).expect("semaphore poisoned");
        }
        *p -= 1;
        Permit(self)
    }
}

struct Permit<'a>(&'a Semaphore);

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        *self.0.permits.lock().expect("semaphore poisoned") += 1;
        self.0.freed.notify_one();
    }
}

pub struct WireBackend {
    config: WireConfig,
    agent: ureq::Agent,
    in_flight: Semaphore,
}

impl WireBackend {
    pub fn new(config: WireConfig) -> Result<Self, LlmError> {
        if config.endpoint.is_empty() {
            return Err(LlmError::Config("endpoint URL is required".into()));
        }
        if config.max_in_flight == 0 {
            return Err(LlmError::Config("in-flight cap must be at least 1".into()));
        }
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(config.timeout))
            .build()
            .into();
        Ok(Self {
            in_flight: Semaphore {
                permits: Mutex::new(config.max_in_flight),
                freed: Condvar::new(),
            },
            agent,
            config,
        })
    }

    pub fn config(&self) -> &WireConfig {
        &self.config
    }
}

impl Backend for WireBackend {
    fn complete(&self, req: &CompletionRequest) -> Result<String, LlmError> {
        let body = ChatRequest {
            model: &self.config.model,
            messages: vec![Message {
                role: "user",
                content: &req.prompt,
            }],
            temperature: req.decoding.temperature,
            max_tokens: req.decoding.max_tokens,
            stop: &req.decoding.stop,
            seed: self.config.seed,
        };
        let _permit = self.in_flight.acquire();
        let mut call = self.agent.post(&self.config.endpoint);
        if let Some(key) = &self.config.api_key {
            call = call.header("Authorization", &format!("Bearer {key}"));
        }
        let resp = call.send_json(&body).map_err(|e| LlmError::Transport(e.to_string()))?;
        let parsed: ChatResponse = resp
            .into_body()
            .read_json()
            .map_err(|e| LlmError::Transport(format!("bad response body: {e}")))?;
        parsed
            .choices
            .into_iter()
            .next()
            .map(|c| c.message.content.unwrap_or_default())
            .ok_or_else(|| LlmError::Transport("response has no choices".into()))
    }
}
