//! Completion backends, the metered gateway, prompt templates and reply
//! parsing helpers.

mod gateway;
pub mod parse;
pub mod prompts;
mod replay;
mod wire;

use thiserror::Error;

pub use gateway::{Gateway, RetryPolicy};
pub use prompts::{PromptRegistry, PromptTemplate, TemplateName};
pub use replay::{ReplayEntry, ReplayScript};
pub use wire::{WireBackend, WireConfig, API_KEY_ENV};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LlmError {
    #[error("transport error: {0}")]
    Transport(String),
    #[error("replay mismatch at entry {index}: pattern `{pattern}` does not match the request")]
    ReplayMismatch { index: usize, pattern: String },
    #[error("replay script exhausted after {0} entries")]
    ReplayExhausted(usize),
    #[error("no replay entry matches the request (tag `{0}`)")]
    ReplayNoMatch(String),
    #[error("invalid replay script line {line}: {message}")]
    ReplayFormat { line: usize, message: String },
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("template `{template}` is missing placeholders: {missing:?}")]
    MissingPlaceholder { template: String, missing: Vec<String> },
    #[error("backend configuration: {0}")]
    Config(String),
}

impl LlmError {
    pub fn is_retryable(&self) -> bool {
        matches!(self, LlmError::Transport(_))
    }
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Decoding {
    pub temperature: f64,
    pub max_tokens: u32,
    pub stop: Vec<String>,
}

impl Decoding {
    /// Deterministic decoding for control prompts (pruning, evaluation,
    /// extraction, judging).
    pub fn control() -> Self {
        Self {
            temperature: 0.0,
            max_tokens: 256,
            stop: Vec::new(),
        }
    }

    pub fn sampling(temperature: f64) -> Self {
        Self {
            temperature,
            max_tokens: 512,
            stop: Vec::new(),
        }
    }

    pub fn with_stop(mut self, stop: &[&str]) -> Self {
        self.stop = stop.iter().map(|s| s.to_string()).collect();
        self
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompletionRequest {
    pub prompt: String,
    pub decoding: Decoding,
    /// The pipeline step that issued the request; used for metering.
    pub tag: String,
}

impl CompletionRequest {
    pub fn new(prompt: impl Into<String>, decoding: Decoding, tag: &str) -> Self {
        Self {
            prompt: prompt.into(),
            decoding,
            tag: tag.to_string(),
        }
    }

    pub fn validate(&self) -> Result<(), LlmError> {
        if self.decoding.max_tokens == 0 {
            return Err(LlmError::InvalidRequest("max_tokens must be positive".into()));
        }
        if self.decoding.temperature.is_nan() || self.decoding.temperature < 0.0 {
            return Err(LlmError::InvalidRequest("temperature must be non-negative".into()));
        }
        Ok(())
    }
}

/// A source of completions.
pub trait Backend: Send + Sync {
    fn complete(&self, req: &CompletionRequest) -> Result<String, LlmError>;

    /// True when identical inputs always yield identical outputs (replay).
    fn is_deterministic(&self) -> bool {
        false
    }
}

/// Adapts a closure into a deterministic [`Backend`]; handy for scripted
/// tests and examples.
pub struct FnBackend<F>(pub F);

impl<F> Backend for FnBackend<F>
where
    F: Fn(&CompletionRequest) -> Result<String, LlmError> + Send + Sync,
{
    fn complete(&self, req: &CompletionRequest) -> Result<String, LlmError> {
        (self.0)(req)
    }

    fn is_deterministic(&self) -> bool {
        true
    }
}
