//! Uniform language-model interface: an HTTP client for OpenAI-compatible
//! chat APIs, a deterministic mock for offline runs, and a persistent
//! response cache that wraps either.

mod cache;
mod http;
mod mock;
mod scripted;

pub use cache::CachedBackend;
pub use http::{HttpBackend, HttpBackendConfig, API_KEY_ENV};
pub use mock::{MockBackend, MockModelSpec};
pub use scripted::ScriptedBackend;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

#[derive(Debug, thiserror::Error)]
pub enum BackendError {
    #[error("transport failure after {attempts} attempt(s): {message}")]
    Transport { attempts: u32, message: String },
    #[error("api error (status {status}): {message}")]
    Api { status: u16, message: String },
    #[error("backend capability missing: {0}")]
    Capability(String),
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("mock backend: {0}")]
    Mock(String),
}

impl BackendError {
    /// Anything that is not a transport failure is terminal: retrying the
    /// same request cannot succeed.
    pub fn is_terminal(&self) -> bool {
        !matches!(self, BackendError::Transport { .. })
    }
}

/// How a completion is decoded.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DecodeMode {
    Sample,
    Greedy,
}

/// Decoding settings. Greedy mode ignores temperature/top_p for the choice
/// itself but records them; sample mode requires temperature > 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecodeParams {
    pub mode: DecodeMode,
    pub temperature: f64,
    pub top_p: f64,
    /// Mock backends only; ignored by HTTP.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

impl DecodeParams {
    pub fn greedy() -> Self {
        Self {
            mode: DecodeMode::Greedy,
            temperature: 0.0,
            top_p: 1.0,
            seed: None,
        }
    }

    pub fn sample(temperature: f64, top_p: f64, seed: Option<u64>) -> Self {
        Self {
            mode: DecodeMode::Sample,
            temperature,
            top_p,
            seed,
        }
    }

    pub fn validate(&self) -> Result<(), BackendError> {
        if self.mode == DecodeMode::Sample && self.temperature <= 0.0 {
            return Err(BackendError::InvalidRequest(
                "sample mode requires temperature > 0".into(),
            ));
        }
        if self.top_p.is_nan() || self.top_p <= 0.0 || self.top_p > 1.0 {
            return Err(BackendError::InvalidRequest(format!(
                "top_p must be in (0, 1], got {}",
                self.top_p
            )));
        }
        Ok(())
    }
}

/// One model query.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompletionRequest {
    pub prompt: String,
    pub params: DecodeParams,
    pub want_label_logprobs: bool,
    pub allowed_labels: Vec<String>,
    /// Distinguishes the K independent draws of one sampled slot so each
    /// gets its own cache entry. Required for sampled replays.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sample_index: Option<u32>,
}

impl CompletionRequest {
    pub fn validate(&self) -> Result<(), BackendError> {
        if self.prompt.is_empty() {
            return Err(BackendError::InvalidRequest("empty prompt".into()));
        }
        if self.want_label_logprobs && self.allowed_labels.is_empty() {
            return Err(BackendError::InvalidRequest(
                "label logprobs requested without allowed labels".into(),
            ));
        }
        self.params.validate()
    }
}

/// One model answer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompletionResult {
    pub text: String,
    /// Natural-log scale, keys a subset of the request's allowed labels.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label_logprobs: Option<BTreeMap<String, f64>>,
    pub backend_id: String,
    pub cached: bool,
    /// Set when the provider returned only part of the label distribution
    /// and the remainder was renormalized.
    #[serde(default)]
    pub logprob_truncated: bool,
}

/// A language model. Implementations must tolerate concurrent `complete`
/// calls; per-chain elicitation stays sequential on the caller's side.
pub trait LanguageModelBackend: Send + Sync {
    /// Stable identifier used in cache keys and run headers.
    fn id(&self) -> &str;

    fn model_name(&self) -> &str;

    fn complete(&self, request: &CompletionRequest) -> Result<CompletionResult, BackendError>;

    fn supports_label_logprobs(&self) -> bool;

    /// Whether prompts routed to this backend should carry the hidden
    /// item-id trailer the mock relies on.
    fn wants_prompt_trailer(&self) -> bool {
        false
    }
}

impl<T: LanguageModelBackend + ?Sized> LanguageModelBackend for std::sync::Arc<T> {
    fn id(&self) -> &str {
        (**self).id()
    }

    fn model_name(&self) -> &str {
        (**self).model_name()
    }

    fn complete(&self, request: &CompletionRequest) -> Result<CompletionResult, BackendError> {
        (**self).complete(request)
    }

    fn supports_label_logprobs(&self) -> bool {
        (**self).supports_label_logprobs()
    }

    fn wants_prompt_trailer(&self) -> bool {
        (**self).wants_prompt_trailer()
    }
}
