//! OpenAI-compatible chat-completions client.
//!
//! Single-turn, non-streaming. Greedy requests go out with temperature 0 and
//! top_p 1 regardless of the run settings; label logprobs come from the
//! `logprobs`/`top_logprobs` response fields.

use std::collections::BTreeMap;
use std::time::Duration;

use serde::Deserialize;
use serde_json::json;

use super::{
    BackendError, CompletionRequest, CompletionResult, DecodeMode, LanguageModelBackend,
};

/// Environment variable holding the bearer token.
pub const API_KEY_ENV: &str = "FIDELIUS_API_KEY";

const DEFAULT_MAX_TOKENS: u32 = 64;
const DEFAULT_TOP_LOGPROBS: u32 = 20;

#[derive(Debug, Clone)]
pub struct HttpBackendConfig {
    /// Base URL up to but not including `/chat/completions`.
    pub base_url: String,
    pub model: String,
    pub max_tokens: u32,
    pub max_retries: u32,
    pub initial_backoff: Duration,
    pub request_timeout: Duration,
}

impl HttpBackendConfig {
    pub fn new(base_url: impl Into<String>, model: impl Into<String>) -> Self {
        Self {
            base_url: base_url.into(),
            model: model.into(),
            max_tokens: DEFAULT_MAX_TOKENS,
            max_retries: 3,
            initial_backoff: Duration::from_millis(500),
            request_timeout: Duration::from_secs(60),
        }
    }
}

pub struct HttpBackend {
    config: HttpBackendConfig,
    api_key: Option<String>,
    client: reqwest::blocking::Client,
    id: String,
}

#[derive(Debug, Deserialize)]
struct ChatResponse {
    choices: Vec<Choice>,
}

#[derive(Debug, Deserialize)]
struct Choice {
    message: Message,
    #[serde(default)]
    logprobs: Option<ChoiceLogprobs>,
}

#[derive(Debug, Deserialize)]
struct Message {
    #[serde(default)]
    content: Option<String>,
}

#[derive(Debug, Deserialize)]
struct ChoiceLogprobs {
    #[serde(default)]
    content: Vec<TokenLogprobs>,
}

#[derive(Debug, Deserialize)]
struct TokenLogprobs {
    #[serde(default)]
    top_logprobs: Vec<TopLogprob>,
}

#[derive(Debug, Deserialize)]
struct TopLogprob {
    token: String,
    logprob: f64,
}

impl HttpBackend {
    pub fn new(config: HttpBackendConfig) -> Result<Self, BackendError> {
        let api_key = std::env::var(API_KEY_ENV).ok();
        let client = reqwest::blocking::Client::builder()
            .timeout(config.request_timeout)
            .build()
            .map_err(|e| BackendError::InvalidRequest(format!("http client: {e}")))?;
        let id = format!("http:{}", config.base_url.trim_end_matches('/'));
        Ok(Self {
            config,
            api_key,
            client,
            id,
        })
    }

    fn endpoint(&self) -> String {
        format!("{}/chat/completions", self.config.base_url.trim_end_matches('/'))
    }

    fn body(&self, request: &CompletionRequest) -> serde_json::Value {
        let (temperature, top_p) = match request.params.mode {
            DecodeMode::Greedy => (0.0, 1.0),
            DecodeMode::Sample => (request.params.temperature, request.params.top_p),
        };
        let mut body = json!({
            "model": self.config.model,
            "messages": [{"role": "user", "content": request.prompt}],
            "temperature": temperature,
            "top_p": top_p,
            "max_tokens": self.config.max_tokens,
        });
        if request.want_label_logprobs {
            body["logprobs"] = json!(true);
            body["top_logprobs"] = json!(DEFAULT_TOP_LOGPROBS);
        }
        body
    }

    fn send_once(&self, body: &serde_json::Value) -> Result<ChatResponse, BackendError> {
        let mut builder = self
            .client
            .post(self.endpoint())
            .header("content-type", "application/json");
        if let Some(key) = &self.api_key {
            builder = builder.header("authorization", format!("Bearer {key}"));
        }
        let response = builder.json(body).send().map_err(|e| BackendError::Transport {
            attempts: 1,
            message: e.to_string(),
        })?;
        let status = response.status();
        if status.is_client_error() {
            let text = response.text().unwrap_or_default();
            return Err(BackendError::Api {
                status: status.as_u16(),
                message: text,
            });
        }
        if !status.is_success() {
            // 5xx: the server may recover, retry alongside transport errors
            let text = response.text().unwrap_or_default();
            return Err(BackendError::Transport {
                attempts: 1,
                message: format!("status {status}: {text}"),
            });
        }
        response.json().map_err(|e| BackendError::Transport {
            attempts: 1,
            message: format!("decoding response body: {e}"),
        })
    }

    fn send_with_retries(&self, body: &serde_json::Value) -> Result<ChatResponse, BackendError> {
        let mut attempts = 0;
        loop {
            attempts += 1;
            match self.send_once(body) {
                Ok(response) => return Ok(response),
                Err(BackendError::Transport { message, .. }) => {
                    if attempts > self.config.max_retries {
                        return Err(BackendError::Transport { attempts, message });
                    }
                    let backoff = self.config.initial_backoff * 2u32.pow(attempts - 1);
                    log::warn!(
                        "transport failure (attempt {attempts}): {message}; retrying in {backoff:?}"
                    );
                    std::thread::sleep(backoff);
                }
                Err(other) => return Err(other),
            }
        }
    }

    /// Map the provider's top-logprob alternatives for the first generated
    /// token onto the allowed labels. Labels the provider did not surface are
    /// treated as probability zero and the rest renormalized.
    fn label_logprobs(
        response: &ChatResponse,
        allowed: &[String],
    ) -> Result<(BTreeMap<String, f64>, bool), BackendError> {
        let logprobs = response
            .choices
            .first()
            .and_then(|c| c.logprobs.as_ref())
            .filter(|lp| !lp.content.is_empty())
            .ok_or_else(|| {
                BackendError::Capability("provider returned no token logprobs".into())
            })?;
        let top = &logprobs.content[0].top_logprobs;
        let mut raw: BTreeMap<String, f64> = BTreeMap::new();
        for alt in top {
            let token = alt.token.trim();
            if let Some(label) = allowed.iter().find(|l| l.eq_ignore_ascii_case(token)) {
                let entry = raw.entry(label.clone()).or_insert(f64::NEG_INFINITY);
                if alt.logprob > *entry {
                    *entry = alt.logprob;
                }
            }
        }
        if raw.is_empty() {
            return Err(BackendError::Capability(
                "no allowed label among returned top logprobs".into(),
            ));
        }
        let truncated = raw.len() < allowed.len();
        let total: f64 = raw.values().map(|lp| lp.exp()).sum();
        let renormalized = raw
            .into_iter()
            .map(|(label, lp)| (label, (lp.exp() / total).ln()))
            .collect();
        Ok((renormalized, truncated))
    }
}

impl LanguageModelBackend for HttpBackend {
    fn id(&self) -> &str {
        &self.id
    }

    fn model_name(&self) -> &str {
        &self.config.model
    }

    fn complete(&self, request: &CompletionRequest) -> Result<CompletionResult, BackendError> {
        request.validate()?;
        let body = self.body(request);
        let response = self.send_with_retries(&body)?;
        let text = response
            .choices
            .first()
            .and_then(|c| c.message.content.clone())
            .ok_or_else(|| BackendError::Transport {
                attempts: 1,
                message: "response carried no message content".into(),
            })?;
        let (label_logprobs, logprob_truncated) = if request.want_label_logprobs {
            let (map, truncated) = Self::label_logprobs(&response, &request.allowed_labels)?;
            (Some(map), truncated)
        } else {
            (None, false)
        };
        Ok(CompletionResult {
            text,
            label_logprobs,
            backend_id: self.id.clone(),
            cached: false,
            logprob_truncated,
        })
    }

    fn supports_label_logprobs(&self) -> bool {
        true
    }
}
