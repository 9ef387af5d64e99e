//! Canned-response backend for driving parse and retry paths in tests.

use std::collections::VecDeque;
use std::sync::Mutex;

use super::{BackendError, CompletionRequest, CompletionResult, LanguageModelBackend};

/// Replays a fixed sequence of response texts, one per `complete` call.
pub struct ScriptedBackend {
    responses: Mutex<VecDeque<String>>,
}

impl ScriptedBackend {
    pub fn new<I, S>(responses: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        Self {
            responses: Mutex::new(responses.into_iter().map(Into::into).collect()),
        }
    }

    pub fn remaining(&self) -> usize {
        self.responses.lock().expect("scripted lock").len()
    }
}

impl LanguageModelBackend for ScriptedBackend {
    fn id(&self) -> &str {
        "scripted"
    }

    fn model_name(&self) -> &str {
        "scripted-model"
    }

    fn complete(&self, request: &CompletionRequest) -> Result<CompletionResult, BackendError> {
        request.validate()?;
        let text = self
            .responses
            .lock()
            .expect("scripted lock")
            .pop_front()
            .ok_or_else(|| BackendError::Mock("scripted backend ran out of responses".into()))?;
        Ok(CompletionResult {
            text,
            label_logprobs: None,
            backend_id: self.id().to_string(),
            cached: false,
            logprob_truncated: false,
        })
    }

    fn supports_label_logprobs(&self) -> bool {
        false
    }
}
