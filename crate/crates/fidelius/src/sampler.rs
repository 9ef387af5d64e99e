//! Answer sampling: draw K completions per question, tally the frequency
//! distribution over option labels, and pick the majority answer.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::backend::{
    BackendError, CompletionRequest, DecodeMode, DecodeParams, LanguageModelBackend,
};
use crate::dataset::McqaItem;
use crate::prompt::{render_prompt_for_backend, PromptError};

#[derive(Debug, thiserror::Error)]
pub enum SamplerError {
    #[error("sampling requires sample mode with temperature > 0")]
    NotSampleMode,
    #[error("K must be >= 1")]
    ZeroK,
    #[error("every draw for item '{id}' failed to parse")]
    Unusable { id: String },
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error(transparent)]
    Backend(#[from] BackendError),
}

/// Sampled frequency distribution over option labels for one item.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnswerDistribution {
    pub item_id: String,
    pub counts: BTreeMap<String, u32>,
    /// Draws actually tallied. May be below `requested_k` when slots were
    /// dropped after repeated parse failures.
    pub k: u32,
    pub requested_k: u32,
}

impl AnswerDistribution {
    pub fn from_counts(
        item_id: impl Into<String>,
        counts: BTreeMap<String, u32>,
        requested_k: u32,
    ) -> Self {
        let k = counts.values().sum();
        Self {
            item_id: item_id.into(),
            counts,
            k,
            requested_k,
        }
    }

    pub fn prob(&self, label: &str) -> f64 {
        if self.k == 0 {
            return 0.0;
        }
        f64::from(self.counts.get(label).copied().unwrap_or(0)) / f64::from(self.k)
    }

    /// Labels with positive count and their probabilities.
    pub fn probs(&self) -> BTreeMap<String, f64> {
        self.counts
            .iter()
            .filter(|(_, c)| **c > 0)
            .map(|(label, c)| (label.clone(), f64::from(*c) / f64::from(self.k)))
            .collect()
    }

    pub fn reduced(&self) -> bool {
        self.k < self.requested_k
    }

    /// Distinct sampled answers ordered by descending frequency, ties by
    /// ascending label.
    pub fn answers_by_frequency(&self) -> Vec<String> {
        let mut answers: Vec<(&String, u32)> = self
            .counts
            .iter()
            .filter(|(_, c)| **c > 0)
            .map(|(l, c)| (l, *c))
            .collect();
        answers.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
        answers.into_iter().map(|(l, _)| l.clone()).collect()
    }
}

/// Majority answer; ties resolve to the lexicographically smallest label.
pub fn final_answer(dist: &AnswerDistribution) -> Option<String> {
    dist.counts
        .iter()
        .filter(|(_, c)| **c > 0)
        .max_by(|a, b| a.1.cmp(b.1).then_with(|| b.0.cmp(a.0)))
        .map(|(label, _)| label.clone())
}

/// Extract an option label from raw model output.
///
/// Strips surrounding whitespace and a literal `Answer:` prefix, then scans
/// alphanumeric tokens for case-insensitive matches against the allowed
/// labels. Exactly one distinct label may match; zero or several distinct
/// matches are a failure so callers can apply their own retry policy.
pub fn parse_label(text: &str, allowed: &[String]) -> Option<String> {
    let mut body = text.trim();
    if let Some(rest) = body.strip_prefix("Answer:") {
        body = rest.trim();
    }
    let mut matched: Option<&String> = None;
    for token in body.split(|c: char| !c.is_ascii_alphanumeric()) {
        if token.is_empty() {
            continue;
        }
        if let Some(label) = allowed.iter().find(|l| l.eq_ignore_ascii_case(token)) {
            match matched {
                None => matched = Some(label),
                Some(prev) if prev == label => {}
                Some(_) => return None, // ambiguous: two distinct labels
            }
        }
    }
    matched.cloned()
}

const EXTRA_ATTEMPTS_PER_SLOT: u32 = 3;

/// Draw K answers for one item and tally them.
///
/// Unparseable completions are re-drawn up to three extra times with fresh
/// sample indices; a slot that still fails is dropped, reducing the
/// effective K. Backend errors abort the item.
pub fn sample_answers(
    item: &McqaItem,
    backend: &dyn LanguageModelBackend,
    k: u32,
    params: &DecodeParams,
) -> Result<AnswerDistribution, SamplerError> {
    if k == 0 {
        return Err(SamplerError::ZeroK);
    }
    if params.mode != DecodeMode::Sample {
        return Err(SamplerError::NotSampleMode);
    }
    let prompt = render_prompt_for_backend("answer", item, backend)?;
    let labels = item.labels();
    let mut counts: BTreeMap<String, u32> = BTreeMap::new();
    let mut tallied = 0u32;
    // retry draws take indices after the primary block so cache entries
    // stay per-draw
    let mut next_retry_index = k;
    for slot in 0..k {
        let mut attempt_index = slot;
        let mut parsed = None;
        for attempt in 0..=EXTRA_ATTEMPTS_PER_SLOT {
            let request = CompletionRequest {
                prompt: prompt.clone(),
                params: params.clone(),
                want_label_logprobs: false,
                allowed_labels: labels.clone(),
                sample_index: Some(attempt_index),
            };
            let result = backend.complete(&request)?;
            parsed = parse_label(&result.text, &labels);
            if parsed.is_some() {
                break;
            }
            if attempt < EXTRA_ATTEMPTS_PER_SLOT {
                attempt_index = next_retry_index;
                next_retry_index += 1;
            }
        }
        if let Some(label) = parsed {
            *counts.entry(label).or_default() += 1;
            tallied += 1;
        } else {
            log::warn!("item '{}': dropping unparseable sample slot {slot}", item.id);
        }
    }
    if tallied == 0 {
        return Err(SamplerError::Unusable { id: item.id.clone() });
    }
    Ok(AnswerDistribution {
        item_id: item.id.clone(),
        counts,
        k: tallied,
        requested_k: k,
    })
}
