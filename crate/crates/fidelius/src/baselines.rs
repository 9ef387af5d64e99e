//! The four comparison methods: verbalized probability (Verb), verbalized
//! linguistic expression (Ling), sampled frequency (Sampled), and token
//! logprob softmax (Token).

use std::collections::{BTreeMap, BTreeSet};

use crate::backend::{
    BackendError, CompletionRequest, DecodeParams, LanguageModelBackend,
};
use crate::confidence::{ConfidenceRecord, Method, RecordFlag};
use crate::dataset::McqaItem;
use crate::prompt::{render_prompt_for_backend, PromptError};
use crate::sampler::{final_answer, parse_label, sample_answers, AnswerDistribution, SamplerError};

#[derive(Debug, thiserror::Error)]
pub enum BaselineError {
    #[error("temperature must be > 0, got {0}")]
    BadTemperature(f64),
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error(transparent)]
    Sampler(#[from] SamplerError),
}

/// Canonical linguistic expressions and their confidence scores, in table
/// order. Duplicated scores are intentional.
pub const LING_EXPRESSIONS: [(&str, f64); 19] = [
    ("Certain", 1.0),
    ("Almost Certain", 0.95),
    ("Highly Likely", 0.9),
    ("Very Good Chance", 0.8),
    ("We Believe", 0.75),
    ("Probably", 0.7),
    ("Probable", 0.7),
    ("Likely", 0.7),
    ("Better than Even", 0.6),
    ("About Even", 0.5),
    ("Probably Not", 0.25),
    ("We Doubt", 0.2),
    ("Unlikely", 0.2),
    ("Little Chance", 0.1),
    ("Chances are Slight", 0.1),
    ("Improbable", 0.1),
    ("Highly Unlikely", 0.05),
    ("Almost No Chance", 0.02),
    ("Impossible", 0.0),
];

/// The `{EXPRESSION_LIST}` rendering: quoted canonical phrases,
/// comma-separated, in table order.
pub fn expression_list_text() -> String {
    LING_EXPRESSIONS
        .iter()
        .map(|(phrase, _)| format!("'{phrase}'"))
        .collect::<Vec<_>>()
        .join(", ")
}

/// Case-insensitive lookup of a canonical phrase. Surrounding whitespace and
/// one trailing period are tolerated.
pub fn lookup_ling_expression(text: &str) -> Option<f64> {
    let needle = text.trim().trim_end_matches('.').trim();
    LING_EXPRESSIONS
        .iter()
        .find(|(phrase, _)| phrase.eq_ignore_ascii_case(needle))
        .map(|(_, score)| *score)
}

/// Expression whose score is nearest to `p`; earlier table entries win ties.
pub fn closest_ling_expression(p: f64) -> &'static str {
    let mut best = LING_EXPRESSIONS[0];
    let mut best_gap = (LING_EXPRESSIONS[0].1 - p).abs();
    for entry in &LING_EXPRESSIONS[1..] {
        let gap = (entry.1 - p).abs();
        if gap < best_gap {
            best = *entry;
            best_gap = gap;
        }
    }
    best.0
}

/// Value of the first line starting with `prefix` (case-insensitive), with
/// the prefix stripped.
fn line_value<'a>(text: &'a str, prefix: &str) -> Option<&'a str> {
    text.lines().find_map(|line| {
        let line = line.trim_start();
        if line.len() >= prefix.len() && line[..prefix.len()].eq_ignore_ascii_case(prefix) {
            Some(line[prefix.len()..].trim())
        } else {
            None
        }
    })
}

fn parse_probability(raw: &str) -> Option<(f64, bool)> {
    let trimmed = raw.trim();
    let (body, percent) = match trimmed.strip_suffix('%') {
        Some(rest) => (rest.trim(), true),
        None => (trimmed, false),
    };
    let value: f64 = body.parse().ok()?;
    let value = if percent { value / 100.0 } else { value };
    value.is_finite().then_some((value, percent))
}

/// Verb: one greedy completion asking for a guess plus a probability in
/// [0, 1]. One retry on parse failure, then the record is unusable.
pub fn run_verb(
    item: &McqaItem,
    backend: &dyn LanguageModelBackend,
    _params: &DecodeParams,
) -> Result<ConfidenceRecord, BaselineError> {
    let prompt = render_prompt_for_backend("verb", item, backend)?;
    let labels = item.labels();
    for _ in 0..2 {
        let request = CompletionRequest {
            prompt: prompt.clone(),
            params: DecodeParams::greedy(),
            want_label_logprobs: false,
            allowed_labels: labels.clone(),
            sample_index: None,
        };
        let result = backend.complete(&request)?;
        let guess = line_value(&result.text, "Guess:").and_then(|v| parse_label(v, &labels));
        let prob = line_value(&result.text, "Probability:").and_then(parse_probability);
        if let (Some(guess), Some((value, percent))) = (guess, prob) {
            let mut flags = BTreeSet::new();
            if percent {
                flags.insert(RecordFlag::PercentProbability);
            }
            let clamped = value.clamp(0.0, 1.0);
            if clamped != value {
                flags.insert(RecordFlag::Clamped);
            }
            return Ok(ConfidenceRecord {
                item_id: item.id.clone(),
                method: Method::Verb,
                correct: guess == item.gold_label,
                confidence_of_chosen: clamped,
                per_answer_confidence: BTreeMap::from([(guess.clone(), clamped)]),
                chosen: Some(guess),
                uncertainty: None,
                flags,
                chains: None,
            });
        }
    }
    Ok(ConfidenceRecord::unusable(&item.id, Method::Verb))
}

/// Ling: one greedy completion asking for a guess plus one of the canonical
/// expressions. Unmatched expressions get one retry, then unusable.
pub fn run_ling(
    item: &McqaItem,
    backend: &dyn LanguageModelBackend,
    _params: &DecodeParams,
) -> Result<ConfidenceRecord, BaselineError> {
    let prompt = render_prompt_for_backend("ling", item, backend)?;
    let labels = item.labels();
    for _ in 0..2 {
        let request = CompletionRequest {
            prompt: prompt.clone(),
            params: DecodeParams::greedy(),
            want_label_logprobs: false,
            allowed_labels: labels.clone(),
            sample_index: None,
        };
        let result = backend.complete(&request)?;
        let guess = line_value(&result.text, "Guess:").and_then(|v| parse_label(v, &labels));
        let score = line_value(&result.text, "Confidence:").and_then(lookup_ling_expression);
        if let (Some(guess), Some(score)) = (guess, score) {
            return Ok(ConfidenceRecord {
                item_id: item.id.clone(),
                method: Method::Ling,
                correct: guess == item.gold_label,
                confidence_of_chosen: score,
                per_answer_confidence: BTreeMap::from([(guess.clone(), score)]),
                chosen: Some(guess),
                uncertainty: None,
                flags: BTreeSet::new(),
                chains: None,
            });
        }
    }
    Ok(ConfidenceRecord::unusable(&item.id, Method::Ling))
}

/// Sampled: the majority answer's sampled frequency is its confidence.
/// Build the record from an existing distribution so the combined method and
/// this baseline can share one set of draws.
pub fn sampled_record_from_distribution(
    item: &McqaItem,
    dist: &AnswerDistribution,
) -> ConfidenceRecord {
    let Some(chosen) = final_answer(dist) else {
        return ConfidenceRecord::unusable(&item.id, Method::Sampled);
    };
    let mut flags = BTreeSet::new();
    if dist.reduced() {
        flags.insert(RecordFlag::ReducedK);
    }
    ConfidenceRecord {
        item_id: item.id.clone(),
        method: Method::Sampled,
        correct: chosen == item.gold_label,
        confidence_of_chosen: dist.prob(&chosen),
        per_answer_confidence: dist.probs(),
        chosen: Some(chosen),
        uncertainty: None,
        flags,
        chains: None,
    }
}

pub fn run_sampled(
    item: &McqaItem,
    backend: &dyn LanguageModelBackend,
    k: u32,
    params: &DecodeParams,
) -> Result<ConfidenceRecord, BaselineError> {
    match sample_answers(item, backend, k, params) {
        Ok(dist) => Ok(sampled_record_from_distribution(item, &dist)),
        Err(SamplerError::Unusable { .. }) => {
            Ok(ConfidenceRecord::unusable(&item.id, Method::Sampled))
        }
        Err(e) => Err(e.into()),
    }
}

/// Token: fetch the option-label logprobs once with a greedy query and
/// temperature-scale them into confidences.
pub fn run_token(
    item: &McqaItem,
    backend: &dyn LanguageModelBackend,
    temperature: f64,
) -> Result<ConfidenceRecord, BaselineError> {
    if temperature.is_nan() || temperature <= 0.0 {
        return Err(BaselineError::BadTemperature(temperature));
    }
    if !backend.supports_label_logprobs() {
        return Err(BackendError::Capability(
            "backend does not expose label logprobs".into(),
        )
        .into());
    }
    let prompt = render_prompt_for_backend("answer", item, backend)?;
    let labels = item.labels();
    let request = CompletionRequest {
        prompt,
        params: DecodeParams::greedy(),
        want_label_logprobs: true,
        allowed_labels: labels,
        sample_index: None,
    };
    let result = backend.complete(&request)?;
    let logits = result.label_logprobs.ok_or_else(|| {
        BackendError::Capability("backend returned no label logprobs".into())
    })?;
    // temperature-scaled softmax over the surfaced labels; absent labels
    // stay at probability zero
    let scaled: BTreeMap<&String, f64> =
        logits.iter().map(|(l, lp)| (l, lp / temperature)).collect();
    let max = scaled.values().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut per_answer: BTreeMap<String, f64> = scaled
        .iter()
        .map(|(l, x)| ((*l).clone(), (x - max).exp()))
        .collect();
    let total: f64 = per_answer.values().sum();
    for value in per_answer.values_mut() {
        *value /= total;
    }
    let chosen = per_answer
        .iter()
        .max_by(|a, b| a.1.partial_cmp(b.1).unwrap().then_with(|| b.0.cmp(a.0)))
        .map(|(label, _)| label.clone())
        .expect("nonempty logprob map");
    let mut flags = BTreeSet::new();
    if result.logprob_truncated {
        flags.insert(RecordFlag::LogprobTruncated);
    }
    Ok(ConfidenceRecord {
        item_id: item.id.clone(),
        method: Method::Token,
        correct: chosen == item.gold_label,
        confidence_of_chosen: per_answer[&chosen],
        per_answer_confidence: per_answer,
        chosen: Some(chosen),
        uncertainty: None,
        flags,
        chains: None,
    })
}
