//! Deterministic mock model. Behavior is a pure function of the prompt:
//! the prompt renderer embeds a trailer line `#qid=<id> #labels=<...>`,
//! and the per-item preference weights come from a [`MockModelSpec`].

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::atomic::{AtomicU64, Ordering};

use rand::distributions::{Distribution, WeightedIndex};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{
    BackendError, CompletionRequest, CompletionResult, DecodeMode, LanguageModelBackend,
};
use crate::dataset::SENTINEL_OPTION;

/// Per-item preference weights plus the sentinel-acceptance knobs.
///
/// The sentinel-bearing option competes with weight
/// `affinity x (strongest weight among the item's other labels)`, fixed at
/// replacement time. Affinity below 1 means the sentinel only wins once the
/// stronger alternatives have been removed; above 1 it wins immediately.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MockModelSpec {
    /// item id -> label -> positive preference weight (all labels covered).
    pub weights: BTreeMap<String, BTreeMap<String, f64>>,
    pub sentinel_affinity: f64,
    /// Optional per-item affinity, overriding the global value.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub sentinel_affinity_overrides: BTreeMap<String, f64>,
    /// Temperature-like flattening added on top of the request temperature.
    #[serde(default)]
    pub answer_noise: f64,
}

impl MockModelSpec {
    pub fn validate(&self) -> Result<(), BackendError> {
        for (id, labels) in &self.weights {
            if labels.is_empty() {
                return Err(BackendError::Mock(format!("item '{id}' has no weights")));
            }
            for (label, w) in labels {
                if !(w.is_finite() && *w > 0.0) {
                    return Err(BackendError::Mock(format!(
                        "item '{id}' label '{label}' has non-positive weight {w}"
                    )));
                }
            }
        }
        if !(self.sentinel_affinity.is_finite() && self.sentinel_affinity >= 0.0) {
            return Err(BackendError::Mock(format!(
                "sentinel_affinity must be >= 0, got {}",
                self.sentinel_affinity
            )));
        }
        if !(self.answer_noise.is_finite() && self.answer_noise >= 0.0) {
            return Err(BackendError::Mock(format!(
                "answer_noise must be >= 0, got {}",
                self.answer_noise
            )));
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, BackendError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| BackendError::Mock(format!("reading {}: {e}", path.display())))?;
        let spec: Self = serde_json::from_str(&text)
            .map_err(|e| BackendError::Mock(format!("parsing {}: {e}", path.display())))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn save(&self, path: &Path) -> Result<(), BackendError> {
        let text = serde_json::to_string_pretty(self).expect("serialize mock spec");
        std::fs::write(path, text)
            .map_err(|e| BackendError::Mock(format!("writing {}: {e}", path.display())))
    }

    fn affinity_for(&self, item_id: &str) -> f64 {
        self.sentinel_affinity_overrides
            .get(item_id)
            .copied()
            .unwrap_or(self.sentinel_affinity)
    }
}

/// Which prompt family a query came from, recognized by its fixed preamble.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum PromptKind {
    Answer,
    Verb,
    Ling,
}

fn classify_prompt(prompt: &str) -> PromptKind {
    if prompt.starts_with("Provide your best guess and the probability") {
        PromptKind::Verb
    } else if prompt.starts_with("Provide your best guess for the following question") {
        PromptKind::Ling
    } else {
        PromptKind::Answer
    }
}

struct ParsedPrompt {
    item_id: String,
    labels: Vec<String>,
    sentinel_label: Option<String>,
    kind: PromptKind,
}

fn parse_prompt(prompt: &str) -> Result<ParsedPrompt, BackendError> {
    let trailer = prompt
        .lines()
        .rev()
        .find(|l| l.starts_with("#qid="))
        .ok_or_else(|| {
            BackendError::Mock("prompt has no #qid trailer; was it rendered for a mock?".into())
        })?;
    let rest = &trailer["#qid=".len()..];
    let (item_id, labels_part) = rest.split_once(" #labels=").ok_or_else(|| {
        BackendError::Mock(format!("malformed trailer line: {trailer}"))
    })?;
    let labels: Vec<String> = labels_part
        .split(',')
        .filter(|s| !s.is_empty())
        .map(|s| s.to_string())
        .collect();
    if labels.is_empty() {
        return Err(BackendError::Mock(format!("trailer lists no labels: {trailer}")));
    }
    let sentinel_label = labels
        .iter()
        .find(|label| {
            let line = format!("{label}. {SENTINEL_OPTION}");
            prompt.lines().any(|l| l == line)
        })
        .cloned();
    Ok(ParsedPrompt {
        item_id: item_id.to_string(),
        labels,
        sentinel_label,
        kind: classify_prompt(prompt),
    })
}

/// Deterministic offline model driven by a [`MockModelSpec`].
pub struct MockBackend {
    spec: MockModelSpec,
    calls: AtomicU64,
}

impl MockBackend {
    pub fn new(spec: MockModelSpec) -> Result<Self, BackendError> {
        spec.validate()?;
        Ok(Self {
            spec,
            calls: AtomicU64::new(0),
        })
    }

    /// Total `complete` calls served, for asserting cache/sweep reuse.
    pub fn call_count(&self) -> u64 {
        self.calls.load(Ordering::SeqCst)
    }

    /// Effective weights over the presented labels. The sentinel label gets
    /// `affinity x max(other base weights of the item)`, everything else its
    /// base weight.
    fn effective_weights(&self, parsed: &ParsedPrompt) -> Result<Vec<(String, f64)>, BackendError> {
        let base = self.spec.weights.get(&parsed.item_id).ok_or_else(|| {
            BackendError::Mock(format!("unknown item id '{}'", parsed.item_id))
        })?;
        let sentinel_weight = parsed.sentinel_label.as_ref().map(|sl| {
            let max_other = base
                .iter()
                .filter(|(label, _)| *label != sl)
                .map(|(_, w)| *w)
                .fold(0.0_f64, f64::max);
            let max_other = if max_other > 0.0 { max_other } else { 1.0 };
            self.spec.affinity_for(&parsed.item_id) * max_other
        });
        parsed
            .labels
            .iter()
            .map(|label| {
                if Some(label) == parsed.sentinel_label.as_ref() {
                    Ok((label.clone(), sentinel_weight.expect("sentinel weight")))
                } else {
                    base.get(label).map(|w| (label.clone(), *w)).ok_or_else(|| {
                        BackendError::Mock(format!(
                            "item '{}' has no weight for label '{label}'",
                            parsed.item_id
                        ))
                    })
                }
            })
            .collect()
    }

    fn choose(&self, request: &CompletionRequest, weights: &[(String, f64)]) -> String {
        match request.params.mode {
            DecodeMode::Greedy => {
                // Argmax, ties broken by ascending label order. Weights are
                // iterated in presented order, so compare on (weight, label).
                let mut best: Option<(&str, f64)> = None;
                for (label, w) in weights {
                    let replace = match best {
                        None => true,
                        Some((bl, bw)) => *w > bw || (*w == bw && label.as_str() < bl),
                    };
                    if replace {
                        best = Some((label, *w));
                    }
                }
                best.expect("nonempty weights").0.to_string()
            }
            DecodeMode::Sample => {
                let t = request.params.temperature + self.spec.answer_noise;
                // normalize by the max weight before tempering so extreme
                // temperatures cannot overflow
                let max_w = weights.iter().map(|(_, w)| *w).fold(f64::MIN, f64::max);
                let scaled: Vec<f64> =
                    weights.iter().map(|(_, w)| (w / max_w).powf(1.0 / t)).collect();
                let mut rng = self.rng_for(request);
                let dist = WeightedIndex::new(&scaled).expect("positive weights");
                weights[dist.sample(&mut rng)].0.clone()
            }
        }
    }

    fn rng_for(&self, request: &CompletionRequest) -> ChaCha8Rng {
        let mut hasher = Sha256::new();
        hasher.update(request.params.seed.unwrap_or(0).to_le_bytes());
        hasher.update([0]);
        hasher.update(request.prompt.as_bytes());
        hasher.update([0]);
        hasher.update(request.sample_index.unwrap_or(u32::MAX).to_le_bytes());
        let digest = hasher.finalize();
        let mut seed = [0u8; 32];
        seed.copy_from_slice(&digest);
        ChaCha8Rng::from_seed(seed)
    }

    /// Base choice distribution (temperature 1, no noise) used for the
    /// verbalized probability and for reported logprobs.
    fn base_distribution(weights: &[(String, f64)]) -> Vec<(String, f64)> {
        let total: f64 = weights.iter().map(|(_, w)| w).sum();
        weights.iter().map(|(l, w)| (l.clone(), w / total)).collect()
    }

    fn render_text(&self, parsed: &ParsedPrompt, chosen: &str, weights: &[(String, f64)]) -> String {
        match parsed.kind {
            PromptKind::Answer => chosen.to_string(),
            PromptKind::Verb => {
                let p = Self::base_distribution(weights)
                    .into_iter()
                    .find(|(l, _)| l == chosen)
                    .map(|(_, p)| p)
                    .unwrap_or(0.0);
                format!("Guess: {chosen}\nProbability: {p:.4}")
            }
            PromptKind::Ling => {
                let p = Self::base_distribution(weights)
                    .into_iter()
                    .find(|(l, _)| l == chosen)
                    .map(|(_, p)| p)
                    .unwrap_or(0.0);
                let expr = crate::baselines::closest_ling_expression(p);
                format!("Guess: {chosen}\nConfidence: {expr}")
            }
        }
    }
}

impl LanguageModelBackend for MockBackend {
    fn id(&self) -> &str {
        "mock"
    }

    fn model_name(&self) -> &str {
        "mock-model"
    }

    fn complete(&self, request: &CompletionRequest) -> Result<CompletionResult, BackendError> {
        request.validate()?;
        self.calls.fetch_add(1, Ordering::SeqCst);
        let parsed = parse_prompt(&request.prompt)?;
        let weights = self.effective_weights(&parsed)?;
        let chosen = self.choose(request, &weights);
        let label_logprobs = if request.want_label_logprobs {
            let map: BTreeMap<String, f64> = Self::base_distribution(&weights)
                .into_iter()
                .filter(|(l, _)| request.allowed_labels.contains(l))
                .map(|(l, p)| (l, p.ln()))
                .collect();
            Some(map)
        } else {
            None
        };
        Ok(CompletionResult {
            text: self.render_text(&parsed, &chosen, &weights),
            label_logprobs,
            backend_id: self.id().to_string(),
            cached: false,
            logprob_truncated: false,
        })
    }

    fn supports_label_logprobs(&self) -> bool {
        true
    }

    fn wants_prompt_trailer(&self) -> bool {
        true
    }
}
