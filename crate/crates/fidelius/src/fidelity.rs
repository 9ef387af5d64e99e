//! Fidelity elicitation by option replacement.
//!
//! Replacing a candidate answer's content with the sentinel sentence and
//! re-querying greedily yields a chain of selections; the chain ends when
//! the model accepts the sentinel-bearing option (high fidelity) or runs
//! out of alternatives. Chain positions are scored with geometrically
//! decaying weights and averaged across chains by sampled frequency.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::backend::{BackendError, CompletionRequest, DecodeParams, LanguageModelBackend};
use crate::dataset::{McqaItem, SENTINEL_OPTION};
use crate::prompt::{render_prompt_for_backend, PromptError};
use crate::sampler::{parse_label, AnswerDistribution};

#[derive(Debug, thiserror::Error)]
pub enum FidelityError {
    #[error("tau must be > 1, got {0}")]
    BadTau(f64),
    #[error("chain is empty")]
    EmptyChain,
    #[error("distribution for item '{0}' has no sampled answers")]
    EmptyDistribution(String),
    #[error("item '{id}': every chain was truncated by parse failures")]
    Unusable { id: String },
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error(transparent)]
    Dataset(#[from] crate::dataset::DatasetError),
}

/// Ordered labels selected under successive replacement/removal, starting
/// with the answer whose content was replaced.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FidelityChain {
    pub item_id: String,
    pub start: String,
    pub elements: Vec<String>,
    /// True when the model accepted the sentinel-bearing option; false when
    /// the alternatives ran out first.
    pub terminated_by_sentinel: bool,
    /// Set when a greedy query failed to parse twice and the chain stopped
    /// early.
    #[serde(default)]
    pub truncated_by_failure: bool,
}

impl FidelityChain {
    pub fn len(&self) -> usize {
        self.elements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elements.is_empty()
    }
}

/// Per-answer fidelity, plus the chains and weights it was computed from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FidelityScores {
    pub item_id: String,
    pub per_answer: BTreeMap<String, f64>,
    pub chains: Vec<(FidelityChain, f64)>,
}

/// Position weights within one chain: the i-th element from the right gets
/// weight tau^i, normalized to sum to 1. Requires tau > 1 so earlier
/// elements are strictly favored.
pub fn chain_fidelity(
    chain: &FidelityChain,
    tau: f64,
) -> Result<BTreeMap<String, f64>, FidelityError> {
    if tau.is_nan() || tau <= 1.0 {
        return Err(FidelityError::BadTau(tau));
    }
    if chain.elements.is_empty() {
        return Err(FidelityError::EmptyChain);
    }
    let len = chain.elements.len();
    let weights: Vec<f64> = (0..len)
        .map(|pos| tau.powi((len - pos) as i32))
        .collect();
    let total: f64 = weights.iter().sum();
    Ok(chain
        .elements
        .iter()
        .zip(&weights)
        .map(|(label, w)| (label.clone(), w / total))
        .collect())
}

/// Elicit one chain for `start` by the replacement protocol. All queries are
/// greedy regardless of the run temperature.
pub fn elicit_chain(
    item: &McqaItem,
    start: &str,
    backend: &dyn LanguageModelBackend,
) -> Result<FidelityChain, FidelityError> {
    let mut working = item.replace_option_content(start, SENTINEL_OPTION)?;
    let mut chain = FidelityChain {
        item_id: item.id.clone(),
        start: start.to_string(),
        elements: vec![start.to_string()],
        terminated_by_sentinel: false,
        truncated_by_failure: false,
    };
    loop {
        if working.option_count() == 1 {
            // only the sentinel-bearing option is left
            break;
        }
        let prompt = render_prompt_for_backend("answer", &working, backend)?;
        let labels = working.labels();
        let params = DecodeParams::greedy();
        let mut selected = None;
        for _ in 0..2 {
            let request = CompletionRequest {
                prompt: prompt.clone(),
                params: params.clone(),
                want_label_logprobs: false,
                allowed_labels: labels.clone(),
                sample_index: None,
            };
            let result = backend.complete(&request)?;
            selected = parse_label(&result.text, &labels);
            if selected.is_some() {
                break;
            }
        }
        let Some(selected) = selected else {
            log::warn!(
                "item '{}': chain from '{start}' truncated after parse failures",
                item.id
            );
            chain.truncated_by_failure = true;
            break;
        };
        if selected == *start {
            chain.terminated_by_sentinel = true;
            break;
        }
        chain.elements.push(selected.clone());
        working = working.remove_option(&selected)?;
    }
    Ok(chain)
}

/// Eq.-style combination: weighted average of per-chain fidelity, one chain
/// per distinct sampled answer, weighted by that answer's sampled frequency.
/// Labels that never appear in any chain are absent from the map.
pub fn score_chains(
    chains: &[(FidelityChain, f64)],
    tau: f64,
) -> Result<BTreeMap<String, f64>, FidelityError> {
    let mut per_answer: BTreeMap<String, f64> = BTreeMap::new();
    for (chain, weight) in chains {
        for (label, fidelity) in chain_fidelity(chain, tau)? {
            *per_answer.entry(label).or_insert(0.0) += weight * fidelity;
        }
    }
    Ok(per_answer)
}

/// Elicit chains for every distinct sampled answer (descending frequency)
/// and fold them into per-answer fidelity scores.
pub fn fidelity_scores(
    item: &McqaItem,
    dist: &AnswerDistribution,
    backend: &dyn LanguageModelBackend,
    tau: f64,
) -> Result<FidelityScores, FidelityError> {
    if tau.is_nan() || tau <= 1.0 {
        return Err(FidelityError::BadTau(tau));
    }
    let answers = dist.answers_by_frequency();
    if answers.is_empty() {
        return Err(FidelityError::EmptyDistribution(item.id.clone()));
    }
    let mut chains = Vec::with_capacity(answers.len());
    for answer in &answers {
        let chain = elicit_chain(item, answer, backend)?;
        chains.push((chain, dist.prob(answer)));
    }
    if chains.iter().all(|(c, _)| c.truncated_by_failure) {
        return Err(FidelityError::Unusable { id: item.id.clone() });
    }
    let per_answer = score_chains(&chains, tau)?;
    Ok(FidelityScores {
        item_id: item.id.clone(),
        per_answer,
        chains,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backend::{MockBackend, MockModelSpec, ScriptedBackend};
    use crate::dataset::McqaOption;

    fn item(labels: &[&str]) -> McqaItem {
        McqaItem::new(
            "q",
            "Pick.",
            labels
                .iter()
                .map(|l| McqaOption {
                    label: l.to_string(),
                    content: format!("content {l}"),
                })
                .collect(),
            labels[0],
            None,
        )
        .unwrap()
    }

    fn chain(elements: &[&str]) -> FidelityChain {
        FidelityChain {
            item_id: "q".into(),
            start: elements[0].into(),
            elements: elements.iter().map(|s| s.to_string()).collect(),
            terminated_by_sentinel: true,
            truncated_by_failure: false,
        }
    }

    fn mock(weights: &[(&str, f64)], affinity: f64) -> MockBackend {
        MockBackend::new(MockModelSpec {
            weights: BTreeMap::from([(
                "q".to_string(),
                weights.iter().map(|(l, w)| (l.to_string(), *w)).collect(),
            )]),
            sentinel_affinity: affinity,
            sentinel_affinity_overrides: Default::default(),
            answer_noise: 0.0,
        })
        .unwrap()
    }

    #[test]
    fn single_element_chain_gets_full_fidelity() {
        let f = chain_fidelity(&chain(&["A"]), 2.0).unwrap();
        assert_eq!(f.len(), 1);
        assert!((f["A"] - 1.0).abs() < 1e-12);
        let f = chain_fidelity(&chain(&["A"]), 5.0).unwrap();
        assert!((f["A"] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn three_element_chain_at_tau_two() {
        let f = chain_fidelity(&chain(&["A", "C", "D"]), 2.0).unwrap();
        assert!((f["A"] - 8.0 / 14.0).abs() < 1e-12);
        assert!((f["C"] - 4.0 / 14.0).abs() < 1e-12);
        assert!((f["D"] - 2.0 / 14.0).abs() < 1e-12);
    }

    #[test]
    fn two_element_chain_at_tau_three() {
        let f = chain_fidelity(&chain(&["A", "B"]), 3.0).unwrap();
        assert!((f["A"] - 0.75).abs() < 1e-12);
        assert!((f["B"] - 0.25).abs() < 1e-12);
    }

    #[test]
    fn tau_at_or_below_one_is_rejected() {
        assert!(matches!(
            chain_fidelity(&chain(&["A", "B"]), 1.0),
            Err(FidelityError::BadTau(_))
        ));
        assert!(matches!(
            chain_fidelity(&chain(&["A", "B"]), 0.5),
            Err(FidelityError::BadTau(_))
        ));
    }

    #[test]
    fn strong_sentinel_gives_single_element_chain() {
        let backend = mock(&[("A", 8.0), ("B", 4.0), ("C", 2.0), ("D", 1.0)], 10.0);
        let chain = elicit_chain(&item(&["A", "B", "C", "D"]), "A", &backend).unwrap();
        assert_eq!(chain.elements, vec!["A"]);
        assert!(chain.terminated_by_sentinel);
    }

    #[test]
    fn chain_follows_preference_order_until_sentinel_wins() {
        // preference A > C > D > sentinel > B: affinity 0.25 x 8 = 2
        let backend = mock(&[("A", 16.0), ("B", 1.0), ("C", 8.0), ("D", 4.0)], 0.25);
        let chain = elicit_chain(&item(&["A", "B", "C", "D"]), "A", &backend).unwrap();
        assert_eq!(chain.elements, vec!["A", "C", "D"]);
        assert!(chain.terminated_by_sentinel);
    }

    #[test]
    fn exhausted_options_end_the_chain_without_sentinel() {
        let backend = mock(&[("A", 4.0), ("B", 2.0)], 0.1);
        let chain = elicit_chain(&item(&["A", "B"]), "A", &backend).unwrap();
        assert_eq!(chain.elements, vec!["A", "B"]);
        assert!(!chain.terminated_by_sentinel);
    }

    #[test]
    fn parse_failures_truncate_after_one_retry() {
        let backend = ScriptedBackend::new(["B", "nonsense", "still nonsense"]);
        let chain = elicit_chain(&item(&["A", "B", "C", "D"]), "A", &backend).unwrap();
        assert_eq!(chain.elements, vec!["A", "B"]);
        assert!(chain.truncated_by_failure);
        assert!(!chain.terminated_by_sentinel);
    }

    #[test]
    fn worked_example_combines_chains_by_sampled_weight() {
        let chains = vec![
            (chain(&["A"]), 0.7),
            (chain(&["B", "A"]), 0.2),
            (chain(&["C", "A", "B"]), 0.1),
        ];
        let f = score_chains(&chains, 2.0).unwrap();
        assert!((f["A"] - 167.0 / 210.0).abs() < 1e-12, "F(A) = {}", f["A"]);
        assert!((f["B"] - 31.0 / 210.0).abs() < 1e-12, "F(B) = {}", f["B"]);
        assert!((f["C"] - 2.0 / 35.0).abs() < 1e-12, "F(C) = {}", f["C"]);
        let total: f64 = f.values().sum();
        assert!((total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn single_chain_single_answer_scores_one() {
        let chains = vec![(chain(&["A"]), 1.0)];
        let f = score_chains(&chains, 2.0).unwrap();
        assert_eq!(f.len(), 1);
        assert!((f["A"] - 1.0).abs() < 1e-12);
        assert!(!f.contains_key("D"));
    }

    #[test]
    fn fidelity_scores_cover_chain_only_answers() {
        // B sampled never, but appears in A's chain; it still gets a score.
        let backend = mock(&[("A", 16.0), ("B", 8.0), ("C", 1.0), ("D", 1.0)], 0.6);
        let dist = AnswerDistribution::from_counts(
            "q",
            BTreeMap::from([("A".to_string(), 10)]),
            10,
        );
        let scores = fidelity_scores(&item(&["A", "B", "C", "D"]), &dist, &backend, 2.0).unwrap();
        // sentinel weight 0.6 x 8 = 4.8: B (8) beats it, C/D (1) lose
        assert_eq!(scores.chains.len(), 1);
        assert_eq!(scores.chains[0].0.elements, vec!["A", "B"]);
        assert!(scores.per_answer.contains_key("B"));
        let total: f64 = scores.per_answer.values().sum();
        assert!((total - 1.0).abs() < 1e-9);
    }

    #[test]
    fn chains_are_elicited_in_descending_frequency_order() {
        let backend = mock(&[("A", 8.0), ("B", 4.0), ("C", 2.0), ("D", 1.0)], 10.0);
        let dist = AnswerDistribution::from_counts(
            "q",
            BTreeMap::from([
                ("B".to_string(), 6),
                ("A".to_string(), 3),
                ("C".to_string(), 1),
            ]),
            10,
        );
        let scores = fidelity_scores(&item(&["A", "B", "C", "D"]), &dist, &backend, 2.0).unwrap();
        let starts: Vec<&str> = scores.chains.iter().map(|(c, _)| c.start.as_str()).collect();
        assert_eq!(starts, vec!["B", "A", "C"]);
        let weights: Vec<f64> = scores.chains.iter().map(|(_, w)| *w).collect();
        assert!((weights[0] - 0.6).abs() < 1e-12);
        assert!((weights[1] - 0.3).abs() < 1e-12);
        assert!((weights[2] - 0.1).abs() < 1e-12);
    }
}
