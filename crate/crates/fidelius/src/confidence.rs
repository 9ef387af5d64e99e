//! Question-level uncertainty, answer-level confidence, and the combined
//! per-answer confidence records shared by every method.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::backend::{DecodeParams, LanguageModelBackend};
use crate::dataset::McqaItem;
use crate::fidelity::{fidelity_scores, FidelityError, FidelityScores};
use crate::sampler::{final_answer, sample_answers, AnswerDistribution, SamplerError};

#[derive(Debug, thiserror::Error)]
pub enum ConfidenceError {
    #[error("uncertainty needs at least 2 options, got {0}")]
    TooFewOptions(usize),
    #[error("uncertainty must lie in [0, 1], got {0}")]
    UncertaintyOutOfRange(f64),
    #[error(transparent)]
    Sampler(#[from] SamplerError),
    #[error(transparent)]
    Fidelity(#[from] FidelityError),
}

/// Confidence-elicitation method tag.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize, Hash)]
pub enum Method {
    #[serde(rename = "ours")]
    Ours,
    #[serde(rename = "ours-no-u")]
    OursNoU,
    #[serde(rename = "ours-no-f")]
    OursNoF,
    #[serde(rename = "verb")]
    Verb,
    #[serde(rename = "ling")]
    Ling,
    #[serde(rename = "sampled")]
    Sampled,
    #[serde(rename = "token")]
    Token,
}

impl Method {
    pub const ALL: [Method; 7] = [
        Method::Ours,
        Method::OursNoU,
        Method::OursNoF,
        Method::Verb,
        Method::Ling,
        Method::Sampled,
        Method::Token,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Method::Ours => "ours",
            Method::OursNoU => "ours-no-u",
            Method::OursNoF => "ours-no-f",
            Method::Verb => "verb",
            Method::Ling => "ling",
            Method::Sampled => "sampled",
            Method::Token => "token",
        }
    }

    /// Methods needing sampled draws (and hence temperature > 0).
    pub fn needs_sampling(&self) -> bool {
        matches!(
            self,
            Method::Ours | Method::OursNoU | Method::OursNoF | Method::Sampled
        )
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Method::ALL
            .iter()
            .find(|m| m.as_str() == s)
            .copied()
            .ok_or_else(|| format!("unknown method '{s}'"))
    }
}

/// Warning tags attached to a record.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize, Hash)]
#[serde(rename_all = "snake_case")]
pub enum RecordFlag {
    /// Excluded from metrics: the method could not produce a usable answer.
    Unusable,
    /// A verbalized probability fell outside [0, 1] and was clamped.
    Clamped,
    /// The verbalized probability arrived with a percent sign.
    PercentProbability,
    /// The provider returned only part of the label distribution.
    LogprobTruncated,
    /// The sampling-majority answer differs from the confidence argmax.
    MajorityVsConfidenceMismatch,
    /// Parse failures dropped sample slots; effective K is reduced.
    ReducedK,
    /// At least one fidelity chain stopped early on parse failures.
    ChainTruncated,
}

/// One chain as persisted inside a record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordedChain {
    pub start: String,
    pub elements: Vec<String>,
    pub terminated_by_sentinel: bool,
    #[serde(default)]
    pub truncated_by_failure: bool,
    pub weight: f64,
}

/// Per-question result of one method.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfidenceRecord {
    pub item_id: String,
    pub method: Method,
    pub chosen: Option<String>,
    pub confidence_of_chosen: f64,
    pub per_answer_confidence: BTreeMap<String, f64>,
    pub correct: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub uncertainty: Option<f64>,
    #[serde(default, skip_serializing_if = "BTreeSet::is_empty")]
    pub flags: BTreeSet<RecordFlag>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub chains: Option<Vec<RecordedChain>>,
}

impl ConfidenceRecord {
    pub fn usable(&self) -> bool {
        !self.flags.contains(&RecordFlag::Unusable)
    }

    /// A record that carries nothing but the unusable flag.
    pub fn unusable(item_id: impl Into<String>, method: Method) -> Self {
        Self {
            item_id: item_id.into(),
            method,
            chosen: None,
            confidence_of_chosen: 0.0,
            per_answer_confidence: BTreeMap::new(),
            correct: false,
            uncertainty: None,
            flags: BTreeSet::from([RecordFlag::Unusable]),
            chains: None,
        }
    }
}

/// Normalized entropy of the sampled answer distribution, in [0, 1].
/// The normalizer is log of the item's option count, not of the number of
/// distinct sampled answers.
pub fn uncertainty(
    dist: &AnswerDistribution,
    option_count: usize,
) -> Result<f64, ConfidenceError> {
    if option_count < 2 {
        return Err(ConfidenceError::TooFewOptions(option_count));
    }
    let mut entropy = 0.0;
    for p in dist.probs().values() {
        if *p > 0.0 {
            entropy -= p * p.ln();
        }
    }
    let u = entropy / (option_count as f64).ln();
    Ok(u.clamp(0.0, 1.0))
}

/// Final confidence per answer: `(1 - uncertainty) x fidelity`.
pub fn combine(
    uncertainty: f64,
    fidelity: &BTreeMap<String, f64>,
) -> Result<BTreeMap<String, f64>, ConfidenceError> {
    if !(0.0..=1.0).contains(&uncertainty) {
        return Err(ConfidenceError::UncertaintyOutOfRange(uncertainty));
    }
    Ok(fidelity
        .iter()
        .map(|(label, f)| (label.clone(), (1.0 - uncertainty) * f))
        .collect())
}

/// Ablation variants of the combined method.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OursVariant {
    Full,
    /// Table-4 row "w/o. Uncertainty": confidence is the fidelity alone.
    NoUncertainty,
    /// Table-4 row "w/o. Fidelity": confidence of the chosen answer is 1-U.
    NoFidelity,
}

impl OursVariant {
    pub fn method(&self) -> Method {
        match self {
            OursVariant::Full => Method::Ours,
            OursVariant::NoUncertainty => Method::OursNoU,
            OursVariant::NoFidelity => Method::OursNoF,
        }
    }
}

/// Assemble a record from an already-computed distribution and fidelity
/// scores. The chosen answer is always the sampling majority; when it is not
/// also the confidence argmax the record gets a mismatch flag.
pub fn ours_record_from_parts(
    item: &McqaItem,
    dist: &AnswerDistribution,
    scores: &FidelityScores,
    variant: OursVariant,
) -> Result<ConfidenceRecord, ConfidenceError> {
    let u = uncertainty(dist, item.option_count())?;
    let chosen = final_answer(dist).expect("nonempty distribution");
    let (used_uncertainty, per_answer) = match variant {
        OursVariant::Full => (u, combine(u, &scores.per_answer)?),
        OursVariant::NoUncertainty => (0.0, combine(0.0, &scores.per_answer)?),
        OursVariant::NoFidelity => {
            (u, BTreeMap::from([(chosen.clone(), 1.0 - u)]))
        }
    };
    let confidence_of_chosen = per_answer.get(&chosen).copied().unwrap_or(0.0);
    let mut flags = BTreeSet::new();
    if dist.reduced() {
        flags.insert(RecordFlag::ReducedK);
    }
    if scores.chains.iter().any(|(c, _)| c.truncated_by_failure) {
        flags.insert(RecordFlag::ChainTruncated);
    }
    let argmax = per_answer
        .iter()
        .max_by(|a, b| a.1.partial_cmp(b.1).unwrap().then_with(|| b.0.cmp(a.0)))
        .map(|(label, _)| label.clone());
    if argmax.as_deref() != Some(chosen.as_str()) {
        flags.insert(RecordFlag::MajorityVsConfidenceMismatch);
    }
    Ok(ConfidenceRecord {
        item_id: item.id.clone(),
        method: variant.method(),
        correct: chosen == item.gold_label,
        chosen: Some(chosen),
        confidence_of_chosen,
        per_answer_confidence: per_answer,
        uncertainty: Some(used_uncertainty),
        flags,
        chains: Some(
            scores
                .chains
                .iter()
                .map(|(c, w)| RecordedChain {
                    start: c.start.clone(),
                    elements: c.elements.clone(),
                    terminated_by_sentinel: c.terminated_by_sentinel,
                    truncated_by_failure: c.truncated_by_failure,
                    weight: *w,
                })
                .collect(),
        ),
    })
}

/// End-to-end combined method for one item: sample, elicit chains, combine.
/// An item whose draws or chains are all unusable yields a flagged record
/// rather than an error.
pub fn run_ours(
    item: &McqaItem,
    backend: &dyn LanguageModelBackend,
    k: u32,
    tau: f64,
    params: &DecodeParams,
) -> Result<ConfidenceRecord, ConfidenceError> {
    let dist = match sample_answers(item, backend, k, params) {
        Ok(dist) => dist,
        Err(SamplerError::Unusable { .. }) => {
            return Ok(ConfidenceRecord::unusable(&item.id, Method::Ours))
        }
        Err(e) => return Err(e.into()),
    };
    let scores = match fidelity_scores(item, &dist, backend, tau) {
        Ok(scores) => scores,
        Err(FidelityError::Unusable { .. }) => {
            return Ok(ConfidenceRecord::unusable(&item.id, Method::Ours))
        }
        Err(e) => return Err(e.into()),
    };
    ours_record_from_parts(item, &dist, &scores, OursVariant::Full)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backend::{MockBackend, MockModelSpec};
    use crate::dataset::McqaOption;

    fn dist(counts: &[(&str, u32)]) -> AnswerDistribution {
        AnswerDistribution::from_counts(
            "q",
            counts.iter().map(|(l, c)| (l.to_string(), *c)).collect(),
            counts.iter().map(|(_, c)| c).sum(),
        )
    }

    fn item() -> McqaItem {
        McqaItem::new(
            "q",
            "Pick.",
            ["A", "B", "C", "D"]
                .iter()
                .map(|l| McqaOption {
                    label: l.to_string(),
                    content: format!("content {l}"),
                })
                .collect(),
            "A",
            None,
        )
        .unwrap()
    }

    #[test]
    fn degenerate_distribution_has_zero_uncertainty() {
        assert_eq!(uncertainty(&dist(&[("A", 10)]), 4).unwrap(), 0.0);
    }

    #[test]
    fn uniform_distribution_has_unit_uncertainty() {
        let u = uncertainty(&dist(&[("A", 1), ("B", 1), ("C", 1), ("D", 1)]), 4).unwrap();
        assert!((u - 1.0).abs() < 1e-12);
    }

    #[test]
    fn two_way_split_on_four_options_is_half() {
        let u = uncertainty(&dist(&[("A", 5), ("B", 5)]), 4).unwrap();
        assert!((u - 0.5).abs() < 1e-12);
    }

    #[test]
    fn uncertainty_rejects_tiny_option_counts() {
        assert!(matches!(
            uncertainty(&dist(&[("A", 1)]), 1),
            Err(ConfidenceError::TooFewOptions(1))
        ));
    }

    #[test]
    fn combine_scales_fidelity_by_remaining_certainty() {
        let f = BTreeMap::from([("A".to_string(), 0.8), ("B".to_string(), 0.2)]);
        let c = combine(0.5, &f).unwrap();
        assert!((c["A"] - 0.4).abs() < 1e-12);
        assert!((c["B"] - 0.1).abs() < 1e-12);
        let c = combine(0.0, &BTreeMap::from([("A".to_string(), 1.0)])).unwrap();
        assert!((c["A"] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn combined_confidences_sum_to_one_minus_uncertainty() {
        let f = BTreeMap::from([
            ("A".to_string(), 0.6),
            ("B".to_string(), 0.3),
            ("C".to_string(), 0.1),
        ]);
        for u in [0.0, 0.25, 0.7, 1.0] {
            let total: f64 = combine(u, &f).unwrap().values().sum();
            assert!((total - (1.0 - u)).abs() < 1e-12, "u={u}");
        }
    }

    fn degenerate_backend() -> MockBackend {
        MockBackend::new(MockModelSpec {
            weights: std::collections::BTreeMap::from([(
                "q".to_string(),
                [("A", 1e9), ("B", 1e-9), ("C", 1e-9), ("D", 1e-9)]
                    .into_iter()
                    .map(|(l, w)| (l.to_string(), w))
                    .collect(),
            )]),
            sentinel_affinity: 10.0,
            sentinel_affinity_overrides: Default::default(),
            answer_noise: 0.0,
        })
        .unwrap()
    }

    #[test]
    fn certain_faithful_mock_yields_full_confidence() {
        let backend = degenerate_backend();
        let params = DecodeParams::sample(1.0, 1.0, Some(1));
        let record = run_ours(&item(), &backend, 10, 2.0, &params).unwrap();
        assert_eq!(record.chosen.as_deref(), Some("A"));
        assert_eq!(record.uncertainty, Some(0.0));
        assert!((record.confidence_of_chosen - 1.0).abs() < 1e-12);
        assert!(record.correct);
        assert!(record.flags.is_empty());
    }

    #[test]
    fn k_of_one_forces_zero_uncertainty() {
        let backend = degenerate_backend();
        let params = DecodeParams::sample(1.0, 1.0, Some(1));
        let record = run_ours(&item(), &backend, 1, 2.0, &params).unwrap();
        assert_eq!(record.uncertainty, Some(0.0));
        // confidence equals the chain fidelity alone
        assert!((record.confidence_of_chosen - 1.0).abs() < 1e-12);
    }

    #[test]
    fn variants_implement_the_ablation_identities() {
        let backend = MockBackend::new(MockModelSpec {
            weights: std::collections::BTreeMap::from([(
                "q".to_string(),
                [("A", 16.0), ("B", 8.0), ("C", 1.0), ("D", 1.0)]
                    .into_iter()
                    .map(|(l, w)| (l.to_string(), w))
                    .collect(),
            )]),
            sentinel_affinity: 0.6,
            sentinel_affinity_overrides: Default::default(),
            answer_noise: 0.0,
        })
        .unwrap();
        let d = dist(&[("A", 7), ("B", 3)]);
        let scores = crate::fidelity::fidelity_scores(&item(), &d, &backend, 2.0).unwrap();
        let full = ours_record_from_parts(&item(), &d, &scores, OursVariant::Full).unwrap();
        let no_u =
            ours_record_from_parts(&item(), &d, &scores, OursVariant::NoUncertainty).unwrap();
        let no_f = ours_record_from_parts(&item(), &d, &scores, OursVariant::NoFidelity).unwrap();

        let u = uncertainty(&d, 4).unwrap();
        // no_u: confidence equals raw fidelity
        for (label, f) in &scores.per_answer {
            assert!((no_u.per_answer_confidence[label] - f).abs() < 1e-12);
        }
        // no_f: single entry 1-U on the chosen answer
        assert_eq!(no_f.per_answer_confidence.len(), 1);
        assert!((no_f.confidence_of_chosen - (1.0 - u)).abs() < 1e-12);
        // full: per-answer sums to 1-U
        let total: f64 = full.per_answer_confidence.values().sum();
        assert!((total - (1.0 - u)).abs() < 1e-9);
        assert!(full.confidence_of_chosen <= 1.0 - uncertainty(&d, 4).unwrap() + 1e-12);
        assert_eq!(full.method, Method::Ours);
        assert_eq!(no_u.method, Method::OursNoU);
        assert_eq!(no_f.method, Method::OursNoF);
    }

    #[test]
    fn method_round_trips_through_strings() {
        for method in Method::ALL {
            assert_eq!(method.as_str().parse::<Method>().unwrap(), method);
        }
        assert!("nope".parse::<Method>().is_err());
    }
}
