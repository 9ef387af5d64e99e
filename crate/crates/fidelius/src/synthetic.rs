//! Deterministic synthetic fixtures: a small bundled question set for
//! examples and smoke tests, and a larger designed suite whose mock is
//! deliberately overconfident under sampling while its sentinel acceptance
//! tracks true correctness.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::backend::MockModelSpec;
use crate::dataset::{McqaItem, McqaOption, QuestionSet};

const LABELS: [&str; 4] = ["A", "B", "C", "D"];

fn item(id: String, question: String, contents: [String; 4], gold_idx: usize) -> McqaItem {
    let options = LABELS
        .iter()
        .zip(contents)
        .map(|(label, content)| McqaOption {
            label: label.to_string(),
            content,
        })
        .collect();
    McqaItem::new(
        id,
        question,
        options,
        LABELS[gold_idx],
        Some(BTreeMap::from([(
            "source".to_string(),
            serde_json::json!("synthetic"),
        )])),
    )
    .expect("synthetic item is valid")
}

/// 24 four-option arithmetic items plus a mock whose accuracy and
/// peakedness vary across items. Fully deterministic.
pub fn synthetic_small() -> (QuestionSet, MockModelSpec) {
    let mut items = Vec::new();
    let mut weights = BTreeMap::new();
    let mut overrides = BTreeMap::new();
    for i in 0..24usize {
        let a = 2 + i as i64;
        let b = 3 + ((i as i64 * 5) % 11);
        let correct = a + b;
        let gold_idx = i % 4;
        let mut contents: [String; 4] = Default::default();
        let distractors = [correct - 2, correct + 1, correct + 3];
        let mut d = 0;
        for (slot, content) in contents.iter_mut().enumerate() {
            if slot == gold_idx {
                *content = correct.to_string();
            } else {
                *content = distractors[d].to_string();
                d += 1;
            }
        }
        let id = format!("syn-{i:03}");
        items.push(item(
            id.clone(),
            format!("What is {a} + {b}?"),
            contents,
            gold_idx,
        ));

        // five behavior patterns: confident/moderate correct (sentinel
        // accepted at once), stubborn wrong (chain exhausts), hesitant
        // correct, near-miss wrong
        let (top_is_gold, faithful, pattern): (bool, bool, [f64; 4]) = match i % 5 {
            0 => (true, true, [40.0, 2.0, 1.5, 1.0]),
            1 => (true, true, [10.0, 5.0, 2.0, 1.0]),
            2 => (false, false, [8.0, 6.0, 5.0, 4.0]),
            3 => (true, false, [5.0, 3.0, 2.0, 1.0]),
            _ => (false, false, [6.0, 5.0, 2.5, 2.0]),
        };
        let top_idx = if top_is_gold { gold_idx } else { (gold_idx + 1) % 4 };
        let mut per_label: BTreeMap<String, f64> = BTreeMap::new();
        per_label.insert(LABELS[top_idx].to_string(), pattern[0]);
        // gold takes the second weight when it is not on top
        let mut rest = pattern[1..].iter();
        if !top_is_gold {
            per_label.insert(LABELS[gold_idx].to_string(), *rest.next().expect("weight"));
        }
        for label in LABELS {
            if !per_label.contains_key(label) {
                per_label.insert(label.to_string(), *rest.next().expect("weight"));
            }
        }
        weights.insert(id.clone(), per_label);
        if faithful {
            overrides.insert(id, 1.4);
        }
    }
    (
        QuestionSet {
            name: "synthetic_small".into(),
            items,
        },
        MockModelSpec {
            weights,
            sentinel_affinity: 0.6,
            sentinel_affinity_overrides: overrides,
            answer_noise: 0.0,
        },
    )
}

/// Designed calibration suite: `n` four-option items whose greedy
/// correctness is stratified over {0.3, 0.5, 0.7, 0.9} by item index.
///
/// The sampling distribution is sharply peaked on the greedy answer, so the
/// frequency-based confidence is overconfident everywhere. Sentinel
/// acceptance tracks correctness instead: items answered correctly accept
/// the sentinel immediately (single-element chains), wrong answers survive
/// a full walk through the alternatives (long chains, low fidelity).
pub fn designed_mock_suite(n: usize, seed: u64) -> (QuestionSet, MockModelSpec) {
    const STRATA: [f64; 4] = [0.3, 0.5, 0.7, 0.9];
    const TOP_WEIGHT: f64 = 2000.0;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut items = Vec::new();
    let mut weights = BTreeMap::new();
    let mut overrides = BTreeMap::new();
    for i in 0..n {
        let p_correct = STRATA[i % STRATA.len()];
        let gold_idx = rng.gen_range(0..4);
        let correct = rng.gen::<f64>() < p_correct;
        let top_idx = if correct {
            gold_idx
        } else {
            let mut idx = rng.gen_range(0..3);
            if idx >= gold_idx {
                idx += 1;
            }
            idx
        };
        let id = format!("designed-{i:04}");
        let contents: [String; 4] = std::array::from_fn(|slot| {
            format!("candidate answer {}{i}", LABELS[slot].to_lowercase())
        });
        items.push(item(
            id.clone(),
            format!("Synthetic question {i}: pick the designated option."),
            contents,
            gold_idx,
        ));

        let mut per_label: BTreeMap<String, f64> = BTreeMap::new();
        per_label.insert(LABELS[top_idx].to_string(), TOP_WEIGHT);
        // wrong answers keep every alternative above the sentinel threshold
        // (0.4 x 6 = 2.4) so the chain exhausts all options; correct answers
        // accept the sentinel at once via the per-item affinity override
        let rest: [f64; 3] = if correct { [5.0, 2.0, 1.0] } else { [6.0, 4.0, 3.0] };
        let mut rest_iter = rest.iter();
        for label in LABELS {
            if !per_label.contains_key(label) {
                per_label.insert(label.to_string(), *rest_iter.next().expect("weight"));
            }
        }
        weights.insert(id.clone(), per_label);
        if correct {
            overrides.insert(id, 1.5);
        }
    }
    (
        QuestionSet {
            name: "designed_suite".into(),
            items,
        },
        MockModelSpec {
            weights,
            sentinel_affinity: 0.4,
            sentinel_affinity_overrides: overrides,
            answer_noise: 0.0,
        },
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn synthetic_small_is_deterministic_and_valid() {
        let (set_a, mock_a) = synthetic_small();
        let (set_b, mock_b) = synthetic_small();
        assert_eq!(set_a, set_b);
        assert_eq!(mock_a, mock_b);
        assert!(set_a.len() >= 20);
        for item in &set_a.items {
            assert_eq!(item.option_count(), 4);
            assert!(mock_a.weights.contains_key(&item.id));
            assert_eq!(mock_a.weights[&item.id].len(), 4);
        }
        mock_a.validate().unwrap();
    }

    #[test]
    fn synthetic_small_has_right_and_wrong_items() {
        let (set, mock) = synthetic_small();
        let mut correct = 0;
        for item in &set.items {
            let weights = &mock.weights[&item.id];
            let top = weights
                .iter()
                .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
                .unwrap()
                .0;
            if *top == item.gold_label {
                correct += 1;
            }
        }
        assert!(correct > 0 && correct < set.len());
    }

    #[test]
    fn designed_suite_is_seed_deterministic() {
        let (set_a, mock_a) = designed_mock_suite(40, 7);
        let (set_b, mock_b) = designed_mock_suite(40, 7);
        assert_eq!(set_a, set_b);
        assert_eq!(mock_a, mock_b);
        let (set_c, _) = designed_mock_suite(40, 8);
        assert_ne!(set_a, set_c);
    }

    #[test]
    fn designed_suite_strata_have_the_right_accuracy_shape() {
        let (set, mock) = designed_mock_suite(2000, 7);
        let mut per_stratum = [(0u32, 0u32); 4];
        for (i, item) in set.items.iter().enumerate() {
            let weights = &mock.weights[&item.id];
            let top = weights
                .iter()
                .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
                .unwrap()
                .0;
            let bucket = &mut per_stratum[i % 4];
            bucket.0 += 1;
            if *top == item.gold_label {
                bucket.1 += 1;
            }
        }
        for (idx, expected) in [0.3, 0.5, 0.7, 0.9].iter().enumerate() {
            let (total, correct) = per_stratum[idx];
            let rate = f64::from(correct) / f64::from(total);
            assert!(
                (rate - expected).abs() < 0.06,
                "stratum {idx}: rate {rate} vs {expected}"
            );
        }
    }

    #[test]
    fn designed_suite_links_overrides_to_correct_items() {
        let (set, mock) = designed_mock_suite(200, 7);
        for item in &set.items {
            let weights = &mock.weights[&item.id];
            let top = weights
                .iter()
                .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
                .unwrap()
                .0;
            let is_correct = *top == item.gold_label;
            assert_eq!(
                mock.sentinel_affinity_overrides.contains_key(&item.id),
                is_correct
            );
        }
    }
}
