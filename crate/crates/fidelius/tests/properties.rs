//! Property tests for the algebraic invariants.

use std::collections::BTreeMap;

use proptest::prelude::*;

use fidelius::confidence::{combine, uncertainty, Method};
use fidelius::fidelity::{chain_fidelity, FidelityChain};
use fidelius::metrics;
use fidelius::sampler::AnswerDistribution;
use fidelius::ConfidenceRecord;

fn chain_of(labels: Vec<String>) -> FidelityChain {
    FidelityChain {
        item_id: "q".into(),
        start: labels[0].clone(),
        elements: labels,
        terminated_by_sentinel: true,
        truncated_by_failure: false,
    }
}

fn arb_chain() -> impl Strategy<Value = FidelityChain> {
    // distinct single-letter labels, length 1..=8
    (1usize..=8).prop_flat_map(|len| {
        Just(
            ('A'..='H')
                .take(len)
                .map(|c| c.to_string())
                .collect::<Vec<_>>(),
        )
        .prop_shuffle()
        .prop_map(chain_of)
    })
}

proptest! {
    #[test]
    fn chain_fidelity_sums_to_one_and_decays(chain in arb_chain(), tau in 1.0001f64..8.0) {
        let fidelity = chain_fidelity(&chain, tau).unwrap();
        let total: f64 = fidelity.values().sum();
        prop_assert!((total - 1.0).abs() < 1e-12);
        let along: Vec<f64> = chain.elements.iter().map(|e| fidelity[e]).collect();
        for pair in along.windows(2) {
            prop_assert!(pair[0] > pair[1]);
        }
    }

    #[test]
    fn larger_tau_sharpens_the_head_and_flattens_the_tail(
        chain in arb_chain().prop_filter("length >= 2", |c| c.elements.len() >= 2),
        tau_low in 1.1f64..3.0,
        bump in 0.1f64..4.0,
    ) {
        let tau_high = tau_low + bump;
        let low = chain_fidelity(&chain, tau_low).unwrap();
        let high = chain_fidelity(&chain, tau_high).unwrap();
        let first = &chain.elements[0];
        let last = chain.elements.last().unwrap();
        prop_assert!(high[first] > low[first]);
        prop_assert!(high[last] < low[last]);
    }

    #[test]
    fn uncertainty_is_label_permutation_invariant(
        counts in proptest::collection::vec(0u32..40, 4),
        rotate in 0usize..4,
    ) {
        prop_assume!(counts.iter().sum::<u32>() > 0);
        let labels = ["A", "B", "C", "D"];
        let direct: BTreeMap<String, u32> = labels
            .iter()
            .zip(&counts)
            .map(|(l, c)| (l.to_string(), *c))
            .collect();
        let rotated: BTreeMap<String, u32> = labels
            .iter()
            .cycle()
            .skip(rotate)
            .zip(&counts)
            .map(|(l, c)| (l.to_string(), *c))
            .collect();
        let k = counts.iter().sum::<u32>();
        let u1 = uncertainty(&AnswerDistribution::from_counts("q", direct, k), 4).unwrap();
        let u2 = uncertainty(&AnswerDistribution::from_counts("q", rotated, k), 4).unwrap();
        prop_assert!((u1 - u2).abs() < 1e-12);
        prop_assert!((0.0..=1.0).contains(&u1));
    }

    #[test]
    fn combined_confidence_mass_is_one_minus_uncertainty(
        u in 0.0f64..=1.0,
        raw in proptest::collection::vec(0.01f64..1.0, 1..6),
    ) {
        let total: f64 = raw.iter().sum();
        let fidelity: BTreeMap<String, f64> = raw
            .iter()
            .enumerate()
            .map(|(i, w)| (format!("L{i}"), w / total))
            .collect();
        let confidence = combine(u, &fidelity).unwrap();
        let mass: f64 = confidence.values().sum();
        prop_assert!((mass - (1.0 - u)).abs() < 1e-9);
        for (label, value) in &confidence {
            prop_assert!(*value <= 1.0 - u + 1e-12, "{label} = {value}");
        }
    }

    #[test]
    fn diagram_partitions_every_record_exactly_once(
        confidences in proptest::collection::vec(0.0f64..=1.0, 1..200),
        m_bins in 2usize..25,
    ) {
        let records: Vec<ConfidenceRecord> = confidences
            .iter()
            .map(|c| ConfidenceRecord {
                item_id: "q".into(),
                method: Method::Sampled,
                chosen: Some("A".into()),
                confidence_of_chosen: *c,
                per_answer_confidence: BTreeMap::new(),
                correct: *c > 0.5,
                uncertainty: None,
                flags: Default::default(),
                chains: None,
            })
            .collect();
        let refs: Vec<&ConfidenceRecord> = records.iter().collect();
        let diagram = metrics::bin(&refs, m_bins).unwrap();
        prop_assert_eq!(diagram.bins.len(), m_bins);
        prop_assert_eq!(diagram.bins.iter().map(|b| b.count).sum::<usize>(), records.len());
        for b in diagram.bins.iter().filter(|b| b.count > 0) {
            prop_assert!(b.mean_conf >= b.lo - 1e-12 && b.mean_conf <= b.hi + 1e-12);
            prop_assert!((0.0..=1.0).contains(&b.accuracy));
        }
        // all metrics stay in range
        let e = metrics::ece(&diagram);
        let i = metrics::ipr(&diagram);
        let c = metrics::ce(&diagram);
        let brier = metrics::brier(&refs).unwrap();
        for v in [e, i, c, brier] {
            prop_assert!((0.0..=1.0).contains(&v), "{v}");
        }
    }

    #[test]
    fn ece_is_invariant_under_record_order(
        pairs in proptest::collection::vec((0.0f64..=1.0, any::<bool>()), 1..150),
        seed in any::<u64>(),
    ) {
        let records: Vec<ConfidenceRecord> = pairs
            .iter()
            .map(|(c, ok)| ConfidenceRecord {
                item_id: "q".into(),
                method: Method::Sampled,
                chosen: Some("A".into()),
                confidence_of_chosen: *c,
                per_answer_confidence: BTreeMap::new(),
                correct: *ok,
                uncertainty: None,
                flags: Default::default(),
                chains: None,
            })
            .collect();
        let mut shuffled = records.clone();
        // cheap deterministic shuffle
        let mut state = seed | 1;
        for i in (1..shuffled.len()).rev() {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            shuffled.swap(i, (state >> 33) as usize % (i + 1));
        }
        let refs_a: Vec<&ConfidenceRecord> = records.iter().collect();
        let refs_b: Vec<&ConfidenceRecord> = shuffled.iter().collect();
        let ece_a = metrics::ece(&metrics::bin(&refs_a, 10).unwrap());
        let ece_b = metrics::ece(&metrics::bin(&refs_b, 10).unwrap());
        prop_assert!((ece_a - ece_b).abs() < 1e-12);
    }

    #[test]
    fn option_edits_change_counts_as_promised(
        option_count in 2usize..6,
        replace_idx in 0usize..6,
        remove_idx in 0usize..6,
    ) {
        let options: Vec<fidelius::McqaOption> = (0..option_count)
            .map(|o| fidelius::McqaOption {
                label: char::from(b'A' + o as u8).to_string(),
                content: format!("content {o}"),
            })
            .collect();
        let item = fidelius::McqaItem::new("q", "Q?", options, "A", None).unwrap();
        let replace_label = char::from(b'A' + (replace_idx % option_count) as u8).to_string();
        let replaced = item.replace_option_content(&replace_label, "swapped").unwrap();
        prop_assert_eq!(replaced.option_count(), item.option_count());
        prop_assert_eq!(replaced.labels(), item.labels());
        let remove_label = char::from(b'A' + (remove_idx % option_count) as u8).to_string();
        let removed = item.remove_option(&remove_label).unwrap();
        prop_assert_eq!(removed.option_count(), item.option_count() - 1);
        prop_assert!(!removed.labels().contains(&remove_label));
    }

    #[test]
    fn question_sets_round_trip_through_jsonl(
        item_count in 1usize..12,
        option_count in 2usize..6,
        salt in any::<u32>(),
    ) {
        let items: Vec<fidelius::McqaItem> = (0..item_count)
            .map(|i| {
                let options: Vec<fidelius::McqaOption> = (0..option_count)
                    .map(|o| fidelius::McqaOption {
                        label: char::from(b'A' + o as u8).to_string(),
                        content: format!("content {o} of {i} ({salt})"),
                    })
                    .collect();
                let gold = char::from(b'A' + ((i + salt as usize) % option_count) as u8);
                fidelius::McqaItem::new(
                    format!("item-{i}"),
                    format!("Question {i}?"),
                    options,
                    gold.to_string(),
                    None,
                )
                .unwrap()
            })
            .collect();
        let set = fidelius::QuestionSet { name: "prop".into(), items };
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("prop.jsonl");
        fidelius::save_question_set(&set, &path).unwrap();
        let loaded = fidelius::load_question_set(&path).unwrap();
        prop_assert_eq!(loaded.items, set.items);
    }
}
