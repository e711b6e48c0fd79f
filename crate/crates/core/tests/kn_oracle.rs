mod common;

use common::fixtures::{encode, hand_corpora, sentences};
use common::kn_oracle::Oracle;
use domain_sieve::ngram::KnModel;
use proptest::prelude::*;

fn compare(lines: &[String], order: usize) -> f64 {
    let (vocab, corpus) = encode(lines);
    let model = KnModel::train(&corpus, vocab.clone(), order).unwrap();
    let oracle = Oracle::new(&sentences(&corpus), order, vocab.size());
    let mut worst = 0.0f64;
    for o in 1..=order {
        for (gram, entry) in model.table(o).iter() {
            if let Some(lp) = entry.log_prob {
                let (h, w) = gram.split_at(o - 1);
                let expected = oracle.prob(w[0], h).ln();
                worst = worst.max((lp - expected).abs());
            }
        }
    }
    for (o, d) in model.discounts().iter().enumerate() {
        let e = oracle.discounts[o];
        worst = worst.max((d.d1 - e[0]).abs()).max((d.d2 - e[1]).abs()).max((d.d3plus - e[2]).abs());
    }
    worst
}

#[test]
fn stored_probabilities_match_oracle() {
    for (name, lines) in hand_corpora() {
        for order in 1..=3 {
            let err = compare(&lines, order);
            assert!(err <= 1e-10, "{name} order {order}: max error {err:e}");
        }
    }
}

#[test]
fn queried_probabilities_match_oracle() {
    let (_, lines) = &hand_corpora()[1];
    let (vocab, corpus) = encode(lines);
    let model = KnModel::train(&corpus, vocab.clone(), 3).unwrap();
    let oracle = Oracle::new(&sentences(&corpus), 3, vocab.size());
    let ids: Vec<u32> = (1..vocab.size() as u32).filter(|&i| i != 2).collect();
    for &a in &ids {
        for &b in &ids {
            for &w in &ids {
                let got = model.log_prob(w, &[a, b]);
                let want = oracle.model_prob(w, &[a, b]).ln();
                assert!((got - want).abs() < 1e-10, "P({w}|{a} {b}): {got} vs {want}");
            }
        }
    }
}

#[test]
fn sparse_orders_fall_back_to_fixed_discount() {
    let lines = common::fixtures::lines(&["a b c d e"]);
    let (vocab, corpus) = encode(&lines);
    let model = KnModel::train(&corpus, vocab, 3).unwrap();
    assert!(!model.warnings().is_empty());
    assert!(model.discounts().iter().all(|d| d.d1 == 0.75));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn random_corpora_match_oracle(
        raw in prop::collection::vec(prop::collection::vec(0usize..6, 1..7), 1..20),
        order in 1usize..=3,
    ) {
        let words = ["p", "q", "r", "s", "t", "u"];
        let lines: Vec<String> = raw
            .iter()
            .map(|s| s.iter().map(|&i| words[i]).collect::<Vec<_>>().join(" "))
            .collect();
        let err = compare(&lines, order);
        prop_assert!(err <= 1e-10, "max error {}", err);
    }
}
