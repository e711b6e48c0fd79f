//! Self-training selection with a CNN classifier, printing how many planted
//! sentences each iteration moves to the positive side.
//!
//! ```text
//! cargo run --release --example semisup_select -- [r]
//! ```

use std::sync::Arc;

use domain_sieve::eval::{generate_synthetic, EvalConfig, SyntheticSpec};
use domain_sieve::semisup::{run, ClassifierScorer, Label};
use domain_sieve::xent::shared_vocabulary;

fn main() -> domain_sieve::Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let r: usize = std::env::args().nth(1).map_or(500, |s| s.parse().expect("r"));
    let spec = SyntheticSpec::default();
    let data = generate_synthetic(&spec)?;
    let vocab = Arc::new(shared_vocabulary(&data.in_domain, &data.pool, 1, usize::MAX, false)?);
    let corpora = data.encode(&vocab);
    let (model_config, train_config) = EvalConfig::desk(&spec).cnn;
    let mut scorer = ClassifierScorer::new(model_config, train_config, vocab.size());
    let state = run(&corpora.in_domain, &corpora.pool, r, 1, &mut scorer)?;
    println!("iteration\tpositives\tplanted among them");
    for i in 0..state.iteration() {
        let picked: Vec<usize> = state
            .emitted()
            .iter()
            .filter(|e| e.iteration == i && e.label == Label::Positive)
            .map(|e| e.source_index)
            .collect();
        let hits = picked.iter().filter(|p| data.planted.contains(p)).count();
        println!("{i}\t{}\t{hits}", picked.len());
    }
    let planted_in_n0 = state.initial_negatives().iter().filter(|i| data.planted.contains(i)).count();
    println!("planted sentences in the initial negatives: {planted_in_n0}");
    Ok(())
}
