//! Exports a model to ARPA, reads it back and compares sentence scores.
//!
//! ```text
//! cargo run --release --example arpa_round_trip -- [out.arpa]
//! ```

use std::sync::Arc;

use domain_sieve::corpus::{build_vocabulary, encode_corpus, EncodeOptions};
use domain_sieve::eval::{generate_synthetic, SyntheticSpec};
use domain_sieve::ngram::{export_arpa, import_arpa, KnModel};

fn main() -> domain_sieve::Result<()> {
    let path = std::env::args()
        .nth(1)
        .map(std::path::PathBuf::from)
        .unwrap_or_else(|| std::env::temp_dir().join("round_trip.arpa"));
    let data = generate_synthetic(&SyntheticSpec::default())?;
    let vocab = Arc::new(build_vocabulary(&data.in_domain, 1, usize::MAX, false)?);
    let corpus = encode_corpus("train", &data.in_domain, &vocab, EncodeOptions::default());
    let model = KnModel::train(&corpus, vocab, 3)?;
    export_arpa(&model, &path)?;
    let back = import_arpa(&path)?;
    let worst = corpus
        .sentences()
        .iter()
        .map(|s| (model.sentence_cross_entropy(s) - back.sentence_cross_entropy(s)).abs())
        .fold(0.0, f64::max);
    let grams: Vec<usize> = (1..=3).map(|o| model.table(o).len()).collect();
    println!("wrote {}: n-grams per order {grams:?}", path.display());
    println!("largest per-sentence cross-entropy change after import: {worst:.3e} nats");
    Ok(())
}
