//! Trains Kneser-Ney models of increasing order and prints their discounts
//! and held-out perplexity.
//!
//! ```text
//! cargo run --release --example kn_lm
//! ```

use std::sync::Arc;

use domain_sieve::corpus::{build_vocabulary, encode_corpus, EncodeOptions};
use domain_sieve::eval::{generate_synthetic, SyntheticSpec};
use domain_sieve::ngram::KnModel;

fn main() -> domain_sieve::Result<()> {
    let data = generate_synthetic(&SyntheticSpec::default())?;
    let vocab = Arc::new(build_vocabulary(data.in_domain.iter().chain(&data.heldout), 1, usize::MAX, false)?);
    let train = encode_corpus("train", &data.in_domain, &vocab, EncodeOptions::default());
    let heldout = encode_corpus("heldout", &data.heldout, &vocab, EncodeOptions::default());
    for order in 1..=4 {
        let model = KnModel::train(&train, vocab.clone(), order)?;
        let d: Vec<String> = model
            .discounts()
            .iter()
            .map(|d| format!("({:.3} {:.3} {:.3})", d.d1, d.d2, d.d3plus))
            .collect();
        println!("order {order}: perplexity {:8.2}  discounts {}", model.corpus_perplexity(&heldout), d.join(" "));
        for w in model.warnings() {
            println!("  warning: {w}");
        }
    }
    Ok(())
}
