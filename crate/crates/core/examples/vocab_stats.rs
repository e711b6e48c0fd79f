//! Builds a vocabulary over generated text and prints corpus statistics.
//!
//! ```text
//! cargo run --release --example vocab_stats -- [min-count]
//! ```

use domain_sieve::corpus::{build_vocabulary, corpus_stats, encode_corpus, EncodeOptions, UNK};
use domain_sieve::eval::{generate_synthetic, SyntheticSpec};

fn main() -> domain_sieve::Result<()> {
    let min_count: u64 = std::env::args().nth(1).map_or(1, |s| s.parse().expect("min count"));
    let data = generate_synthetic(&SyntheticSpec::default())?;
    let vocab = build_vocabulary(&data.in_domain, min_count, usize::MAX, false)?;
    for (name, lines) in [("in-domain", &data.in_domain), ("pool", &data.pool)] {
        let corpus = encode_corpus(name, lines, &vocab, EncodeOptions::default());
        let (s, w, v) = corpus_stats(&corpus);
        let unk = corpus.sentences().iter().flat_map(|s| &s.ids).filter(|&&id| id == UNK).count();
        println!("{name:<10} |S|={s:<6} |W|={w:<7} |V|={v:<5} unk rate {:.3}", unk as f64 / w as f64);
    }
    println!("vocabulary size {} (min count {min_count})", vocab.size());
    Ok(())
}
