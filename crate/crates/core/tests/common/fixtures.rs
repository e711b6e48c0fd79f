//! Small corpora and helpers shared by the integration tests.

use std::sync::Arc;

use domain_sieve::corpus::{build_vocabulary, encode_corpus, Corpus, EncodeOptions, Vocabulary};
use domain_sieve::rng::seeded;
use rand::Rng;

pub fn encode(lines: &[String]) -> (Arc<Vocabulary>, Corpus) {
    let vocab = build_vocabulary(lines, 1, usize::MAX, false).unwrap();
    let corpus = encode_corpus("test", lines, &vocab, EncodeOptions::default());
    (Arc::new(vocab), corpus)
}

pub fn lines(text: &[&str]) -> Vec<String> {
    text.iter().map(|s| s.to_string()).collect()
}

/// Three hand-built corpora: a repetitive one, one with heavy reuse of a
/// few bigrams, and a seeded random one over a tiny vocabulary.
pub fn hand_corpora() -> Vec<(&'static str, Vec<String>)> {
    let tiny = lines(&["a b", "a b", "b a", "a", "b b b", "c a b"]);
    let story = lines(&[
        "the cat sat on the mat",
        "the dog sat on the log",
        "a cat and a dog",
        "the cat saw the dog",
        "on the mat the cat sat",
        "the log was on the mat",
        "a dog sat",
        "the cat",
        "dog",
        "the mat was red",
        "the cat was red and the dog was not",
        "a cat sat on a dog",
    ]);
    let mut rng = seeded(77);
    let words = ["x", "y", "z", "u", "v", "w", "q"];
    let random: Vec<String> = (0..50)
        .map(|_| {
            let n = rng.random_range(1..=8);
            (0..n)
                .map(|_| {
                    // Skewed choice so counts of 1..4 all occur.
                    let r: f64 = rng.random();
                    words[((r * r) * words.len() as f64) as usize]
                })
                .collect::<Vec<_>>()
                .join(" ")
        })
        .collect();
    vec![("tiny", tiny), ("story", story), ("random", random)]
}

pub fn sentences(corpus: &Corpus) -> Vec<Vec<u32>> {
    corpus.sentences().iter().map(|s| s.ids.clone()).collect()
}
