//! n-gram language models: counting, interpolated modified Kneser-Ney
//! estimation, sentence cross-entropy, ARPA and binary serialization.

pub mod arpa;
pub mod cache;
mod counts;
mod kn;

pub use arpa::{export_arpa, import_arpa, parse_arpa, to_arpa_string};
pub use counts::{count_ngrams, GramTable, NGramCounts};
pub use kn::{estimate_kn, Discounts, Entry, KnModel, FALLBACK_DISCOUNT};
