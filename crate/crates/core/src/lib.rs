//! # domain-sieve
//!
//! Tools for picking the sentences of a large, general-purpose pool that look
//! most like a small in-domain corpus. Two families of selectors are provided:
//!
//! - [`xent`]: cross-entropy difference between an in-domain and a pool
//!   n-gram language model ([`ngram`], interpolated modified Kneser-Ney).
//! - [`semisup`]: a self-training loop around a neural sentence classifier
//!   ([`classifier`], CNN or bidirectional LSTM encoder built on the small
//!   autodiff engine in [`nn`]).
//!
//! [`eval`] generates two-domain synthetic corpora with planted in-domain
//! sentences and compares selectors by precision@k and by the held-out
//! perplexity of a language model trained on each selection.
//!
//! Every capability has a runnable program under `examples/`; the
//! `domain-sieve` binary exposes the same stages as subcommands.

pub mod classifier;
pub mod cli;
pub mod corpus;
pub mod error;
pub mod eval;
pub mod ngram;
pub mod nn;
pub mod rng;
pub mod semisup;
pub mod xent;

pub use error::{Error, Result};
