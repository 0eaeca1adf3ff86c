//! Shared inputs for the criterion benchmarks.

use schemaprobe::synth::{synthetic_corpus, SyntheticCase};

pub const DIM: usize = 64;
pub const SEED: u64 = 7;

/// The largest case of a small synthetic corpus, by question-schema pairs.
pub fn largest_case() -> SyntheticCase {
    synthetic_corpus(32, DIM, SEED)
        .expect("synthetic corpus")
        .into_iter()
        .max_by_key(|c| c.example.n_question() * c.example.n_schema())
        .expect("non-empty corpus")
}
