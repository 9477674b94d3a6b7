//! Seeded inputs shared by the benchmarks.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use taas_core::corpus::{CLS, NUM_SPECIAL};
use taas_core::numeric::Matrix;
use taas_core::seq2seq::{ModelConfig, TaasModel};

pub fn random_matrix(rows: usize, cols: usize, seed: u64) -> Matrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Matrix::from_vec(rows, cols, (0..rows * cols).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
}

/// A default-width model over a 2,000-token vocabulary.
pub fn model() -> TaasModel {
    TaasModel::new(ModelConfig {
        vocab_size: 2_000,
        topic_vocab_size: 500,
        ..Default::default()
    })
    .unwrap()
}

/// `CLS` followed by `len - 1` random regular tokens.
pub fn input_ids(len: usize, vocab: usize, seed: u64) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    std::iter::once(CLS)
        .chain((1..len).map(|_| rng.random_range(NUM_SPECIAL..vocab)))
        .collect()
}

/// Space-separated words drawn from a small alphabet, so n-grams repeat.
pub fn text(words: usize, seed: u64) -> String {
    const WORDS: [&str; 12] = [
        "the", "storm", "hit", "towns", "on", "monday", "crews", "worked", "night", "roads", "were", "closed",
    ];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..words)
        .map(|_| WORDS[rng.random_range(0..WORDS.len())])
        .collect::<Vec<_>>()
        .join(" ")
}
