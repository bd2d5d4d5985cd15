//! Pair sampling without replacement over all unordered pairs of grid
//! indices, reshuffled once every pair has been shown.
//!
//! The draw sequence is a pure function of `(seed, drawn)`, so persisting the
//! draw count is enough to resume after a restart.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SamplerState {
    pub seed: u64,
    pub drawn: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Pair {
    pub left: usize,
    pub right: usize,
}

/// One pass over every unordered pair in shuffled order, each with a random
/// side assignment.
fn epoch(m: usize, seed: u64, index: u64) -> Vec<Pair> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    let mut pairs: Vec<(usize, usize)> = (0..m).flat_map(|a| (a + 1..m).map(move |b| (a, b))).collect();
    pairs.shuffle(&mut rng);
    pairs
        .into_iter()
        .map(|(a, b)| if rng.random::<bool>() { Pair { left: a, right: b } } else { Pair { left: b, right: a } })
        .collect()
}

impl SamplerState {
    pub fn new(seed: u64) -> Self {
        Self { seed, drawn: 0 }
    }

    /// Returns the next pair for a grid of `m >= 2` points and advances.
    pub fn next_pair(&mut self, m: usize) -> Pair {
        assert!(m >= 2, "need two grid points to form a pair");
        let per_epoch = (m * (m - 1) / 2) as u64;
        let pair = epoch(m, self.seed, self.drawn / per_epoch)[(self.drawn % per_epoch) as usize];
        self.drawn += 1;
        pair
    }
}
