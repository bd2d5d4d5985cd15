//! Exact t-SNE.
//!
//! High-dimensional affinities use per-point Gaussian bandwidths matched to a
//! target perplexity; the low-dimensional affinities use a Student-t kernel
//! with one degree of freedom, and the embedding minimizes KL(P || Q) by
//! momentum gradient descent. Everything is O(n^2) in time and memory.

mod affinity;
mod bandwidth;
mod objective;
mod optimize;

pub use affinity::{compute_p_joint, compute_p_joint_from_distances, compute_q, pairwise_sq_distances};
pub use bandwidth::{conditional_row, row_entropy_bits, sigma_search, Bandwidth, BandwidthError};
pub use objective::{kl_divergence, kl_gradient};
pub use optimize::{run_tsne, Embedding, OptimizerConfig};

use ndarray::Array2;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Tolerance on |log2 achieved − log2 target| used by the joint-affinity builder.
pub const PERPLEXITY_TOL: f64 = 1e-5;
/// Iteration budget for each bandwidth bisection.
pub const BISECTION_MAX_ITERS: usize = 100;
/// Floor applied to q inside the KL objective.
pub const PROB_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TsneError {
    #[error("non-finite value in row {row}")]
    NonFinite { row: usize },
    #[error("perplexity {perplexity} outside (1, {max}) for n = {n}")]
    PerplexityOutOfRange { perplexity: f64, n: usize, max: f64 },
    #[error("need at least {min} points, got {n}")]
    TooFewPoints { n: usize, min: usize },
    #[error("size mismatch: {left} vs {right}")]
    SizeMismatch { left: usize, right: usize },
    #[error("q[{i}][{j}] is zero where p is positive; KL is infinite")]
    InfiniteDivergence { i: usize, j: usize },
    #[error("optimizer diverged at iteration {iteration}")]
    Diverged { iteration: usize },
    #[error("invalid optimizer config: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum AffinityKind {
    HighDim,
    LowDim,
}

/// Symmetric joint distribution over ordered pairs `i != j` with zero diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct JointAffinity {
    pub probs: Array2<f64>,
    pub kind: AffinityKind,
    /// Target perplexity the affinities were built for (high-dimensional only).
    pub perplexity: Option<f64>,
}

impl JointAffinity {
    pub fn n(&self) -> usize {
        self.probs.nrows()
    }

    /// Sum over all ordered pairs. Rows are summed independently and then
    /// reduced in index order.
    pub fn total(&self) -> f64 {
        self.probs.rows().into_iter().map(|r| r.sum()).sum()
    }

    /// Largest deviation from the distribution invariants: `|total - 1|`,
    /// asymmetry, diagonal mass, and negative entries.
    pub fn invariant_violation(&self) -> f64 {
        let n = self.n();
        let mut worst = (self.total() - 1.0).abs();
        for i in 0..n {
            worst = worst.max(self.probs[[i, i]].abs());
            for j in 0..n {
                let v = self.probs[[i, j]];
                worst = worst.max((v - self.probs[[j, i]]).abs()).max(-v);
            }
        }
        worst
    }
}

/// Outcome of the bandwidth search for one point.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RowStatus {
    Matched,
    /// Target perplexity is unreachable for this point (e.g. duplicates).
    Saturated,
    NotConverged,
}

/// Column-stochastic conditionals: `probs[[i, j]] = p(i | j)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConditionalAffinity {
    pub probs: Array2<f64>,
    pub sigmas: Vec<f64>,
    pub achieved_perplexities: Vec<f64>,
    pub status: Vec<RowStatus>,
}

impl ConditionalAffinity {
    pub fn flagged(&self) -> impl Iterator<Item = (usize, RowStatus)> + '_ {
        self.status.iter().copied().enumerate().filter(|(_, s)| *s != RowStatus::Matched)
    }
}
