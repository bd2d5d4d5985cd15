//! Perplexity sweeps scored by `S(Perp) = 2 KL + ln(n) Perp / n`.
//!
//! KL alone keeps falling as perplexity grows, so it cannot rank
//! perplexities by itself; the penalty term grows linearly in perplexity
//! and the minimizer of `S` is the selected setting.

use ndarray::Array2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::LN_2;
use thiserror::Error;

use crate::tsne::{compute_p_joint_from_distances, pairwise_sq_distances, run_tsne, Embedding, OptimizerConfig, TsneError};
use crate::Dataset;

/// Smallest dataset for which `default_grid` yields a grid above 8.
pub const MIN_GRID_N: usize = 18;
const GRID_START: f64 = 8.0;
// Seeds of restart r at grid slot i: base + i + r * RESTART_SEED_STRIDE.
const RESTART_SEED_STRIDE: u64 = 1 << 32;
const DEDUP_REL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SearchError {
    #[error("KL must be finite and non-negative, got {0}")]
    InvalidKl(f64),
    #[error("n must be at least {min}, got {n}")]
    TooSmall { n: usize, min: usize },
    #[error("perplexity {perplexity} outside the admissible range for n = {n}")]
    PerplexityOutOfRange { perplexity: f64, n: usize },
    #[error("grid is empty")]
    EmptyGrid,
    #[error("grid must be strictly increasing (index {0})")]
    UnsortedGrid(usize),
    #[error("no grid point produced an embedding")]
    NoSuccessfulRuns,
    #[error("restarts must be at least 1")]
    NoRestarts,
    #[error(transparent)]
    Tsne(#[from] TsneError),
}

fn score_formula(kl_nats: f64, n: usize, perplexity: f64) -> f64 {
    let n = n as f64;
    2.0 * kl_nats + n.ln() * perplexity / n
}

/// Penalized-KL score. `perplexity = 0` is accepted as the limit of the
/// scalar formula; anything at or above `n` is rejected.
pub fn pbic_score(kl_nats: f64, n: usize, perplexity: f64) -> Result<f64, SearchError> {
    if !(kl_nats >= 0.0 && kl_nats.is_finite()) {
        return Err(SearchError::InvalidKl(kl_nats));
    }
    if n < 2 {
        return Err(SearchError::TooSmall { n, min: 2 });
    }
    if !(perplexity >= 0.0 && perplexity < n as f64) {
        return Err(SearchError::PerplexityOutOfRange { perplexity, n });
    }
    Ok(score_formula(kl_nats, n, perplexity))
}

/// Doubling grid `8, 16, 32, …` below `n / 2`, closed with `n / 2` itself.
pub fn default_grid(n: usize) -> Result<Vec<f64>, SearchError> {
    if n < MIN_GRID_N {
        return Err(SearchError::TooSmall { n, min: MIN_GRID_N });
    }
    let half = n as f64 / 2.0;
    let mut grid = Vec::new();
    let mut p = GRID_START;
    while p < half {
        grid.push(p);
        p *= 2.0;
    }
    grid.push(half);
    Ok(grid)
}

/// Checks that `grid` is non-empty, strictly increasing, and inside `(1, n − 1)`.
pub fn validate_grid(grid: &[f64], n: usize) -> Result<(), SearchError> {
    if grid.is_empty() {
        return Err(SearchError::EmptyGrid);
    }
    if let Some(i) = grid.windows(2).position(|w| !(w[1] > w[0])) {
        return Err(SearchError::UnsortedGrid(i + 1));
    }
    if let Some(&perplexity) = grid.iter().find(|&&p| !(p > 1.0 && p < n as f64 - 1.0)) {
        return Err(SearchError::PerplexityOutOfRange { perplexity, n });
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    #[serde(flatten)]
    pub optimizer: OptimizerConfig,
    /// Independent t-SNE runs per grid point; the lowest final KL is kept.
    pub restarts: usize,
    pub base_seed: u64,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self { optimizer: OptimizerConfig::default(), restarts: 1, base_seed: 0 }
    }
}

/// KL and score per grid perplexity. Failed runs keep `None` and the reason
/// in `failures`; they never win the argmin.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerplexitySweep {
    pub n: usize,
    pub grid: Vec<f64>,
    pub kl: Vec<Option<f64>>,
    pub score: Vec<Option<f64>>,
    pub seed: Vec<u64>,
    pub selected_index: Option<usize>,
    pub failures: Vec<Option<String>>,
    pub config: SweepConfig,
}

impl PerplexitySweep {
    fn push(&mut self, at: usize, perplexity: f64, seed: u64, outcome: Result<f64, String>) {
        let (kl, score, failure) = match outcome {
            Ok(kl) => (Some(kl), Some(score_formula(kl, self.n, perplexity)), None),
            Err(e) => (None, None, Some(e)),
        };
        self.grid.insert(at, perplexity);
        self.kl.insert(at, kl);
        self.score.insert(at, score);
        self.seed.insert(at, seed);
        self.failures.insert(at, failure);
    }

    fn reselect(&mut self) {
        self.selected_index = argmin(&self.score);
    }

    /// True when every stored score equals the formula re-evaluated from the
    /// stored KL, bit for bit.
    pub fn scores_consistent(&self) -> bool {
        self.kl.iter().zip(&self.score).zip(&self.grid).all(|((kl, s), &p)| match (kl, s) {
            (Some(kl), Some(s)) => score_formula(*kl, self.n, p).to_bits() == s.to_bits(),
            (None, None) => true,
            _ => false,
        })
    }

    pub fn selected_perplexity(&self) -> Option<f64> {
        self.selected_index.map(|i| self.grid[i])
    }
}

/// First index of the minimum; earlier (smaller perplexity) wins ties.
pub fn argmin(scores: &[Option<f64>]) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, s) in scores.iter().enumerate() {
        if let Some(s) = *s {
            if best.is_none_or(|(_, b)| s < b) {
                best = Some((i, s));
            }
        }
    }
    best.map(|(i, _)| i)
}

/// The selected perplexity and its score.
pub fn select_perplexity(sweep: &PerplexitySweep) -> Result<(f64, f64), SearchError> {
    if sweep.grid.is_empty() {
        return Err(SearchError::EmptyGrid);
    }
    let i = argmin(&sweep.score).ok_or(SearchError::NoSuccessfulRuns)?;
    Ok((sweep.grid[i], sweep.score[i].expect("argmin has a score")))
}

fn run_point(dist: &Array2<f64>, perplexity: f64, config: &SweepConfig, seed: u64) -> Result<Embedding, TsneError> {
    let (p, _) = compute_p_joint_from_distances(dist, perplexity)?;
    let mut best: Option<Embedding> = None;
    for r in 0..config.restarts as u64 {
        let run = run_tsne(&p, &config.optimizer, seed.wrapping_add(r.wrapping_mul(RESTART_SEED_STRIDE)))?;
        if best.as_ref().is_none_or(|b| run.final_kl < b.final_kl) {
            best = Some(run);
        }
    }
    Ok(best.expect("restarts >= 1"))
}

/// Recomputes the embedding behind one sweep entry (same seed and restarts).
pub fn embed_point(data: &Dataset, perplexity: f64, config: &SweepConfig, seed: u64) -> Result<Embedding, SearchError> {
    if config.restarts == 0 {
        return Err(SearchError::NoRestarts);
    }
    let dist = pairwise_sq_distances(data.points())?;
    Ok(run_point(&dist, perplexity, config, seed)?)
}

/// Runs t-SNE at every grid perplexity and keeps the embeddings.
/// Grid slot `i` is seeded with `base_seed + i`; points run in parallel and
/// the result does not depend on scheduling.
pub fn sweep_with_embeddings(
    data: &Dataset,
    grid: &[f64],
    config: &SweepConfig,
) -> Result<(PerplexitySweep, Vec<Option<Embedding>>), SearchError> {
    let n = data.n();
    validate_grid(grid, n)?;
    if config.restarts == 0 {
        return Err(SearchError::NoRestarts);
    }
    config.optimizer.validate()?;
    let dist = pairwise_sq_distances(data.points())?;
    let runs: Vec<(u64, Result<Embedding, TsneError>)> = grid
        .par_iter()
        .enumerate()
        .map(|(i, &perp)| {
            let seed = config.base_seed.wrapping_add(i as u64);
            (seed, run_point(&dist, perp, config, seed))
        })
        .collect();

    let mut sweep = PerplexitySweep {
        n,
        grid: Vec::new(),
        kl: Vec::new(),
        score: Vec::new(),
        seed: Vec::new(),
        selected_index: None,
        failures: Vec::new(),
        config: config.clone(),
    };
    let mut embeddings = Vec::with_capacity(grid.len());
    for (i, (seed, run)) in runs.into_iter().enumerate() {
        let outcome = run.as_ref().map(|e| e.final_kl).map_err(|e| e.to_string());
        sweep.push(i, grid[i], seed, outcome);
        embeddings.push(run.ok());
    }
    sweep.reselect();
    Ok((sweep, embeddings))
}

pub fn sweep(data: &Dataset, grid: &[f64], config: &SweepConfig) -> Result<PerplexitySweep, SearchError> {
    sweep_with_embeddings(data, grid, config).map(|(s, _)| s)
}

/// Coarse-to-fine narrowing: each round inserts the geometric midpoints on
/// either side of the current argmin (one at a boundary), evaluates them with
/// `eval(perplexity, seed) -> KL`, and reselects.
pub fn refine_with<F>(sweep: &PerplexitySweep, rounds: usize, eval: F) -> PerplexitySweep
where
    F: Fn(f64, u64) -> Result<f64, String> + Sync,
{
    let mut out = sweep.clone();
    out.reselect();
    for _ in 0..rounds {
        let Some(k) = out.selected_index else { break };
        let g = &out.grid;
        let mut candidates = Vec::new();
        if k > 0 {
            candidates.push((g[k - 1] * g[k]).sqrt());
        }
        if k + 1 < g.len() {
            candidates.push((g[k] * g[k + 1]).sqrt());
        }
        candidates.retain(|&c| !g.iter().any(|&x| (x - c).abs() <= DEDUP_REL * x));
        if candidates.is_empty() {
            break;
        }
        let base = out.config.base_seed;
        let start = out.grid.len() as u64;
        let seeded: Vec<(f64, u64)> = candidates
            .iter()
            .enumerate()
            .map(|(j, &c)| (c, base.wrapping_add(start + j as u64)))
            .collect();
        let results: Vec<Result<f64, String>> = seeded.par_iter().map(|&(c, s)| eval(c, s)).collect();
        for ((c, s), r) in seeded.into_iter().zip(results) {
            let at = out.grid.partition_point(|&x| x < c);
            out.push(at, c, s, r);
        }
        out.reselect();
    }
    out
}

/// [`refine_with`] backed by full t-SNE runs on `data`.
pub fn refine(data: &Dataset, sweep: &PerplexitySweep, rounds: usize) -> Result<PerplexitySweep, SearchError> {
    if sweep.n != data.n() {
        return Err(TsneError::SizeMismatch { left: sweep.n, right: data.n() }.into());
    }
    let dist = pairwise_sq_distances(data.points())?;
    let config = sweep.config.clone();
    Ok(refine_with(sweep, rounds, |perp, seed| {
        run_point(&dist, perp, &config, seed).map(|e| e.final_kl).map_err(|e| e.to_string())
    }))
}

/// Bits needed to describe the embedding error plus the neighbor identities.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DescriptionLengthReport {
    /// Unique pairwise probabilities, `(n² − n) / 2`.
    pub pairs: u64,
    /// `pairs · KL` with KL in bits.
    pub error_bits: f64,
    /// `n · log2(n) · Perp`.
    pub index_bits: f64,
    pub total: f64,
}

pub fn description_length_report(
    kl_nats: f64,
    n: usize,
    perplexity: f64,
) -> Result<DescriptionLengthReport, SearchError> {
    pbic_score(kl_nats, n, perplexity)?;
    let n64 = n as u64;
    let pairs = (n64 * n64 - n64) / 2;
    let error_bits = pairs as f64 * (kl_nats / LN_2);
    let nf = n as f64;
    let index_bits = nf * nf.log2() * perplexity;
    Ok(DescriptionLengthReport { pairs, error_bits, index_bits, total: error_bits + index_bits })
}
