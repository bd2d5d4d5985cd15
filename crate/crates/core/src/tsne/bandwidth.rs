//! Per-point Gaussian bandwidth search.
//!
//! For point `j` the conditional is `p(i|j) ∝ exp(-d²(i,j) / 2σ²)` and its
//! perplexity is `2^H` with `H` in bits. Perplexity is non-decreasing in σ,
//! so bisection on `ln σ` finds the bandwidth for a target perplexity. Its
//! range is bounded below by the number of neighbors tied at the minimum
//! distance (σ → 0) and above by the neighbor count (σ → ∞).

use serde::{Deserialize, Serialize};
use std::f64::consts::LN_2;
use thiserror::Error;

const LOG_SIGMA_START: (f64, f64) = (-20.0, 20.0);
const LOG_SIGMA_STEP: f64 = 20.0;
// exp(±2 * 340) stays finite.
const LOG_SIGMA_LIMIT: f64 = 340.0;
/// Distances within this relative margin of the minimum count as ties.
const TIE_REL: f64 = 1e-12;
/// Exponent spread used to build saturated rows: `β · gap` for the sharp
/// limit, `β · range` for the flat one.
const SHARP_EXPONENT: f64 = 50.0;
const FLAT_EXPONENT: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bandwidth {
    pub sigma: f64,
    pub perplexity: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Error)]
pub enum BandwidthError {
    #[error("target perplexity {target} is not a finite value >= 1")]
    InvalidTarget { target: f64 },
    #[error("distance row has no neighbors")]
    NoNeighbors,
    #[error("target perplexity unreachable; saturated at {achieved} (sigma {sigma})")]
    Saturated { sigma: f64, achieved: f64 },
    #[error("bisection did not converge; best perplexity {achieved} at sigma {sigma}")]
    NotConverged { sigma: f64, achieved: f64 },
}

impl BandwidthError {
    /// Best available bandwidth, when the search produced one.
    pub fn fallback(&self) -> Option<Bandwidth> {
        match *self {
            Self::Saturated { sigma, achieved } | Self::NotConverged { sigma, achieved } => {
                Some(Bandwidth { sigma, perplexity: achieved })
            }
            _ => None,
        }
    }
}

fn beta_from_log_sigma(log_sigma: f64) -> f64 {
    0.5 * (-2.0 * log_sigma).exp()
}

fn min_off_self(dist_row: &[f64], self_index: usize) -> f64 {
    dist_row
        .iter()
        .enumerate()
        .filter(|&(i, _)| i != self_index)
        .map(|(_, &d)| d)
        .fold(f64::INFINITY, f64::min)
}

/// Entropy in bits of the conditional at `beta = 1 / 2σ²`.
fn entropy_bits_at(dist_row: &[f64], self_index: usize, dmin: f64, beta: f64) -> f64 {
    let mut sum = 0.0;
    let mut weighted = 0.0;
    for (i, &d) in dist_row.iter().enumerate() {
        if i == self_index {
            continue;
        }
        let shifted = d - dmin;
        let w = (-beta * shifted).exp();
        sum += w;
        weighted += w * shifted;
    }
    (sum.ln() + beta * weighted / sum) / LN_2
}

/// Entropy (bits) of the conditional neighbor distribution at bandwidth `sigma`.
pub fn row_entropy_bits(dist_row: &[f64], self_index: usize, sigma: f64) -> f64 {
    let dmin = min_off_self(dist_row, self_index);
    entropy_bits_at(dist_row, self_index, dmin, 0.5 / (sigma * sigma))
}

/// Writes the normalized conditional for bandwidth `sigma` into `out`; the
/// self entry is zero.
pub fn conditional_row(dist_row: &[f64], self_index: usize, sigma: f64, out: &mut [f64]) {
    assert_eq!(dist_row.len(), out.len());
    let dmin = min_off_self(dist_row, self_index);
    let beta = 0.5 / (sigma * sigma);
    let mut sum = 0.0;
    for (i, (&d, o)) in dist_row.iter().zip(out.iter_mut()).enumerate() {
        *o = if i == self_index { 0.0 } else { (-beta * (d - dmin)).exp() };
        sum += *o;
    }
    for o in out.iter_mut() {
        *o /= sum;
    }
}

/// Bisection on `ln σ` for the bandwidth whose conditional has the target
/// perplexity, accepting `|log2 achieved − log2 target| <= tol`.
pub fn sigma_search(
    dist_row: &[f64],
    self_index: usize,
    target_perplexity: f64,
    tol: f64,
    max_iters: usize,
) -> Result<Bandwidth, BandwidthError> {
    if !target_perplexity.is_finite() || target_perplexity < 1.0 {
        return Err(BandwidthError::InvalidTarget { target: target_perplexity });
    }
    let neighbors = dist_row.len() - usize::from(self_index < dist_row.len());
    if neighbors == 0 {
        return Err(BandwidthError::NoNeighbors);
    }
    let target = target_perplexity.log2();
    let dmin = min_off_self(dist_row, self_index);
    let dmax = dist_row
        .iter()
        .enumerate()
        .filter(|&(i, _)| i != self_index)
        .map(|(_, &d)| d)
        .fold(f64::NEG_INFINITY, f64::max);
    let tie_margin = TIE_REL * dmin.abs().max(f64::MIN_POSITIVE);
    let is_tie = |d: f64| d - dmin <= tie_margin;
    let ties = dist_row.iter().enumerate().filter(|&(i, &d)| i != self_index && is_tie(d)).count();
    let entropy = |log_sigma: f64| entropy_bits_at(dist_row, self_index, dmin, beta_from_log_sigma(log_sigma));
    let saturated_at = |beta: f64| {
        let sigma = (0.5 / beta).sqrt();
        let achieved = entropy_bits_at(dist_row, self_index, dmin, beta).exp2();
        (sigma, achieved)
    };

    if ties == neighbors {
        // Every neighbor is equidistant: the conditional is uniform for any σ.
        let achieved = neighbors as f64;
        return if (achieved.log2() - target).abs() <= tol {
            Ok(Bandwidth { sigma: 1.0, perplexity: achieved })
        } else {
            Err(BandwidthError::Saturated { sigma: 1.0, achieved })
        };
    }

    if target < (ties as f64).log2() - tol {
        let gap = dist_row
            .iter()
            .enumerate()
            .filter(|&(i, &d)| i != self_index && !is_tie(d))
            .map(|(_, &d)| d - dmin)
            .fold(f64::INFINITY, f64::min);
        let (sigma, achieved) = saturated_at(SHARP_EXPONENT / gap);
        return Err(BandwidthError::Saturated { sigma, achieved });
    }
    if target > (neighbors as f64).log2() + tol {
        let (sigma, achieved) = saturated_at(FLAT_EXPONENT / (dmax - dmin));
        return Err(BandwidthError::Saturated { sigma, achieved });
    }

    let (mut lo, mut hi) = LOG_SIGMA_START;

    let mut h_lo = entropy(lo);
    while h_lo > target && lo > -LOG_SIGMA_LIMIT {
        hi = lo;
        lo = (lo - LOG_SIGMA_STEP).max(-LOG_SIGMA_LIMIT);
        h_lo = entropy(lo);
    }
    let mut h_hi = entropy(hi);
    while h_hi < target && hi < LOG_SIGMA_LIMIT {
        lo = hi;
        h_lo = h_hi;
        hi = (hi + LOG_SIGMA_STEP).min(LOG_SIGMA_LIMIT);
        h_hi = entropy(hi);
    }

    let mut best = if (h_lo - target).abs() <= (h_hi - target).abs() { (lo, h_lo) } else { (hi, h_hi) };
    if (best.1 - target).abs() <= tol {
        return Ok(Bandwidth { sigma: best.0.exp(), perplexity: best.1.exp2() });
    }
    for _ in 0..max_iters {
        let mid = 0.5 * (lo + hi);
        let h = entropy(mid);
        if (h - target).abs() < (best.1 - target).abs() {
            best = (mid, h);
        }
        if (h - target).abs() <= tol {
            return Ok(Bandwidth { sigma: mid.exp(), perplexity: h.exp2() });
        }
        if h > target {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    let (log_sigma, h) = best;
    let achieved = h.exp2();
    // Hitting an extreme of the admissible range means the target sits
    // within tol of a limit the row can only approach.
    if log_sigma <= -LOG_SIGMA_LIMIT || log_sigma >= LOG_SIGMA_LIMIT {
        Err(BandwidthError::Saturated { sigma: log_sigma.exp(), achieved })
    } else {
        Err(BandwidthError::NotConverged { sigma: log_sigma.exp(), achieved })
    }
}
