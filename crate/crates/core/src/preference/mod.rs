//! Latent utility over a perplexity grid, inferred from pairwise preferences.
//!
//! A zero-mean GP prior (squared exponential in log2 perplexity) is combined
//! with a probit pairwise likelihood
//! `P(w ≻ l) = Φ((f_w − f_l) / (√2 σ_k))`, `σ_k = noise / strength`,
//! and the posterior is approximated by a Gaussian at its mode (Laplace).
//! Annotators are pooled: every record enters the same likelihood.

mod agreement;
mod laplace;
pub mod normal;
mod simulate;

pub use agreement::{agreement_check, AgreementVerdict};
pub use laplace::{
    fit_with_lengthscale_search, kernel_matrix, laplace_fit, log_posterior, log_posterior_gradient, UtilityPosterior,
    JITTER, LENGTHSCALE_CANDIDATES,
};
pub use simulate::{simulate_preferences, StrengthPolicy};

use serde::{Deserialize, Serialize};
use std::io::{BufRead, Write};
use thiserror::Error;

pub const MAX_STRENGTH: u8 = 4;

#[derive(Debug, Error)]
pub enum GpError {
    #[error("hyperparameters must be positive and finite")]
    BadHyperparameters,
    #[error("grid must be non-empty, positive and strictly increasing")]
    BadGrid,
    #[error("preference {index}: {reason}")]
    BadRecord { index: usize, reason: String },
    #[error("index {index} outside a grid of {len}")]
    IndexOutOfRange { index: usize, len: usize },
    #[error("linear system is singular")]
    Singular,
    #[error("invalid simulation arguments: {0}")]
    InvalidArgs(String),
    #[error("line {line}: {source}")]
    Json { line: usize, source: serde_json::Error },
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

/// One pairwise judgment: `winner` was preferred over `loser` with a strength
/// of 1 (slight) to 4 (strong).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PreferenceRecord {
    pub winner: usize,
    pub loser: usize,
    pub strength: u8,
    pub annotator: Option<String>,
    pub ts: Option<String>,
}

impl PreferenceRecord {
    pub fn new(winner: usize, loser: usize, strength: u8) -> Self {
        Self { winner, loser, strength, annotator: None, ts: None }
    }

    pub fn validate(&self, grid_len: usize) -> Result<(), String> {
        if self.winner == self.loser {
            return Err("winner and loser must differ".into());
        }
        if self.winner >= grid_len || self.loser >= grid_len {
            return Err(format!("indices must be below {grid_len}"));
        }
        if !(1..=MAX_STRENGTH).contains(&self.strength) {
            return Err(format!("strength {} outside 1..={MAX_STRENGTH}", self.strength));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GpHyperparams {
    /// Kernel lengthscale in log2-perplexity units (doublings).
    pub lengthscale: f64,
    pub variance: f64,
    /// Probit noise for a strength-1 preference.
    pub noise: f64,
}

impl Default for GpHyperparams {
    fn default() -> Self {
        Self { lengthscale: 1.5, variance: 1.0, noise: 1.0 }
    }
}

impl GpHyperparams {
    pub fn validate(&self) -> Result<(), GpError> {
        let ok = |v: f64| v > 0.0 && v.is_finite();
        if ok(self.lengthscale) && ok(self.variance) && ok(self.noise) {
            Ok(())
        } else {
            Err(GpError::BadHyperparameters)
        }
    }
}

/// Writes one JSON object per line.
pub fn write_jsonl<'a>(
    records: impl IntoIterator<Item = &'a PreferenceRecord>,
    mut out: impl Write,
) -> Result<(), GpError> {
    for r in records {
        let line = serde_json::to_string(r).map_err(|source| GpError::Json { line: 0, source })?;
        writeln!(out, "{line}")?;
    }
    Ok(())
}

/// Reads records written by [`write_jsonl`]; blank lines are skipped.
pub fn read_jsonl(input: impl BufRead) -> Result<Vec<PreferenceRecord>, GpError> {
    let mut out = Vec::new();
    for (i, line) in input.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|source| GpError::Json { line: i + 1, source })?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn record_json_shape() {
        let r = PreferenceRecord { annotator: Some("a1".into()), ..PreferenceRecord::new(3, 1, 2) };
        let s = serde_json::to_string(&r).unwrap();
        assert_eq!(s, r#"{"winner":3,"loser":1,"strength":2,"annotator":"a1","ts":null}"#);
    }

    #[test]
    fn jsonl_round_trip_and_errors() {
        let recs = vec![PreferenceRecord::new(0, 1, 4), PreferenceRecord::new(2, 1, 1)];
        let mut buf = Vec::new();
        write_jsonl(&recs, &mut buf).unwrap();
        buf.extend_from_slice(b"\n");
        assert_eq!(read_jsonl(buf.as_slice()).unwrap(), recs);
        let err = read_jsonl("{\"winner\":1}\n".as_bytes()).unwrap_err();
        assert!(matches!(err, GpError::Json { line: 1, .. }));
    }

    #[test]
    fn record_validation() {
        assert!(PreferenceRecord::new(1, 1, 2).validate(3).is_err());
        assert!(PreferenceRecord::new(1, 3, 2).validate(3).is_err());
        assert!(PreferenceRecord::new(1, 0, 0).validate(3).is_err());
        assert!(PreferenceRecord::new(1, 0, 5).validate(3).is_err());
        assert!(PreferenceRecord::new(1, 0, 4).validate(3).is_ok());
    }
}
