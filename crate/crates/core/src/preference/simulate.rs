use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::f64::consts::SQRT_2;

use super::normal::cdf;
use super::{GpError, PreferenceRecord, MAX_STRENGTH};

/// How a simulated annotator reports preference strength.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum StrengthPolicy {
    Fixed(u8),
    /// Strength is one plus the number of thresholds `|Δu|` reaches.
    Thresholds([f64; 3]),
}

impl Default for StrengthPolicy {
    fn default() -> Self {
        Self::Thresholds([0.1, 0.3, 0.6])
    }
}

impl StrengthPolicy {
    pub fn strength(&self, gap: f64) -> u8 {
        match self {
            Self::Fixed(s) => (*s).clamp(1, MAX_STRENGTH),
            Self::Thresholds(t) => 1 + t.iter().filter(|&&x| gap >= x).count() as u8,
        }
    }
}

/// Draws `count` judgments between uniformly random distinct grid indices.
/// Index `a` beats `b` with probability `Φ((u_a − u_b) / (√2 noise))`.
pub fn simulate_preferences(
    true_utility: &[f64],
    count: usize,
    noise: f64,
    policy: &StrengthPolicy,
    seed: u64,
) -> Result<Vec<PreferenceRecord>, GpError> {
    let m = true_utility.len();
    if m < 2 || count == 0 {
        return Err(GpError::InvalidArgs("need at least 2 grid points and 1 preference".into()));
    }
    if !(noise > 0.0 && noise.is_finite()) || true_utility.iter().any(|u| !u.is_finite()) {
        return Err(GpError::InvalidArgs("noise must be positive and utilities finite".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        let a = rng.random_range(0..m);
        let mut b = rng.random_range(0..m - 1);
        if b >= a {
            b += 1;
        }
        let gap = true_utility[a] - true_utility[b];
        let a_wins = rng.random::<f64>() < cdf(gap / (SQRT_2 * noise));
        let (winner, loser) = if a_wins { (a, b) } else { (b, a) };
        out.push(PreferenceRecord::new(winner, loser, policy.strength(gap.abs())));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn noiseless_limit_prefers_higher_utility() {
        let u = [0.0, 0.5, 2.0, 1.0];
        for r in simulate_preferences(&u, 500, 1e-9, &StrengthPolicy::default(), 3).unwrap() {
            assert!(u[r.winner] > u[r.loser]);
        }
    }

    #[test]
    fn equal_utilities_are_coin_flips() {
        let recs = simulate_preferences(&[1.0, 1.0], 1000, 0.3, &StrengthPolicy::Fixed(2), 9).unwrap();
        let wins = recs.iter().filter(|r| r.winner == 0).count() as f64;
        // 3 binomial standard deviations around 500.
        let sd = (1000.0f64 * 0.25).sqrt();
        assert!((wins - 500.0).abs() <= 3.0 * sd, "{wins}");
        assert!(recs.iter().all(|r| r.strength == 2));
    }

    #[test]
    fn deterministic_per_seed() {
        let u = [0.1, 0.4, 0.2, 0.9, 0.3];
        let p = StrengthPolicy::default();
        assert_eq!(simulate_preferences(&u, 50, 0.2, &p, 1).unwrap(), simulate_preferences(&u, 50, 0.2, &p, 1).unwrap());
        assert_ne!(simulate_preferences(&u, 50, 0.2, &p, 1).unwrap(), simulate_preferences(&u, 50, 0.2, &p, 2).unwrap());
    }

    #[test]
    fn strength_quantization() {
        let p = StrengthPolicy::default();
        assert_eq!(p.strength(0.0), 1);
        assert_eq!(p.strength(0.1), 2);
        assert_eq!(p.strength(0.45), 3);
        assert_eq!(p.strength(5.0), 4);
        assert_eq!(StrengthPolicy::Fixed(9).strength(0.0), 4);
    }

    #[test]
    fn rejects_bad_arguments() {
        assert!(simulate_preferences(&[1.0], 5, 0.1, &StrengthPolicy::default(), 0).is_err());
        assert!(simulate_preferences(&[1.0, 2.0], 0, 0.1, &StrengthPolicy::default(), 0).is_err());
        assert!(simulate_preferences(&[1.0, 2.0], 5, 0.0, &StrengthPolicy::default(), 0).is_err());
    }
}
