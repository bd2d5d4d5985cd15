//! Standard normal helpers that stay accurate far into the lower tail.

use statrs::function::erf::erfc;
use std::f64::consts::{FRAC_1_SQRT_2, PI};

const TAIL: f64 = -30.0;

fn half_ln_two_pi() -> f64 {
    0.5 * (2.0 * PI).ln()
}

/// Asymptotic series `Φ(z) ≈ φ(z) / (−z) · s(z)` for very negative `z`.
fn tail_series(z: f64) -> f64 {
    let z2 = 1.0 / (z * z);
    1.0 - z2 * (1.0 - 3.0 * z2 * (1.0 - 5.0 * z2 * (1.0 - 7.0 * z2)))
}

pub fn cdf(z: f64) -> f64 {
    0.5 * erfc(-z * FRAC_1_SQRT_2)
}

pub fn ln_pdf(z: f64) -> f64 {
    -0.5 * z * z - half_ln_two_pi()
}

pub fn ln_cdf(z: f64) -> f64 {
    if z < TAIL {
        ln_pdf(z) - (-z).ln() + tail_series(z).ln()
    } else if z > 5.0 {
        (-0.5 * erfc(z * FRAC_1_SQRT_2)).ln_1p()
    } else {
        cdf(z).ln()
    }
}

/// Inverse Mills ratio `φ(z) / Φ(z)`, the derivative of `ln Φ`.
pub fn mills(z: f64) -> f64 {
    if z < TAIL {
        -z / tail_series(z)
    } else {
        (ln_pdf(z) - ln_cdf(z)).exp()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn known_values() {
        assert!((cdf(0.0) - 0.5).abs() < 1e-15);
        let c = cdf(1.959_963_984_540_054);
        assert!((c - 0.975).abs() < 1e-11, "{c}");
        assert!((ln_cdf(0.0) - 0.5f64.ln()).abs() < 1e-15);
        // Φ(-10) = 7.619853024160527e-24
        assert!((ln_cdf(-10.0) - 7.619_853_024_160_527e-24f64.ln()).abs() < 1e-10);
    }

    #[test]
    fn tail_branches_join_smoothly() {
        for z in [TAIL - 1e-9, TAIL + 1e-9] {
            let direct = cdf(z).ln();
            assert!((ln_cdf(z) - direct).abs() < 1e-9 * direct.abs(), "{z}");
        }
        let left = mills(TAIL - 1e-9);
        let right = mills(TAIL + 1e-9);
        assert!((left - right).abs() < 1e-8);
    }

    #[test]
    fn mills_matches_finite_difference_of_ln_cdf() {
        for z in [-60.0, -31.0, -8.0, -1.0, 0.0, 2.0, 6.0] {
            let h = 1e-6;
            let fd = (ln_cdf(z + h) - ln_cdf(z - h)) / (2.0 * h);
            assert!((mills(z) - fd).abs() <= 1e-6 * fd.abs().max(1e-3), "z={z}: {} vs {fd}", mills(z));
        }
    }

    #[test]
    fn extreme_arguments_stay_finite() {
        assert!(ln_cdf(-1e3).is_finite());
        assert!(mills(-1e3).is_finite());
        assert_eq!(ln_cdf(40.0), 0.0);
        assert!(mills(40.0) >= 0.0 && mills(40.0) < 1e-300);
    }
}
