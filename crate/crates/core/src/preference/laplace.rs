use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use std::f64::consts::SQRT_2;

use super::normal::{ln_cdf, mills};
use super::{GpError, GpHyperparams, PreferenceRecord};

pub const JITTER: f64 = 1e-8;
pub const LENGTHSCALE_CANDIDATES: [f64; 3] = [0.75, 1.5, 3.0];
const MAX_NEWTON_ITERS: usize = 100;
const NEWTON_TOL: f64 = 1e-10;
const MIN_STEP: f64 = 1e-12;
// Near the mode the objective changes below its rounding error; such steps
// count as non-decreasing.
const PSI_SLACK: f64 = 1e-12;

/// Gaussian approximation of the utility posterior at each grid point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UtilityPosterior {
    pub grid: Vec<f64>,
    pub mean: Vec<f64>,
    pub variance: Vec<f64>,
    pub mode_found: bool,
    pub newton_iterations: usize,
    /// Laplace approximation of the log marginal likelihood.
    pub log_evidence: f64,
    pub lengthscale: f64,
    pub kernel_variance: f64,
    pub likelihood_noise: f64,
}

impl UtilityPosterior {
    pub fn std_dev(&self) -> Vec<f64> {
        self.variance.iter().map(|v| v.sqrt()).collect()
    }
}

fn check_grid(grid: &[f64]) -> Result<(), GpError> {
    let sorted = grid.windows(2).all(|w| w[1] > w[0]);
    if grid.is_empty() || !sorted || grid.iter().any(|&g| !(g > 0.0 && g.is_finite())) {
        return Err(GpError::BadGrid);
    }
    Ok(())
}

/// Squared-exponential covariance over `log2(perplexity)` plus [`JITTER`] on
/// the diagonal.
pub fn kernel_matrix(grid: &[f64], lengthscale: f64, variance: f64) -> Result<DMatrix<f64>, GpError> {
    check_grid(grid)?;
    GpHyperparams { lengthscale, variance, noise: 1.0 }.validate()?;
    let x: Vec<f64> = grid.iter().map(|g| g.log2()).collect();
    let m = x.len();
    Ok(DMatrix::from_fn(m, m, |i, j| {
        let d = (x[i] - x[j]) / lengthscale;
        let k = variance * (-0.5 * d * d).exp();
        if i == j {
            k + JITTER
        } else {
            k
        }
    }))
}

fn check_records(prefs: &[PreferenceRecord], m: usize) -> Result<(), GpError> {
    for (index, r) in prefs.iter().enumerate() {
        r.validate(m).map_err(|reason| GpError::BadRecord { index, reason })?;
    }
    Ok(())
}

fn scale_of(r: &PreferenceRecord, noise: f64) -> f64 {
    SQRT_2 * noise / f64::from(r.strength)
}

fn log_likelihood(prefs: &[PreferenceRecord], noise: f64, f: &DVector<f64>) -> f64 {
    prefs.iter().map(|r| ln_cdf((f[r.winner] - f[r.loser]) / scale_of(r, noise))).sum()
}

/// Gradient and negative Hessian of the log likelihood.
fn likelihood_derivatives(prefs: &[PreferenceRecord], noise: f64, f: &DVector<f64>) -> (DVector<f64>, DMatrix<f64>) {
    let m = f.len();
    let mut grad = DVector::zeros(m);
    let mut w = DMatrix::zeros(m, m);
    for r in prefs {
        let s = scale_of(r, noise);
        let z = (f[r.winner] - f[r.loser]) / s;
        let ratio = mills(z);
        grad[r.winner] += ratio / s;
        grad[r.loser] -= ratio / s;
        let c = ratio * (z + ratio) / (s * s);
        w[(r.winner, r.winner)] += c;
        w[(r.loser, r.loser)] += c;
        w[(r.winner, r.loser)] -= c;
        w[(r.loser, r.winner)] -= c;
    }
    (grad, w)
}

fn prepare(prefs: &[PreferenceRecord], grid: &[f64], hyper: &GpHyperparams) -> Result<DMatrix<f64>, GpError> {
    hyper.validate()?;
    let k = kernel_matrix(grid, hyper.lengthscale, hyper.variance)?;
    check_records(prefs, grid.len())?;
    Ok(k)
}

/// Unnormalized log posterior `Σ ln Φ(z_r) − ½ fᵀ K⁻¹ f`.
pub fn log_posterior(
    prefs: &[PreferenceRecord],
    grid: &[f64],
    hyper: &GpHyperparams,
    f: &[f64],
) -> Result<f64, GpError> {
    let k = prepare(prefs, grid, hyper)?;
    let f = DVector::from_column_slice(f);
    let alpha = k.cholesky().ok_or(GpError::Singular)?.solve(&f);
    Ok(log_likelihood(prefs, hyper.noise, &f) - 0.5 * f.dot(&alpha))
}

/// Gradient of [`log_posterior`] with respect to `f`.
pub fn log_posterior_gradient(
    prefs: &[PreferenceRecord],
    grid: &[f64],
    hyper: &GpHyperparams,
    f: &[f64],
) -> Result<Vec<f64>, GpError> {
    let k = prepare(prefs, grid, hyper)?;
    let f = DVector::from_column_slice(f);
    let alpha = k.cholesky().ok_or(GpError::Singular)?.solve(&f);
    let (g, _) = likelihood_derivatives(prefs, hyper.noise, &f);
    Ok((g - alpha).as_slice().to_vec())
}

/// Laplace approximation. Newton iterations run in the `α = K⁻¹ f`
/// parameterization, which never forms `K⁻¹`:
/// `α ← (I + W K)⁻¹ (W f + ∇ log L)`, with step halving whenever the log
/// posterior would decrease. Converged when `max |Δf| <= 1e-10`.
pub fn laplace_fit(
    prefs: &[PreferenceRecord],
    grid: &[f64],
    hyper: &GpHyperparams,
) -> Result<UtilityPosterior, GpError> {
    let k = prepare(prefs, grid, hyper)?;
    let m = grid.len();
    let eye = DMatrix::<f64>::identity(m, m);
    let objective = |alpha: &DVector<f64>, f: &DVector<f64>| log_likelihood(prefs, hyper.noise, f) - 0.5 * alpha.dot(f);

    let mut alpha = DVector::zeros(m);
    let mut f = DVector::zeros(m);
    let mut psi = objective(&alpha, &f);
    let mut mode_found = prefs.is_empty();
    let mut iterations = 0;
    while !mode_found && iterations < MAX_NEWTON_ITERS {
        iterations += 1;
        let (g, w) = likelihood_derivatives(prefs, hyper.noise, &f);
        let rhs = &w * &f + g;
        let system = &eye + &w * &k;
        let target = system.lu().solve(&rhs).ok_or(GpError::Singular)?;
        let step = target - &alpha;
        let mut t = 1.0;
        let (next_alpha, next_f, next_psi) = loop {
            let a = &alpha + &step * t;
            let fa = &k * &a;
            let value = objective(&a, &fa);
            if value >= psi - PSI_SLACK * psi.abs().max(1.0) || t < MIN_STEP {
                break (a, fa, value);
            }
            t *= 0.5;
        };
        let delta = (&next_f - &f).amax();
        alpha = next_alpha;
        f = next_f;
        psi = next_psi;
        if delta <= NEWTON_TOL {
            mode_found = true;
        }
    }

    let (_, w) = likelihood_derivatives(prefs, hyper.noise, &f);
    let lu = (&eye + &k * &w).lu();
    let log_det = lu.determinant().ln();
    let cov = lu.solve(&k).ok_or(GpError::Singular)?;
    let variance = (0..m).map(|i| cov[(i, i)].max(0.0)).collect();
    Ok(UtilityPosterior {
        grid: grid.to_vec(),
        mean: f.as_slice().to_vec(),
        variance,
        mode_found,
        newton_iterations: iterations,
        log_evidence: psi - 0.5 * log_det,
        lengthscale: hyper.lengthscale,
        kernel_variance: hyper.variance,
        likelihood_noise: hyper.noise,
    })
}

/// Fits once per candidate lengthscale and keeps the largest Laplace
/// evidence (first candidate wins ties).
pub fn fit_with_lengthscale_search(
    prefs: &[PreferenceRecord],
    grid: &[f64],
    base: &GpHyperparams,
    candidates: &[f64],
) -> Result<UtilityPosterior, GpError> {
    let mut best: Option<UtilityPosterior> = None;
    for &lengthscale in candidates {
        let fit = laplace_fit(prefs, grid, &GpHyperparams { lengthscale, ..*base })?;
        if best.as_ref().is_none_or(|b| fit.log_evidence > b.log_evidence) {
            best = Some(fit);
        }
    }
    best.ok_or(GpError::BadHyperparameters)
}

#[cfg(test)]
mod tests {
    use super::*;

    const GRID: [f64; 5] = [8.0, 16.0, 32.0, 64.0, 128.0];

    #[test]
    fn kernel_diagonal_and_limits() {
        let k = kernel_matrix(&GRID, 1.5, 2.0).unwrap();
        for i in 0..5 {
            assert_eq!(k[(i, i)], 2.0 + JITTER);
        }
        assert!((k[(0, 1)] - 2.0 * (-0.5f64 / 2.25).exp()).abs() < 1e-15);
        let flat = kernel_matrix(&GRID, 1e9, 0.7).unwrap();
        assert!(flat.iter().all(|v| (v - 0.7).abs() < 1e-7));
        assert!(kernel_matrix(&GRID[..3], 1.5, 1.0).unwrap().cholesky().is_some());
    }

    #[test]
    fn kernel_rejects_bad_inputs() {
        assert!(kernel_matrix(&GRID, 0.0, 1.0).is_err());
        assert!(kernel_matrix(&GRID, 1.0, -1.0).is_err());
        assert!(kernel_matrix(&[8.0, 8.0], 1.0, 1.0).is_err());
        assert!(kernel_matrix(&[], 1.0, 1.0).is_err());
    }

    #[test]
    fn empty_preferences_give_prior() {
        let post = laplace_fit(&[], &GRID, &GpHyperparams::default()).unwrap();
        assert!(post.mode_found);
        assert!(post.mean.iter().all(|&v| v == 0.0));
        let k = kernel_matrix(&GRID, 1.5, 1.0).unwrap();
        for i in 0..5 {
            assert!((post.variance[i] - k[(i, i)]).abs() < 1e-12);
        }
    }

    #[test]
    fn single_preference_orders_mean() {
        let post = laplace_fit(&[PreferenceRecord::new(3, 1, 2)], &GRID, &GpHyperparams::default()).unwrap();
        assert!(post.mode_found);
        assert!(post.mean[3] > post.mean[1]);
    }

    #[test]
    fn rejects_invalid_records() {
        let err = laplace_fit(&[PreferenceRecord::new(0, 9, 1)], &GRID, &GpHyperparams::default()).unwrap_err();
        assert!(matches!(err, GpError::BadRecord { index: 0, .. }));
    }

    #[test]
    fn gradient_vanishes_at_mode() {
        let prefs = vec![
            PreferenceRecord::new(2, 0, 4),
            PreferenceRecord::new(2, 4, 3),
            PreferenceRecord::new(1, 0, 1),
            PreferenceRecord::new(3, 4, 2),
            PreferenceRecord::new(0, 2, 1),
        ];
        let hyper = GpHyperparams::default();
        let post = laplace_fit(&prefs, &GRID, &hyper).unwrap();
        let g = log_posterior_gradient(&prefs, &GRID, &hyper, &post.mean).unwrap();
        let norm = g.iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!(norm <= 1e-8, "{norm}");
    }

    #[test]
    fn lengthscale_search_picks_a_candidate() {
        let prefs = vec![PreferenceRecord::new(2, 0, 4), PreferenceRecord::new(2, 4, 4)];
        let post = fit_with_lengthscale_search(&prefs, &GRID, &GpHyperparams::default(), &LENGTHSCALE_CANDIDATES).unwrap();
        assert!(LENGTHSCALE_CANDIDATES.contains(&post.lengthscale));
        for &l in &LENGTHSCALE_CANDIDATES {
            let alt = laplace_fit(&prefs, &GRID, &GpHyperparams { lengthscale: l, ..Default::default() }).unwrap();
            assert!(alt.log_evidence <= post.log_evidence);
        }
    }
}
