use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::objective::gradient_into;
use super::{compute_q, kl_divergence, JointAffinity, TsneError};

const MIN_GAIN: f64 = 0.01;
const KL_CHECK_EVERY: usize = 50;
const CONVERGED_REL_CHANGE: f64 = 1e-3;

/// Gradient-descent settings. Defaults follow the reference t-SNE recipe.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OptimizerConfig {
    pub max_iters: usize,
    pub learning_rate: f64,
    pub momentum_early: f64,
    pub momentum_late: f64,
    pub momentum_switch_iter: usize,
    pub exaggeration_factor: f64,
    pub exaggeration_iters: usize,
    pub init_stddev: f64,
    /// Per-coordinate adaptive gains (delta-bar-delta).
    pub adaptive_gains: bool,
    /// Stop once the gradient norm falls below this, after exaggeration ends.
    /// Zero disables the check.
    pub min_grad_norm: f64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            max_iters: 1000,
            learning_rate: 200.0,
            momentum_early: 0.5,
            momentum_late: 0.8,
            momentum_switch_iter: 250,
            exaggeration_factor: 4.0,
            exaggeration_iters: 100,
            init_stddev: 1e-2,
            adaptive_gains: true,
            min_grad_norm: 0.0,
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<(), TsneError> {
        let bad = |msg: &str| Err(TsneError::InvalidConfig(msg.to_string()));
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be positive");
        }
        if !(0.0..1.0).contains(&self.momentum_early) || !(0.0..1.0).contains(&self.momentum_late) {
            return bad("momentum must lie in [0, 1)");
        }
        if self.momentum_switch_iter > self.max_iters {
            return bad("momentum_switch_iter exceeds max_iters");
        }
        if !(self.exaggeration_factor >= 1.0 && self.exaggeration_factor.is_finite()) {
            return bad("exaggeration_factor must be >= 1");
        }
        if self.exaggeration_iters > self.max_iters {
            return bad("exaggeration_iters exceeds max_iters");
        }
        if !(self.init_stddev > 0.0 && self.init_stddev.is_finite()) {
            return bad("init_stddev must be positive");
        }
        if !(self.min_grad_norm >= 0.0) {
            return bad("min_grad_norm must be non-negative");
        }
        Ok(())
    }
}

/// A 2-D embedding and the provenance needed to reproduce it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Embedding {
    pub coords: Vec<[f64; 2]>,
    /// KL(P || Q) in nats against the unexaggerated P.
    pub final_kl: f64,
    pub perplexity: Option<f64>,
    pub seed: u64,
    pub iterations_run: usize,
    pub converged: bool,
}

impl Embedding {
    pub fn n(&self) -> usize {
        self.coords.len()
    }
}

pub(crate) fn initial_coords(n: usize, stddev: f64, seed: u64) -> Vec<[f64; 2]> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, stddev).expect("positive stddev");
    (0..n).map(|_| [normal.sample(&mut rng), normal.sample(&mut rng)]).collect()
}

fn recenter(coords: &mut [[f64; 2]]) {
    let n = coords.len() as f64;
    let (sx, sy) = coords.iter().fold((0.0, 0.0), |(a, b), c| (a + c[0], b + c[1]));
    let (mx, my) = (sx / n, sy / n);
    for c in coords.iter_mut() {
        c[0] -= mx;
        c[1] -= my;
    }
}

fn kl_at(p: &JointAffinity, coords: &[[f64; 2]]) -> Result<f64, TsneError> {
    let (q, _) = compute_q(coords)?;
    kl_divergence(p, &q)
}

/// Minimizes KL(P || Q) from a seeded Gaussian start. The result is a pure
/// function of `(p, config, seed)`.
pub fn run_tsne(p: &JointAffinity, config: &OptimizerConfig, seed: u64) -> Result<Embedding, TsneError> {
    config.validate()?;
    let n = p.n();
    if n < 2 {
        return Err(TsneError::TooFewPoints { n, min: 2 });
    }
    let owned;
    let p = if p.probs.is_standard_layout() {
        p
    } else {
        owned = JointAffinity { probs: p.probs.as_standard_layout().into_owned(), ..p.clone() };
        &owned
    };

    let mut coords = initial_coords(n, config.init_stddev, seed);
    let mut grad = vec![[0.0; 2]; n];
    let mut velocity = vec![[0.0; 2]; n];
    let mut gains = vec![[1.0f64; 2]; n];
    let mut last_kl: Option<f64> = None;
    let mut converged = false;
    let mut iterations_run = 0;

    for iter in 0..config.max_iters {
        let scale = if iter < config.exaggeration_iters { config.exaggeration_factor } else { 1.0 };
        let momentum = if iter < config.momentum_switch_iter { config.momentum_early } else { config.momentum_late };
        gradient_into(p, scale, &coords, &mut grad);

        for ((g, v), (gain, y)) in grad.iter().zip(velocity.iter_mut()).zip(gains.iter_mut().zip(coords.iter_mut())) {
            for k in 0..2 {
                if config.adaptive_gains {
                    gain[k] = if (g[k] > 0.0) != (v[k] > 0.0) { gain[k] + 0.2 } else { (gain[k] * 0.8).max(MIN_GAIN) };
                }
                v[k] = momentum * v[k] - config.learning_rate * gain[k] * g[k];
                y[k] += v[k];
            }
        }
        recenter(&mut coords);
        iterations_run = iter + 1;
        if coords.iter().any(|c| !c[0].is_finite() || !c[1].is_finite()) {
            return Err(TsneError::Diverged { iteration: iter });
        }

        if iter >= config.exaggeration_iters {
            let norm = grad.iter().map(|g| g[0] * g[0] + g[1] * g[1]).sum::<f64>().sqrt();
            if config.min_grad_norm > 0.0 && norm < config.min_grad_norm {
                converged = true;
                break;
            }
            if (iter + 1) % KL_CHECK_EVERY == 0 {
                let kl = kl_at(p, &coords)?;
                converged = last_kl.is_some_and(|prev| (prev - kl).abs() <= CONVERGED_REL_CHANGE * prev.abs());
                last_kl = Some(kl);
            }
        }
    }

    let final_kl = kl_at(p, &coords)?.max(0.0);
    Ok(Embedding {
        coords,
        final_kl,
        perplexity: p.perplexity,
        seed,
        iterations_run,
        converged,
    })
}
