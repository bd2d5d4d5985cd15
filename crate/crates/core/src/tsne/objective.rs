use rayon::prelude::*;

use super::{JointAffinity, TsneError, PROB_FLOOR};

/// `KL(P || Q) = Σ_{i≠j} p_ij ln(p_ij / q_ij)` in nats. Terms with `p_ij = 0`
/// contribute nothing; `q_ij` is floored at [`PROB_FLOOR`].
pub fn kl_divergence(p: &JointAffinity, q: &JointAffinity) -> Result<f64, TsneError> {
    let n = p.n();
    if q.n() != n {
        return Err(TsneError::SizeMismatch { left: n, right: q.n() });
    }
    let rows: Vec<Result<f64, TsneError>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut acc = 0.0;
            for j in 0..n {
                let pij = p.probs[[i, j]];
                if i == j || pij <= 0.0 {
                    continue;
                }
                let qij = q.probs[[i, j]];
                if qij <= 0.0 {
                    return Err(TsneError::InfiniteDivergence { i, j });
                }
                acc += pij * (pij / qij.max(PROB_FLOOR)).ln();
            }
            Ok(acc)
        })
        .collect();
    rows.into_iter().sum()
}

/// Fills `grad` with `∂KL/∂y_i` for the (optionally exaggerated) affinities
/// `scale * P`, and returns the Student-t normalizer `Z`.
///
/// One pass per row: with `w_ij = (1 + |y_i − y_j|²)⁻¹`,
/// `grad_i = 4 (scale Σ_j p_ij w_ij Δ_ij − Z⁻¹ Σ_j w_ij² Δ_ij)`.
/// Per-row partial sums are reduced in index order, so the result does not
/// depend on the thread count.
pub(crate) fn gradient_into(p: &JointAffinity, scale: f64, coords: &[[f64; 2]], grad: &mut [[f64; 2]]) -> f64 {
    let n = coords.len();
    debug_assert_eq!(p.n(), n);
    debug_assert_eq!(grad.len(), n);
    let probs = p.probs.as_slice().expect("standard layout");
    let partials: Vec<(f64, [f64; 2], [f64; 2])> = (0..n)
        .into_par_iter()
        .map(|i| {
            let [xi, yi] = coords[i];
            let prow = &probs[i * n..(i + 1) * n];
            let mut sum_w = 0.0;
            let mut attr = [0.0, 0.0];
            let mut rep = [0.0, 0.0];
            for (&[xj, yj], &pij) in coords.iter().zip(prow) {
                let dx = xi - xj;
                let dy = yi - yj;
                let w = 1.0 / (1.0 + dx * dx + dy * dy);
                sum_w += w;
                let pw = pij * w;
                attr[0] += pw * dx;
                attr[1] += pw * dy;
                let ww = w * w;
                rep[0] += ww * dx;
                rep[1] += ww * dy;
            }
            // The self term contributes w = 1 to the normalizer and zero to both forces.
            (sum_w - 1.0, attr, rep)
        })
        .collect();
    let z: f64 = partials.iter().map(|t| t.0).sum();
    for (g, (_, attr, rep)) in grad.iter_mut().zip(&partials) {
        g[0] = 4.0 * (scale * attr[0] - rep[0] / z);
        g[1] = 4.0 * (scale * attr[1] - rep[1] / z);
    }
    z
}

/// Analytic gradient of `KL(P || Q(coords))` with respect to every `y_i`.
pub fn kl_gradient(p: &JointAffinity, coords: &[[f64; 2]]) -> Result<Vec<[f64; 2]>, TsneError> {
    if p.n() != coords.len() {
        return Err(TsneError::SizeMismatch { left: p.n(), right: coords.len() });
    }
    let p = if p.probs.is_standard_layout() {
        std::borrow::Cow::Borrowed(p)
    } else {
        let mut owned = p.clone();
        owned.probs = owned.probs.as_standard_layout().into_owned();
        std::borrow::Cow::Owned(owned)
    };
    let mut grad = vec![[0.0; 2]; coords.len()];
    gradient_into(&p, 1.0, coords, &mut grad);
    Ok(grad)
}
