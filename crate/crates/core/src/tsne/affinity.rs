use ndarray::{Array2, ArrayView2};
use rayon::prelude::*;

use super::bandwidth::{conditional_row, sigma_search};
use super::{
    AffinityKind, ConditionalAffinity, JointAffinity, RowStatus, TsneError, BISECTION_MAX_ITERS, PERPLEXITY_TOL,
};
use crate::Dataset;

/// Squared Euclidean distances between all rows. Symmetric with an exactly
/// zero diagonal.
pub fn pairwise_sq_distances(points: ArrayView2<'_, f64>) -> Result<Array2<f64>, TsneError> {
    if let Some(row) = points.rows().into_iter().position(|r| r.iter().any(|v| !v.is_finite())) {
        return Err(TsneError::NonFinite { row });
    }
    let points = points.as_standard_layout();
    let n = points.nrows();
    let rows: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let xi = points.row(i);
            (0..n)
                .map(|j| {
                    xi.iter()
                        .zip(points.row(j).iter())
                        .map(|(a, b)| (a - b) * (a - b))
                        .sum::<f64>()
                })
                .collect()
        })
        .collect();
    let flat: Vec<f64> = rows.into_iter().flatten().collect();
    Ok(Array2::from_shape_vec((n, n), flat).expect("n*n distances"))
}

fn check_perplexity(perplexity: f64, n: usize) -> Result<(), TsneError> {
    let max = n as f64 - 1.0;
    if !(perplexity > 1.0 && perplexity < max) {
        return Err(TsneError::PerplexityOutOfRange { perplexity, n, max });
    }
    Ok(())
}

/// High-dimensional joint affinities `p_ij = (p(i|j) + p(j|i)) / 2n`, with
/// each conditional's bandwidth matched to `perplexity`.
pub fn compute_p_joint(
    data: &Dataset,
    perplexity: f64,
) -> Result<(JointAffinity, ConditionalAffinity), TsneError> {
    check_perplexity(perplexity, data.n())?;
    let dist = pairwise_sq_distances(data.points())?;
    compute_p_joint_from_distances(&dist, perplexity)
}

pub fn compute_p_joint_from_distances(
    dist: &Array2<f64>,
    perplexity: f64,
) -> Result<(JointAffinity, ConditionalAffinity), TsneError> {
    let n = dist.nrows();
    if dist.ncols() != n {
        return Err(TsneError::SizeMismatch { left: n, right: dist.ncols() });
    }
    if n < 3 {
        return Err(TsneError::TooFewPoints { n, min: 3 });
    }
    check_perplexity(perplexity, n)?;

    let dist = dist.as_standard_layout();
    // Row j of `by_source` holds the conditional distribution p(. | j).
    let fitted: Vec<(Vec<f64>, f64, f64, RowStatus)> = (0..n)
        .into_par_iter()
        .map(|j| {
            let row = dist.row(j);
            let row = row.as_slice().expect("standard layout");
            let (bw, status) = match sigma_search(row, j, perplexity, PERPLEXITY_TOL, BISECTION_MAX_ITERS) {
                Ok(bw) => (bw, RowStatus::Matched),
                Err(e) => {
                    let status = match e {
                        super::BandwidthError::NotConverged { .. } => RowStatus::NotConverged,
                        _ => RowStatus::Saturated,
                    };
                    (e.fallback().expect("range checked above"), status)
                }
            };
            let mut out = vec![0.0; n];
            conditional_row(row, j, bw.sigma, &mut out);
            (out, bw.sigma, bw.perplexity, status)
        })
        .collect();

    let mut by_source = Array2::<f64>::zeros((n, n));
    let mut sigmas = Vec::with_capacity(n);
    let mut achieved = Vec::with_capacity(n);
    let mut status = Vec::with_capacity(n);
    for (j, (row, sigma, perp, st)) in fitted.into_iter().enumerate() {
        by_source.row_mut(j).assign(&ndarray::ArrayView1::from(&row));
        sigmas.push(sigma);
        achieved.push(perp);
        status.push(st);
    }

    let denom = 2.0 * n as f64;
    let joint = Array2::from_shape_fn((n, n), |(i, j)| (by_source[[j, i]] + by_source[[i, j]]) / denom);
    let conditional = ConditionalAffinity {
        probs: by_source.reversed_axes().as_standard_layout().into_owned(),
        sigmas,
        achieved_perplexities: achieved,
        status,
    };
    Ok((
        JointAffinity { probs: joint, kind: AffinityKind::HighDim, perplexity: Some(perplexity) },
        conditional,
    ))
}

/// Student-t affinities of a 2-D embedding, normalized over ordered pairs.
/// Returns the distribution and its normalizer `Z`.
pub fn compute_q(coords: &[[f64; 2]]) -> Result<(JointAffinity, f64), TsneError> {
    let n = coords.len();
    if n < 2 {
        return Err(TsneError::TooFewPoints { n, min: 2 });
    }
    if let Some(row) = coords.iter().position(|c| !c[0].is_finite() || !c[1].is_finite()) {
        return Err(TsneError::NonFinite { row });
    }
    let kernel = Array2::from_shape_fn((n, n), |(i, j)| {
        if i == j {
            0.0
        } else {
            let dx = coords[i][0] - coords[j][0];
            let dy = coords[i][1] - coords[j][1];
            1.0 / (1.0 + dx * dx + dy * dy)
        }
    });
    let z: f64 = kernel.rows().into_iter().map(|r| r.sum()).sum();
    Ok((JointAffinity { probs: kernel / z, kind: AffinityKind::LowDim, perplexity: None }, z))
}
