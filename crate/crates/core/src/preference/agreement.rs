use serde::{Deserialize, Serialize};

use super::{GpError, UtilityPosterior};

/// Whether the utility at the penalized-KL choice falls below the 1σ band
/// around the inferred utility peak.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgreementVerdict {
    pub human_argmax_index: usize,
    pub pbic_index: usize,
    pub utility_at_pbic: f64,
    /// Mean at the peak minus one posterior standard deviation.
    pub lower_bound: f64,
    /// Mean at the peak plus one posterior standard deviation.
    pub upper_bound: f64,
    pub significant_difference: bool,
}

pub fn agreement_check(posterior: &UtilityPosterior, pbic_index: usize) -> Result<AgreementVerdict, GpError> {
    let m = posterior.mean.len();
    if pbic_index >= m {
        return Err(GpError::IndexOutOfRange { index: pbic_index, len: m });
    }
    // First maximum wins ties.
    let peak = (0..m).fold(0, |best, i| if posterior.mean[i] > posterior.mean[best] { i } else { best });
    let sd = posterior.variance[peak].max(0.0).sqrt();
    let lower_bound = posterior.mean[peak] - sd;
    let utility_at_pbic = posterior.mean[pbic_index];
    Ok(AgreementVerdict {
        human_argmax_index: peak,
        pbic_index,
        utility_at_pbic,
        lower_bound,
        upper_bound: posterior.mean[peak] + sd,
        significant_difference: utility_at_pbic < lower_bound,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn posterior(mean: Vec<f64>, variance: Vec<f64>) -> UtilityPosterior {
        UtilityPosterior {
            grid: (0..mean.len()).map(|i| 8.0 * 2f64.powi(i as i32)).collect(),
            mean,
            variance,
            mode_found: true,
            newton_iterations: 0,
            log_evidence: 0.0,
            lengthscale: 1.5,
            kernel_variance: 1.0,
            likelihood_noise: 1.0,
        }
    }

    #[test]
    fn two_point_arithmetic() {
        let v = agreement_check(&posterior(vec![0.0, 1.0], vec![0.04, 0.04]), 0).unwrap();
        assert_eq!(v.human_argmax_index, 1);
        assert!((v.lower_bound - 0.8).abs() < 1e-15);
        assert!(v.significant_difference);
    }

    #[test]
    fn peak_is_never_significant() {
        let p = posterior(vec![0.3, 0.9, -0.2], vec![0.0, 0.0, 0.0]);
        let v = agreement_check(&p, 1).unwrap();
        assert_eq!(v.human_argmax_index, 1);
        assert!(!v.significant_difference);
        assert!(agreement_check(&p, 3).is_err());
    }

    proptest! {
        #[test]
        fn wider_bands_only_remove_significance(
            mean in prop::collection::vec(-2.0f64..2.0, 2..10),
            var in prop::collection::vec(0.0f64..1.0, 10),
            idx in 0usize..10,
        ) {
            let m = mean.len();
            let idx = idx % m;
            let var = var[..m].to_vec();
            let tight = agreement_check(&posterior(mean.clone(), var.clone()), idx).unwrap();
            let wide = agreement_check(&posterior(mean, var.iter().map(|v| v * 100.0).collect()), idx).unwrap();
            prop_assert!(!wide.significant_difference || tight.significant_difference);
        }

        #[test]
        fn verdict_ignores_other_entries(
            mean in prop::collection::vec(-2.0f64..2.0, 3..10),
            var in prop::collection::vec(0.0f64..1.0, 10),
            idx in 0usize..10,
            seed in any::<u64>(),
        ) {
            let m = mean.len();
            let idx = idx % m;
            let var = var[..m].to_vec();
            let base = agreement_check(&posterior(mean.clone(), var.clone()), idx).unwrap();
            let keep = [base.human_argmax_index, idx];
            let movable: Vec<usize> = (0..m).filter(|i| !keep.contains(i)).collect();
            // Rotate the remaining entries among themselves, keeping them below the peak.
            let mut mean2 = mean.clone();
            let mut var2 = var.clone();
            let cap = mean[base.human_argmax_index];
            for (k, &i) in movable.iter().enumerate() {
                let j = movable[(k + 1 + seed as usize % movable.len().max(1)) % movable.len()];
                mean2[i] = mean[j].min(cap - 1e-9);
                var2[i] = var[j];
            }
            let moved = agreement_check(&posterior(mean2, var2), idx).unwrap();
            prop_assert_eq!(moved.significant_difference, base.significant_difference);
            prop_assert_eq!(moved.lower_bound, base.lower_bound);
        }
    }
}
