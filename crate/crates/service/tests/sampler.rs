use std::collections::HashMap;

use pbic_service::sampler::SamplerState;

#[test]
fn ten_thousand_draws_are_uniform_over_pairs() {
    for seed in [0, 1, 2] {
        let mut s = SamplerState::new(seed);
        let mut counts: HashMap<(usize, usize), u32> = HashMap::new();
        let draws = 10_000;
        for _ in 0..draws {
            let p = s.next_pair(8);
            assert_ne!(p.left, p.right);
            *counts.entry((p.left.min(p.right), p.left.max(p.right))).or_default() += 1;
        }
        assert_eq!(counts.len(), 28);
        let prob = 1.0 / 28.0;
        let expected = draws as f64 * prob;
        let sigma = (draws as f64 * prob * (1.0 - prob)).sqrt();
        for (pair, &c) in &counts {
            assert!((f64::from(c) - expected).abs() <= 3.0 * sigma, "{pair:?}: {c}");
        }
        // Chi-square against uniform, 27 degrees of freedom; 99.9% quantile is 55.5.
        let chi2: f64 = counts.values().map(|&c| (f64::from(c) - expected).powi(2) / expected).sum();
        assert!(chi2 < 55.5, "chi2 {chi2}");
    }
}

#[test]
fn same_seed_same_sequence() {
    let mut a = SamplerState::new(42);
    let mut b = SamplerState::new(42);
    for _ in 0..500 {
        assert_eq!(a.next_pair(9), b.next_pair(9));
    }
}
