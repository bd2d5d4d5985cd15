use pbic_core::data::synth_gaussian_clusters;
use pbic_core::search::{
    default_grid, description_length_report, pbic_score, refine, sweep, sweep_with_embeddings, SweepConfig,
};

/// Adjacent increases in KL along the grid, as fractions of the KL range.
fn kl_inversions(kl: &[f64]) -> Vec<f64> {
    let (lo, hi) = kl.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    kl.windows(2).filter(|w| w[1] > w[0]).map(|w| (w[1] - w[0]) / (hi - lo)).collect()
}

#[test]
fn four_clusters_follow_the_expected_curve_shapes() {
    let data = synth_gaussian_clusters(4, 50, 10, 10.0, 1).unwrap();
    let grid = default_grid(data.n()).unwrap();
    assert_eq!(grid, vec![8.0, 16.0, 32.0, 64.0, 100.0]);
    for base_seed in [0, 10, 20] {
        let s = sweep(&data, &grid, &SweepConfig { base_seed, ..Default::default() }).unwrap();
        let kl: Vec<f64> = s.kl.iter().map(|k| k.unwrap()).collect();
        let inv = kl_inversions(&kl);
        assert!(inv.len() <= 1 && inv.iter().all(|&r| r < 0.05), "kl {kl:?}");
        let k = s.selected_index.unwrap();
        assert!(k > 0 && k + 1 < grid.len(), "selected endpoint {k}: {:?}", s.score);
        assert!(s.scores_consistent());
    }
}

#[test]
fn sweep_is_deterministic_and_matches_embeddings() {
    let data = synth_gaussian_clusters(3, 20, 5, 8.0, 4).unwrap();
    let cfg = SweepConfig { base_seed: 3, ..Default::default() };
    let grid = [4.0, 8.0, 16.0];
    let (a, emb) = sweep_with_embeddings(&data, &grid, &cfg).unwrap();
    let b = sweep(&data, &grid, &cfg).unwrap();
    assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
    for (i, e) in emb.iter().enumerate() {
        let e = e.as_ref().unwrap();
        assert_eq!(e.seed, 3 + i as u64);
        assert_eq!(Some(e.final_kl), a.kl[i]);
        let want = 2.0 * e.final_kl + (data.n() as f64).ln() * grid[i] / data.n() as f64;
        assert_eq!(a.score[i], Some(want));
    }
}

#[test]
fn refinement_never_worsens_selection() {
    let data = synth_gaussian_clusters(3, 20, 5, 8.0, 4).unwrap();
    let coarse = sweep(&data, &[4.0, 8.0, 16.0], &SweepConfig::default()).unwrap();
    let fine = refine(&data, &coarse, 2).unwrap();
    let best = |s: &pbic_core::search::PerplexitySweep| s.score[s.selected_index.unwrap()].unwrap();
    assert!(best(&fine) <= best(&coarse));
    assert!(fine.grid.len() > coarse.grid.len());
    assert!(fine.grid.windows(2).all(|w| w[0] < w[1]));
    for g in &coarse.grid {
        assert!(fine.grid.contains(g));
    }
}

#[test]
fn description_length_matches_independent_formula() {
    for (kl, n, perp) in [(0.0, 10, 3.0), (1.5, 1000, 100.0), (0.37, 1797, 128.0)] {
        let r = description_length_report(kl, n, perp).unwrap();
        let m = (n * (n - 1) / 2) as f64;
        assert_eq!(r.pairs as f64, m);
        assert_eq!(r.error_bits, m * (kl / std::f64::consts::LN_2));
        assert_eq!(r.index_bits, n as f64 * (n as f64).log2() * perp);
        assert_eq!(r.total, r.error_bits + r.index_bits);
        assert!(pbic_score(kl, n, perp).unwrap() >= 2.0 * kl);
    }
}

#[test]
fn embed_point_reproduces_sweep_entries() {
    let data = synth_gaussian_clusters(3, 20, 5, 8.0, 4).unwrap();
    let cfg = SweepConfig { base_seed: 11, restarts: 2, ..Default::default() };
    let grid = [4.0, 8.0];
    let (s, emb) = sweep_with_embeddings(&data, &grid, &cfg).unwrap();
    for i in 0..2 {
        let again = pbic_core::search::embed_point(&data, grid[i], &cfg, s.seed[i]).unwrap();
        assert_eq!(Some(&again), emb[i].as_ref());
    }
}
