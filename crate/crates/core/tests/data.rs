use ndarray::Array2;
use pbic_core::data::{
    load_binary, load_csv, ring_radius, save_binary, save_csv, standardize, synth_gaussian_clusters, synth_ring,
    IngestConfig,
};
use pbic_core::Dataset;
use proptest::prelude::*;

fn input_space_purity(data: &Dataset) -> f64 {
    let x = data.points();
    let labels = data.labels().unwrap();
    let n = data.n();
    let hits = (0..n)
        .filter(|&i| {
            let nn = (0..n)
                .filter(|&j| j != i)
                .min_by(|&a, &b| {
                    let da: f64 = x.row(a).iter().zip(x.row(i)).map(|(u, v)| (u - v).powi(2)).sum();
                    let db: f64 = x.row(b).iter().zip(x.row(i)).map(|(u, v)| (u - v).powi(2)).sum();
                    da.total_cmp(&db)
                })
                .unwrap();
            labels[nn] == labels[i]
        })
        .count();
    hits as f64 / n as f64
}

#[test]
fn separated_clusters_have_pure_neighborhoods() {
    for seed in 0..3 {
        let data = synth_gaussian_clusters(4, 50, 10, 20.0, seed).unwrap();
        assert!(input_space_purity(&data) >= 0.99);
    }
}

#[test]
fn ring_ids_recoverable_by_radius() {
    let data = synth_ring(60, 2, 5, 0.3, 8).unwrap();
    let threshold = (ring_radius(0) + ring_radius(1)) / 2.0;
    let x = data.points();
    for (i, &label) in data.labels().unwrap().iter().enumerate() {
        let r = x[[i, 0]].hypot(x[[i, 1]]);
        assert_eq!(label, i64::from(r > threshold), "row {i} radius {r}");
    }
}

#[test]
fn csv_and_binary_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let data = synth_gaussian_clusters(3, 7, 4, 5.0, 2).unwrap();
    let csv_path = dir.path().join("d.csv");
    save_csv(&data, &csv_path).unwrap();
    let cfg = IngestConfig { label_column: Some(0), standardize: false, ..Default::default() };
    let back = load_csv(&csv_path, &cfg).unwrap();
    assert_eq!(back.labels(), data.labels());
    let diff = (&back.points() - &data.points()).mapv(f64::abs).fold(0.0f64, |a, &b| a.max(b));
    assert!(diff <= 1e-12);

    let bin_path = dir.path().join("d.bin");
    save_binary(&data, &bin_path).unwrap();
    let back = load_binary(&bin_path).unwrap();
    assert_eq!(back.points(), data.points());
    assert_eq!(back.labels(), data.labels());
}

#[test]
fn unprintable_delimiter_rejected() {
    let cfg = IngestConfig { delimiter: 0x07, ..Default::default() };
    assert!(pbic_core::data::read_csv("1\x072\n".as_bytes(), "x", &cfg).is_err());
}

proptest! {
    #[test]
    fn standardization_is_idempotent(
        rows in 2usize..12,
        cols in 1usize..5,
        seed in proptest::collection::vec(-1e3f64..1e3, 60),
    ) {
        let mut m = Array2::from_shape_fn((rows, cols), |(i, j)| seed[(i * cols + j) % seed.len()] * (1.0 + i as f64));
        standardize(&mut m);
        let once = m.clone();
        standardize(&mut m);
        let diff = (&m - &once).mapv(f64::abs).fold(0.0f64, |a, &b| a.max(b));
        prop_assert!(diff <= 1e-12, "diff {}", diff);
    }

    #[test]
    fn generated_datasets_survive_csv(k in 1usize..4, per in 1usize..6, dim in 1usize..5, seed in 0u64..1000) {
        prop_assume!(k * per >= 3);
        let data = synth_gaussian_clusters(k, per, dim, 6.0, seed).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("g.csv");
        save_csv(&data, &path).unwrap();
        let cfg = IngestConfig { label_column: Some(0), standardize: false, ..Default::default() };
        let back = load_csv(&path, &cfg).unwrap();
        let diff = (&back.points() - &data.points()).mapv(f64::abs).fold(0.0f64, |a, &b| a.max(b));
        prop_assert!(diff <= 1e-12);
        prop_assert_eq!(back.labels(), data.labels());
    }
}
