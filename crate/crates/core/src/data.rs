//! Dataset ingestion, serialization and seeded synthetic generators.

use ndarray::{Array2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;
use thiserror::Error;

use crate::{Dataset, DatasetError};

#[derive(Debug, Error)]
pub enum DataError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("line {line}: expected {expected} fields, found {found}")]
    Ragged { line: u64, expected: usize, found: usize },
    #[error("line {line}, column {column}: cannot parse {value:?} as a finite number")]
    Parse { line: u64, column: usize, value: String },
    #[error("line {line}: label {value:?} is not an integer")]
    Label { line: u64, value: String },
    #[error("label column {column} is outside a row of width {width}")]
    LabelColumn { column: usize, width: usize },
    #[error("file contains no data rows")]
    Empty,
    #[error("malformed binary dataset: {0}")]
    Binary(String),
    #[error("invalid generator arguments: {0}")]
    InvalidArgs(String),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct IngestConfig {
    pub delimiter: u8,
    pub has_header: bool,
    pub label_column: Option<usize>,
    pub standardize: bool,
    pub max_rows: Option<usize>,
}

impl Default for IngestConfig {
    fn default() -> Self {
        Self { delimiter: b',', has_header: false, label_column: None, standardize: true, max_rows: None }
    }
}

fn parse_label(raw: &str, line: u64) -> Result<i64, DataError> {
    let raw = raw.trim();
    if let Ok(v) = raw.parse::<i64>() {
        return Ok(v);
    }
    match raw.parse::<f64>() {
        Ok(v) if v.is_finite() && v.fract() == 0.0 && v.abs() < 9.0e15 => Ok(v as i64),
        _ => Err(DataError::Label { line, value: raw.to_string() }),
    }
}

/// Reads a numeric CSV. Labels, when configured, are split off before
/// optional per-column standardization.
pub fn load_csv(path: impl AsRef<Path>, config: &IngestConfig) -> Result<Dataset, DataError> {
    let path = path.as_ref();
    let name = path.file_stem().and_then(|s| s.to_str()).unwrap_or("dataset").to_string();
    let file = File::open(path)?;
    read_csv(BufReader::new(file), name, config)
}

pub fn read_csv(reader: impl Read, name: impl Into<String>, config: &IngestConfig) -> Result<Dataset, DataError> {
    if !(config.delimiter.is_ascii_graphic() || config.delimiter == b'\t' || config.delimiter == b' ') {
        return Err(DataError::InvalidArgs(format!("unprintable delimiter byte {:#04x}", config.delimiter)));
    }
    let mut rdr = csv::ReaderBuilder::new()
        .delimiter(config.delimiter)
        .has_headers(config.has_header)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);

    let mut width = None;
    let mut values = Vec::new();
    let mut labels = Vec::new();
    let mut rows = 0usize;
    for record in rdr.records() {
        if config.max_rows.is_some_and(|m| rows >= m) {
            break;
        }
        let record = record?;
        let line = record.position().map_or(0, |p| p.line());
        if record.len() == 1 && record[0].is_empty() {
            continue;
        }
        let expected = *width.get_or_insert(record.len());
        if record.len() != expected {
            return Err(DataError::Ragged { line, expected, found: record.len() });
        }
        if let Some(column) = config.label_column {
            if column >= expected {
                return Err(DataError::LabelColumn { column, width: expected });
            }
        }
        for (column, cell) in record.iter().enumerate() {
            if Some(column) == config.label_column {
                labels.push(parse_label(cell, line)?);
                continue;
            }
            match cell.parse::<f64>() {
                Ok(v) if v.is_finite() => values.push(v),
                _ => return Err(DataError::Parse { line, column, value: cell.to_string() }),
            }
        }
        rows += 1;
    }
    let width = width.ok_or(DataError::Empty)?;
    let d = width - usize::from(config.label_column.is_some());
    let mut points = Array2::from_shape_vec((rows, d), values).expect("rectangular by construction");
    if config.standardize {
        standardize(&mut points);
    }
    let labels = config.label_column.map(|_| labels);
    Ok(Dataset::new(name, points, labels)?)
}

/// Centers each column and scales it to unit population standard deviation.
/// Constant columns are only centered.
pub fn standardize(points: &mut Array2<f64>) {
    let n = points.nrows() as f64;
    for mut col in points.axis_iter_mut(Axis(1)) {
        let mean = col.sum() / n;
        col.mapv_inplace(|v| v - mean);
        let sd = (col.iter().map(|v| v * v).sum::<f64>() / n).sqrt();
        if sd > 0.0 {
            col.mapv_inplace(|v| v / sd);
        }
    }
}

/// Writes labels (if any) as the first column, then features, using the
/// shortest representation that round-trips exactly.
pub fn save_csv(dataset: &Dataset, path: impl AsRef<Path>) -> Result<(), DataError> {
    let mut out = BufWriter::new(File::create(path)?);
    let labels = dataset.labels();
    for (i, row) in dataset.points().rows().into_iter().enumerate() {
        let mut fields: Vec<String> = Vec::with_capacity(row.len() + 1);
        if let Some(l) = labels {
            fields.push(l[i].to_string());
        }
        fields.extend(row.iter().map(|v| v.to_string()));
        writeln!(out, "{}", fields.join(","))?;
    }
    out.flush()?;
    Ok(())
}

/// Binary layout (little endian): `n: u64, d: u64, has_labels: u8`, then
/// `n·d` row-major `f64`, then `n` `i64` labels when present.
pub fn write_binary(dataset: &Dataset, mut out: impl Write) -> Result<(), DataError> {
    out.write_all(&(dataset.n() as u64).to_le_bytes())?;
    out.write_all(&(dataset.dim() as u64).to_le_bytes())?;
    out.write_all(&[u8::from(dataset.labels().is_some())])?;
    for v in dataset.points().iter() {
        out.write_all(&v.to_le_bytes())?;
    }
    if let Some(labels) = dataset.labels() {
        for l in labels {
            out.write_all(&l.to_le_bytes())?;
        }
    }
    Ok(())
}

pub fn read_binary(mut input: impl Read, name: impl Into<String>) -> Result<Dataset, DataError> {
    let mut word = [0u8; 8];
    let mut read_u64 = |input: &mut dyn Read| -> Result<u64, DataError> {
        input.read_exact(&mut word).map_err(|e| DataError::Binary(e.to_string()))?;
        Ok(u64::from_le_bytes(word))
    };
    let n = read_u64(&mut input)? as usize;
    let d = read_u64(&mut input)? as usize;
    let mut flag = [0u8; 1];
    input.read_exact(&mut flag).map_err(|e| DataError::Binary(e.to_string()))?;
    if flag[0] > 1 {
        return Err(DataError::Binary(format!("bad label flag {}", flag[0])));
    }
    let cells = n.checked_mul(d).ok_or_else(|| DataError::Binary("size overflow".into()))?;
    let mut values = Vec::with_capacity(cells.min(1 << 24));
    for _ in 0..cells {
        values.push(f64::from_bits(read_u64(&mut input)?));
    }
    let labels = if flag[0] == 1 {
        Some((0..n).map(|_| read_u64(&mut input).map(|v| v as i64)).collect::<Result<Vec<_>, _>>()?)
    } else {
        None
    };
    let points = Array2::from_shape_vec((n, d), values).map_err(|e| DataError::Binary(e.to_string()))?;
    Ok(Dataset::new(name, points, labels)?)
}

pub fn save_binary(dataset: &Dataset, path: impl AsRef<Path>) -> Result<(), DataError> {
    let mut out = BufWriter::new(File::create(path)?);
    write_binary(dataset, &mut out)?;
    out.flush()?;
    Ok(())
}

pub fn load_binary(path: impl AsRef<Path>) -> Result<Dataset, DataError> {
    let path = path.as_ref();
    let name = path.file_stem().and_then(|s| s.to_str()).unwrap_or("dataset").to_string();
    read_binary(BufReader::new(File::open(path)?), name)
}

fn cluster_centers(k: usize, dim: usize, separation: f64, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    if k <= dim {
        // Scaled simplex corners: every pair sits exactly `separation` apart.
        let s = separation / std::f64::consts::SQRT_2;
        return (0..k)
            .map(|c| (0..dim).map(|j| if j == c { s } else { 0.0 }).collect())
            .collect();
    }
    let mut radius = separation * k as f64;
    loop {
        let mut centers: Vec<Vec<f64>> = Vec::with_capacity(k);
        for _ in 0..1000 * k {
            if centers.len() == k {
                break;
            }
            let dir: Vec<f64> = (0..dim).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
            let norm = dir.iter().map(|v| v * v).sum::<f64>().sqrt().max(f64::MIN_POSITIVE);
            // Uniform in the ball, so that k > 2 centers also fit in one dimension.
            let r = radius * rng.random::<f64>().powf(1.0 / dim as f64);
            let c: Vec<f64> = dir.iter().map(|v| v / norm * r).collect();
            let far = centers
                .iter()
                .all(|o| o.iter().zip(&c).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt() >= separation);
            if far {
                centers.push(c);
            }
        }
        if centers.len() == k {
            return centers;
        }
        radius *= 2.0;
    }
}

/// `k` unit-variance Gaussian blobs whose centers are pairwise at least
/// `separation` apart. Labels are cluster ids.
pub fn synth_gaussian_clusters(
    k: usize,
    per_cluster: usize,
    dim: usize,
    separation: f64,
    seed: u64,
) -> Result<Dataset, DataError> {
    if k == 0 || dim == 0 || per_cluster == 0 {
        return Err(DataError::InvalidArgs("k, per_cluster and dim must be positive".into()));
    }
    if !(separation > 0.0 && separation.is_finite()) {
        return Err(DataError::InvalidArgs("separation must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let centers = cluster_centers(k, dim, separation, &mut rng);
    let n = k * per_cluster;
    let mut values = Vec::with_capacity(n * dim);
    let mut labels = Vec::with_capacity(n);
    for (c, center) in centers.iter().enumerate() {
        for _ in 0..per_cluster {
            values.extend(center.iter().map(|m| m + rng.sample::<f64, _>(StandardNormal)));
            labels.push(c as i64);
        }
    }
    let points = Array2::from_shape_vec((n, dim), values).expect("n x dim");
    Ok(Dataset::new(format!("clusters-k{k}-s{seed}"), points, Some(labels))?)
}

/// Radius of ring `r` (zero based).
pub fn ring_radius(r: usize) -> f64 {
    5.0 * (r + 1) as f64
}

/// Concentric circles in the first two coordinates (radius `5 (r + 1)` for
/// ring `r`), evenly spaced with a random phase per ring, plus isotropic
/// Gaussian noise of standard deviation `noise` in every coordinate.
pub fn synth_ring(per_ring: usize, rings: usize, dim: usize, noise: f64, seed: u64) -> Result<Dataset, DataError> {
    if per_ring == 0 || rings == 0 || dim < 2 {
        return Err(DataError::InvalidArgs("need per_ring >= 1, rings >= 1 and dim >= 2".into()));
    }
    if !(noise >= 0.0 && noise.is_finite()) {
        return Err(DataError::InvalidArgs("noise must be non-negative".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = per_ring * rings;
    let mut values = Vec::with_capacity(n * dim);
    let mut labels = Vec::with_capacity(n);
    let jitter = Normal::new(0.0, noise.max(f64::MIN_POSITIVE)).expect("valid stddev");
    for r in 0..rings {
        let radius = ring_radius(r);
        let phase = rng.random::<f64>() * std::f64::consts::TAU;
        for i in 0..per_ring {
            let theta = phase + std::f64::consts::TAU * i as f64 / per_ring as f64;
            for j in 0..dim {
                let base = match j {
                    0 => radius * theta.cos(),
                    1 => radius * theta.sin(),
                    _ => 0.0,
                };
                let eps = if noise > 0.0 { jitter.sample(&mut rng) } else { 0.0 };
                values.push(base + eps);
            }
            labels.push(r as i64);
        }
    }
    let points = Array2::from_shape_vec((n, dim), values).expect("n x dim");
    Ok(Dataset::new(format!("rings-{rings}-s{seed}"), points, Some(labels))?)
}
