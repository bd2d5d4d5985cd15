use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DatasetError {
    #[error("dataset needs at least 3 points, got {0}")]
    TooFewPoints(usize),
    #[error("dataset needs at least one feature column")]
    NoFeatures,
    #[error("non-finite value at row {row}, column {col}")]
    NonFinite { row: usize, col: usize },
    #[error("expected {expected} labels, got {got}")]
    LabelLength { expected: usize, got: usize },
}

/// An `n x d` table of finite features with optional integer class labels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    name: String,
    points: Array2<f64>,
    labels: Option<Vec<i64>>,
}

impl Dataset {
    pub fn new(
        name: impl Into<String>,
        points: Array2<f64>,
        labels: Option<Vec<i64>>,
    ) -> Result<Self, DatasetError> {
        let (n, d) = points.dim();
        if n < 3 {
            return Err(DatasetError::TooFewPoints(n));
        }
        if d == 0 {
            return Err(DatasetError::NoFeatures);
        }
        if let Some(((row, col), _)) = points.indexed_iter().find(|(_, v)| !v.is_finite()) {
            return Err(DatasetError::NonFinite { row, col });
        }
        if let Some(labels) = &labels {
            if labels.len() != n {
                return Err(DatasetError::LabelLength { expected: n, got: labels.len() });
            }
        }
        // Row-major storage keeps row slices contiguous for the distance loops.
        let points = points.as_standard_layout().into_owned();
        Ok(Self { name: name.into(), points, labels })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn n(&self) -> usize {
        self.points.nrows()
    }

    pub fn dim(&self) -> usize {
        self.points.ncols()
    }

    pub fn points(&self) -> ArrayView2<'_, f64> {
        self.points.view()
    }

    pub fn labels(&self) -> Option<&[i64]> {
        self.labels.as_deref()
    }

    pub fn into_parts(self) -> (String, Array2<f64>, Option<Vec<i64>>) {
        (self.name, self.points, self.labels)
    }
}
