use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Denominator guard for constant dimensions.
pub const SCALE_EPS: f64 = 1e-12;

/// Per-dimension min-max scaling to `[0, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MinMaxScaler {
    pub min: Vec<f64>,
    pub max: Vec<f64>,
}

impl MinMaxScaler {
    /// Fits on `rows`, each of length `dim`.
    pub fn fit<'a, I>(rows: I, dim: usize) -> Result<Self>
    where
        I: IntoIterator<Item = &'a [f64]>,
    {
        let mut min = vec![f64::INFINITY; dim];
        let mut max = vec![f64::NEG_INFINITY; dim];
        let mut n = 0usize;
        for row in rows {
            if row.len() != dim {
                return Err(Error::LengthMismatch {
                    expected: dim,
                    got: row.len(),
                });
            }
            for (j, &v) in row.iter().enumerate() {
                min[j] = min[j].min(v);
                max[j] = max[j].max(v);
            }
            n += 1;
        }
        if n < 2 {
            return Err(Error::InvalidArgument(format!(
                "scaler needs at least 2 rows, got {n}"
            )));
        }
        Ok(MinMaxScaler { min, max })
    }

    pub fn dim(&self) -> usize {
        self.min.len()
    }

    pub fn transform(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(self.min.iter().zip(&self.max))
            .map(|(&v, (&lo, &hi))| (v - lo) / (hi - lo + SCALE_EPS))
            .collect()
    }

    pub fn inverse_transform(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(self.min.iter().zip(&self.max))
            .map(|(&v, (&lo, &hi))| v * (hi - lo + SCALE_EPS) + lo)
            .collect()
    }
}

/// Scaler for the 16 room features, fit on the training split only.
pub type FeatureScaler = MinMaxScaler;
