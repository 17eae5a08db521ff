use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::ingest::EmbeddingRecord;

/// Feature matrix with the per-column statistics used for standardization.
///
/// Columns whose spread is numerically zero are excluded from fitting and
/// receive a zero weight.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignMatrix {
    values: DMatrix<f64>,
    means: Vec<f64>,
    stds: Vec<f64>,
}

/// Standardized copy of the retained columns.
#[derive(Debug, Clone)]
pub struct Standardized {
    pub z: DMatrix<f64>,
    /// Original index of each column of `z`.
    pub kept: Vec<usize>,
}

fn is_constant(mean: f64, std: f64) -> bool {
    std <= 1e-12 * mean.abs().max(1.0)
}

impl DesignMatrix {
    pub fn from_row_slice(rows: usize, cols: usize, data: &[f64]) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::validation("design matrix needs at least one row and one column"));
        }
        if data.len() != rows * cols {
            return Err(Error::DimensionMismatch(format!(
                "{} values cannot fill a {rows}x{cols} matrix",
                data.len()
            )));
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::validation(format!(
                "non-finite value at row {}, column {}",
                i / cols,
                i % cols
            )));
        }
        let values = DMatrix::from_row_slice(rows, cols, data);
        let n = rows as f64;
        let mut means = Vec::with_capacity(cols);
        let mut stds = Vec::with_capacity(cols);
        for column in values.column_iter() {
            let mean = column.sum() / n;
            let var = column.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
            means.push(mean);
            stds.push(var.sqrt());
        }
        Ok(DesignMatrix { values, means, stds })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if let Some((i, r)) = rows.iter().enumerate().find(|(_, r)| r.len() != cols) {
            return Err(Error::DimensionMismatch(format!(
                "row {i} has {} columns, expected {cols}",
                r.len()
            )));
        }
        let data: Vec<f64> = rows.iter().flatten().copied().collect();
        Self::from_row_slice(rows.len(), cols, &data)
    }

    pub fn from_records(records: &[EmbeddingRecord]) -> Result<Self> {
        let cols = records.first().map_or(0, |r| r.vector.len());
        let mut data = Vec::with_capacity(records.len() * cols);
        for r in records {
            if r.vector.len() != cols {
                return Err(Error::DimensionMismatch(format!(
                    "utterance {} has {} features, expected {cols}",
                    r.utterance_id,
                    r.vector.len()
                )));
            }
            data.extend_from_slice(&r.vector);
        }
        Self::from_row_slice(records.len(), cols, &data)
    }

    pub fn rows(&self) -> usize {
        self.values.nrows()
    }

    pub fn cols(&self) -> usize {
        self.values.ncols()
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn row(&self, i: usize) -> Vec<f64> {
        self.values.row(i).iter().copied().collect()
    }

    pub fn column_means(&self) -> &[f64] {
        &self.means
    }

    pub fn column_stds(&self) -> &[f64] {
        &self.stds
    }

    /// Indices of columns with non-zero spread.
    pub fn kept_columns(&self) -> Vec<usize> {
        (0..self.cols())
            .filter(|&j| !is_constant(self.means[j], self.stds[j]))
            .collect()
    }

    pub fn standardized(&self) -> Standardized {
        let kept = self.kept_columns();
        let n = self.rows();
        let mut z = DMatrix::zeros(n, kept.len());
        for (k, &j) in kept.iter().enumerate() {
            let (mean, std) = (self.means[j], self.stds[j]);
            for i in 0..n {
                z[(i, k)] = (self.values[(i, j)] - mean) / std;
            }
        }
        Standardized { z, kept }
    }
}
