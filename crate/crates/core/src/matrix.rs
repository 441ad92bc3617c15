//! Sample-major feature storage shared by every module.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A dense, row-major matrix of finite feature vectors: one row per sample.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureMatrix {
    rows: usize,
    dim: usize,
    values: Vec<f64>,
}

impl FeatureMatrix {
    /// Builds a matrix from a flat row-major buffer.
    ///
    /// Rejects empty matrices, zero dimensionality, ragged lengths and
    /// non-finite entries.
    pub fn new(rows: usize, dim: usize, values: Vec<f64>) -> Result<Self> {
        if rows == 0 {
            return Err(Error::contract("feature matrix needs at least one row"));
        }
        if dim == 0 {
            return Err(Error::contract("feature dimensionality must be positive"));
        }
        if values.len() != rows * dim {
            return Err(Error::contract(format!(
                "expected {} values for a {rows}x{dim} matrix, got {}",
                rows * dim,
                values.len()
            )));
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::contract(format!(
                "non-finite entry at row {}, column {}",
                pos / dim,
                pos % dim
            )));
        }
        Ok(Self { rows, dim, values })
    }

    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let first = rows
            .first()
            .ok_or_else(|| Error::contract("feature matrix needs at least one row"))?;
        let dim = first.as_ref().len();
        let mut values = Vec::with_capacity(rows.len() * dim);
        for (i, row) in rows.iter().enumerate() {
            let row = row.as_ref();
            if row.len() != dim {
                return Err(Error::contract(format!(
                    "row {i} has {} entries, expected {dim}",
                    row.len()
                )));
            }
            values.extend_from_slice(row);
        }
        Self::new(rows.len(), dim, values)
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.dim..(i + 1) * self.dim]
    }

    pub fn iter_rows(&self) -> impl ExactSizeIterator<Item = &[f64]> + '_ {
        self.values.chunks_exact(self.dim)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    /// Copies the given rows, in the given order, into a new matrix.
    pub fn select_rows(&self, indices: &[usize]) -> Result<Self> {
        let mut values = Vec::with_capacity(indices.len() * self.dim);
        for &i in indices {
            if i >= self.rows {
                return Err(Error::contract(format!(
                    "row index {i} out of bounds for {} rows",
                    self.rows
                )));
            }
            values.extend_from_slice(self.row(i));
        }
        Self::new(indices.len(), self.dim, values)
    }

    /// Stacks matrices of equal dimensionality vertically.
    pub fn vstack<'a>(parts: impl IntoIterator<Item = &'a FeatureMatrix>) -> Result<Self> {
        let mut dim = None;
        let mut rows = 0;
        let mut values = Vec::new();
        for part in parts {
            match dim {
                None => dim = Some(part.dim),
                Some(d) if d != part.dim => {
                    return Err(Error::DimensionMismatch {
                        expected: d,
                        found: part.dim,
                    })
                }
                _ => {}
            }
            rows += part.rows;
            values.extend_from_slice(&part.values);
        }
        let dim = dim.ok_or_else(|| Error::contract("nothing to stack"))?;
        Self::new(rows, dim, values)
    }

    pub(crate) fn check_same_dim(&self, other: &FeatureMatrix) -> Result<()> {
        if self.dim != other.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                found: other.dim,
            });
        }
        Ok(())
    }
}

#[inline]
pub(crate) fn squared_distance(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum()
}

#[inline]
pub(crate) fn dot(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| a * b).sum()
}
