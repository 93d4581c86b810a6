use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A sparse row: strictly increasing 0-based column indices with values.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct SparseRow {
    pub indices: Vec<usize>,
    pub values: Vec<f64>,
}

impl SparseRow {
    /// Sorts the entries; duplicate indices are an error.
    pub fn from_pairs(mut pairs: Vec<(usize, f64)>) -> Result<Self> {
        pairs.sort_by_key(|p| p.0);
        if let Some(w) = pairs.windows(2).find(|w| w[0].0 == w[1].0) {
            return Err(Error::Format(format!("duplicate feature index {}", w[0].0 + 1)));
        }
        let (indices, values) = pairs.into_iter().unzip();
        Ok(SparseRow { indices, values })
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.indices.iter().copied().zip(self.values.iter().copied())
    }
}

/// Feature matrix, dense or sparse-by-row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Features {
    Dense(Array2<f64>),
    Sparse { rows: Vec<SparseRow>, dim: usize },
}

impl Features {
    pub fn nrows(&self) -> usize {
        match self {
            Features::Dense(x) => x.nrows(),
            Features::Sparse { rows, .. } => rows.len(),
        }
    }

    pub fn ncols(&self) -> usize {
        match self {
            Features::Dense(x) => x.ncols(),
            Features::Sparse { dim, .. } => *dim,
        }
    }

    pub fn to_dense(&self) -> Array2<f64> {
        match self {
            Features::Dense(x) => x.clone(),
            Features::Sparse { rows, dim } => {
                let mut x = Array2::zeros((rows.len(), *dim));
                for (i, row) in rows.iter().enumerate() {
                    for (j, v) in row.iter() {
                        x[[i, j]] = v;
                    }
                }
                x
            }
        }
    }

    pub fn row(&self, i: usize) -> Array1<f64> {
        match self {
            Features::Dense(x) => x.row(i).to_owned(),
            Features::Sparse { rows, dim } => {
                let mut r = Array1::zeros(*dim);
                for (j, v) in rows[i].iter() {
                    r[j] = v;
                }
                r
            }
        }
    }

    /// The given rows, in order.
    pub fn select_rows(&self, rows: &[usize]) -> Features {
        match self {
            Features::Dense(x) => Features::Dense(x.select(ndarray::Axis(0), rows)),
            Features::Sparse { rows: r, dim } => Features::Sparse {
                rows: rows.iter().map(|&i| r[i].clone()).collect(),
                dim: *dim,
            },
        }
    }

    pub fn all_finite(&self) -> bool {
        match self {
            Features::Dense(x) => x.iter().all(|v| v.is_finite()),
            Features::Sparse { rows, .. } => rows.iter().all(|r| r.values.iter().all(|v| v.is_finite())),
        }
    }

    /// Column-wise standardisation with statistics from `rows` only. Columns
    /// that are constant on those rows are left untouched.
    pub fn standardized(&self, rows: &[usize]) -> Features {
        let mut x = self.to_dense();
        if rows.is_empty() {
            return Features::Dense(x);
        }
        let n = rows.len() as f64;
        for mut col in x.columns_mut() {
            let mean = rows.iter().map(|&i| col[i]).sum::<f64>() / n;
            let var = rows.iter().map(|&i| (col[i] - mean).powi(2)).sum::<f64>() / n;
            if var <= 1e-24 {
                continue;
            }
            let sd = var.sqrt();
            col.mapv_inplace(|v| (v - mean) / sd);
        }
        Features::Dense(x)
    }
}
