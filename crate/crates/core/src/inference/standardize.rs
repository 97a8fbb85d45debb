use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Column centring and scaling learned from training rows.
///
/// Constant columns are marked inactive; they standardize to zero and carry
/// no weight in the fitted models.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub means: Vec<f64>,
    pub scales: Vec<f64>,
    pub active: Vec<bool>,
}

const CONSTANT_TOL: f64 = 1e-12;

impl Standardizer {
    pub fn fit(rows: &[&[f64]]) -> Result<Self> {
        let Some(first) = rows.first() else {
            return Err(Error::validation("cannot standardize zero rows"));
        };
        let p = first.len();
        let n = rows.len() as f64;
        let mut means = vec![0.0; p];
        for r in rows {
            if r.len() != p {
                return Err(Error::DimensionMismatch {
                    expected: p,
                    found: r.len(),
                });
            }
            for (m, x) in means.iter_mut().zip(r.iter()) {
                *m += x;
            }
        }
        means.iter_mut().for_each(|m| *m /= n);
        let mut var = vec![0.0; p];
        for r in rows {
            for ((v, x), m) in var.iter_mut().zip(r.iter()).zip(&means) {
                *v += (x - m) * (x - m);
            }
        }
        let mut scales = Vec::with_capacity(p);
        let mut active = Vec::with_capacity(p);
        for (v, m) in var.iter().zip(&means) {
            let sd = (v / n).sqrt();
            let is_active = sd > CONSTANT_TOL * (1.0 + m.abs());
            active.push(is_active);
            scales.push(if is_active { sd } else { 1.0 });
        }
        Ok(Standardizer {
            means,
            scales,
            active,
        })
    }

    pub fn dim(&self) -> usize {
        self.means.len()
    }

    pub fn active_columns(&self) -> Vec<usize> {
        (0..self.dim()).filter(|&j| self.active[j]).collect()
    }

    /// Standardized active columns of one row.
    pub fn transform_row(&self, row: &[f64]) -> Result<Vec<f64>> {
        if row.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: row.len(),
            });
        }
        Ok((0..self.dim())
            .filter(|&j| self.active[j])
            .map(|j| (row[j] - self.means[j]) / self.scales[j])
            .collect())
    }

    /// Standardized design over active columns, one row per input row.
    pub fn design(&self, rows: &[&[f64]]) -> Result<DMatrix<f64>> {
        let cols = self.active_columns();
        let mut m = DMatrix::zeros(rows.len(), cols.len());
        for (i, r) in rows.iter().enumerate() {
            if r.len() != self.dim() {
                return Err(Error::DimensionMismatch {
                    expected: self.dim(),
                    found: r.len(),
                });
            }
            for (c, &j) in cols.iter().enumerate() {
                m[(i, c)] = (r[j] - self.means[j]) / self.scales[j];
            }
        }
        Ok(m)
    }

    /// Map standardized-space weights over active columns back to raw features.
    pub fn raw_coefficients(&self, weights: &[f64], intercept: f64) -> (Vec<f64>, f64) {
        let mut raw = vec![0.0; self.dim()];
        let mut b = intercept;
        for (&j, w) in self.active_columns().iter().zip(weights) {
            raw[j] = w / self.scales[j];
            b -= raw[j] * self.means[j];
        }
        (raw, b)
    }
}
