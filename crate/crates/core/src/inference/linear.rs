//! Arm-specific linear outcome models `Q(Z, t)`.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use super::logistic::check_finite;
use super::standardize::Standardizer;
use crate::error::{Error, Result};

/// Smallest eigenvalue of the scaled Gram matrix accepted as full rank.
const RANK_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutcomeOptions {
    /// Ridge penalty always applied (0 = ordinary least squares).
    pub ridge: f64,
    /// Penalty used instead when the design is rank deficient.
    pub ridge_fallback: Option<f64>,
}

impl Default for OutcomeOptions {
    fn default() -> Self {
        OutcomeOptions {
            ridge: 0.0,
            ridge_fallback: Some(1e-4),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutcomeModel {
    pub arm: u8,
    pub standardizer: Standardizer,
    /// Weights on the standardized active columns.
    pub weights: Vec<f64>,
    pub intercept: f64,
    /// Penalty actually used in the fit.
    pub ridge: f64,
    pub fit_residual_norm: f64,
}

impl OutcomeModel {
    pub fn predict(&self, row: &[f64]) -> Result<f64> {
        let z = self.standardizer.transform_row(row)?;
        Ok(self.intercept + z.iter().zip(&self.weights).map(|(a, b)| a * b).sum::<f64>())
    }

    pub fn raw_coefficients(&self) -> (Vec<f64>, f64) {
        self.standardizer.raw_coefficients(&self.weights, self.intercept)
    }
}

/// Least squares on standardized, centred columns.
///
/// Centring decouples the intercept (the mean of `y`) from the slopes, which
/// solve `(XᵀX/n + λI) w = Xᵀy/n`.
pub fn fit_linear(rows: &[&[f64]], y: &[f64], arm: u8, options: &OutcomeOptions) -> Result<OutcomeModel> {
    if rows.len() != y.len() {
        return Err(Error::DimensionMismatch {
            expected: rows.len(),
            found: y.len(),
        });
    }
    if rows.is_empty() {
        return Err(Error::Estimation(format!("no units in arm {arm}")));
    }
    check_finite(rows)?;
    if let Some(i) = y.iter().position(|v| !v.is_finite()) {
        return Err(Error::validation(format!("non-finite outcome in row {i}")));
    }
    let standardizer = Standardizer::fit(rows)?;
    let x = standardizer.design(rows)?;
    let n = y.len() as f64;
    let y_mean = y.iter().sum::<f64>() / n;
    let yc = DVector::from_iterator(y.len(), y.iter().map(|v| v - y_mean));
    let p = x.ncols();

    let gram: DMatrix<f64> = x.tr_mul(&x) / n;
    let rhs: DVector<f64> = x.tr_mul(&yc) / n;

    let mut ridge = options.ridge;
    if ridge <= 0.0 && p > 0 {
        let min_eig = SymmetricEigen::new(gram.clone())
            .eigenvalues
            .iter()
            .copied()
            .fold(f64::INFINITY, f64::min);
        if min_eig < RANK_TOL {
            ridge = options.ridge_fallback.ok_or_else(|| {
                Error::Estimation(format!(
                    "arm {arm} design is rank deficient ({} units, {p} varying features); enable a ridge fallback",
                    rows.len()
                ))
            })?;
        }
    }

    let weights = if p == 0 {
        DVector::zeros(0)
    } else {
        let mut a = gram.clone();
        for j in 0..p {
            a[(j, j)] += ridge;
        }
        let ch = a
            .cholesky()
            .ok_or_else(|| Error::Numerical(format!("arm {arm} normal equations are not positive definite")))?;
        let mut w = ch.solve(&rhs);
        // One refinement step against the normal equations.
        let resid = &rhs - &gram * &w - &w * ridge;
        w += ch.solve(&resid);
        w
    };

    let fitted = &x * &weights;
    let residual_norm = (&yc - fitted).norm();
    if !weights.iter().all(|w| w.is_finite()) {
        return Err(Error::Numerical(format!("arm {arm} outcome weights are not finite")));
    }
    Ok(OutcomeModel {
        arm,
        standardizer,
        weights: weights.iter().copied().collect(),
        intercept: y_mean,
        ridge,
        fit_residual_norm: residual_norm,
    })
}

/// Fit `Q(·, 0)` and `Q(·, 1)` on the units of each arm.
pub fn fit_outcome_models(
    rows: &[&[f64]],
    treatments: &[u8],
    outcomes: &[f64],
    options: &OutcomeOptions,
) -> Result<(OutcomeModel, OutcomeModel)> {
    if rows.len() != treatments.len() || rows.len() != outcomes.len() {
        return Err(Error::validation("confounders, treatments and outcomes differ in length"));
    }
    let arm = |a: u8| -> Result<OutcomeModel> {
        let (xs, ys): (Vec<&[f64]>, Vec<f64>) = rows
            .iter()
            .zip(treatments)
            .zip(outcomes)
            .filter(|((_, &t), _)| t == a)
            .map(|((r, _), &y)| (*r, y))
            .unzip();
        fit_linear(&xs, &ys, a, options)
    };
    Ok((arm(0)?, arm(1)?))
}
