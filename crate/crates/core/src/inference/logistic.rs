//! L2-penalized logistic regression for the propensity score, fit by damped Newton.
//!
//! Objective over standardized features `x` with intercept `b`:
//! `-(1/n) Σ [y log σ(b + w·x) + (1 - y) log(1 - σ(b + w·x))] + (λ/2) ||w||²`.
//! The intercept is not penalized.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::standardize::Standardizer;
use crate::error::{Error, Result};

pub const DEFAULT_L2: f64 = 1e-4;
pub const DEFAULT_CLIP: f64 = 0.01;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PropensityOptions {
    pub regularization: f64,
    pub max_iters: usize,
    pub grad_tol: f64,
    pub seed: u64,
}

impl Default for PropensityOptions {
    fn default() -> Self {
        PropensityOptions {
            regularization: DEFAULT_L2,
            max_iters: 100,
            grad_tol: 1e-8,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingMeta {
    pub iterations: usize,
    pub final_loss: f64,
    pub gradient_norm: f64,
    pub converged: bool,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PropensityModel {
    pub standardizer: Standardizer,
    /// Weights on the standardized active columns.
    pub weights: Vec<f64>,
    pub intercept: f64,
    pub regularization: f64,
    pub training_meta: TrainingMeta,
}

#[inline]
fn sigmoid(s: f64) -> f64 {
    if s >= 0.0 {
        1.0 / (1.0 + (-s).exp())
    } else {
        let e = s.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + e^x)` without overflow.
#[inline]
fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

fn scores(x: &DMatrix<f64>, params: &DVector<f64>) -> DVector<f64> {
    let p = x.ncols();
    let w = params.rows(0, p);
    let b = params[p];
    (x * w).add_scalar(b)
}

fn loss_at(x: &DMatrix<f64>, y: &[f64], params: &DVector<f64>, l2: f64) -> f64 {
    let p = x.ncols();
    let s = scores(x, params);
    let nll: f64 = s
        .iter()
        .zip(y)
        .map(|(&s, &y)| y * softplus(-s) + (1.0 - y) * softplus(s))
        .sum();
    nll / y.len() as f64 + 0.5 * l2 * params.rows(0, p).norm_squared()
}

fn gradient_at(x: &DMatrix<f64>, y: &[f64], params: &DVector<f64>, l2: f64) -> (DVector<f64>, DVector<f64>) {
    let p = x.ncols();
    let n = y.len() as f64;
    let s = scores(x, params);
    let mu = s.map(sigmoid);
    let resid = DVector::from_iterator(y.len(), mu.iter().zip(y).map(|(m, y)| m - y));
    let mut g = DVector::zeros(p + 1);
    g.rows_mut(0, p).copy_from(&(x.tr_mul(&resid) / n + params.rows(0, p) * l2));
    g[p] = resid.sum() / n;
    (g, mu)
}

/// Loss and gradient of the penalized objective on a raw design (no
/// standardization). `params` holds the weights followed by the intercept.
pub fn logistic_objective(rows: &[&[f64]], y: &[f64], params: &[f64], l2: f64) -> (f64, Vec<f64>) {
    let p = params.len() - 1;
    let x = DMatrix::from_fn(rows.len(), p, |i, j| rows[i][j]);
    let theta = DVector::from_column_slice(params);
    let loss = loss_at(&x, y, &theta, l2);
    let (g, _) = gradient_at(&x, y, &theta, l2);
    (loss, g.iter().copied().collect())
}

fn solve_spd(mut h: DMatrix<f64>, rhs: &DVector<f64>) -> Option<DVector<f64>> {
    let scale = h.diagonal().amax().max(1.0);
    let mut jitter = 0.0;
    for _ in 0..8 {
        if let Some(ch) = h.clone().cholesky() {
            return Some(ch.solve(rhs));
        }
        let next = if jitter == 0.0 { 1e-12 * scale } else { jitter * 100.0 };
        for i in 0..h.nrows() {
            h[(i, i)] += next - jitter;
        }
        jitter = next;
    }
    None
}

/// Newton iterations with backtracking; returns params and training metadata.
fn newton(x: &DMatrix<f64>, y: &[f64], options: &PropensityOptions) -> Result<(DVector<f64>, TrainingMeta)> {
    let p = x.ncols();
    let n = y.len() as f64;
    let l2 = options.regularization;
    let mut params = DVector::zeros(p + 1);
    let base_rate = y.iter().sum::<f64>() / n;
    params[p] = (base_rate / (1.0 - base_rate)).ln();

    let mut loss = loss_at(x, y, &params, l2);
    let mut iterations = 0;
    let mut gnorm = f64::INFINITY;
    let mut converged = false;
    while iterations < options.max_iters {
        let (g, mu) = gradient_at(x, y, &params, l2);
        gnorm = g.norm();
        if gnorm < options.grad_tol {
            converged = true;
            break;
        }
        let weights = mu.map(|m| (m * (1.0 - m)).max(1e-12) / n);
        let mut xa = DMatrix::zeros(x.nrows(), p + 1);
        xa.columns_mut(0, p).copy_from(x);
        xa.column_mut(p).fill(1.0);
        let wx = DMatrix::from_fn(x.nrows(), p + 1, |i, j| xa[(i, j)] * weights[i]);
        let mut h = xa.tr_mul(&wx);
        for j in 0..p {
            h[(j, j)] += l2;
        }
        let Some(step) = solve_spd(h, &(-&g)) else {
            return Err(Error::Numerical("propensity Hessian is not positive definite".into()));
        };
        let slope = g.dot(&step);
        let mut t = 1.0;
        let mut accepted = false;
        for _ in 0..60 {
            let trial = &params + &step * t;
            let trial_loss = loss_at(x, y, &trial, l2);
            if trial_loss.is_finite() && trial_loss <= loss + 1e-4 * t * slope {
                params = trial;
                loss = trial_loss;
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        iterations += 1;
        if !accepted {
            // No decrease representable in floating point: at the optimum to machine precision.
            converged = gnorm < options.grad_tol.max(1e-6);
            break;
        }
    }
    if !params.iter().all(|v| v.is_finite()) {
        return Err(Error::Numerical("propensity weights diverged".into()));
    }
    Ok((
        params,
        TrainingMeta {
            iterations,
            final_loss: loss,
            gradient_norm: gnorm,
            converged,
            seed: options.seed,
        },
    ))
}

pub(crate) fn check_finite(rows: &[&[f64]]) -> Result<()> {
    for (i, r) in rows.iter().enumerate() {
        if let Some(j) = r.iter().position(|v| !v.is_finite()) {
            return Err(Error::validation(format!("non-finite feature in row {i}, column {j}")));
        }
    }
    Ok(())
}

pub fn fit_propensity(rows: &[&[f64]], treatments: &[u8], options: &PropensityOptions) -> Result<PropensityModel> {
    if rows.len() != treatments.len() {
        return Err(Error::DimensionMismatch {
            expected: rows.len(),
            found: treatments.len(),
        });
    }
    let treated = treatments.iter().filter(|&&t| t == 1).count();
    if treated == 0 || treated == treatments.len() {
        return Err(Error::Estimation(
            "propensity model needs units in both treatment arms".into(),
        ));
    }
    if options.regularization < 0.0 {
        return Err(Error::validation("regularization must be nonnegative"));
    }
    check_finite(rows)?;
    let standardizer = Standardizer::fit(rows)?;
    let x = standardizer.design(rows)?;
    let y: Vec<f64> = treatments.iter().map(|&t| f64::from(t)).collect();
    let (params, meta) = newton(&x, &y, options)?;
    let p = x.ncols();
    Ok(PropensityModel {
        standardizer,
        weights: params.rows(0, p).iter().copied().collect(),
        intercept: params[p],
        regularization: options.regularization,
        training_meta: meta,
    })
}

impl PropensityModel {
    pub fn linear_score(&self, row: &[f64]) -> Result<f64> {
        let z = self.standardizer.transform_row(row)?;
        Ok(self.intercept + z.iter().zip(&self.weights).map(|(a, b)| a * b).sum::<f64>())
    }

    /// Unclipped `P(T = 1 | Z)`.
    pub fn predict_raw(&self, row: &[f64]) -> Result<f64> {
        Ok(sigmoid(self.linear_score(row)?))
    }

    /// Weights and intercept on the raw feature scale.
    pub fn raw_coefficients(&self) -> (Vec<f64>, f64) {
        self.standardizer.raw_coefficients(&self.weights, self.intercept)
    }
}

pub fn clip_propensity(p: f64, clip_epsilon: f64) -> f64 {
    p.clamp(clip_epsilon, 1.0 - clip_epsilon)
}

/// Propensity clamped to `[ε, 1 - ε]`.
pub fn predict_propensity(model: &PropensityModel, row: &[f64], clip_epsilon: f64) -> Result<f64> {
    if !(0.0..0.5).contains(&clip_epsilon) {
        return Err(Error::validation("clip epsilon must lie in [0, 0.5)"));
    }
    Ok(clip_propensity(model.predict_raw(row)?, clip_epsilon))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn zero_model(dim: usize) -> PropensityModel {
        PropensityModel {
            standardizer: Standardizer {
                means: vec![0.0; dim],
                scales: vec![1.0; dim],
                active: vec![true; dim],
            },
            weights: vec![0.0; dim],
            intercept: 0.0,
            regularization: 0.0,
            training_meta: TrainingMeta {
                iterations: 0,
                final_loss: 0.0,
                gradient_norm: 0.0,
                converged: true,
                seed: 0,
            },
        }
    }

    #[test]
    fn prediction_and_clipping() {
        let mut m = zero_model(2);
        assert_eq!(predict_propensity(&m, &[3.0, -1.0], 0.01).unwrap(), 0.5);
        m.intercept = (0.001f64 / 0.999).ln();
        assert_eq!(predict_propensity(&m, &[0.0, 0.0], 0.01).unwrap(), 0.01);
        m.intercept = (0.62f64 / 0.38).ln();
        assert!((predict_propensity(&m, &[0.0, 0.0], 0.01).unwrap() - 0.62).abs() < 1e-12);
        assert!(predict_propensity(&m, &[0.0], 0.01).is_err());
    }

    #[test]
    fn separable_data_stays_finite() {
        let rows: Vec<Vec<f64>> = (0..40).map(|i| vec![i as f64]).collect();
        let refs: Vec<&[f64]> = rows.iter().map(Vec::as_slice).collect();
        let t: Vec<u8> = (0..40).map(|i| u8::from(i >= 20)).collect();
        let m = fit_propensity(&refs, &t, &PropensityOptions::default()).unwrap();
        assert!(m.weights.iter().all(|w| w.is_finite()));
        for r in &refs {
            let p = m.predict_raw(r).unwrap();
            assert!(p > 0.0 && p < 1.0, "{p}");
        }
        assert!(m.predict_raw(&[0.0]).unwrap() < 0.5 && m.predict_raw(&[39.0]).unwrap() > 0.5);
    }

    #[test]
    fn single_arm_and_nan_rejected() {
        let rows = [vec![1.0], vec![2.0]];
        let refs: Vec<&[f64]> = rows.iter().map(Vec::as_slice).collect();
        assert!(fit_propensity(&refs, &[1, 1], &PropensityOptions::default()).is_err());
        let bad = [vec![f64::NAN], vec![2.0]];
        let refs: Vec<&[f64]> = bad.iter().map(Vec::as_slice).collect();
        let err = fit_propensity(&refs, &[0, 1], &PropensityOptions::default()).unwrap_err();
        assert!(err.to_string().contains("row 0"));
    }
}
