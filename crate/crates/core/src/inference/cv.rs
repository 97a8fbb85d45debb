//! K-fold cross-validation of the nuisance models: RMSE of each arm's outcome
//! model on held-out units of that arm, and F1 of the propensity model.

use log::warn;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::confounder::ConfounderVariant;
use super::{fit_nuisance, NuisanceConfig};
use crate::corpus::ReplyType;
use crate::error::{Error, Result};
use crate::lexicon::CategoryType;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldMetrics {
    pub fold: usize,
    pub rmse_treated: f64,
    pub rmse_control: f64,
    pub f1: f64,
    pub macro_f1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvMetrics {
    pub fold_count: usize,
    pub folds: Vec<FoldMetrics>,
    pub mean_rmse_treated: f64,
    pub mean_rmse_control: f64,
    pub mean_f1: f64,
    pub mean_macro_f1: f64,
    pub skipped: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvReport {
    pub reply_type: ReplyType,
    pub category_type: CategoryType,
    pub variant: ConfounderVariant,
    pub metrics: CvMetrics,
}

/// Fold index of each unit: a seeded shuffle dealt round-robin.
pub fn fold_assignment(n: usize, folds: usize, seed: u64) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut out = vec![0; n];
    for (pos, &i) in order.iter().enumerate() {
        out[i] = pos % folds;
    }
    out
}

/// F1 of the class labelled `positive`.
pub fn f1_score(truth: &[u8], predicted: &[u8], positive: u8) -> f64 {
    let mut tp = 0usize;
    let mut fp = 0usize;
    let mut fneg = 0usize;
    for (&t, &p) in truth.iter().zip(predicted) {
        match (t == positive, p == positive) {
            (true, true) => tp += 1,
            (false, true) => fp += 1,
            (true, false) => fneg += 1,
            _ => {}
        }
    }
    let denom = 2 * tp + fp + fneg;
    if denom == 0 {
        0.0
    } else {
        2.0 * tp as f64 / denom as f64
    }
}

fn rmse(pairs: impl Iterator<Item = (f64, f64)>) -> f64 {
    let (sum, n) = pairs.fold((0.0, 0usize), |(s, n), (a, b)| (s + (a - b) * (a - b), n + 1));
    (sum / n as f64).sqrt()
}

fn mean(xs: impl Iterator<Item = f64>) -> f64 {
    let (s, n) = xs.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    s / n as f64
}

pub fn cross_validate(
    rows: &[&[f64]],
    treatments: &[u8],
    outcomes: &[f64],
    folds: usize,
    seed: u64,
    config: &NuisanceConfig,
) -> Result<CvMetrics> {
    if folds < 2 {
        return Err(Error::validation("cross-validation needs at least 2 folds"));
    }
    if rows.len() != treatments.len() || rows.len() != outcomes.len() {
        return Err(Error::validation("confounders, treatments and outcomes differ in length"));
    }
    let assignment = fold_assignment(rows.len(), folds, seed);
    let mut metrics = Vec::new();
    let mut skipped = Vec::new();
    for fold in 0..folds {
        let (train, test): (Vec<usize>, Vec<usize>) = (0..rows.len()).partition(|&i| assignment[i] != fold);
        let arms = |idx: &[usize]| {
            let treated = idx.iter().filter(|&&i| treatments[i] == 1).count();
            (treated, idx.len() - treated)
        };
        let (tr1, tr0) = arms(&train);
        let (te1, te0) = arms(&test);
        if tr1 == 0 || tr0 == 0 || te1 == 0 || te0 == 0 {
            let msg = format!("fold {fold} skipped: an arm is empty (train {tr1}/{tr0}, test {te1}/{te0})");
            warn!("{msg}");
            skipped.push(msg);
            continue;
        }
        let pick_rows = |idx: &[usize]| idx.iter().map(|&i| rows[i]).collect::<Vec<_>>();
        let t_train: Vec<u8> = train.iter().map(|&i| treatments[i]).collect();
        let y_train: Vec<f64> = train.iter().map(|&i| outcomes[i]).collect();
        let fitted = match fit_nuisance(&pick_rows(&train), &t_train, &y_train, config) {
            Ok(f) => f,
            Err(e) => {
                let msg = format!("fold {fold} skipped: {e}");
                warn!("{msg}");
                skipped.push(msg);
                continue;
            }
        };
        let pred = fitted.predict(&pick_rows(&test))?;
        let t_test: Vec<u8> = test.iter().map(|&i| treatments[i]).collect();
        let y_test: Vec<f64> = test.iter().map(|&i| outcomes[i]).collect();
        let labels: Vec<u8> = pred.propensity.iter().map(|&p| u8::from(p >= 0.5)).collect();
        let arm_rmse = |arm: u8, q: &[f64]| {
            rmse(
                t_test
                    .iter()
                    .zip(&y_test)
                    .zip(q)
                    .filter(|((&t, _), _)| t == arm)
                    .map(|((_, &y), &q)| (y, q)),
            )
        };
        metrics.push(FoldMetrics {
            fold,
            rmse_treated: arm_rmse(1, &pred.q1),
            rmse_control: arm_rmse(0, &pred.q0),
            f1: f1_score(&t_test, &labels, 1),
            macro_f1: 0.5 * (f1_score(&t_test, &labels, 1) + f1_score(&t_test, &labels, 0)),
        });
    }
    if metrics.is_empty() {
        return Err(Error::Estimation(format!("all {folds} cross-validation folds were skipped")));
    }
    Ok(CvMetrics {
        fold_count: metrics.len(),
        mean_rmse_treated: mean(metrics.iter().map(|m| m.rmse_treated)),
        mean_rmse_control: mean(metrics.iter().map(|m| m.rmse_control)),
        mean_f1: mean(metrics.iter().map(|m| m.f1)),
        mean_macro_f1: mean(metrics.iter().map(|m| m.macro_f1)),
        folds: metrics,
        skipped,
    })
}
