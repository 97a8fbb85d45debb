//! Nonparametric bootstrap standard errors.

use log::{debug, warn};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{estimate, EstimationInput, Estimator};
use crate::error::{Error, Result};
use crate::inference::NuisanceConfig;
use crate::rng::stream;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BootstrapConfig {
    pub replicates: usize,
    pub seed: u64,
    /// Refit the nuisance models inside every replicate.
    pub refit: bool,
    /// Redraws allowed when a resample lacks one arm.
    pub max_redraws: usize,
}

impl Default for BootstrapConfig {
    fn default() -> Self {
        BootstrapConfig {
            replicates: 1000,
            seed: 0,
            refit: true,
            max_redraws: 10,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BootstrapResult {
    /// One per requested estimator, in request order.
    pub standard_errors: Vec<f64>,
    pub replicates_used: usize,
    pub skipped: usize,
}

fn draw(n: usize, treatment: &[u8], seed: u64, index: u64, max_redraws: usize) -> Option<Vec<usize>> {
    let mut rng = stream(seed, index);
    for _ in 0..=max_redraws {
        let idx: Vec<usize> = (0..n).map(|_| rng.random_range(0..n)).collect();
        let treated = idx.iter().filter(|&&i| treatment[i] == 1).count();
        if treated > 0 && treated < n {
            return Some(idx);
        }
    }
    None
}

fn replicate(
    input: &EstimationInput,
    estimators: &[Estimator],
    config: &BootstrapConfig,
    nuisance: &NuisanceConfig,
    index: u64,
) -> Option<Vec<f64>> {
    let idx = draw(input.len(), &input.treatment, config.seed, index, config.max_redraws)?;
    let mut sample = input.resample(&idx);
    let needs_models = estimators.iter().any(|e| e.needs_propensity() || e.needs_outcome_model());
    if config.refit && needs_models {
        if let Err(e) = sample.refit(nuisance) {
            debug!("bootstrap replicate {index} skipped: {e}");
            return None;
        }
    }
    estimators.iter().map(|&e| estimate(e, &sample).ok()).collect()
}

fn sample_sd(xs: impl Iterator<Item = f64> + Clone) -> f64 {
    let n = xs.clone().count() as f64;
    let mean = xs.clone().sum::<f64>() / n;
    (xs.map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0)).sqrt()
}

/// Bootstrap standard errors for several estimators from shared resamples.
///
/// Replicate `b` draws from its own stream derived from `(seed, b)`, so results
/// do not depend on the thread count.
pub fn bootstrap(
    input: &EstimationInput,
    estimators: &[Estimator],
    config: &BootstrapConfig,
    nuisance: &NuisanceConfig,
) -> Result<BootstrapResult> {
    if config.replicates < 2 {
        return Err(Error::validation("bootstrap needs at least 2 replicates"));
    }
    input.check_basic()?;
    let draws: Vec<Option<Vec<f64>>> = (0..config.replicates as u64)
        .into_par_iter()
        .map(|b| replicate(input, estimators, config, nuisance, b))
        .collect();
    let kept: Vec<Vec<f64>> = draws.into_iter().flatten().collect();
    let skipped = config.replicates - kept.len();
    if skipped > 0 {
        warn!("{skipped} of {} bootstrap replicates skipped", config.replicates);
    }
    if kept.len() < 2 {
        return Err(Error::Estimation(format!(
            "only {} of {} bootstrap replicates succeeded",
            kept.len(),
            config.replicates
        )));
    }
    let standard_errors = (0..estimators.len())
        .map(|j| sample_sd(kept.iter().map(move |r| r[j])))
        .collect();
    Ok(BootstrapResult {
        standard_errors,
        replicates_used: kept.len(),
        skipped,
    })
}

pub fn bootstrap_se(
    input: &EstimationInput,
    estimator: Estimator,
    config: &BootstrapConfig,
    nuisance: &NuisanceConfig,
) -> Result<f64> {
    Ok(bootstrap(input, &[estimator], config, nuisance)?.standard_errors[0])
}
