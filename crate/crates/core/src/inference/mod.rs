//! Confounder construction and the nuisance models used by the estimators:
//! a logistic propensity model and two arm-specific linear outcome models.

pub mod confounder;
pub mod cv;
pub mod linear;
pub mod logistic;
pub mod standardize;

use serde::{Deserialize, Serialize};

pub use confounder::{feature_rows, validate_confounders, Confounder, ConfounderBuilder, ConfounderVariant};
pub use cv::{cross_validate, fold_assignment, CvMetrics, CvReport, FoldMetrics};
pub use linear::{fit_linear, fit_outcome_models, OutcomeModel, OutcomeOptions};
pub use logistic::{
    clip_propensity, fit_propensity, logistic_objective, predict_propensity, PropensityModel, PropensityOptions,
};
pub use standardize::Standardizer;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NuisanceConfig {
    pub propensity: PropensityOptions,
    pub outcome: OutcomeOptions,
    pub clip_epsilon: f64,
    /// Restrict the propensity model to these feature columns.
    #[serde(default)]
    pub propensity_features: Option<Vec<usize>>,
    /// Restrict the outcome models to these feature columns.
    #[serde(default)]
    pub outcome_features: Option<Vec<usize>>,
}

impl Default for NuisanceConfig {
    fn default() -> Self {
        NuisanceConfig {
            propensity: PropensityOptions::default(),
            outcome: OutcomeOptions::default(),
            clip_epsilon: logistic::DEFAULT_CLIP,
            propensity_features: None,
            outcome_features: None,
        }
    }
}

fn select(rows: &[&[f64]], cols: Option<&[usize]>) -> Result<Vec<Vec<f64>>> {
    rows.iter()
        .map(|r| match cols {
            None => Ok(r.to_vec()),
            Some(cols) => cols
                .iter()
                .map(|&j| {
                    r.get(j).copied().ok_or(Error::DimensionMismatch {
                        expected: j + 1,
                        found: r.len(),
                    })
                })
                .collect(),
        })
        .collect()
}

fn as_refs(rows: &[Vec<f64>]) -> Vec<&[f64]> {
    rows.iter().map(Vec::as_slice).collect()
}

#[derive(Debug, Clone)]
pub struct FittedNuisance {
    pub propensity: PropensityModel,
    pub control: OutcomeModel,
    pub treated: OutcomeModel,
    config: NuisanceConfig,
}

/// Per-unit nuisance predictions.
#[derive(Debug, Clone, PartialEq)]
pub struct NuisancePredictions {
    pub propensity: Vec<f64>,
    pub q0: Vec<f64>,
    pub q1: Vec<f64>,
}

pub fn fit_nuisance(rows: &[&[f64]], treatments: &[u8], outcomes: &[f64], config: &NuisanceConfig) -> Result<FittedNuisance> {
    let p_rows = select(rows, config.propensity_features.as_deref())?;
    let propensity = fit_propensity(&as_refs(&p_rows), treatments, &config.propensity)?;
    let q_rows = select(rows, config.outcome_features.as_deref())?;
    let (control, treated) = fit_outcome_models(&as_refs(&q_rows), treatments, outcomes, &config.outcome)?;
    Ok(FittedNuisance {
        propensity,
        control,
        treated,
        config: config.clone(),
    })
}

impl FittedNuisance {
    pub fn predict(&self, rows: &[&[f64]]) -> Result<NuisancePredictions> {
        let p_rows = select(rows, self.config.propensity_features.as_deref())?;
        let q_rows = select(rows, self.config.outcome_features.as_deref())?;
        let propensity = p_rows
            .iter()
            .map(|r| predict_propensity(&self.propensity, r, self.config.clip_epsilon))
            .collect::<Result<_>>()?;
        let q0 = q_rows.iter().map(|r| self.control.predict(r)).collect::<Result<_>>()?;
        let q1 = q_rows.iter().map(|r| self.treated.predict(r)).collect::<Result<_>>()?;
        Ok(NuisancePredictions { propensity, q0, q1 })
    }
}
