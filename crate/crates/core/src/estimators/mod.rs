//! Average-treatment-effect estimators.
//!
//! With outcome `Y`, treatment `T`, clipped propensity `p̂` and outcome-model
//! predictions `Q(Z, 0)`, `Q(Z, 1)`:
//!
//! * unadjusted: `mean(Y | T=1) - mean(Y | T=0)`
//! * regression: `(1/n) Σ Q(Z_i, 1) - Q(Z_i, 0)`
//! * IPW: `(1/n) Σ Y_i T_i / p̂_i - Y_i (1 - T_i) / (1 - p̂_i)`
//! * AIPW: regression plus inverse-weighted residuals. The plain form averages
//!   `T (Y - Q1)/p̂ - (1 - T)(Y - Q0)/(1 - p̂)`; the stabilized form normalizes
//!   the inverse weights to sum to one inside each arm.

mod bootstrap;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use bootstrap::{bootstrap, bootstrap_se, BootstrapConfig, BootstrapResult};

use crate::corpus::ReplyType;
use crate::error::{Error, Result};
use crate::inference::{confounder::ConfounderVariant, fit_nuisance, NuisanceConfig, NuisancePredictions};
use crate::lexicon::CategoryType;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Estimator {
    Unadjusted,
    Q,
    Ipw,
    /// AIPW with within-arm normalized weights.
    Aipw,
    AipwPlain,
}

impl Estimator {
    pub const DEFAULT_SET: [Estimator; 4] = [Estimator::Unadjusted, Estimator::Q, Estimator::Ipw, Estimator::Aipw];
    pub const ALL: [Estimator; 5] = [
        Estimator::Unadjusted,
        Estimator::Q,
        Estimator::Ipw,
        Estimator::Aipw,
        Estimator::AipwPlain,
    ];

    pub fn token(self) -> &'static str {
        match self {
            Estimator::Unadjusted => "unadjusted",
            Estimator::Q => "q",
            Estimator::Ipw => "ipw",
            Estimator::Aipw => "aipw",
            Estimator::AipwPlain => "aipw_plain",
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Estimator::Unadjusted => "Unadjusted",
            Estimator::Q => "psi_Q",
            Estimator::Ipw => "psi_IPW",
            Estimator::Aipw => "psi_AIPW",
            Estimator::AipwPlain => "psi_AIPW (plain)",
        }
    }

    pub fn needs_propensity(self) -> bool {
        matches!(self, Estimator::Ipw | Estimator::Aipw | Estimator::AipwPlain)
    }

    pub fn needs_outcome_model(self) -> bool {
        matches!(self, Estimator::Q | Estimator::Aipw | Estimator::AipwPlain)
    }
}

impl fmt::Display for Estimator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.token())
    }
}

impl FromStr for Estimator {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Estimator::ALL
            .into_iter()
            .find(|e| e.token() == s)
            .ok_or_else(|| Error::validation(format!("unknown estimator {s:?} (expected unadjusted, q, ipw, aipw or aipw_plain)")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum AipwVariant {
    Plain,
    Stabilized,
}

/// Per-unit data an estimator consumes.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct EstimationInput {
    /// Confounder rows; may be empty vectors when nuisances are supplied directly.
    pub features: Vec<Vec<f64>>,
    pub treatment: Vec<u8>,
    pub outcome: Vec<f64>,
    pub propensity: Option<Vec<f64>>,
    pub q0: Option<Vec<f64>>,
    pub q1: Option<Vec<f64>>,
}

impl EstimationInput {
    pub fn new(features: Vec<Vec<f64>>, treatment: Vec<u8>, outcome: Vec<f64>) -> Self {
        EstimationInput {
            features,
            treatment,
            outcome,
            ..Default::default()
        }
    }

    /// Fit propensity and outcome models on these units and store their predictions.
    pub fn fit(features: Vec<Vec<f64>>, treatment: Vec<u8>, outcome: Vec<f64>, config: &NuisanceConfig) -> Result<Self> {
        let mut input = Self::new(features, treatment, outcome);
        input.refit(config)?;
        Ok(input)
    }

    pub fn refit(&mut self, config: &NuisanceConfig) -> Result<()> {
        let rows: Vec<&[f64]> = self.features.iter().map(Vec::as_slice).collect();
        let fitted = fit_nuisance(&rows, &self.treatment, &self.outcome, config)?;
        let preds = fitted.predict(&rows)?;
        self.set_nuisance(preds);
        Ok(())
    }

    pub fn set_nuisance(&mut self, preds: NuisancePredictions) {
        self.propensity = Some(preds.propensity);
        self.q0 = Some(preds.q0);
        self.q1 = Some(preds.q1);
    }

    pub fn len(&self) -> usize {
        self.treatment.len()
    }

    pub fn is_empty(&self) -> bool {
        self.treatment.is_empty()
    }

    pub fn treated_count(&self) -> usize {
        self.treatment.iter().filter(|&&t| t == 1).count()
    }

    fn check_basic(&self) -> Result<()> {
        let n = self.len();
        if self.outcome.len() != n || (!self.features.is_empty() && self.features.len() != n) {
            return Err(Error::validation("estimation arrays differ in length"));
        }
        for v in [&self.propensity, &self.q0, &self.q1].into_iter().flatten() {
            if v.len() != n {
                return Err(Error::validation("nuisance predictions differ in length from the units"));
            }
        }
        if let Some(t) = self.treatment.iter().find(|&&t| t > 1) {
            return Err(Error::validation(format!("treatment value {t} is not binary")));
        }
        if n < 2 {
            return Err(Error::Estimation("need at least two units".into()));
        }
        let treated = self.treated_count();
        if treated == 0 || treated == n {
            return Err(Error::Estimation("both treatment arms must be represented".into()));
        }
        Ok(())
    }

    fn propensities(&self) -> Result<&[f64]> {
        let p = self
            .propensity
            .as_deref()
            .ok_or_else(|| Error::Estimation("propensity scores are missing".into()))?;
        if let Some(bad) = p.iter().find(|p| !(**p > 0.0 && **p < 1.0)) {
            return Err(Error::Estimation(format!(
                "propensity {bad} outside (0, 1); clip before estimating"
            )));
        }
        Ok(p)
    }

    fn outcome_predictions(&self) -> Result<(&[f64], &[f64])> {
        match (self.q0.as_deref(), self.q1.as_deref()) {
            (Some(q0), Some(q1)) => Ok((q0, q1)),
            _ => Err(Error::Estimation("fitted outcome values are missing".into())),
        }
    }

    /// Copy of the units at `indices` (with repetition).
    pub fn resample(&self, indices: &[usize]) -> Self {
        let pick_f = |v: &Vec<f64>| indices.iter().map(|&i| v[i]).collect::<Vec<_>>();
        EstimationInput {
            features: if self.features.is_empty() {
                Vec::new()
            } else {
                indices.iter().map(|&i| self.features[i].clone()).collect()
            },
            treatment: indices.iter().map(|&i| self.treatment[i]).collect(),
            outcome: pick_f(&self.outcome),
            propensity: self.propensity.as_ref().map(pick_f),
            q0: self.q0.as_ref().map(pick_f),
            q1: self.q1.as_ref().map(pick_f),
        }
    }
}

pub fn ate_unadjusted(input: &EstimationInput) -> Result<f64> {
    input.check_basic()?;
    let (mut s1, mut n1, mut s0, mut n0) = (0.0, 0usize, 0.0, 0usize);
    for (&t, &y) in input.treatment.iter().zip(&input.outcome) {
        if t == 1 {
            s1 += y;
            n1 += 1;
        } else {
            s0 += y;
            n0 += 1;
        }
    }
    Ok(s1 / n1 as f64 - s0 / n0 as f64)
}

pub fn ate_q(input: &EstimationInput) -> Result<f64> {
    input.check_basic()?;
    let (q0, q1) = input.outcome_predictions()?;
    let n = input.len() as f64;
    Ok(q1.iter().zip(q0).map(|(a, b)| a - b).sum::<f64>() / n)
}

pub fn ate_ipw(input: &EstimationInput) -> Result<f64> {
    input.check_basic()?;
    let p = input.propensities()?;
    let n = input.len() as f64;
    let total: f64 = input
        .treatment
        .iter()
        .zip(&input.outcome)
        .zip(p)
        .map(|((&t, &y), &p)| {
            let t = f64::from(t);
            y * t / p - y * (1.0 - t) / (1.0 - p)
        })
        .sum();
    Ok(total / n)
}

pub fn ate_aipw(input: &EstimationInput, variant: AipwVariant) -> Result<f64> {
    input.check_basic()?;
    let p = input.propensities()?;
    let (q0, q1) = input.outcome_predictions()?;
    let n = input.len() as f64;
    let regression = q1.iter().zip(q0).map(|(a, b)| a - b).sum::<f64>() / n;

    let mut treated_sum = 0.0;
    let mut control_sum = 0.0;
    let mut treated_weight = 0.0;
    let mut control_weight = 0.0;
    for i in 0..input.len() {
        let y = input.outcome[i];
        if input.treatment[i] == 1 {
            let w = 1.0 / p[i];
            treated_sum += w * (y - q1[i]);
            treated_weight += w;
        } else {
            let w = 1.0 / (1.0 - p[i]);
            control_sum += w * (y - q0[i]);
            control_weight += w;
        }
    }
    let correction = match variant {
        AipwVariant::Plain => (treated_sum - control_sum) / n,
        AipwVariant::Stabilized => treated_sum / treated_weight - control_sum / control_weight,
    };
    Ok(regression + correction)
}

pub fn estimate(estimator: Estimator, input: &EstimationInput) -> Result<f64> {
    match estimator {
        Estimator::Unadjusted => ate_unadjusted(input),
        Estimator::Q => ate_q(input),
        Estimator::Ipw => ate_ipw(input),
        Estimator::Aipw => ate_aipw(input, AipwVariant::Stabilized),
        Estimator::AipwPlain => ate_aipw(input, AipwVariant::Plain),
    }
}

/// Which analysis cell an estimate belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CellLabels {
    pub reply_type: ReplyType,
    pub category_type: CategoryType,
    pub variant: ConfounderVariant,
}

pub const SIGNIFICANCE_Z: f64 = 1.96;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AteEstimate {
    pub estimator: Estimator,
    pub psi: f64,
    pub standard_error: f64,
    pub n: usize,
    pub significant: bool,
    pub reply_type: ReplyType,
    pub category_type: CategoryType,
    pub variant: ConfounderVariant,
}

pub fn is_significant(psi: f64, standard_error: f64) -> bool {
    psi.abs() > SIGNIFICANCE_Z * standard_error
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateConfig {
    pub estimators: Vec<Estimator>,
    pub bootstrap: BootstrapConfig,
    pub nuisance: NuisanceConfig,
}

impl Default for EstimateConfig {
    fn default() -> Self {
        EstimateConfig {
            estimators: Estimator::DEFAULT_SET.to_vec(),
            bootstrap: BootstrapConfig::default(),
            nuisance: NuisanceConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EstimateOutput {
    pub estimates: Vec<AteEstimate>,
    pub skipped_replicates: usize,
}

/// Point estimates on the full sample with bootstrap standard errors, in the
/// order the estimators were requested.
pub fn estimate_all(input: &EstimationInput, config: &EstimateConfig, labels: CellLabels) -> Result<EstimateOutput> {
    if config.estimators.is_empty() {
        return Err(Error::validation("no estimators requested"));
    }
    let points: Vec<f64> = config
        .estimators
        .iter()
        .map(|&e| estimate(e, input))
        .collect::<Result<_>>()?;
    let boot = bootstrap(input, &config.estimators, &config.bootstrap, &config.nuisance)?;
    let estimates = config
        .estimators
        .iter()
        .zip(points)
        .zip(&boot.standard_errors)
        .map(|((&estimator, psi), &se)| AteEstimate {
            estimator,
            psi,
            standard_error: se,
            n: input.len(),
            significant: is_significant(psi, se),
            reply_type: labels.reply_type,
            category_type: labels.category_type,
            variant: labels.variant,
        })
        .collect();
    Ok(EstimateOutput {
        estimates,
        skipped_replicates: boot.skipped,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn four_units() -> EstimationInput {
        // (Z, T, Y) = (0,1,1), (0,0,0), (1,1,3), (1,0,1); per-stratum arm means as Q.
        EstimationInput {
            features: vec![vec![0.0], vec![0.0], vec![1.0], vec![1.0]],
            treatment: vec![1, 0, 1, 0],
            outcome: vec![1.0, 0.0, 3.0, 1.0],
            propensity: Some(vec![0.5; 4]),
            q0: Some(vec![0.0, 0.0, 1.0, 1.0]),
            q1: Some(vec![1.0, 1.0, 3.0, 3.0]),
        }
    }

    #[test]
    fn hand_computed_values() {
        let input = four_units();
        assert_eq!(ate_q(&input).unwrap(), 1.5);
        assert_eq!(ate_ipw(&input).unwrap(), 1.5);
        assert_eq!(ate_aipw(&input, AipwVariant::Plain).unwrap(), 1.5);
        assert_eq!(ate_aipw(&input, AipwVariant::Stabilized).unwrap(), 1.5);
        assert_eq!(ate_unadjusted(&input).unwrap(), 1.5);
    }

    #[test]
    fn unadjusted_means() {
        let input = EstimationInput::new(vec![], vec![1, 1, 0, 0], vec![2.0, 4.0, 1.0, 3.0]);
        assert_eq!(ate_unadjusted(&input).unwrap(), 1.0);
        let same = EstimationInput::new(vec![], vec![1, 0, 1, 0], vec![2.0, 2.0, 5.0, 5.0]);
        assert_eq!(ate_unadjusted(&same).unwrap(), 0.0);
    }

    #[test]
    fn q_identities() {
        let mut input = four_units();
        input.q1 = input.q0.clone();
        assert_eq!(ate_q(&input).unwrap(), 0.0);
        input.q1 = Some(input.q0.as_ref().unwrap().iter().map(|q| q + 0.7).collect());
        assert!((ate_q(&input).unwrap() - 0.7).abs() < 1e-15);
    }

    #[test]
    fn ipw_edge_cases() {
        let mut input = four_units();
        input.outcome = vec![0.0; 4];
        assert_eq!(ate_ipw(&input).unwrap(), 0.0);
        input.propensity = Some(vec![0.5, 1.0, 0.5, 0.5]);
        assert!(ate_ipw(&input).is_err());
        input.propensity = None;
        assert!(ate_ipw(&input).is_err());
    }

    #[test]
    fn errors_on_missing_pieces() {
        let mut input = four_units();
        input.q0 = None;
        assert!(ate_q(&input).is_err());
        assert!(ate_aipw(&input, AipwVariant::Plain).is_err());
        let one_arm = EstimationInput::new(vec![], vec![1, 1], vec![1.0, 2.0]);
        assert!(ate_unadjusted(&one_arm).is_err());
    }

    #[test]
    fn significance_flag() {
        assert!(is_significant(-0.3, 0.1));
        assert!(!is_significant(0.1, 0.1));
        assert!(!is_significant(0.196, 0.1));
    }

    #[test]
    fn token_round_trip() {
        for e in Estimator::ALL {
            assert_eq!(e.token().parse::<Estimator>().unwrap(), e);
        }
        assert!("psi".parse::<Estimator>().is_err());
    }
}
