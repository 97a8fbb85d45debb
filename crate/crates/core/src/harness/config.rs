//! Pipeline configuration, read from TOML.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::corpus::ReplyType;
use crate::error::{Error, Result};
use crate::estimators::Estimator;
use crate::inference::{ConfounderVariant, NuisanceConfig, OutcomeOptions, PropensityOptions};
use crate::lexicon::CategoryType;
use crate::topics::{LdaConfig, DEFAULT_MAX_DF, DEFAULT_MIN_DF};

/// All settings for one run. Every field except `seed`, `posts` and
/// `annotations` has a default; relative paths resolve against the working
/// directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub seed: u64,
    pub posts: PathBuf,
    pub annotations: PathBuf,
    /// Bundled open lexicon when absent.
    #[serde(default)]
    pub lexicon: Option<PathBuf>,
    #[serde(default)]
    pub grouping: Option<PathBuf>,
    #[serde(default)]
    pub stopwords: Option<PathBuf>,
    #[serde(default)]
    pub lemma_exceptions: Option<PathBuf>,
    #[serde(default = "default_out_dir")]
    pub out_dir: PathBuf,

    #[serde(default = "default_reply_types")]
    pub reply_types: Vec<ReplyType>,
    #[serde(default = "default_category_types")]
    pub category_types: Vec<CategoryType>,
    #[serde(default = "default_variants")]
    pub variants: Vec<ConfounderVariant>,
    /// Category types of the first post included in the full confounder.
    #[serde(default = "default_category_types")]
    pub sentiment_types: Vec<CategoryType>,
    #[serde(default = "default_estimators")]
    pub estimators: Vec<Estimator>,

    #[serde(default = "default_k")]
    pub k: usize,
    #[serde(default = "default_min_df")]
    pub min_df: f64,
    #[serde(default = "default_max_df")]
    pub max_df: f64,
    #[serde(default)]
    pub alpha_prior: Option<f64>,
    #[serde(default = "default_gamma_prior")]
    pub gamma_prior: f64,
    #[serde(default = "default_lda_max_iters")]
    pub lda_max_iters: usize,
    #[serde(default = "default_lda_tol")]
    pub lda_tol: f64,
    #[serde(default = "default_true")]
    pub use_cache: bool,

    #[serde(default = "default_folds")]
    pub folds: usize,
    #[serde(default = "default_replicates")]
    pub bootstrap_replicates: usize,
    #[serde(default = "default_true")]
    pub bootstrap_refit: bool,
    #[serde(default = "default_clip")]
    pub clip_epsilon: f64,
    #[serde(default = "default_l2")]
    pub propensity_l2: f64,
    #[serde(default)]
    pub outcome_ridge: f64,
    /// Ridge used when an outcome design is rank deficient; 0 turns the
    /// fallback off and makes rank deficiency an error.
    #[serde(default = "default_ridge_fallback")]
    pub outcome_ridge_fallback: f64,
    /// Worker threads; 0 uses all cores.
    #[serde(default)]
    pub jobs: usize,
}

fn default_out_dir() -> PathBuf {
    PathBuf::from("out")
}
fn default_reply_types() -> Vec<ReplyType> {
    ReplyType::ALL.to_vec()
}
fn default_category_types() -> Vec<CategoryType> {
    CategoryType::ALL.to_vec()
}
fn default_variants() -> Vec<ConfounderVariant> {
    ConfounderVariant::ALL.to_vec()
}
fn default_estimators() -> Vec<Estimator> {
    Estimator::DEFAULT_SET.to_vec()
}
fn default_k() -> usize {
    50
}
fn default_min_df() -> f64 {
    DEFAULT_MIN_DF
}
fn default_max_df() -> f64 {
    DEFAULT_MAX_DF
}
fn default_gamma_prior() -> f64 {
    0.01
}
fn default_lda_max_iters() -> usize {
    200
}
fn default_lda_tol() -> f64 {
    1e-4
}
fn default_true() -> bool {
    true
}
fn default_folds() -> usize {
    5
}
fn default_replicates() -> usize {
    1000
}
fn default_clip() -> f64 {
    crate::inference::logistic::DEFAULT_CLIP
}
fn default_l2() -> f64 {
    crate::inference::logistic::DEFAULT_L2
}
fn default_ridge_fallback() -> f64 {
    1e-4
}

impl PipelineConfig {
    /// Config with defaults for everything but the mandatory fields.
    pub fn new(seed: u64, posts: impl Into<PathBuf>, annotations: impl Into<PathBuf>) -> Self {
        let mut table = toml::Table::new();
        table.insert("seed".into(), toml::Value::Integer(seed as i64));
        table.insert("posts".into(), toml::Value::String(posts.into().to_string_lossy().into_owned()));
        table.insert(
            "annotations".into(),
            toml::Value::String(annotations.into().to_string_lossy().into_owned()),
        );
        Self::from_table(table).expect("defaults are valid")
    }

    pub fn from_table(table: toml::Table) -> Result<Self> {
        table
            .try_into()
            .map_err(|e: toml::de::Error| Error::validation(format!("config: {}", e.message())))
    }

    pub fn parse(text: &str) -> Result<Self> {
        Self::from_table(parse_table(text)?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        Self::parse(&fs::read_to_string(path).map_err(|e| Error::io(path, e))?)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Reject empty requests and out-of-range numbers before any work starts.
    pub fn validate(&self) -> Result<()> {
        let v = |msg: &str| Err(Error::validation(msg.to_owned()));
        if self.reply_types.is_empty() {
            return v("no reply types requested");
        }
        if self.category_types.is_empty() {
            return v("no category types requested");
        }
        if self.variants.is_empty() {
            return v("no confounder variants requested");
        }
        if self.estimators.is_empty() {
            return v("no estimators requested");
        }
        if self.k == 0 {
            return v("k must be at least 1");
        }
        if !(0.0..1.0).contains(&self.min_df) || !(self.min_df < self.max_df && self.max_df <= 1.0) {
            return v("document-frequency thresholds need 0 <= min_df < max_df <= 1");
        }
        if matches!(self.alpha_prior, Some(a) if !(a > 0.0)) || !(self.gamma_prior > 0.0) {
            return v("Dirichlet priors must be positive");
        }
        if self.lda_max_iters == 0 || !(self.lda_tol > 0.0) {
            return v("lda_max_iters must be positive and lda_tol > 0");
        }
        if self.folds < 2 {
            return v("folds must be at least 2");
        }
        if self.bootstrap_replicates < 2 {
            return v("bootstrap_replicates must be at least 2");
        }
        if !(self.clip_epsilon > 0.0 && self.clip_epsilon < 0.5) {
            return v("clip_epsilon must lie in (0, 0.5)");
        }
        if !(self.propensity_l2 >= 0.0) || !(self.outcome_ridge >= 0.0) {
            return v("regularization strengths must be nonnegative");
        }
        if !(self.outcome_ridge_fallback >= 0.0) {
            return v("outcome_ridge_fallback must be nonnegative");
        }
        let mut required = vec![&self.posts, &self.annotations];
        required.extend(
            [&self.lexicon, &self.grouping, &self.stopwords, &self.lemma_exceptions]
                .into_iter()
                .flatten(),
        );
        for p in required {
            if !p.is_file() {
                return Err(Error::validation(format!("input file {} does not exist", p.display())));
            }
        }
        if self.lexicon.is_some() != self.grouping.is_some() {
            return v("lexicon and grouping must be given together");
        }
        Ok(())
    }

    pub fn lda_config(&self) -> LdaConfig {
        LdaConfig {
            k: self.k,
            alpha_prior: self.alpha_prior,
            gamma_prior: self.gamma_prior,
            seed: self.seed,
            max_iters: self.lda_max_iters,
            tol: self.lda_tol,
            ..LdaConfig::default()
        }
    }

    pub fn nuisance_config(&self) -> NuisanceConfig {
        NuisanceConfig {
            propensity: PropensityOptions {
                regularization: self.propensity_l2,
                seed: self.seed,
                ..PropensityOptions::default()
            },
            outcome: OutcomeOptions {
                ridge: self.outcome_ridge,
                ridge_fallback: (self.outcome_ridge_fallback > 0.0).then_some(self.outcome_ridge_fallback),
            },
            clip_epsilon: self.clip_epsilon,
            propensity_features: None,
            outcome_features: None,
        }
    }

    pub fn models_dir(&self) -> PathBuf {
        self.out_dir.join("models")
    }

    pub fn cache_dir(&self) -> PathBuf {
        self.out_dir.join("cache")
    }

    pub fn reports_dir(&self) -> PathBuf {
        self.out_dir.join("reports")
    }
}

pub fn parse_table(text: &str) -> Result<toml::Table> {
    text.parse::<toml::Table>()
        .map_err(|e| Error::validation(format!("config: {}", e.message())))
}
