//! Estimating the causal effect of reply tone in threaded debates.
//!
//! The pipeline extracts post triples from a corpus, measures outcomes as
//! distances between lexicon category vectors, represents confounders with
//! per-debate-topic LDA proportions plus sentiment features, and estimates the
//! average treatment effect with regression, inverse-propensity and augmented
//! estimators.

// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod corpus;
pub mod estimators;
pub mod harness;
pub mod error;
pub mod inference;
pub mod lexicon;
pub mod rng;
pub mod topics;

pub use error::{Error, Result};
