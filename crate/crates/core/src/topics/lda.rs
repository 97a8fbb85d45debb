//! Latent Dirichlet allocation fit by batch mean-field coordinate ascent.
//!
//! Variational family: `q(θ_d) = Dir(γ_d)`, `q(β_k) = Dir(λ_k)`, with the
//! per-token topic responsibilities maximized out in closed form. Each sweep
//! warm-starts every document's `γ_d`, iterates its fixed point, then sets
//! `λ_kw = η + Σ_d n_dw φ_dwk`. Every one of these updates is an exact
//! coordinate maximizer, so the bound never decreases.

use std::fs;
use std::path::Path;

use log::{debug, warn};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::{digamma, ln_gamma};

use super::vocab::{DocumentTermMatrix, SparseRow, Vocabulary};
use crate::error::{Error, Result};

pub const MODEL_FORMAT: &str = "debate-causal/lda";
pub const MODEL_VERSION: &str = "1";

/// Documents per accumulation chunk. Fixed so the reduction order does not
/// depend on the number of worker threads.
const CHUNK: usize = 64;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LdaConfig {
    pub k: usize,
    /// Symmetric Dirichlet prior on document proportions; `None` means `1/k`.
    pub alpha_prior: Option<f64>,
    /// Symmetric Dirichlet prior on topic-word distributions.
    pub gamma_prior: f64,
    pub seed: u64,
    pub max_iters: usize,
    /// Relative change of the bound below which fitting stops.
    pub tol: f64,
    pub doc_max_iters: usize,
    /// Mean absolute change of `γ_d` below which a document's fixed point stops.
    pub doc_tol: f64,
}

impl Default for LdaConfig {
    fn default() -> Self {
        LdaConfig {
            k: 50,
            alpha_prior: None,
            gamma_prior: 0.01,
            seed: 0,
            max_iters: 200,
            tol: 1e-4,
            doc_max_iters: 100,
            doc_tol: 1e-5,
        }
    }
}

impl LdaConfig {
    pub fn alpha(&self) -> f64 {
        self.alpha_prior.unwrap_or(1.0 / self.k as f64)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LdaModel {
    pub format: String,
    pub version: String,
    pub k: usize,
    pub vocabulary: Vocabulary,
    pub alpha_prior: f64,
    pub gamma_prior: f64,
    pub seed: u64,
    /// Variational Dirichlet parameters of the topics, `k × n_terms` row-major.
    pub topic_word: Vec<f64>,
    /// Posterior mean topics, `k × n_terms` row-major; rows sum to one.
    pub beta: Vec<f64>,
    pub elbo_trace: Vec<f64>,
    pub converged: bool,
}

/// Posterior mean topic proportions of one document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopicProportions {
    pub post_id: String,
    pub theta: Vec<f64>,
}

fn dirichlet_expectation(params: &[f64]) -> Vec<f64> {
    let total = digamma(params.iter().sum());
    params.iter().map(|&p| digamma(p) - total).collect()
}

/// `E[log β]` and `exp(E[log β])` for every topic.
struct TopicExpectations {
    k: usize,
    v: usize,
    e_log: Vec<f64>,
    exp_e_log: Vec<f64>,
}

impl TopicExpectations {
    fn new(topic_word: &[f64], k: usize, v: usize) -> Self {
        let mut e_log = Vec::with_capacity(k * v);
        for row in topic_word.chunks(v) {
            e_log.extend(dirichlet_expectation(row));
        }
        let exp_e_log = e_log.iter().map(|x| x.exp()).collect();
        TopicExpectations {
            k,
            v,
            e_log,
            exp_e_log,
        }
    }

    #[inline]
    fn exp_at(&self, topic: usize, term: usize) -> f64 {
        self.exp_e_log[topic * self.v + term]
    }

    /// `Σ_k exp(E[log θ_k]) exp(E[log β_kw])` for each word of the row.
    fn phi_norms(&self, row: &SparseRow, exp_theta: &[f64]) -> Vec<f64> {
        row.indices
            .iter()
            .map(|&w| {
                (0..self.k)
                    .map(|t| exp_theta[t] * self.exp_at(t, w))
                    .sum::<f64>()
                    + f64::MIN_POSITIVE
            })
            .collect()
    }

    /// Iterate the document's `γ` fixed point in place from its current value.
    fn fit_document(&self, row: &SparseRow, alpha: f64, gamma: &mut [f64], max_iters: usize, tol: f64) {
        if row.is_empty() {
            gamma.iter_mut().for_each(|g| *g = alpha);
            return;
        }
        for _ in 0..max_iters {
            let exp_theta: Vec<f64> = dirichlet_expectation(gamma).iter().map(|x| x.exp()).collect();
            let norms = self.phi_norms(row, &exp_theta);
            let mut change = 0.0;
            for t in 0..self.k {
                let s: f64 = row
                    .iter()
                    .zip(&norms)
                    .map(|((w, c), norm)| c * self.exp_at(t, w) / norm)
                    .sum();
                let updated = alpha + exp_theta[t] * s;
                change += (updated - gamma[t]).abs();
                gamma[t] = updated;
            }
            if change / (self.k as f64) < tol {
                break;
            }
        }
    }

    /// Add `n_dw φ_dwk` to the dense `k × v` statistics for the current `γ`.
    fn accumulate(&self, row: &SparseRow, gamma: &[f64], stats: &mut [f64]) {
        let exp_theta: Vec<f64> = dirichlet_expectation(gamma).iter().map(|x| x.exp()).collect();
        let norms = self.phi_norms(row, &exp_theta);
        for ((w, c), norm) in row.iter().zip(&norms) {
            for t in 0..self.k {
                stats[t * self.v + w] += c * exp_theta[t] * self.exp_at(t, w) / norm;
            }
        }
    }

    /// Document part of the bound with the responsibilities maximized out.
    fn document_bound(&self, row: &SparseRow, gamma: &[f64], alpha: f64) -> f64 {
        let k = self.k as f64;
        let e_log_theta = dirichlet_expectation(gamma);
        let mut bound = 0.0;
        for (w, c) in row.iter() {
            let terms: Vec<f64> = (0..self.k)
                .map(|t| e_log_theta[t] + self.e_log[t * self.v + w])
                .collect();
            bound += c * log_sum_exp(&terms);
        }
        bound += ln_gamma(k * alpha) - k * ln_gamma(alpha) - ln_gamma(gamma.iter().sum());
        for t in 0..self.k {
            bound += ln_gamma(gamma[t]) + (alpha - gamma[t]) * e_log_theta[t];
        }
        bound
    }

    fn topic_bound(&self, topic_word: &[f64], eta: f64) -> f64 {
        let v = self.v as f64;
        let mut bound = 0.0;
        for t in 0..self.k {
            let row = &topic_word[t * self.v..(t + 1) * self.v];
            bound += ln_gamma(v * eta) - v * ln_gamma(eta) - ln_gamma(row.iter().sum());
            for (w, &lam) in row.iter().enumerate() {
                bound += ln_gamma(lam) + (eta - lam) * self.e_log[t * self.v + w];
            }
        }
        bound
    }
}

fn log_sum_exp(xs: &[f64]) -> f64 {
    let m = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    m + xs.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

fn normalize_rows(topic_word: &[f64], v: usize) -> Vec<f64> {
    topic_word
        .chunks(v)
        .flat_map(|row| {
            let s: f64 = row.iter().sum();
            row.iter().map(move |x| x / s)
        })
        .collect()
}

fn total_bound(
    expect: &TopicExpectations,
    dtm: &DocumentTermMatrix,
    gammas: &[Vec<f64>],
    topic_word: &[f64],
    alpha: f64,
    eta: f64,
) -> f64 {
    let per_chunk: Vec<f64> = dtm
        .rows
        .par_chunks(CHUNK)
        .zip(gammas.par_chunks(CHUNK))
        .map(|(rows, gs)| {
            rows.iter()
                .zip(gs)
                .map(|(r, g)| expect.document_bound(r, g, alpha))
                .sum::<f64>()
        })
        .collect();
    per_chunk.iter().sum::<f64>() + expect.topic_bound(topic_word, eta)
}

pub fn fit_lda(dtm: &DocumentTermMatrix, vocabulary: &Vocabulary, config: &LdaConfig) -> Result<LdaModel> {
    let k = config.k;
    let v = dtm.n_terms;
    if k == 0 {
        return Err(Error::validation("k must be at least 1"));
    }
    if !(config.alpha() > 0.0 && config.gamma_prior > 0.0) {
        return Err(Error::validation("Dirichlet priors must be positive"));
    }
    if dtm.n_docs() == 0 || v == 0 {
        return Err(Error::validation("document-term matrix is empty"));
    }
    if vocabulary.len() != v {
        return Err(Error::DimensionMismatch {
            expected: vocabulary.len(),
            found: v,
        });
    }
    if k > v {
        warn!("k = {k} exceeds vocabulary size {v}");
    }
    let alpha = config.alpha();
    let eta = config.gamma_prior;

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let init = Gamma::new(100.0, 0.01).expect("valid gamma parameters");
    let mut topic_word: Vec<f64> = (0..k * v).map(|_| init.sample(&mut rng)).collect();

    let mut gammas: Vec<Vec<f64>> = dtm
        .rows
        .iter()
        .map(|r| vec![alpha + r.total() / k as f64; k])
        .collect();

    let mut elbo_trace = Vec::new();
    let mut converged = false;
    for iter in 0..config.max_iters {
        let expect = TopicExpectations::new(&topic_word, k, v);
        let chunk_stats: Vec<Vec<f64>> = dtm
            .rows
            .par_chunks(CHUNK)
            .zip(gammas.par_chunks_mut(CHUNK))
            .map(|(rows, gs)| {
                let mut stats = vec![0.0; k * v];
                for (row, g) in rows.iter().zip(gs.iter_mut()) {
                    expect.fit_document(row, alpha, g, config.doc_max_iters, config.doc_tol);
                    expect.accumulate(row, g, &mut stats);
                }
                stats
            })
            .collect();
        topic_word.iter_mut().for_each(|x| *x = eta);
        for stats in &chunk_stats {
            for (tw, s) in topic_word.iter_mut().zip(stats) {
                *tw += s;
            }
        }

        let expect = TopicExpectations::new(&topic_word, k, v);
        let bound = total_bound(&expect, dtm, &gammas, &topic_word, alpha, eta);
        if !bound.is_finite() {
            return Err(Error::Numerical(format!(
                "evidence lower bound became non-finite at iteration {}",
                iter + 1
            )));
        }
        debug!("lda iteration {}: bound {bound}", iter + 1);
        let previous = elbo_trace.last().copied();
        elbo_trace.push(bound);
        if let Some(prev) = previous {
            if ((bound - prev) / prev.abs()).abs() < config.tol {
                converged = true;
                break;
            }
        }
    }

    Ok(LdaModel {
        format: MODEL_FORMAT.into(),
        version: MODEL_VERSION.into(),
        k,
        vocabulary: vocabulary.clone(),
        alpha_prior: alpha,
        gamma_prior: eta,
        seed: config.seed,
        beta: normalize_rows(&topic_word, v),
        topic_word,
        elbo_trace,
        converged,
    })
}

/// Holds the topic expectations of a fitted model for repeated inference.
pub struct ThetaInferencer<'a> {
    model: &'a LdaModel,
    expect: TopicExpectations,
}

pub const INFER_MAX_ITERS: usize = 1000;
pub const INFER_TOL: f64 = 1e-10;

impl<'a> ThetaInferencer<'a> {
    pub fn new(model: &'a LdaModel) -> Self {
        ThetaInferencer {
            model,
            expect: TopicExpectations::new(&model.topic_word, model.k, model.n_terms()),
        }
    }

    /// Posterior mean of `θ` for a document, topics held fixed.
    pub fn infer(&self, row: &SparseRow) -> Result<Vec<f64>> {
        let v = self.model.n_terms();
        if let Some(&j) = row.indices.iter().find(|&&j| j >= v) {
            return Err(Error::DimensionMismatch {
                expected: v,
                found: j + 1,
            });
        }
        let k = self.model.k;
        let alpha = self.model.alpha_prior;
        let mut gamma = vec![alpha + row.total() / k as f64; k];
        self.expect
            .fit_document(row, alpha, &mut gamma, INFER_MAX_ITERS, INFER_TOL);
        let s: f64 = gamma.iter().sum();
        Ok(gamma.iter().map(|g| g / s).collect())
    }

    pub fn infer_tokens<S: AsRef<str>>(&self, tokens: &[S]) -> Vec<f64> {
        self.infer(&SparseRow::from_tokens(tokens, &self.model.vocabulary))
            .expect("row built from the model vocabulary")
    }
}

pub fn infer_theta(model: &LdaModel, post_id: &str, doc_row: &[f64]) -> Result<TopicProportions> {
    if doc_row.len() != model.n_terms() {
        return Err(Error::DimensionMismatch {
            expected: model.n_terms(),
            found: doc_row.len(),
        });
    }
    let theta = ThetaInferencer::new(model).infer(&SparseRow::from_dense(doc_row))?;
    Ok(TopicProportions {
        post_id: post_id.to_owned(),
        theta,
    })
}

impl LdaModel {
    pub fn n_terms(&self) -> usize {
        self.vocabulary.len()
    }

    pub fn beta_row(&self, topic: usize) -> &[f64] {
        let v = self.n_terms();
        &self.beta[topic * v..(topic + 1) * v]
    }

    /// The `n` most probable terms of a topic; ties go to the earlier term.
    pub fn top_words(&self, topic: usize, n: usize) -> Result<Vec<String>> {
        if topic >= self.k {
            return Err(Error::validation(format!(
                "topic index {topic} out of range (k = {})",
                self.k
            )));
        }
        let row = self.beta_row(topic);
        let mut order: Vec<usize> = (0..row.len()).collect();
        order.sort_by(|&a, &b| row[b].total_cmp(&row[a]).then(a.cmp(&b)));
        Ok(order
            .into_iter()
            .take(n)
            .map(|j| self.vocabulary.terms()[j].clone())
            .collect())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("model serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let value: serde_json::Value = serde_json::from_str(text).map_err(|e| Error::Corrupt {
            artifact: "topic model",
            version: "unknown".into(),
            message: e.to_string(),
        })?;
        let version = value
            .get("version")
            .and_then(|v| v.as_str())
            .unwrap_or("missing")
            .to_owned();
        if value.get("format").and_then(|v| v.as_str()) != Some(MODEL_FORMAT) || version != MODEL_VERSION {
            return Err(Error::FormatVersion {
                artifact: "topic model",
                found: version,
                supported: MODEL_VERSION,
            });
        }
        let model: LdaModel = serde_json::from_value(value).map_err(|e| Error::Corrupt {
            artifact: "topic model",
            version: version.clone(),
            message: e.to_string(),
        })?;
        let v = model.n_terms();
        if model.k == 0 || model.beta.len() != model.k * v || model.topic_word.len() != model.k * v {
            return Err(Error::Corrupt {
                artifact: "topic model",
                version,
                message: "matrix dimensions do not match k and vocabulary".into(),
            });
        }
        Ok(model)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_json()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::topics::vocab::build_dtm;

    fn toy() -> (DocumentTermMatrix, Vocabulary) {
        let vocab = Vocabulary::from_terms(
            ["apple", "banana", "cherry", "date"].map(|t| (t.to_owned(), 0.5)),
        )
        .unwrap();
        let docs: Vec<(String, Vec<&str>)> = vec![
            ("a".into(), vec!["apple", "apple", "banana"]),
            ("b".into(), vec!["cherry", "date", "date"]),
            ("c".into(), vec!["apple", "banana", "banana", "cherry"]),
            ("d".into(), vec![]),
        ];
        (build_dtm(&docs, &vocab), vocab)
    }

    #[test]
    fn single_topic_collapses_to_corpus_distribution() {
        let (dtm, vocab) = toy();
        let cfg = LdaConfig {
            k: 1,
            gamma_prior: 1e-9,
            ..Default::default()
        };
        let model = fit_lda(&dtm, &vocab, &cfg).unwrap();
        let counts = [3.0, 3.0, 2.0, 2.0];
        for (b, c) in model.beta_row(0).iter().zip(counts) {
            assert!((b - c / 10.0).abs() < 1e-8);
        }
        let inf = ThetaInferencer::new(&model);
        for row in &dtm.rows {
            assert_eq!(inf.infer(row).unwrap(), vec![1.0]);
        }
    }

    #[test]
    fn zero_document_gets_prior_mean_and_rows_normalize() {
        let (dtm, vocab) = toy();
        let model = fit_lda(&dtm, &vocab, &LdaConfig { k: 3, seed: 5, ..Default::default() }).unwrap();
        let theta = infer_theta(&model, "d", &[0.0; 4]).unwrap().theta;
        for t in &theta {
            assert!((t - 1.0 / 3.0).abs() < 1e-15);
        }
        for k in 0..3 {
            let s: f64 = model.beta_row(k).iter().sum();
            assert!((s - 1.0).abs() < 1e-9);
        }
        assert!(infer_theta(&model, "x", &[1.0; 3]).is_err());
    }

    #[test]
    fn same_seed_same_model() {
        let (dtm, vocab) = toy();
        let cfg = LdaConfig { k: 2, seed: 11, ..Default::default() };
        let a = fit_lda(&dtm, &vocab, &cfg).unwrap();
        let b = fit_lda(&dtm, &vocab, &cfg).unwrap();
        assert_eq!(a.beta, b.beta);
        assert_eq!(a.elbo_trace, b.elbo_trace);
    }

    #[test]
    fn top_words_sorting_and_ties() {
        let vocab = Vocabulary::from_terms(["a", "b", "c"].map(|t| (t.to_owned(), 0.5))).unwrap();
        let mut model = LdaModel {
            format: MODEL_FORMAT.into(),
            version: MODEL_VERSION.into(),
            k: 2,
            vocabulary: vocab,
            alpha_prior: 0.5,
            gamma_prior: 0.01,
            seed: 0,
            topic_word: vec![5.0, 3.0, 2.0, 1.0, 1.0, 1.0],
            beta: vec![0.5, 0.3, 0.2, 1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0],
            elbo_trace: vec![],
            converged: true,
        };
        assert_eq!(model.top_words(0, 2).unwrap(), vec!["a", "b"]);
        assert_eq!(model.top_words(0, 10).unwrap(), vec!["a", "b", "c"]);
        assert_eq!(model.top_words(1, 3).unwrap(), vec!["a", "b", "c"]);
        assert!(model.top_words(2, 1).is_err());
        model.version = "9".into();
        let err = LdaModel::from_json(&model.to_json()).unwrap_err();
        assert!(err.to_string().contains("9"));
    }

    #[test]
    fn serialization_round_trip() {
        let (dtm, vocab) = toy();
        let model = fit_lda(&dtm, &vocab, &LdaConfig { k: 2, seed: 3, ..Default::default() }).unwrap();
        assert_eq!(LdaModel::from_json(&model.to_json()).unwrap(), model);
        assert!(matches!(LdaModel::from_json("{not json"), Err(Error::Corrupt { .. })));
    }
}
