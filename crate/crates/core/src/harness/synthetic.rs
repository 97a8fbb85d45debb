//! Synthetic worlds with known treatment effects.
//!
//! The tabular world draws `Z ~ N(0, I)`, assigns treatment through a logistic
//! model in `Z` and draws each arm's outcome from its own linear function of
//! `Z` plus Gaussian noise, so the true effect is the difference of the arm
//! intercepts.
//!
//! The text world generates debate threads whose first post is an LDA
//! document. Both the treatment probability and the expected outcome depend on
//! that post's topic proportions, so adjusting for the text is required to
//! recover the effect.

use std::fs;
use std::path::{Path, PathBuf};

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Gamma, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::corpus::{save_annotations, save_posts, Post, QuoteResponseAnnotation, ReplyType};
use crate::error::{Error, Result};
use crate::estimators::EstimationInput;
use crate::rng::stream;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticWorld {
    pub n: usize,
    /// Confounder dimension.
    pub dim: usize,
    pub treatment_intercept: f64,
    pub treatment_coefs: Vec<f64>,
    pub control_intercept: f64,
    pub control_coefs: Vec<f64>,
    pub treated_intercept: f64,
    pub treated_coefs: Vec<f64>,
    pub noise_scale: f64,
    pub seed: u64,
    /// Generate a text corpus instead of tabular data.
    #[serde(default)]
    pub text: Option<TextWorld>,
}

impl SyntheticWorld {
    /// A world with `dim` confounders, no confounding and a constant effect.
    pub fn unconfounded(n: usize, dim: usize, effect: f64, seed: u64) -> Self {
        SyntheticWorld {
            n,
            dim,
            treatment_intercept: 0.0,
            treatment_coefs: vec![0.0; dim],
            control_intercept: 0.0,
            control_coefs: vec![1.0; dim],
            treated_intercept: effect,
            treated_coefs: vec![1.0; dim],
            noise_scale: 1.0,
            seed,
            text: None,
        }
    }

    /// Confounders are centred, so the effect is the intercept difference.
    pub fn true_ate(&self) -> f64 {
        match &self.text {
            Some(t) => t.effect,
            None => self.treated_intercept - self.control_intercept,
        }
    }

    fn validate_tabular(&self) -> Result<()> {
        if self.n < 2 {
            return Err(Error::validation("synthetic world needs n >= 2"));
        }
        if self.dim == 0 {
            return Err(Error::validation("synthetic world needs at least one confounder"));
        }
        for (name, v) in [
            ("treatment_coefs", &self.treatment_coefs),
            ("control_coefs", &self.control_coefs),
            ("treated_coefs", &self.treated_coefs),
        ] {
            if v.len() != self.dim {
                return Err(Error::validation(format!("{name} has {} entries, expected {}", v.len(), self.dim)));
            }
            if v.iter().any(|x| !x.is_finite()) {
                return Err(Error::validation(format!("{name} has non-finite entries")));
            }
        }
        if !(self.noise_scale >= 0.0 && self.noise_scale.is_finite()) {
            return Err(Error::validation("noise_scale must be finite and nonnegative"));
        }
        let signal = self.control_coefs.iter().chain(&self.treated_coefs).any(|c| *c != 0.0);
        if !signal && self.noise_scale == 0.0 {
            return Err(Error::validation("synthetic outcomes have zero variance"));
        }
        Ok(())
    }
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticData {
    /// Confounders, treatments and outcomes; nuisances not yet fitted.
    pub input: EstimationInput,
    pub true_ate: f64,
}

pub fn generate_synthetic_tabular(world: &SyntheticWorld) -> Result<SyntheticData> {
    world.validate_tabular()?;
    let mut rng = stream(world.seed, 0);
    let mut features = Vec::with_capacity(world.n);
    let mut treatment = Vec::with_capacity(world.n);
    let mut outcome = Vec::with_capacity(world.n);
    for _ in 0..world.n {
        let z: Vec<f64> = (0..world.dim).map(|_| rng.sample(StandardNormal)).collect();
        let p = sigmoid(world.treatment_intercept + dot(&world.treatment_coefs, &z));
        let t = u8::from(rng.random::<f64>() < p);
        let noise: f64 = rng.sample(StandardNormal);
        let mean = if t == 1 {
            world.treated_intercept + dot(&world.treated_coefs, &z)
        } else {
            world.control_intercept + dot(&world.control_coefs, &z)
        };
        features.push(z);
        treatment.push(t);
        outcome.push(mean + world.noise_scale * noise);
    }
    Ok(SyntheticData {
        input: EstimationInput::new(features, treatment, outcome),
        true_ate: world.true_ate(),
    })
}

/// Plain LDA generative process.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LdaWorld {
    pub k: usize,
    pub vocab_size: usize,
    pub n_docs: usize,
    pub doc_length: usize,
    /// Dirichlet concentration of document proportions.
    pub alpha: f64,
    /// Dirichlet concentration of topic-word distributions.
    pub eta: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LdaSample {
    pub vocabulary: Vec<String>,
    /// True topic-word distributions, one row per topic.
    pub topics: Vec<Vec<f64>>,
    pub theta: Vec<Vec<f64>>,
    pub documents: Vec<Vec<String>>,
}

fn dirichlet(rng: &mut ChaCha8Rng, concentration: f64, dim: usize) -> Vec<f64> {
    let gamma = Gamma::new(concentration, 1.0).expect("positive concentration");
    loop {
        let draws: Vec<f64> = (0..dim).map(|_| gamma.sample(rng)).collect();
        let total: f64 = draws.iter().sum();
        if total > 0.0 && total.is_finite() {
            return draws.into_iter().map(|d| d / total).collect();
        }
    }
}

pub fn synthetic_term(index: usize, vocab_size: usize) -> String {
    let width = (vocab_size.saturating_sub(1)).to_string().len().max(3);
    format!("w{index:0width$}")
}

struct TopicSampler {
    vocabulary: Vec<String>,
    topics: Vec<Vec<f64>>,
}

impl TopicSampler {
    fn new(rng: &mut ChaCha8Rng, k: usize, vocab_size: usize, eta: f64) -> Result<Self> {
        if k == 0 || vocab_size < 2 {
            return Err(Error::validation("topic matrix needs k >= 1 and at least 2 terms"));
        }
        if !(eta > 0.0 && eta.is_finite()) {
            return Err(Error::validation("topic concentration must be positive"));
        }
        let topics: Vec<Vec<f64>> = (0..k).map(|_| dirichlet(rng, eta, vocab_size)).collect();
        if topics.iter().any(|t| t.iter().any(|p| !p.is_finite())) {
            return Err(Error::Numerical("degenerate topic matrix".into()));
        }
        Ok(TopicSampler {
            vocabulary: (0..vocab_size).map(|i| synthetic_term(i, vocab_size)).collect(),
            topics,
        })
    }

    /// Draw `length` words: topic from `theta`, then word from that topic.
    fn document(&self, rng: &mut ChaCha8Rng, theta: &[f64], length: usize) -> Vec<String> {
        let mixture: Vec<f64> = (0..self.vocabulary.len())
            .map(|w| theta.iter().zip(&self.topics).map(|(t, b)| t * b[w]).sum())
            .collect();
        let words = WeightedIndex::new(&mixture).expect("mixture has positive mass");
        (0..length).map(|_| self.vocabulary[words.sample(rng)].clone()).collect()
    }
}

pub fn generate_lda_corpus(world: &LdaWorld) -> Result<LdaSample> {
    if !(world.alpha > 0.0) {
        return Err(Error::validation("document concentration must be positive"));
    }
    let mut rng = stream(world.seed, 0);
    let sampler = TopicSampler::new(&mut rng, world.k, world.vocab_size, world.eta)?;
    let mut theta = Vec::with_capacity(world.n_docs);
    let mut documents = Vec::with_capacity(world.n_docs);
    for _ in 0..world.n_docs {
        let th = dirichlet(&mut rng, world.alpha, world.k);
        documents.push(sampler.document(&mut rng, &th, world.doc_length));
        theta.push(th);
    }
    Ok(LdaSample {
        vocabulary: sampler.vocabulary,
        topics: sampler.topics,
        theta,
        documents,
    })
}

/// Text-confounding settings.
///
/// Each unit is a three-post thread. The first post is an LDA document with
/// proportions `θ`; the reply's tone is treated with probability
/// `sigmoid(treatment_strength · (θ_0 − θ_1))`; the follow-up consists of
/// `outcome_length` words, each `good` with probability
/// `outcome_base + effect · T + outcome_confounding · (θ_0 − θ_1)` and `meh`
/// otherwise. The shipped lexicon counts `good` as positive sentiment and the
/// first post contains no lexicon words, so the outcome is the fraction of
/// `good` in the follow-up and the true effect is `effect`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TextWorld {
    pub k: usize,
    pub vocab_size: usize,
    pub doc_length: usize,
    pub outcome_length: usize,
    pub alpha: f64,
    pub eta: f64,
    pub treatment_strength: f64,
    pub outcome_base: f64,
    pub outcome_confounding: f64,
    pub effect: f64,
}

impl Default for TextWorld {
    fn default() -> Self {
        TextWorld {
            k: 3,
            vocab_size: 50,
            doc_length: 100,
            outcome_length: 50,
            alpha: 0.5,
            eta: 0.1,
            treatment_strength: 4.0,
            outcome_base: 0.45,
            outcome_confounding: 0.25,
            effect: 0.15,
        }
    }
}

impl TextWorld {
    fn validate(&self) -> Result<()> {
        if self.k < 2 {
            return Err(Error::validation("text world needs k >= 2 so the topic projection varies"));
        }
        if self.doc_length == 0 || self.outcome_length == 0 {
            return Err(Error::validation("document lengths must be positive"));
        }
        let c = self.outcome_confounding.abs();
        let lo = self.outcome_base + self.effect.min(0.0) - c;
        let hi = self.outcome_base + self.effect.max(0.0) + c;
        if lo < 0.0 || hi > 1.0 {
            return Err(Error::validation(format!(
                "outcome probabilities range over [{lo}, {hi}], outside [0, 1]"
            )));
        }
        Ok(())
    }
}

pub const SYNTHETIC_TOPIC: &str = "synthetic";
pub const SYNTHETIC_LEXICON: &str = "# Synthetic-world lexicon.\ngood\tpos\nmeh\tneutral\n";
pub const SYNTHETIC_GROUPING: &str = "[positive_sentiment]\npos\n";

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticCorpus {
    pub posts: Vec<Post>,
    pub annotations: Vec<QuoteResponseAnnotation>,
    pub true_ate: f64,
    pub topics: Vec<Vec<f64>>,
    /// Proportions of each unit's first post.
    pub theta: Vec<Vec<f64>>,
    pub treatment: Vec<u8>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticCorpusFiles {
    pub posts: PathBuf,
    pub annotations: PathBuf,
    pub lexicon: PathBuf,
    pub grouping: PathBuf,
}

impl SyntheticCorpus {
    /// Write `posts.jsonl`, `annotations.jsonl`, `lexicon.tsv` and `grouping.txt`.
    pub fn write(&self, dir: &Path) -> Result<SyntheticCorpusFiles> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let files = SyntheticCorpusFiles {
            posts: dir.join("posts.jsonl"),
            annotations: dir.join("annotations.jsonl"),
            lexicon: dir.join("lexicon.tsv"),
            grouping: dir.join("grouping.txt"),
        };
        save_posts(&files.posts, &self.posts)?;
        save_annotations(&files.annotations, &self.annotations)?;
        fs::write(&files.lexicon, SYNTHETIC_LEXICON).map_err(|e| Error::io(&files.lexicon, e))?;
        fs::write(&files.grouping, SYNTHETIC_GROUPING).map_err(|e| Error::io(&files.grouping, e))?;
        Ok(files)
    }
}

pub fn generate_synthetic_corpus(world: &SyntheticWorld) -> Result<SyntheticCorpus> {
    let text = world
        .text
        .as_ref()
        .ok_or_else(|| Error::validation("synthetic world has no text settings"))?;
    text.validate()?;
    if world.n < 2 {
        return Err(Error::validation("synthetic world needs n >= 2"));
    }
    let mut rng = stream(world.seed, 1);
    let sampler = TopicSampler::new(&mut rng, text.k, text.vocab_size, text.eta)?;
    let mut posts = Vec::with_capacity(3 * world.n);
    let mut annotations = Vec::with_capacity(world.n);
    let mut thetas = Vec::with_capacity(world.n);
    let mut treatment = Vec::with_capacity(world.n);
    for i in 0..world.n {
        let theta = dirichlet(&mut rng, text.alpha, text.k);
        let reply_theta = dirichlet(&mut rng, text.alpha, text.k);
        let lean = theta[0] - theta[1];
        let t = u8::from(rng.random::<f64>() < sigmoid(text.treatment_strength * lean));
        let p_good = text.outcome_base + text.effect * f64::from(t) + text.outcome_confounding * lean;
        let good = Binomial::new(text.outcome_length as u64, p_good)
            .map_err(|e| Error::Numerical(format!("outcome draw: {e}")))?
            .sample(&mut rng) as usize;
        let mut follow_up: Vec<&str> = vec!["good"; good];
        follow_up.extend(std::iter::repeat_n("meh", text.outcome_length - good));

        let discussion = format!("s{i:06}");
        let post = |pos: u64, author: String, parent: Option<String>, words: String| Post {
            id: format!("{discussion}-{pos}"),
            discussion_id: discussion.clone(),
            debate_topic: SYNTHETIC_TOPIC.into(),
            author,
            position: pos,
            parent_id: parent,
            text: words,
        };
        let p1 = post(0, format!("a{i}"), None, sampler.document(&mut rng, &theta, text.doc_length).join(" "));
        let p2 = post(
            1,
            format!("b{i}"),
            Some(p1.id.clone()),
            sampler.document(&mut rng, &reply_theta, text.doc_length).join(" "),
        );
        let p3 = post(2, format!("a{i}"), Some(p2.id.clone()), follow_up.join(" "));
        let magnitude: f64 = rng.random_range(1.0..=5.0);
        let score = (if t == 1 { magnitude } else { -magnitude } * 100.0).round() / 100.0;
        annotations.push(QuoteResponseAnnotation {
            quote_post_id: p1.id.clone(),
            response_post_id: p2.id.clone(),
            reply_type: ReplyType::NastyNice,
            mean_score: score,
        });
        posts.extend([p1, p2, p3]);
        thetas.push(theta);
        treatment.push(t);
    }
    Ok(SyntheticCorpus {
        posts,
        annotations,
        true_ate: text.effect,
        topics: sampler.topics,
        theta: thetas,
        treatment,
    })
}
