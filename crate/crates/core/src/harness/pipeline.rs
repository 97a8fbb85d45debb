//! End-to-end orchestration: ingest, triples, topic models, confounders,
//! cross-validation, estimation and report assembly.
//!
//! Output directory layout:
//!
//! * `models/lda-<topic>.json` fitted topic model per debate topic
//! * `cache/lda-<topic>-<hash>.json` cached fits keyed by corpus and settings
//! * `reports/report.json`, `report.txt`, `estimates.csv`, `cv.csv`,
//!   `triples.json`, `timings.json`

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use log::{info, warn};
use rayon::prelude::*;
use serde::Serialize;
use sha2::{Digest, Sha256};

use super::config::PipelineConfig;
use super::report::{
    render_cv_delimited, render_estimates_delimited, render_text, ReplyTypeCounts, RunReport, StageTiming, TopicWords,
};
use crate::corpus::{
    extract_triples, load_annotations, load_posts, triple_counts, PostCollection, QuoteResponseAnnotation, ReplyType,
    Triple,
};
use crate::error::{Error, Result};
use crate::estimators::{estimate_all, AteEstimate, BootstrapConfig, CellLabels, EstimateConfig, EstimationInput};
use crate::inference::{cross_validate, feature_rows, Confounder, ConfounderBuilder, ConfounderVariant, CvReport};
use crate::lexicon::{compute_outcome, vectorize_tokens, CategoryLexicon, CategoryType, CategoryTypeGrouping};
use crate::rng::{derive_seed, label_hash};
use crate::topics::{build_dtm, build_vocabulary, fit_lda, LdaConfig, LdaModel, Tokenizer};

const BUNDLED_LEXICON: &str = include_str!("../../data/lexicon.tsv");
const BUNDLED_GROUPING: &str = include_str!("../../data/grouping.txt");
const TOP_WORDS: usize = 10;

/// Parsed inputs shared by every later stage.
pub struct Ingested {
    pub posts: PostCollection,
    pub annotations: Vec<QuoteResponseAnnotation>,
    pub lexicon: CategoryLexicon,
    pub grouping: CategoryTypeGrouping,
    pub topic_tokenizer: Tokenizer,
    pub lexicon_tokenizer: Tokenizer,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct ReplyTriples {
    pub reply_type: ReplyType,
    pub annotations: usize,
    pub triples: Vec<Triple>,
    pub skipped: Vec<String>,
}

impl ReplyTriples {
    pub fn counts(&self) -> ReplyTypeCounts {
        ReplyTypeCounts {
            reply_type: self.reply_type,
            annotations: self.annotations,
            skipped_annotations: self.skipped.len(),
            summary: triple_counts(&self.triples),
        }
    }
}

/// Which optional stages to run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Stages {
    pub crossval: bool,
    pub estimate: bool,
}

impl Stages {
    pub const ALL: Stages = Stages {
        crossval: true,
        estimate: true,
    };
}

pub fn ingest(config: &PipelineConfig) -> Result<Ingested> {
    let loaded = load_posts(&config.posts)?;
    let anns = load_annotations(&config.annotations)?;
    let mut warnings = Vec::new();
    for issue in &loaded.issues {
        warnings.push(format!("{}: {}", config.posts.display(), issue));
    }
    for issue in &anns.issues {
        warnings.push(format!("{}: {}", config.annotations.display(), issue));
    }
    let posts = loaded.posts;

    let (lexicon, grouping) = match (&config.lexicon, &config.grouping) {
        (Some(l), Some(g)) => crate::lexicon::load_lexicon(l, g)?,
        _ => {
            let lexicon = CategoryLexicon::parse(BUNDLED_LEXICON)?;
            let grouping = CategoryTypeGrouping::parse(BUNDLED_GROUPING, &lexicon)?;
            (lexicon, grouping)
        }
    };
    for ty in config.category_types.iter().chain(&config.sentiment_types) {
        if grouping.categories(*ty).is_none() {
            return Err(Error::validation(format!("grouping has no section for category type {ty}")));
        }
    }
    let topic_tokenizer = Tokenizer::from_files(config.stopwords.as_deref(), config.lemma_exceptions.as_deref())?;
    info!(
        "ingested {} posts in {} discussions and {} annotations",
        posts.len(),
        posts.discussion_count(),
        anns.annotations.len()
    );
    Ok(Ingested {
        posts,
        annotations: anns.annotations,
        lexicon,
        grouping,
        topic_tokenizer,
        lexicon_tokenizer: Tokenizer::surface(),
        warnings,
    })
}

pub fn extract_all(ingested: &Ingested, config: &PipelineConfig) -> Vec<ReplyTriples> {
    config
        .reply_types
        .iter()
        .map(|&rt| {
            let ex = extract_triples(&ingested.posts, &ingested.annotations, rt);
            ReplyTriples {
                reply_type: rt,
                annotations: ingested.annotations.iter().filter(|a| a.reply_type == rt).count(),
                triples: ex.triples,
                skipped: ex.skipped,
            }
        })
        .collect()
}

/// Lowercase file-name-safe form of a debate topic.
pub fn topic_slug(topic: &str) -> String {
    let mut s: String = topic
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() { c.to_ascii_lowercase() } else { '-' })
        .collect();
    while s.contains("--") {
        s = s.replace("--", "-");
    }
    s.trim_matches('-').to_owned()
}

#[derive(Serialize)]
struct CacheKey<'a> {
    debate_topic: &'a str,
    documents: &'a [(String, Vec<String>)],
    min_df: f64,
    max_df: f64,
    lda: &'a LdaConfig,
}

fn cache_hash(key: &CacheKey<'_>) -> String {
    let bytes = serde_json::to_vec(key).expect("cache key serializes");
    hex::encode(Sha256::digest(&bytes))[..16].to_owned()
}

#[derive(Debug, Clone)]
pub struct TopicModels {
    pub models: BTreeMap<String, LdaModel>,
    pub from_cache: Vec<String>,
}

/// Fit one topic model per debate topic on all posts of that topic.
pub fn fit_topic_models(ingested: &Ingested, config: &PipelineConfig, debate_topics: &[String]) -> Result<TopicModels> {
    let lda = config.lda_config();
    let mut models = BTreeMap::new();
    let mut from_cache = Vec::new();
    for topic in debate_topics {
        let docs: Vec<(String, Vec<String>)> = ingested
            .posts
            .posts()
            .iter()
            .filter(|p| p.debate_topic == *topic)
            .map(|p| (p.id.clone(), ingested.topic_tokenizer.tokenize(&p.text)))
            .collect();
        let hash = cache_hash(&CacheKey {
            debate_topic: topic,
            documents: &docs,
            min_df: config.min_df,
            max_df: config.max_df,
            lda: &lda,
        });
        let cache_path = config.cache_dir().join(format!("lda-{}-{hash}.json", topic_slug(topic)));
        if config.use_cache && cache_path.is_file() {
            match LdaModel::load(&cache_path) {
                Ok(m) => {
                    info!("topic model for {topic:?} loaded from {}", cache_path.display());
                    models.insert(topic.clone(), m);
                    from_cache.push(topic.clone());
                    continue;
                }
                Err(e) => warn!("ignoring unreadable cache {}: {e}", cache_path.display()),
            }
        }
        let token_lists: Vec<Vec<&str>> = docs.iter().map(|(_, t)| t.iter().map(String::as_str).collect()).collect();
        let vocab = build_vocabulary(&token_lists, config.min_df, config.max_df)
            .map_err(|e| Error::validation(format!("debate topic {topic:?}: {e}")))?;
        let dtm = build_dtm(&docs, &vocab);
        info!(
            "fitting {} topics for {topic:?} on {} posts, {} terms",
            lda.k,
            dtm.n_docs(),
            vocab.len()
        );
        let model = fit_lda(&dtm, &vocab, &lda)?;
        if config.use_cache {
            ensure_dir(&config.cache_dir())?;
            model.save(&cache_path)?;
        }
        models.insert(topic.clone(), model);
    }
    Ok(TopicModels { models, from_cache })
}

pub fn save_models(models: &BTreeMap<String, LdaModel>, dir: &Path) -> Result<Vec<PathBuf>> {
    ensure_dir(dir)?;
    models
        .iter()
        .map(|(topic, m)| {
            let path = dir.join(format!("lda-{}.json", topic_slug(topic)));
            m.save(&path)?;
            Ok(path)
        })
        .collect()
}

pub fn topic_words(models: &BTreeMap<String, LdaModel>) -> Result<Vec<TopicWords>> {
    models
        .iter()
        .map(|(topic, m)| {
            Ok(TopicWords {
                debate_topic: topic.clone(),
                k: m.k,
                iterations: m.elbo_trace.len(),
                converged: m.converged,
                top_words: (0..m.k).map(|i| m.top_words(i, TOP_WORDS)).collect::<Result<_>>()?,
            })
        })
        .collect()
}

/// Distance between the first and third posts' category vectors.
pub fn triple_outcomes(ingested: &Ingested, triples: &[Triple], category_type: CategoryType) -> Result<Vec<f64>> {
    let vector = |id: &str| {
        let post = ingested
            .posts
            .get(id)
            .ok_or_else(|| Error::validation(format!("unknown post {id:?}")))?;
        let tokens = ingested.lexicon_tokenizer.tokenize(&post.text);
        vectorize_tokens(&ingested.lexicon, &ingested.grouping, category_type, &tokens)
    };
    triples
        .iter()
        .map(|t| compute_outcome(&vector(&t.p1)?, &vector(&t.p3)?))
        .collect()
}

pub fn build_confounders(
    ingested: &Ingested,
    models: &BTreeMap<String, LdaModel>,
    config: &PipelineConfig,
    triples: &[Triple],
    variant: ConfounderVariant,
) -> Result<Vec<Confounder>> {
    let builder = ConfounderBuilder {
        posts: &ingested.posts,
        models,
        lexicon: &ingested.lexicon,
        grouping: &ingested.grouping,
        topic_tokenizer: &ingested.topic_tokenizer,
        lexicon_tokenizer: &ingested.lexicon_tokenizer,
        sentiment_types: config.sentiment_types.clone(),
        debate_topics: ingested.posts.debate_topics(),
    };
    triples.par_iter().map(|t| builder.build(t, variant)).collect()
}

fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn write(path: PathBuf, bytes: impl AsRef<[u8]>) -> Result<()> {
    if let Some(parent) = path.parent() {
        ensure_dir(parent)?;
    }
    fs::write(&path, bytes).map_err(|e| Error::io(path, e))
}

/// Write every rendering of the report under `reports/`.
pub fn write_report(report: &RunReport, reports_dir: &Path) -> Result<()> {
    let body = report.body();
    write(reports_dir.join("report.json"), body.to_json())?;
    write(reports_dir.join("report.txt"), render_text(&body))?;
    write(reports_dir.join("estimates.csv"), render_estimates_delimited(&body.estimates))?;
    write(reports_dir.join("cv.csv"), render_cv_delimited(&body.cv))?;
    write(
        reports_dir.join("timings.json"),
        serde_json::to_string_pretty(&report.timings).expect("timings serialize") + "\n",
    )
}

struct Timer {
    timings: Vec<StageTiming>,
}

impl Timer {
    fn run<T>(&mut self, stage: &'static str, f: impl FnOnce() -> Result<T>) -> Result<T> {
        let start = Instant::now();
        let out = f().map_err(|e| e.at_stage(stage));
        self.timings.push(StageTiming {
            stage: stage.into(),
            seconds: start.elapsed().as_secs_f64(),
        });
        out
    }
}

/// Estimates and notes of one cell, or the message explaining its failure.
type CellResult = std::result::Result<(Vec<AteEstimate>, Vec<String>), String>;

/// Key naming an estimation cell, used for its derived seed.
fn cell_key(reply: ReplyType, category: CategoryType, variant: ConfounderVariant) -> String {
    format!("{}/{}/{}", reply.token(), category.token(), variant.token())
}

fn execute(config: &PipelineConfig, stages: Stages, report: &mut RunReport, timer: &mut Timer) -> Result<()> {
    let ingested = timer.run("ingest", || ingest(config))?;
    report.warnings.extend(ingested.warnings.iter().cloned());

    let per_reply = timer.run("triples", || Ok(extract_all(&ingested, config)))?;
    for r in &per_reply {
        report.triple_counts.push(r.counts());
        if !r.skipped.is_empty() {
            report.warnings.push(format!(
                "{}: {} of {} annotations produced no triple",
                r.reply_type.token(),
                r.skipped.len(),
                r.annotations
            ));
        }
    }
    write(
        config.reports_dir().join("triples.json"),
        serde_json::to_string_pretty(&report.triple_counts).expect("counts serialize") + "\n",
    )?;

    let models = if config.variants.contains(&ConfounderVariant::Full) {
        let mut topics: Vec<String> = per_reply
            .iter()
            .flat_map(|r| r.triples.iter().map(|t| t.debate_topic.clone()))
            .collect();
        topics.sort();
        topics.dedup();
        let fitted = timer.run("topics", || fit_topic_models(&ingested, config, &topics))?;
        timer.run("topics", || save_models(&fitted.models, &config.models_dir()))?;
        report.topics = timer.run("topics", || topic_words(&fitted.models))?;
        fitted.models
    } else {
        BTreeMap::new()
    };

    // Confounders per (reply type, variant).
    let mut confounders: BTreeMap<(ReplyType, ConfounderVariant), Vec<Confounder>> = BTreeMap::new();
    timer.run("confounders", || {
        for r in &per_reply {
            for &variant in &config.variants {
                if r.triples.is_empty() {
                    continue;
                }
                confounders.insert(
                    (r.reply_type, variant),
                    build_confounders(&ingested, &models, config, &r.triples, variant)?,
                );
            }
        }
        Ok(())
    })?;

    let mut outcomes: BTreeMap<(ReplyType, CategoryType), Vec<f64>> = BTreeMap::new();
    timer.run("outcomes", || {
        for r in &per_reply {
            for &ct in &config.category_types {
                outcomes.insert((r.reply_type, ct), triple_outcomes(&ingested, &r.triples, ct)?);
            }
        }
        Ok(())
    })?;

    let nuisance = config.nuisance_config();
    if stages.crossval {
        let cv_category = config.category_types[0];
        let jobs: Vec<(ReplyType, ConfounderVariant)> = per_reply
            .iter()
            .flat_map(|r| config.variants.iter().map(move |&v| (r.reply_type, v)))
            .collect();
        let results: Vec<std::result::Result<CvReport, String>> = timer.run("crossval", || {
            Ok(jobs
                .par_iter()
                .map(|&(rt, v)| {
                    let key = format!("{}/{}", rt.token(), v.token());
                    let z = confounders.get(&(rt, v)).ok_or_else(|| format!("cv {key}: no triples"))?;
                    let t: Vec<u8> = per_reply
                        .iter()
                        .find(|r| r.reply_type == rt)
                        .expect("reply type present")
                        .triples
                        .iter()
                        .map(|t| t.treatment.value)
                        .collect();
                    let y = &outcomes[&(rt, cv_category)];
                    let seed = derive_seed(config.seed, label_hash(&format!("cv/{key}")));
                    cross_validate(&feature_rows(z), &t, y, config.folds, seed, &nuisance)
                        .map(|metrics| CvReport {
                            reply_type: rt,
                            category_type: cv_category,
                            variant: v,
                            metrics,
                        })
                        .map_err(|e| format!("cv {key}: {e}"))
                })
                .collect())
        })?;
        for r in results {
            match r {
                Ok(cv) => {
                    report
                        .warnings
                        .extend(cv.metrics.skipped.iter().map(|s| format!("cv {}/{}: {s}", cv.reply_type.token(), cv.variant.token())));
                    report.cv.push(cv);
                }
                Err(msg) => report.warnings.push(msg),
            }
        }
    }

    if stages.estimate {
        let cells: Vec<(ReplyType, CategoryType, ConfounderVariant)> = per_reply
            .iter()
            .flat_map(|r| {
                config.category_types.iter().flat_map(move |&c| {
                    config.variants.iter().map(move |&v| (r.reply_type, c, v))
                })
            })
            .collect();
        let results: Vec<CellResult> = timer.run("estimate", || {
            Ok(cells
                .par_iter()
                .map(|&(rt, ct, v)| {
                    let key = cell_key(rt, ct, v);
                    let z = confounders.get(&(rt, v)).ok_or_else(|| format!("estimate {key}: no triples"))?;
                    let triples = &per_reply.iter().find(|r| r.reply_type == rt).expect("present").triples;
                    let t: Vec<u8> = triples.iter().map(|t| t.treatment.value).collect();
                    let y = outcomes[&(rt, ct)].clone();
                    let features: Vec<Vec<f64>> = z.iter().map(|c| c.features.clone()).collect();
                    let est_config = EstimateConfig {
                        estimators: config.estimators.clone(),
                        bootstrap: BootstrapConfig {
                            replicates: config.bootstrap_replicates,
                            seed: derive_seed(config.seed, label_hash(&key)),
                            refit: config.bootstrap_refit,
                            ..BootstrapConfig::default()
                        },
                        nuisance: nuisance.clone(),
                    };
                    let labels = CellLabels {
                        reply_type: rt,
                        category_type: ct,
                        variant: v,
                    };
                    EstimationInput::fit(features, t, y, &nuisance)
                        .and_then(|input| estimate_all(&input, &est_config, labels))
                        .map(|out| {
                            let mut notes = Vec::new();
                            if out.skipped_replicates > 0 {
                                notes.push(format!(
                                    "estimate {key}: {} bootstrap replicates skipped",
                                    out.skipped_replicates
                                ));
                            }
                            (out.estimates, notes)
                        })
                        .map_err(|e| format!("estimate {key}: {e}"))
                })
                .collect())
        })?;
        for r in results {
            match r {
                Ok((estimates, notes)) => {
                    report.estimates.extend(estimates);
                    report.warnings.extend(notes);
                }
                Err(msg) => report.warnings.push(msg),
            }
        }
    }
    Ok(())
}

/// Run the configured stages and write the report. Cell-level failures become
/// warnings; a failed stage writes a partial report and returns the error
/// tagged with the stage name.
pub fn run_stages(config: &PipelineConfig, stages: Stages) -> Result<RunReport> {
    config.validate().map_err(|e| e.at_stage("config"))?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.jobs)
        .build()
        .map_err(|e| Error::validation(format!("cannot start {} worker threads: {e}", config.jobs)))?;
    let mut report = RunReport::new(config.clone());
    let mut timer = Timer { timings: Vec::new() };
    let result = pool.install(|| execute(config, stages, &mut report, &mut timer));
    report.timings = merge_timings(timer.timings);
    if let Err(e) = &result {
        report.warnings.push(format!("run aborted: {e}"));
    }
    write_report(&report, &config.reports_dir())?;
    result.map(|()| report)
}

pub fn run_pipeline(config: &PipelineConfig) -> Result<RunReport> {
    run_stages(config, Stages::ALL)
}

fn merge_timings(raw: Vec<StageTiming>) -> Vec<StageTiming> {
    let mut out: Vec<StageTiming> = Vec::new();
    for t in raw {
        match out.iter_mut().find(|o| o.stage == t.stage) {
            Some(o) => o.seconds += t.seconds,
            None => out.push(t),
        }
    }
    out
}

impl RunReport {
    /// Requested (reply type, category type, variant, estimator) cells with no estimate.
    pub fn missing_cells(&self) -> Vec<String> {
        let c = &self.config;
        let mut missing = Vec::new();
        for &rt in &c.reply_types {
            for &ct in &c.category_types {
                for &v in &c.variants {
                    for &e in &c.estimators {
                        let present = self.estimates.iter().any(|x| {
                            x.reply_type == rt && x.category_type == ct && x.variant == v && x.estimator == e
                        });
                        if !present {
                            missing.push(format!("{}/{}", cell_key(rt, ct, v), e.token()));
                        }
                    }
                }
            }
        }
        missing
    }
}
