use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use log::{info, warn};

use debate_causal::estimators::{estimate, Estimator};
use debate_causal::harness::config::parse_table;
use debate_causal::harness::pipeline::{extract_all, fit_topic_models, ingest, save_models, topic_slug, topic_words};
use debate_causal::harness::report::render_report;
use debate_causal::harness::synthetic::{generate_synthetic_corpus, generate_synthetic_tabular};
use debate_causal::harness::{
    inspect_topics, render_report_as, render_topic_table, run_stages, PipelineConfig, ReportFormat, RunReport, Stages,
    SyntheticWorld, TextWorld,
};
use debate_causal::inference::NuisanceConfig;
use debate_causal::{Error, Result};

const EXIT_VALIDATION: u8 = 1;
const EXIT_RUNTIME: u8 = 2;
const EXIT_PARTIAL: u8 = 3;

/// Causal effects of reply tone in threaded debate corpora.
#[derive(Parser, Debug)]
#[command(name = "debate-causal", version)]
struct Cli {
    #[command(flatten)]
    global: GlobalArgs,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct GlobalArgs {
    /// TOML config file; flags override its fields.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Log more (-v info, -vv debug).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(flatten)]
    overrides: Overrides,
}

/// One flag per config field.
#[derive(Args, Debug, Default)]
struct Overrides {
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true)]
    posts: Option<PathBuf>,
    #[arg(long, global = true)]
    annotations: Option<PathBuf>,
    #[arg(long, global = true)]
    lexicon: Option<PathBuf>,
    #[arg(long, global = true)]
    grouping: Option<PathBuf>,
    #[arg(long, global = true)]
    stopwords: Option<PathBuf>,
    #[arg(long, global = true)]
    lemma_exceptions: Option<PathBuf>,
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,
    /// Comma-separated reply type tokens.
    #[arg(long, global = true, value_delimiter = ',')]
    reply_types: Option<Vec<String>>,
    #[arg(long, global = true, value_delimiter = ',')]
    category_types: Option<Vec<String>>,
    #[arg(long, global = true, value_delimiter = ',')]
    variants: Option<Vec<String>>,
    #[arg(long, global = true, value_delimiter = ',')]
    sentiment_types: Option<Vec<String>>,
    #[arg(long, global = true, value_delimiter = ',')]
    estimators: Option<Vec<String>>,
    #[arg(long, global = true)]
    k: Option<u32>,
    #[arg(long, global = true)]
    min_df: Option<f64>,
    #[arg(long, global = true)]
    max_df: Option<f64>,
    #[arg(long, global = true)]
    alpha_prior: Option<f64>,
    #[arg(long, global = true)]
    gamma_prior: Option<f64>,
    #[arg(long, global = true)]
    lda_max_iters: Option<u32>,
    #[arg(long, global = true)]
    lda_tol: Option<f64>,
    #[arg(long, global = true)]
    use_cache: Option<bool>,
    #[arg(long, global = true)]
    folds: Option<u32>,
    #[arg(long, global = true)]
    bootstrap_replicates: Option<u32>,
    #[arg(long, global = true)]
    bootstrap_refit: Option<bool>,
    #[arg(long, global = true)]
    clip_epsilon: Option<f64>,
    #[arg(long, global = true)]
    propensity_l2: Option<f64>,
    #[arg(long, global = true)]
    outcome_ridge: Option<f64>,
    #[arg(long, global = true)]
    outcome_ridge_fallback: Option<f64>,
    /// Worker threads; 0 uses all cores.
    #[arg(long, global = true)]
    jobs: Option<u32>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Load posts and annotations and count triples per reply type.
    Ingest,
    /// Fit and save one topic model per debate topic.
    FitTopics,
    /// Print the top words of every topic in a saved model.
    InspectTopics {
        /// Model file; defaults to the model for --topic under the output directory.
        model: Option<PathBuf>,
        #[arg(long, conflicts_with = "model")]
        topic: Option<String>,
        #[arg(long, default_value_t = 10)]
        n_words: usize,
    },
    /// Cross-validate the nuisance models.
    Crossval {
        #[arg(long, default_value = "table-text")]
        format: String,
    },
    /// Estimate effects for every requested cell.
    Estimate {
        #[arg(long, default_value = "table-text")]
        format: String,
    },
    /// Generate a synthetic world with a known effect.
    Simulate(SimulateArgs),
    /// Run the whole pipeline, or re-render a saved structured report.
    Report {
        #[arg(long, default_value = "table-text")]
        format: String,
        /// Re-render this report.json instead of running.
        #[arg(long)]
        from: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum WorldKind {
    Tabular,
    Text,
}

#[derive(Args, Debug)]
struct SimulateArgs {
    /// World definition in TOML; replaces the flags below.
    #[arg(long)]
    world: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = WorldKind::Tabular)]
    kind: WorldKind,
    #[arg(long, default_value_t = 2000)]
    n: usize,
    #[arg(long, default_value_t = 4)]
    dim: usize,
    /// True effect of treatment [default: 1.5 tabular, 0.15 text].
    #[arg(long)]
    effect: Option<f64>,
    /// Coefficient of every confounder in the treatment and outcome models.
    #[arg(long, default_value_t = 0.5)]
    confounding: f64,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.global.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match dispatch(&cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_validation() { EXIT_VALIDATION } else { EXIT_RUNTIME })
        }
    }
}

fn dispatch(cli: &Cli) -> Result<u8> {
    match &cli.command {
        Command::Ingest => cmd_ingest(&load_config(&cli.global)?),
        Command::FitTopics => cmd_fit_topics(&load_config(&cli.global)?),
        Command::InspectTopics { model, topic, n_words } => cmd_inspect(&cli.global, model.as_deref(), topic.as_deref(), *n_words),
        Command::Crossval { format } => {
            let stages = Stages {
                crossval: true,
                estimate: false,
            };
            cmd_run(&load_config(&cli.global)?, stages, format)
        }
        Command::Estimate { format } => {
            let stages = Stages {
                crossval: false,
                estimate: true,
            };
            cmd_run(&load_config(&cli.global)?, stages, format)
        }
        Command::Simulate(args) => cmd_simulate(&cli.global, args),
        Command::Report { format, from: Some(path) } => {
            let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
            emit(&render_report_as(&RunReport::from_json(&text)?, format)?)?;
            Ok(0)
        }
        Command::Report { format, from: None } => cmd_run(&load_config(&cli.global)?, Stages::ALL, format),
    }
}

/// Config file (if any) with flag overrides applied, then validated.
fn load_config(global: &GlobalArgs) -> Result<PipelineConfig> {
    let mut table = match &global.config {
        Some(path) => parse_table(&fs::read_to_string(path).map_err(|e| Error::io(path, e))?)?,
        None => toml::Table::new(),
    };
    apply_overrides(&mut table, &global.overrides);
    let config = PipelineConfig::from_table(table)?;
    config.validate()?;
    Ok(config)
}

fn apply_overrides(table: &mut toml::Table, o: &Overrides) {
    use toml::Value;
    let mut set = |key: &str, value: Option<Value>| {
        if let Some(v) = value {
            table.insert(key.to_owned(), v);
        }
    };
    let path = |p: &Option<PathBuf>| p.as_ref().map(|p| Value::String(p.to_string_lossy().into_owned()));
    let list = |l: &Option<Vec<String>>| {
        l.as_ref()
            .map(|l| Value::Array(l.iter().filter(|s| !s.is_empty()).map(|s| Value::String(s.trim().to_owned())).collect()))
    };
    let int = |x: Option<u32>| x.map(|x| Value::Integer(x.into()));
    let float = |x: Option<f64>| x.map(Value::Float);
    let boolean = |x: Option<bool>| x.map(Value::Boolean);

    // Seeds above i64::MAX wrap negative and fail deserialization like a bad file value.
    set("seed", o.seed.map(|s| Value::Integer(s as i64)));
    set("posts", path(&o.posts));
    set("annotations", path(&o.annotations));
    set("lexicon", path(&o.lexicon));
    set("grouping", path(&o.grouping));
    set("stopwords", path(&o.stopwords));
    set("lemma_exceptions", path(&o.lemma_exceptions));
    set("out_dir", path(&o.out_dir));
    set("reply_types", list(&o.reply_types));
    set("category_types", list(&o.category_types));
    set("variants", list(&o.variants));
    set("sentiment_types", list(&o.sentiment_types));
    set("estimators", list(&o.estimators));
    set("k", int(o.k));
    set("min_df", float(o.min_df));
    set("max_df", float(o.max_df));
    set("alpha_prior", float(o.alpha_prior));
    set("gamma_prior", float(o.gamma_prior));
    set("lda_max_iters", int(o.lda_max_iters));
    set("lda_tol", float(o.lda_tol));
    set("use_cache", boolean(o.use_cache));
    set("folds", int(o.folds));
    set("bootstrap_replicates", int(o.bootstrap_replicates));
    set("bootstrap_refit", boolean(o.bootstrap_refit));
    set("clip_epsilon", float(o.clip_epsilon));
    set("propensity_l2", float(o.propensity_l2));
    set("outcome_ridge", float(o.outcome_ridge));
    set("outcome_ridge_fallback", float(o.outcome_ridge_fallback));
    set("jobs", int(o.jobs));
}

fn emit(bytes: &[u8]) -> Result<()> {
    let mut out = std::io::stdout().lock();
    out.write_all(bytes)
        .and_then(|()| out.flush())
        .map_err(|e| Error::io("<stdout>", e))
}

fn set_global_jobs(jobs: usize) {
    if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(jobs).build_global() {
        warn!("could not configure worker threads: {e}");
    }
}

fn cmd_ingest(config: &PipelineConfig) -> Result<u8> {
    set_global_jobs(config.jobs);
    let ingested = ingest(config)?;
    let per_reply = extract_all(&ingested, config);
    let counts: Vec<_> = per_reply.iter().map(|r| r.counts()).collect();
    let dir = config.reports_dir();
    fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    let path = dir.join("triples.json");
    let json = serde_json::to_string_pretty(&counts).expect("counts serialize") + "\n";
    fs::write(&path, json).map_err(|e| Error::io(&path, e))?;

    let mut text = format!("posts: {}\nannotations: {}\n\n", ingested.posts.len(), ingested.annotations.len());
    text.push_str("reply type              annotations  skipped  triples  treated  control\n");
    for c in &counts {
        text.push_str(&format!(
            "{:<22}  {:>11}  {:>7}  {:>7}  {:>7}  {:>7}\n",
            c.reply_type.token(),
            c.annotations,
            c.skipped_annotations,
            c.summary.total.treated + c.summary.total.control,
            c.summary.total.treated,
            c.summary.total.control
        ));
    }
    emit(text.as_bytes())?;
    for w in &ingested.warnings {
        warn!("{w}");
    }
    Ok(if ingested.warnings.is_empty() { 0 } else { EXIT_PARTIAL })
}

fn cmd_fit_topics(config: &PipelineConfig) -> Result<u8> {
    set_global_jobs(config.jobs);
    let ingested = ingest(config)?;
    let per_reply = extract_all(&ingested, config);
    let mut topics: Vec<String> = per_reply
        .iter()
        .flat_map(|r| r.triples.iter().map(|t| t.debate_topic.clone()))
        .collect();
    topics.sort();
    topics.dedup();
    if topics.is_empty() {
        return Err(Error::validation("no triples, so no debate topics to model"));
    }
    let fitted = fit_topic_models(&ingested, config, &topics)?;
    let paths = save_models(&fitted.models, &config.models_dir())?;
    let mut text = String::new();
    for (words, path) in topic_words(&fitted.models)?.iter().zip(&paths) {
        let cached = if fitted.from_cache.contains(&words.debate_topic) { ", cached" } else { "" };
        text.push_str(&format!(
            "{} ({} topics, {} iterations{}{}) -> {}\n",
            words.debate_topic,
            words.k,
            words.iterations,
            if words.converged { "" } else { ", not converged" },
            cached,
            path.display()
        ));
    }
    emit(text.as_bytes())?;
    let unconverged = topic_words(&fitted.models)?.iter().filter(|w| !w.converged).count();
    if unconverged > 0 {
        warn!("{unconverged} topic models stopped at the iteration limit");
        return Ok(EXIT_PARTIAL);
    }
    Ok(0)
}

fn cmd_inspect(global: &GlobalArgs, model: Option<&Path>, topic: Option<&str>, n_words: usize) -> Result<u8> {
    let path = match (model, topic) {
        (Some(m), _) => m.to_path_buf(),
        (None, Some(t)) => {
            let out_dir = match (&global.overrides.out_dir, &global.config) {
                (Some(d), _) => d.clone(),
                (None, Some(_)) => load_config(global)?.out_dir,
                (None, None) => PathBuf::from("out"),
            };
            out_dir.join("models").join(format!("lda-{}.json", topic_slug(t)))
        }
        (None, None) => return Err(Error::validation("give a model path or --topic")),
    };
    emit(render_topic_table(&inspect_topics(&path, n_words)?).as_bytes())?;
    Ok(0)
}

fn cmd_run(config: &PipelineConfig, stages: Stages, format: &str) -> Result<u8> {
    let format: ReportFormat = format.parse()?;
    let report = run_stages(config, stages)?;
    emit(&render_report(&report.body(), format))?;
    info!("reports written to {}", config.reports_dir().display());
    for w in &report.warnings {
        warn!("{w}");
    }
    let mut partial = false;
    if stages.estimate {
        let missing = report.missing_cells();
        if !missing.is_empty() {
            warn!("{} requested estimates missing", missing.len());
            partial = true;
        }
    }
    if stages.crossval {
        let expected = report.triple_counts.len() * config.variants.len();
        if report.cv.len() < expected {
            warn!("{} of {expected} cross-validation rows missing", expected - report.cv.len());
            partial = true;
        }
    }
    Ok(if partial { EXIT_PARTIAL } else { 0 })
}

fn simulated_world(global: &GlobalArgs, args: &SimulateArgs) -> Result<SyntheticWorld> {
    if let Some(path) = &args.world {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        return toml::from_str(&text).map_err(|e| Error::validation(format!("world: {}", e.message())));
    }
    let seed = global
        .overrides
        .seed
        .ok_or_else(|| Error::validation("simulate needs --seed or --world"))?;
    Ok(match args.kind {
        WorldKind::Tabular => SyntheticWorld {
            treatment_coefs: vec![args.confounding; args.dim],
            control_coefs: vec![args.confounding; args.dim],
            treated_coefs: vec![args.confounding; args.dim],
            ..SyntheticWorld::unconfounded(args.n, args.dim, args.effect.unwrap_or(1.5), seed)
        },
        WorldKind::Text => SyntheticWorld {
            text: Some(TextWorld {
                effect: args.effect.unwrap_or(TextWorld::default().effect),
                ..TextWorld::default()
            }),
            ..SyntheticWorld::unconfounded(args.n, 1, 0.0, seed)
        },
    })
}

fn cmd_simulate(global: &GlobalArgs, args: &SimulateArgs) -> Result<u8> {
    let world = simulated_world(global, args)?;
    let dir = global
        .overrides
        .out_dir
        .clone()
        .unwrap_or_else(|| PathBuf::from("out"))
        .join("simulated");
    fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    let world_path = dir.join("world.toml");
    fs::write(&world_path, toml::to_string(&world).expect("world serializes")).map_err(|e| Error::io(&world_path, e))?;

    let mut text = String::new();
    if world.text.is_some() {
        let corpus = generate_synthetic_corpus(&world)?;
        let files = corpus.write(&dir)?;
        let k = world.text.as_ref().map_or(3, |t| t.k);
        let mut config = PipelineConfig::new(world.seed, &files.posts, &files.annotations);
        config.lexicon = Some(files.lexicon);
        config.grouping = Some(files.grouping);
        config.out_dir = dir.join("out");
        config.reply_types = vec![debate_causal::corpus::ReplyType::NastyNice];
        config.category_types = vec![debate_causal::lexicon::CategoryType::PositiveSentiment];
        config.sentiment_types = config.category_types.clone();
        // Room for the follow-up vocabulary next to the planted topics.
        config.k = k + 2;
        let config_path = dir.join("config.toml");
        fs::write(&config_path, config.to_toml()).map_err(|e| Error::io(&config_path, e))?;
        text.push_str(&format!("wrote {} units to {}\n", world.n, dir.display()));
        text.push_str(&format!("run with: debate-causal report --config {}\n", config_path.display()));
        text.push_str(&format!("true ATE: {}\n", corpus.true_ate));
    } else {
        let data = generate_synthetic_tabular(&world)?;
        let mut csv = (0..world.dim).map(|j| format!("z{j},")).collect::<String>() + "t,y\n";
        for i in 0..data.input.len() {
            for z in &data.input.features[i] {
                csv.push_str(&format!("{z},"));
            }
            csv.push_str(&format!("{},{}\n", data.input.treatment[i], data.input.outcome[i]));
        }
        let csv_path = dir.join("data.csv");
        fs::write(&csv_path, csv).map_err(|e| Error::io(&csv_path, e))?;
        text.push_str(&format!("wrote {} rows to {}\n", world.n, csv_path.display()));
        text.push_str(&format!("true ATE: {}\n", data.true_ate));
        let mut input = data.input;
        input.refit(&NuisanceConfig::default())?;
        for e in Estimator::ALL {
            text.push_str(&format!("{:<18} {:.4}\n", e.label(), estimate(e, &input)?));
        }
    }
    emit(text.as_bytes())?;
    Ok(0)
}
