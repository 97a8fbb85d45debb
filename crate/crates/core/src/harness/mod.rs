//! Pipeline orchestration, reports, topic inspection and synthetic worlds.

pub mod config;
pub mod inspect;
pub mod pipeline;
pub mod report;
pub mod synthetic;

pub use config::PipelineConfig;
pub use inspect::{inspect_topics, render_topic_table};
pub use pipeline::{run_pipeline, run_stages, Stages};
pub use report::{render_report, render_report_as, ReportFormat, RunReport};
pub use synthetic::{
    generate_lda_corpus, generate_synthetic_corpus, generate_synthetic_tabular, LdaWorld, SyntheticCorpus,
    SyntheticData, SyntheticWorld, TextWorld,
};
