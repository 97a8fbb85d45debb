//! Run reports and their renderings.
//!
//! Three formats: `table-text` (human tables), `delimited` (CSV of the
//! estimates) and `structured` (versioned JSON that reads back losslessly).

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::config::PipelineConfig;
use crate::corpus::{ReplyType, TripleSummary};
use crate::error::{Error, Result};
use crate::estimators::{AteEstimate, Estimator};
use crate::inference::{ConfounderVariant, CvReport};
use crate::lexicon::CategoryType;

pub const REPORT_FORMAT: &str = "debate-causal/report";
pub const REPORT_VERSION: &str = "1.0";
const SUPPORTED_MAJOR: &str = "1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplyTypeCounts {
    pub reply_type: ReplyType,
    pub annotations: usize,
    pub skipped_annotations: usize,
    pub summary: TripleSummary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopicWords {
    pub debate_topic: String,
    pub k: usize,
    pub iterations: usize,
    pub converged: bool,
    /// Top terms of each topic, most probable first.
    pub top_words: Vec<Vec<String>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageTiming {
    pub stage: String,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub format: String,
    pub version: String,
    pub config: PipelineConfig,
    pub triple_counts: Vec<ReplyTypeCounts>,
    pub cv: Vec<CvReport>,
    pub estimates: Vec<AteEstimate>,
    pub topics: Vec<TopicWords>,
    pub warnings: Vec<String>,
    #[serde(default)]
    pub timings: Vec<StageTiming>,
}

impl RunReport {
    pub fn new(config: PipelineConfig) -> Self {
        RunReport {
            format: REPORT_FORMAT.into(),
            version: REPORT_VERSION.into(),
            config,
            triple_counts: Vec::new(),
            cv: Vec::new(),
            estimates: Vec::new(),
            topics: Vec::new(),
            warnings: Vec::new(),
            timings: Vec::new(),
        }
    }

    /// The report without wall-clock timings; identical across repeated runs.
    pub fn body(&self) -> RunReport {
        RunReport {
            timings: Vec::new(),
            ..self.clone()
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes") + "\n"
    }

    /// Parse a structured report, rejecting unknown major versions.
    pub fn from_json(text: &str) -> Result<Self> {
        let value: serde_json::Value = serde_json::from_str(text).map_err(|e| Error::Corrupt {
            artifact: "report",
            version: "unknown".into(),
            message: e.to_string(),
        })?;
        let format = value.get("format").and_then(|v| v.as_str()).unwrap_or_default();
        let version = value.get("version").and_then(|v| v.as_str()).unwrap_or_default().to_owned();
        if format != REPORT_FORMAT || version.split('.').next() != Some(SUPPORTED_MAJOR) {
            return Err(Error::FormatVersion {
                artifact: "report",
                found: format!("{format} {version}"),
                supported: "debate-causal/report 1.x",
            });
        }
        serde_json::from_value(value).map_err(|e| Error::Corrupt {
            artifact: "report",
            version,
            message: e.to_string(),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    TableText,
    Delimited,
    Structured,
}

impl ReportFormat {
    pub const ALL: [ReportFormat; 3] = [ReportFormat::TableText, ReportFormat::Delimited, ReportFormat::Structured];

    pub fn token(self) -> &'static str {
        match self {
            ReportFormat::TableText => "table-text",
            ReportFormat::Delimited => "delimited",
            ReportFormat::Structured => "structured",
        }
    }
}

impl FromStr for ReportFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ReportFormat::ALL.into_iter().find(|f| f.token() == s).ok_or_else(|| {
            Error::validation(format!(
                "unknown report format {s:?}; valid formats: table-text, delimited, structured"
            ))
        })
    }
}

pub fn render_report(report: &RunReport, format: ReportFormat) -> Vec<u8> {
    match format {
        ReportFormat::TableText => render_text(report).into_bytes(),
        ReportFormat::Delimited => render_estimates_delimited(&report.estimates).into_bytes(),
        ReportFormat::Structured => report.to_json().into_bytes(),
    }
}

/// Render by format token.
pub fn render_report_as(report: &RunReport, format: &str) -> Result<Vec<u8>> {
    Ok(render_report(report, format.parse()?))
}

/// Decimal places showing one significant digit of the standard error.
fn decimals_for(se: f64) -> usize {
    if se > 0.0 && se.is_finite() {
        (-(se.log10() + 1e-9).floor()).clamp(1.0, 8.0) as usize
    } else {
        1
    }
}

fn fixed(x: f64, d: usize) -> String {
    let s = format!("{x:.d$}");
    // Avoid "-0.0".
    if s.trim_start_matches('-').chars().all(|c| c == '0' || c == '.') {
        s.trim_start_matches('-').to_owned()
    } else {
        s
    }
}

/// Table cell such as `-0.3 (0.1)*`; the asterisk marks significance.
pub fn format_cell(psi: f64, se: f64, significant: bool) -> String {
    let d = decimals_for(se);
    format!("{} ({}){}", fixed(psi, d), fixed(se, d), if significant { "*" } else { "" })
}

fn table(header: &[String], rows: &[Vec<String>]) -> String {
    let mut widths: Vec<usize> = header.iter().map(|h| h.chars().count()).collect();
    for r in rows {
        for (w, c) in widths.iter_mut().zip(r) {
            *w = (*w).max(c.chars().count());
        }
    }
    let line = |cells: &[String]| {
        let mut s = String::new();
        for (i, (c, w)) in cells.iter().zip(&widths).enumerate() {
            if i > 0 {
                s.push_str("  ");
            }
            let pad = w - c.chars().count();
            if i == 0 {
                s.push_str(c);
                s.push_str(&" ".repeat(pad));
            } else {
                s.push_str(&" ".repeat(pad));
                s.push_str(c);
            }
        }
        s.trim_end().to_owned() + "\n"
    };
    let mut out = line(header);
    let rule: Vec<String> = widths.iter().map(|w| "-".repeat(*w)).collect();
    out.push_str(&line(&rule));
    for r in rows {
        out.push_str(&line(r));
    }
    out
}

fn counts_section(report: &RunReport) -> String {
    let header: Vec<String> = ["Reply type", "Annotations", "Triples", "Treated", "Control"]
        .map(String::from)
        .to_vec();
    let rows: Vec<Vec<String>> = report
        .triple_counts
        .iter()
        .map(|c| {
            vec![
                c.reply_type.label().to_owned(),
                c.annotations.to_string(),
                c.summary.total.total().to_string(),
                c.summary.total.treated.to_string(),
                c.summary.total.control.to_string(),
            ]
        })
        .collect();
    format!("Triples\n{}", table(&header, &rows))
}

fn cv_section(cv: &[CvReport]) -> String {
    let header: Vec<String> = ["Reply type", "Confounder", "Outcome", "RMSE Q(Z,1)", "RMSE Q(Z,0)", "F1", "Macro F1", "Folds"]
        .map(String::from)
        .to_vec();
    let rows: Vec<Vec<String>> = cv
        .iter()
        .map(|r| {
            vec![
                r.reply_type.label().to_owned(),
                r.variant.label().to_owned(),
                r.category_type.label().to_owned(),
                format!("{:.3}", r.metrics.mean_rmse_treated),
                format!("{:.3}", r.metrics.mean_rmse_control),
                format!("{:.2}", r.metrics.mean_f1),
                format!("{:.2}", r.metrics.mean_macro_f1),
                r.metrics.fold_count.to_string(),
            ]
        })
        .collect();
    format!("Cross-validation of the nuisance models\n{}", table(&header, &rows))
}

type TableCells<'a> = BTreeMap<(Estimator, CategoryType), &'a AteEstimate>;

/// One ATE table per (reply type, confounder variant): estimators as rows,
/// category types as columns.
fn estimate_tables(report: &RunReport) -> String {
    let mut groups: BTreeMap<(ReplyType, ConfounderVariant), TableCells> = BTreeMap::new();
    for e in &report.estimates {
        groups
            .entry((e.reply_type, e.variant))
            .or_default()
            .insert((e.estimator, e.category_type), e);
    }
    let columns: Vec<CategoryType> = if report.config.category_types.is_empty() {
        CategoryType::ALL.to_vec()
    } else {
        report.config.category_types.clone()
    };
    let mut out = String::new();
    if groups.is_empty() {
        let mut header = vec!["Estimator".to_owned()];
        header.extend(columns.iter().map(|c| c.label().to_owned()));
        out.push_str("ATE (and standard error)\n");
        out.push_str(&table(&header, &[]));
        return out;
    }
    for ((reply, variant), cells) in &groups {
        let mut header = vec!["Estimator".to_owned()];
        header.extend(columns.iter().map(|c| c.label().to_owned()));
        let estimators: Vec<Estimator> = {
            let mut v: Vec<Estimator> = report
                .config
                .estimators
                .iter()
                .copied()
                .filter(|e| cells.keys().any(|(x, _)| x == e))
                .collect();
            for (e, _) in cells.keys() {
                if !v.contains(e) {
                    v.push(*e);
                }
            }
            v
        };
        let rows: Vec<Vec<String>> = estimators
            .iter()
            .map(|&est| {
                let mut row = vec![est.label().to_owned()];
                row.extend(columns.iter().map(|&c| match cells.get(&(est, c)) {
                    Some(e) => format_cell(e.psi, e.standard_error, e.significant),
                    None => "-".to_owned(),
                }));
                row
            })
            .collect();
        let n = cells.values().next().map(|e| e.n).unwrap_or(0);
        let _ = writeln!(out, "ATE (and standard error): {}, {}, n = {n}", reply.label(), variant.label());
        out.push_str(&table(&header, &rows));
        out.push('\n');
    }
    out.push_str("* |psi| > 1.96 standard errors\n");
    out
}

fn topics_section(topics: &[TopicWords]) -> String {
    let mut out = String::new();
    for t in topics {
        let _ = writeln!(out, "Topics for {} (k = {})", t.debate_topic, t.k);
        for (i, words) in t.top_words.iter().enumerate() {
            let _ = writeln!(out, "{i:>3}  {}", words.join(" "));
        }
        out.push('\n');
    }
    out
}

pub fn render_text(report: &RunReport) -> String {
    let mut out = String::new();
    if !report.triple_counts.is_empty() {
        out.push_str(&counts_section(report));
        out.push('\n');
    }
    if !report.cv.is_empty() {
        out.push_str(&cv_section(&report.cv));
        out.push('\n');
    }
    out.push_str(&estimate_tables(report));
    if !report.topics.is_empty() {
        out.push('\n');
        out.push_str(&topics_section(&report.topics));
    }
    if !report.warnings.is_empty() || report.estimates.is_empty() {
        out.push_str("\nWarnings\n");
        if report.warnings.is_empty() {
            out.push_str("- no estimates were produced\n");
        }
        for w in &report.warnings {
            let _ = writeln!(out, "- {w}");
        }
    }
    out
}

/// Columns: estimator, reply_type, category_type, variant, psi, se, n, significant.
pub fn render_estimates_delimited(estimates: &[AteEstimate]) -> String {
    let mut out = String::from("estimator,reply_type,category_type,variant,psi,se,n,significant\n");
    for e in estimates {
        let _ = writeln!(
            out,
            "{},{},{},{},{:?},{:?},{},{}",
            e.estimator.token(),
            e.reply_type.token(),
            e.category_type.token(),
            e.variant.token(),
            e.psi,
            e.standard_error,
            e.n,
            e.significant
        );
    }
    out
}

/// One row per (reply type, variant).
pub fn render_cv_delimited(cv: &[CvReport]) -> String {
    let mut out =
        String::from("reply_type,variant,category_type,folds,rmse_treated,rmse_control,f1,macro_f1\n");
    for r in cv {
        let m = &r.metrics;
        let _ = writeln!(
            out,
            "{},{},{},{},{:?},{:?},{:?},{:?}",
            r.reply_type.token(),
            r.variant.token(),
            r.category_type.token(),
            m.fold_count,
            m.mean_rmse_treated,
            m.mean_rmse_control,
            m.mean_f1,
            m.mean_macro_f1
        );
    }
    out
}
