//! Posts, quote-response annotations and the post triples built from them.
//!
//! A triple `(p1, p2, p3)` is the experimental unit: `p2` is an annotated reply
//! to `p1`, and `p3` is the next post by the author of `p1` after that reply.
//! The binarized tone of `p2` is the treatment.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use log::{debug, warn};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// The four annotated dimensions of a reply's tone.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReplyType {
    NastyNice,
    AttackingReasonable,
    EmotionalFactual,
    QuestioningAsserting,
}

impl ReplyType {
    pub const ALL: [ReplyType; 4] = [
        ReplyType::NastyNice,
        ReplyType::AttackingReasonable,
        ReplyType::EmotionalFactual,
        ReplyType::QuestioningAsserting,
    ];

    pub fn token(self) -> &'static str {
        match self {
            ReplyType::NastyNice => "nasty_nice",
            ReplyType::AttackingReasonable => "attacking_reasonable",
            ReplyType::EmotionalFactual => "emotional_factual",
            ReplyType::QuestioningAsserting => "questioning_asserting",
        }
    }

    /// Human label used in rendered tables, e.g. `Nasty/Nice`.
    pub fn label(self) -> &'static str {
        match self {
            ReplyType::NastyNice => "Nasty/Nice",
            ReplyType::AttackingReasonable => "Attacking/Reasonable",
            ReplyType::EmotionalFactual => "Emotional/Factual",
            ReplyType::QuestioningAsserting => "Questioning/Asserting",
        }
    }
}

impl fmt::Display for ReplyType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.token())
    }
}

impl FromStr for ReplyType {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ReplyType::ALL
            .into_iter()
            .find(|r| r.token() == s)
            .ok_or_else(|| {
                Error::validation(format!(
                    "unknown reply type {s:?} (expected one of nasty_nice, attacking_reasonable, emotional_factual, questioning_asserting)"
                ))
            })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Post {
    pub id: String,
    pub discussion_id: String,
    pub debate_topic: String,
    pub author: String,
    pub position: u64,
    #[serde(default)]
    pub parent_id: Option<String>,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuoteResponseAnnotation {
    pub quote_post_id: String,
    pub response_post_id: String,
    pub reply_type: ReplyType,
    pub mean_score: f64,
}

/// Binarized tone of a reply: 0 is the antagonistic pole, 1 the positive pole.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TreatmentAssignment {
    pub value: u8,
    pub reply_type: ReplyType,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Triple {
    pub id: String,
    pub p1: String,
    pub p2: String,
    pub p3: String,
    pub debate_topic: String,
    pub treatment: TreatmentAssignment,
}

/// A record that was read but not accepted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordIssue {
    pub line: usize,
    pub message: String,
}

impl fmt::Display for RecordIssue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "line {}: {}", self.line, self.message)
    }
}

/// Posts indexed by id and grouped by discussion (ordered by position).
#[derive(Debug, Clone, Default)]
pub struct PostCollection {
    posts: Vec<Post>,
    index: HashMap<String, usize>,
    discussions: BTreeMap<String, Vec<usize>>,
}

impl PostCollection {
    /// Build a collection, validating identity and reply structure.
    ///
    /// Duplicate ids are fatal. A repeated position inside a discussion drops
    /// the later record; a parent that is missing, in another discussion or
    /// not earlier in the thread is cleared. Both produce issues.
    pub fn from_posts(posts: Vec<Post>) -> Result<(Self, Vec<RecordIssue>)> {
        Self::from_numbered(posts.into_iter().enumerate().map(|(i, p)| (i + 1, p)))
    }

    fn from_numbered(
        posts: impl IntoIterator<Item = (usize, Post)>,
    ) -> Result<(Self, Vec<RecordIssue>)> {
        let mut issues = Vec::new();
        let mut kept: Vec<(usize, Post)> = Vec::new();
        let mut ids = HashSet::new();
        let mut positions = HashSet::new();
        for (line, post) in posts {
            if !ids.insert(post.id.clone()) {
                return Err(Error::DuplicatePostId(post.id));
            }
            if !positions.insert((post.discussion_id.clone(), post.position)) {
                issues.push(RecordIssue {
                    line,
                    message: format!(
                        "post {:?} repeats position {} in discussion {:?}; skipped",
                        post.id, post.position, post.discussion_id
                    ),
                });
                continue;
            }
            kept.push((line, post));
        }

        let index: HashMap<String, usize> = kept
            .iter()
            .enumerate()
            .map(|(i, (_, p))| (p.id.clone(), i))
            .collect();
        let snapshot: Vec<(String, u64)> = kept
            .iter()
            .map(|(_, p)| (p.discussion_id.clone(), p.position))
            .collect();
        for (line, post) in kept.iter_mut() {
            let Some(parent) = post.parent_id.as_deref() else {
                continue;
            };
            let valid = index.get(parent).is_some_and(|&j| {
                snapshot[j].0 == post.discussion_id && snapshot[j].1 < post.position
            });
            if !valid {
                let message = format!(
                    "post {:?} has dangling parent {:?}; treated as absent",
                    post.id, parent
                );
                warn!("line {line}: {message}");
                issues.push(RecordIssue {
                    line: *line,
                    message,
                });
                post.parent_id = None;
            }
        }

        let posts: Vec<Post> = kept.into_iter().map(|(_, p)| p).collect();
        let mut discussions: BTreeMap<String, Vec<usize>> = BTreeMap::new();
        for (i, p) in posts.iter().enumerate() {
            discussions.entry(p.discussion_id.clone()).or_default().push(i);
        }
        for members in discussions.values_mut() {
            members.sort_by_key(|&i| posts[i].position);
        }
        Ok((
            PostCollection {
                posts,
                index,
                discussions,
            },
            issues,
        ))
    }

    pub fn len(&self) -> usize {
        self.posts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.posts.is_empty()
    }

    pub fn posts(&self) -> &[Post] {
        &self.posts
    }

    pub fn get(&self, id: &str) -> Option<&Post> {
        self.index.get(id).map(|&i| &self.posts[i])
    }

    pub fn discussion_count(&self) -> usize {
        self.discussions.len()
    }

    /// Posts of a discussion in thread order.
    pub fn discussion(&self, discussion_id: &str) -> impl Iterator<Item = &Post> {
        self.discussions
            .get(discussion_id)
            .into_iter()
            .flatten()
            .map(move |&i| &self.posts[i])
    }

    /// Distinct debate topics, sorted.
    pub fn debate_topics(&self) -> Vec<String> {
        let set: std::collections::BTreeSet<&str> =
            self.posts.iter().map(|p| p.debate_topic.as_str()).collect();
        set.into_iter().map(str::to_owned).collect()
    }
}

#[derive(Debug)]
pub struct LoadedPosts {
    pub posts: PostCollection,
    pub issues: Vec<RecordIssue>,
}

fn read_lines(path: &Path) -> Result<Vec<(usize, String)>> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push((i + 1, line));
    }
    Ok(out)
}

/// Load a line-delimited JSON posts file.
///
/// Records that fail to parse are reported as issues (with line number and the
/// offending field) and skipped. A duplicate id aborts the load.
pub fn load_posts(path: impl AsRef<Path>) -> Result<LoadedPosts> {
    let path = path.as_ref();
    let mut issues = Vec::new();
    let mut parsed = Vec::new();
    for (line, text) in read_lines(path)? {
        match serde_json::from_str::<Post>(&text) {
            Ok(post) => parsed.push((line, post)),
            Err(e) => {
                let message = format!("invalid post record: {e}");
                warn!("{}:{line}: {message}", path.display());
                issues.push(RecordIssue { line, message });
            }
        }
    }
    let (posts, more) = PostCollection::from_numbered(parsed)?;
    issues.extend(more);
    Ok(LoadedPosts { posts, issues })
}

#[derive(Debug)]
pub struct LoadedAnnotations {
    pub annotations: Vec<QuoteResponseAnnotation>,
    pub issues: Vec<RecordIssue>,
}

pub fn load_annotations(path: impl AsRef<Path>) -> Result<LoadedAnnotations> {
    let path = path.as_ref();
    let mut issues = Vec::new();
    let mut annotations = Vec::new();
    for (line, text) in read_lines(path)? {
        match serde_json::from_str::<QuoteResponseAnnotation>(&text) {
            Ok(a) if !(-5.0..=5.0).contains(&a.mean_score) => issues.push(RecordIssue {
                line,
                message: format!("mean_score {} outside [-5, 5]", a.mean_score),
            }),
            Ok(a) => annotations.push(a),
            Err(e) => issues.push(RecordIssue {
                line,
                message: format!("invalid annotation record: {e}"),
            }),
        }
    }
    for issue in &issues {
        warn!("{}: {issue}", path.display());
    }
    Ok(LoadedAnnotations {
        annotations,
        issues,
    })
}

fn write_jsonl<T: Serialize>(path: &Path, records: impl IntoIterator<Item = T>) -> Result<()> {
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for r in records {
        let line = serde_json::to_string(&r).map_err(|e| Error::Numerical(e.to_string()))?;
        writeln!(w, "{line}").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn save_posts<'a>(path: impl AsRef<Path>, posts: impl IntoIterator<Item = &'a Post>) -> Result<()> {
    write_jsonl(path.as_ref(), posts)
}

pub fn save_annotations<'a>(
    path: impl AsRef<Path>,
    annotations: impl IntoIterator<Item = &'a QuoteResponseAnnotation>,
) -> Result<()> {
    write_jsonl(path.as_ref(), annotations)
}

/// Map a mean annotation score to a binary tone.
///
/// `<= -1` is the antagonistic pole (0), `>= 1` the positive pole (1); the band
/// strictly between is discarded.
pub fn binarize_score(mean_score: f64) -> Result<Option<u8>> {
    if !(-5.0..=5.0).contains(&mean_score) {
        return Err(Error::ScoreOutOfRange(mean_score));
    }
    Ok(if mean_score <= -1.0 {
        Some(0)
    } else if mean_score >= 1.0 {
        Some(1)
    } else {
        None
    })
}

#[derive(Debug, Clone, Default)]
pub struct TripleExtraction {
    pub triples: Vec<Triple>,
    /// One entry per annotation that did not produce a triple.
    pub skipped: Vec<String>,
}

/// Locate the first author's follow-up to the reply.
///
/// A post by `author` whose parent is the reply wins; otherwise the earliest
/// later post by `author` in the thread.
fn find_followup<'a>(posts: &'a PostCollection, reply: &Post, author: &str) -> Option<&'a Post> {
    let later: Vec<&Post> = posts
        .discussion(&reply.discussion_id)
        .filter(|p| p.position > reply.position && p.author == author)
        .collect();
    later
        .iter()
        .find(|p| p.parent_id.as_deref() == Some(reply.id.as_str()))
        .or(later.first())
        .copied()
}

pub fn extract_triples(
    posts: &PostCollection,
    annotations: &[QuoteResponseAnnotation],
    reply_type: ReplyType,
) -> TripleExtraction {
    let mut out = TripleExtraction::default();
    let mut seen = HashSet::new();
    let skip = |out: &mut TripleExtraction, msg: String| {
        debug!("{msg}");
        out.skipped.push(msg);
    };

    for ann in annotations.iter().filter(|a| a.reply_type == reply_type) {
        let pair = format!("{} -> {}", ann.quote_post_id, ann.response_post_id);
        let value = match binarize_score(ann.mean_score) {
            Ok(Some(v)) => v,
            Ok(None) => {
                skip(&mut out, format!("{pair}: score {} in neutral band", ann.mean_score));
                continue;
            }
            Err(e) => {
                skip(&mut out, format!("{pair}: {e}"));
                continue;
            }
        };
        let (Some(p1), Some(p2)) = (posts.get(&ann.quote_post_id), posts.get(&ann.response_post_id))
        else {
            skip(&mut out, format!("{pair}: references unknown post"));
            continue;
        };
        if p1.discussion_id != p2.discussion_id {
            skip(&mut out, format!("{pair}: posts in different discussions"));
            continue;
        }
        if p1.position >= p2.position {
            skip(&mut out, format!("{pair}: reply does not follow quoted post"));
            continue;
        }
        if p1.author == p2.author {
            skip(&mut out, format!("{pair}: reply written by quoted author"));
            continue;
        }
        let Some(p3) = find_followup(posts, p2, &p1.author) else {
            skip(&mut out, format!("{pair}: quoted author never posts again"));
            continue;
        };
        let id = format!("{}:{}:{}", reply_type.token(), p1.id, p2.id);
        if !seen.insert(id.clone()) {
            skip(&mut out, format!("{pair}: duplicate annotation"));
            continue;
        }
        out.triples.push(Triple {
            id,
            p1: p1.id.clone(),
            p2: p2.id.clone(),
            p3: p3.id.clone(),
            debate_topic: p1.debate_topic.clone(),
            treatment: TreatmentAssignment { value, reply_type },
        });
    }
    out
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct ArmCounts {
    pub treated: usize,
    pub control: usize,
}

impl ArmCounts {
    pub fn total(&self) -> usize {
        self.treated + self.control
    }

    pub fn treated_fraction(&self) -> f64 {
        if self.total() == 0 {
            0.0
        } else {
            self.treated as f64 / self.total() as f64
        }
    }

    fn add(&mut self, value: u8) {
        if value == 1 {
            self.treated += 1;
        } else {
            self.control += 1;
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TripleSummary {
    pub total: ArmCounts,
    pub treated_fraction: f64,
    pub by_reply_type: BTreeMap<ReplyType, ArmCounts>,
    pub by_debate_topic: BTreeMap<String, ArmCounts>,
}

pub fn triple_counts(triples: &[Triple]) -> TripleSummary {
    let mut s = TripleSummary::default();
    for t in triples {
        let v = t.treatment.value;
        s.total.add(v);
        s.by_reply_type.entry(t.treatment.reply_type).or_default().add(v);
        s.by_debate_topic.entry(t.debate_topic.clone()).or_default().add(v);
    }
    s.treated_fraction = s.total.treated_fraction();
    s
}
