use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::corpus::{PostCollection, Triple};
use crate::error::{Error, Result};
use crate::lexicon::{vectorize_tokens, CategoryLexicon, CategoryType, CategoryTypeGrouping};
use crate::topics::{LdaModel, ThetaInferencer, Tokenizer};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConfounderVariant {
    DebateTopicsOnly,
    Full,
}

impl ConfounderVariant {
    pub const ALL: [ConfounderVariant; 2] = [ConfounderVariant::DebateTopicsOnly, ConfounderVariant::Full];

    pub fn token(self) -> &'static str {
        match self {
            ConfounderVariant::DebateTopicsOnly => "debate_topics_only",
            ConfounderVariant::Full => "full",
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            ConfounderVariant::DebateTopicsOnly => "Z - Debate Topics Only",
            ConfounderVariant::Full => "Z - Full",
        }
    }
}

impl fmt::Display for ConfounderVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.token())
    }
}

impl FromStr for ConfounderVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ConfounderVariant::ALL
            .into_iter()
            .find(|v| v.token() == s)
            .ok_or_else(|| Error::validation(format!("unknown confounder variant {s:?} (expected full or debate_topics_only)")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Confounder {
    pub triple_id: String,
    pub variant: ConfounderVariant,
    pub features: Vec<f64>,
    pub feature_names: Vec<String>,
}

/// Everything needed to turn a triple into a confounder vector.
pub struct ConfounderBuilder<'a> {
    pub posts: &'a PostCollection,
    /// One fitted model per debate topic.
    pub models: &'a BTreeMap<String, LdaModel>,
    pub lexicon: &'a CategoryLexicon,
    pub grouping: &'a CategoryTypeGrouping,
    /// Tokenizer used for the topic models.
    pub topic_tokenizer: &'a Tokenizer,
    /// Tokenizer used for lexicon matching.
    pub lexicon_tokenizer: &'a Tokenizer,
    /// Category types whose first-post vectors enter the full confounder.
    pub sentiment_types: Vec<CategoryType>,
    /// Debate topics in one-hot order.
    pub debate_topics: Vec<String>,
}

impl ConfounderBuilder<'_> {
    fn post_text(&self, id: &str) -> Result<&str> {
        self.posts
            .get(id)
            .map(|p| p.text.as_str())
            .ok_or_else(|| Error::validation(format!("triple references unknown post {id:?}")))
    }

    pub fn full_dimension(&self, k: usize) -> usize {
        2 * k
            + self
                .sentiment_types
                .iter()
                .filter_map(|&t| self.grouping.categories(t))
                .map(<[String]>::len)
                .sum::<usize>()
    }

    pub fn build(&self, triple: &Triple, variant: ConfounderVariant) -> Result<Confounder> {
        let (features, feature_names) = match variant {
            ConfounderVariant::DebateTopicsOnly => {
                let idx = self
                    .debate_topics
                    .iter()
                    .position(|t| *t == triple.debate_topic)
                    .ok_or_else(|| {
                        Error::validation(format!("debate topic {:?} not in the topic index", triple.debate_topic))
                    })?;
                let mut f = vec![0.0; self.debate_topics.len()];
                f[idx] = 1.0;
                let names = self.debate_topics.iter().map(|t| format!("topic={t}")).collect();
                (f, names)
            }
            ConfounderVariant::Full => {
                let model = self.models.get(&triple.debate_topic).ok_or_else(|| {
                    Error::validation(format!("no topic model for debate topic {:?}", triple.debate_topic))
                })?;
                let inferencer = ThetaInferencer::new(model);
                let mut f = Vec::new();
                let mut names = Vec::new();
                for (slot, id) in [("p1", &triple.p1), ("p2", &triple.p2)] {
                    let tokens = self.topic_tokenizer.tokenize(self.post_text(id)?);
                    f.extend(inferencer.infer_tokens(&tokens));
                    names.extend((0..model.k).map(|i| format!("{slot}_theta_{i}")));
                }
                let tokens = self.lexicon_tokenizer.tokenize(self.post_text(&triple.p1)?);
                for &ty in &self.sentiment_types {
                    let v = vectorize_tokens(self.lexicon, self.grouping, ty, &tokens)?;
                    let cats = self.grouping.categories(ty).expect("vectorized type exists");
                    f.extend(v.values);
                    names.extend(cats.iter().map(|c| format!("p1_{ty}_{c}")));
                }
                (f, names)
            }
        };
        if let Some(j) = features.iter().position(|v| !v.is_finite()) {
            return Err(Error::validation(format!(
                "non-finite confounder feature {} for triple {}",
                feature_names[j], triple.id
            )));
        }
        Ok(Confounder {
            triple_id: triple.id.clone(),
            variant,
            features,
            feature_names,
        })
    }
}

/// Reject confounders with non-finite entries, naming the triple.
pub fn validate_confounders(confounders: &[Confounder]) -> Result<()> {
    for c in confounders {
        if c.features.iter().any(|v| !v.is_finite()) {
            return Err(Error::validation(format!("non-finite confounder features for triple {}", c.triple_id)));
        }
        if c.features.len() != c.feature_names.len() {
            return Err(Error::DimensionMismatch {
                expected: c.feature_names.len(),
                found: c.features.len(),
            });
        }
    }
    Ok(())
}

pub fn feature_rows(confounders: &[Confounder]) -> Vec<&[f64]> {
    confounders.iter().map(|c| c.features.as_slice()).collect()
}
