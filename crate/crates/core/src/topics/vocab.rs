use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_MIN_DF: f64 = 0.02;
pub const DEFAULT_MAX_DF: f64 = 0.80;

/// Retained terms in sorted order with their document frequencies.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Vocabulary {
    terms: Vec<String>,
    document_frequency: Vec<f64>,
}

impl Vocabulary {
    /// Terms must be unique; they are sorted here.
    pub fn from_terms(terms: impl IntoIterator<Item = (String, f64)>) -> Result<Self> {
        let map: BTreeMap<String, f64> = terms.into_iter().collect();
        if map.is_empty() {
            return Err(Error::validation("vocabulary is empty"));
        }
        let (terms, document_frequency) = map.into_iter().unzip();
        Ok(Vocabulary {
            terms,
            document_frequency,
        })
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn terms(&self) -> &[String] {
        &self.terms
    }

    pub fn document_frequency(&self) -> &[f64] {
        &self.document_frequency
    }

    pub fn index_of(&self, term: &str) -> Option<usize> {
        self.terms.binary_search_by(|t| t.as_str().cmp(term)).ok()
    }
}

/// Keep terms whose document frequency is strictly between `min_df` and `max_df`.
pub fn build_vocabulary<S: AsRef<str>>(
    docs: &[Vec<S>],
    min_df: f64,
    max_df: f64,
) -> Result<Vocabulary> {
    if !(0.0..=1.0).contains(&min_df) || !(0.0..=1.0).contains(&max_df) || min_df >= max_df {
        return Err(Error::validation(format!(
            "document-frequency thresholds must satisfy 0 <= min_df < max_df <= 1 (got {min_df}, {max_df})"
        )));
    }
    let mut df: BTreeMap<&str, usize> = BTreeMap::new();
    for doc in docs {
        let mut seen: Vec<&str> = doc.iter().map(AsRef::as_ref).collect();
        seen.sort_unstable();
        seen.dedup();
        for t in seen {
            *df.entry(t).or_default() += 1;
        }
    }
    let n = docs.len() as f64;
    let kept: Vec<(String, f64)> = df
        .into_iter()
        .map(|(t, c)| (t, c as f64 / n))
        .filter(|&(_, f)| f > min_df && f < max_df)
        .map(|(t, f)| (t.to_owned(), f))
        .collect();
    if kept.is_empty() {
        return Err(Error::validation(format!(
            "no term has document frequency in ({min_df}, {max_df}) over {} documents; widen the thresholds",
            docs.len()
        )));
    }
    Vocabulary::from_terms(kept)
}

/// Sparse bag-of-words row: sorted term indices with positive counts.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SparseRow {
    pub indices: Vec<usize>,
    pub counts: Vec<f64>,
}

impl SparseRow {
    pub fn from_tokens<S: AsRef<str>>(tokens: &[S], vocab: &Vocabulary) -> Self {
        let mut counts: BTreeMap<usize, f64> = BTreeMap::new();
        for t in tokens {
            if let Some(j) = vocab.index_of(t.as_ref()) {
                *counts.entry(j).or_default() += 1.0;
            }
        }
        let (indices, counts) = counts.into_iter().unzip();
        SparseRow { indices, counts }
    }

    pub fn from_dense(dense: &[f64]) -> Self {
        let (indices, counts) = dense
            .iter()
            .enumerate()
            .filter(|(_, &c)| c > 0.0)
            .map(|(j, &c)| (j, c))
            .unzip();
        SparseRow { indices, counts }
    }

    pub fn total(&self) -> f64 {
        self.counts.iter().sum()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.indices.iter().copied().zip(self.counts.iter().copied())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DocumentTermMatrix {
    pub n_terms: usize,
    pub doc_ids: Vec<String>,
    pub rows: Vec<SparseRow>,
}

impl DocumentTermMatrix {
    pub fn n_docs(&self) -> usize {
        self.rows.len()
    }

    /// Documents with no in-vocabulary tokens.
    pub fn empty_rows(&self) -> Vec<usize> {
        self.rows
            .iter()
            .enumerate()
            .filter(|(_, r)| r.is_empty())
            .map(|(i, _)| i)
            .collect()
    }

    pub fn dense_row(&self, i: usize) -> Vec<f64> {
        let mut out = vec![0.0; self.n_terms];
        for (j, c) in self.rows[i].iter() {
            out[j] = c;
        }
        out
    }
}

/// Count vocabulary terms per document; out-of-vocabulary tokens are dropped.
pub fn build_dtm<S: AsRef<str>>(docs: &[(String, Vec<S>)], vocab: &Vocabulary) -> DocumentTermMatrix {
    DocumentTermMatrix {
        n_terms: vocab.len(),
        doc_ids: docs.iter().map(|(id, _)| id.clone()).collect(),
        rows: docs
            .iter()
            .map(|(_, toks)| SparseRow::from_tokens(toks, vocab))
            .collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn docs_with_term_fraction(pct: usize) -> Vec<Vec<String>> {
        (0..100)
            .map(|i| {
                let mut d = vec!["filler".to_owned()];
                if i < pct {
                    d.push("target".into());
                }
                if i % 2 == 0 {
                    d.push("half".into());
                }
                d
            })
            .collect()
    }

    #[test]
    fn thresholds_are_strict() {
        for (pct, kept) in [(1, false), (50, true), (85, false), (2, false), (80, false), (3, true)] {
            let v = build_vocabulary(&docs_with_term_fraction(pct), DEFAULT_MIN_DF, DEFAULT_MAX_DF).unwrap();
            assert_eq!(v.index_of("target").is_some(), kept, "{pct}%");
            assert!(v.index_of("filler").is_none());
        }
    }

    #[test]
    fn empty_vocabulary_is_an_error() {
        let docs = vec![vec!["x"]; 10];
        assert!(build_vocabulary(&docs, 0.02, 0.8).is_err());
        assert!(build_vocabulary(&docs, 0.9, 0.1).is_err());
    }

    #[test]
    fn dtm_counts_and_flags() {
        let vocab = Vocabulary::from_terms([("gun".into(), 0.5), ("control".into(), 0.5)]).unwrap();
        let docs = vec![
            ("p1".to_owned(), vec!["gun", "gun", "control"]),
            ("p2".to_owned(), vec!["unknown"]),
        ];
        let dtm = build_dtm(&docs, &vocab);
        assert_eq!(dtm.dense_row(0), vec![1.0, 2.0]);
        assert_eq!(dtm.empty_rows(), vec![1]);
        assert_eq!(dtm.n_docs(), 2);
    }
}
