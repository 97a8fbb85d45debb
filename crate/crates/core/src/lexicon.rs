//! Category lexicons, per-post category-frequency vectors and distance outcomes.
//!
//! Lexicon file: `pattern<TAB>category[,category...]` per line, `#` comments.
//! A pattern ending in `*` matches any suffix (including none).
//!
//! Grouping file: `[category_type]` section headers followed by one category
//! name per line. The order inside a section is the vector component order.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const WILDCARD: char = '*';

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CategoryType {
    PositiveSentiment,
    NegativeSentiment,
    LinguisticStyle,
}

impl CategoryType {
    pub const ALL: [CategoryType; 3] = [
        CategoryType::PositiveSentiment,
        CategoryType::NegativeSentiment,
        CategoryType::LinguisticStyle,
    ];

    pub fn token(self) -> &'static str {
        match self {
            CategoryType::PositiveSentiment => "positive_sentiment",
            CategoryType::NegativeSentiment => "negative_sentiment",
            CategoryType::LinguisticStyle => "linguistic_style",
        }
    }

    /// Short column label: `Pos.`, `Neg.`, `Ling.`
    pub fn label(self) -> &'static str {
        match self {
            CategoryType::PositiveSentiment => "Pos.",
            CategoryType::NegativeSentiment => "Neg.",
            CategoryType::LinguisticStyle => "Ling.",
        }
    }
}

impl fmt::Display for CategoryType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.token())
    }
}

impl FromStr for CategoryType {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        CategoryType::ALL
            .into_iter()
            .find(|c| c.token() == s)
            .ok_or_else(|| {
                Error::validation(format!(
                    "unknown category type {s:?} (expected positive_sentiment, negative_sentiment or linguistic_style)"
                ))
            })
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct CategoryLexicon {
    categories: BTreeSet<String>,
    literals: HashMap<String, BTreeSet<String>>,
    /// Wildcard patterns keyed by their prefix (marker removed).
    prefixes: HashMap<String, BTreeSet<String>>,
}

impl CategoryLexicon {
    pub fn from_entries<I, C>(entries: I) -> Result<Self>
    where
        I: IntoIterator<Item = (String, C)>,
        C: IntoIterator<Item = String>,
    {
        let mut lex = CategoryLexicon::default();
        for (pattern, cats) in entries {
            let pattern = pattern.trim().to_lowercase();
            let cats: BTreeSet<String> = cats
                .into_iter()
                .map(|c| c.trim().to_owned())
                .filter(|c| !c.is_empty())
                .collect();
            if cats.is_empty() {
                return Err(Error::validation(format!("pattern {pattern:?} has no categories")));
            }
            let (table, key) = match pattern.strip_suffix(WILDCARD) {
                Some(prefix) => (&mut lex.prefixes, prefix.to_owned()),
                None => (&mut lex.literals, pattern.clone()),
            };
            if key.is_empty() || key.contains(WILDCARD) {
                return Err(Error::validation(format!("malformed pattern {pattern:?}")));
            }
            if table.contains_key(&key) {
                return Err(Error::validation(format!("duplicate pattern {pattern:?}")));
            }
            lex.categories.extend(cats.iter().cloned());
            table.insert(key, cats);
        }
        Ok(lex)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut entries = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim_end_matches('\r');
            if line.trim().is_empty() || line.trim_start().starts_with('#') {
                continue;
            }
            let Some((pattern, cats)) = line.split_once('\t') else {
                return Err(Error::Parse {
                    file: "lexicon".into(),
                    line: i + 1,
                    message: "expected `pattern<TAB>category[,category...]`".into(),
                });
            };
            entries.push((
                pattern.to_owned(),
                cats.split(',').map(str::to_owned).collect::<Vec<_>>(),
            ));
        }
        Self::from_entries(entries)
    }

    pub fn categories(&self) -> &BTreeSet<String> {
        &self.categories
    }

    pub fn pattern_count(&self) -> usize {
        self.literals.len() + self.prefixes.len()
    }

    /// Union of the categories of every pattern matching the token.
    pub fn categorize_token(&self, token: &str) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        if let Some(c) = self.literals.get(token) {
            out.extend(c.iter().cloned());
        }
        for (i, _) in token.char_indices().skip(1).chain([(token.len(), ' ')]) {
            if let Some(c) = self.prefixes.get(&token[..i]) {
                out.extend(c.iter().cloned());
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct CategoryTypeGrouping {
    groups: BTreeMap<CategoryType, Vec<String>>,
}

impl CategoryTypeGrouping {
    pub fn new(groups: BTreeMap<CategoryType, Vec<String>>, lexicon: &CategoryLexicon) -> Result<Self> {
        if groups.is_empty() {
            return Err(Error::validation("grouping defines no category types"));
        }
        for (ty, cats) in &groups {
            if cats.is_empty() {
                return Err(Error::validation(format!("category type {ty} has an empty category list")));
            }
            let mut seen = BTreeSet::new();
            for c in cats {
                if !lexicon.categories.contains(c) {
                    return Err(Error::validation(format!("unknown category {c}")));
                }
                if !seen.insert(c) {
                    return Err(Error::validation(format!("category {c} listed twice under {ty}")));
                }
            }
        }
        Ok(CategoryTypeGrouping { groups })
    }

    pub fn parse(text: &str, lexicon: &CategoryLexicon) -> Result<Self> {
        let mut groups: BTreeMap<CategoryType, Vec<String>> = BTreeMap::new();
        let mut current: Option<CategoryType> = None;
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
                let ty: CategoryType = name.trim().parse()?;
                if groups.insert(ty, Vec::new()).is_some() {
                    return Err(Error::validation(format!("section [{ty}] appears twice")));
                }
                current = Some(ty);
                continue;
            }
            let Some(ty) = current else {
                return Err(Error::Parse {
                    file: "grouping".into(),
                    line: i + 1,
                    message: "category listed before any [section]".into(),
                });
            };
            groups.get_mut(&ty).expect("section inserted").push(line.to_owned());
        }
        Self::new(groups, lexicon)
    }

    pub fn categories(&self, ty: CategoryType) -> Option<&[String]> {
        self.groups.get(&ty).map(Vec::as_slice)
    }

    pub fn types(&self) -> impl Iterator<Item = CategoryType> + '_ {
        self.groups.keys().copied()
    }
}

pub fn load_lexicon(
    lexicon_path: impl AsRef<Path>,
    grouping_path: impl AsRef<Path>,
) -> Result<(CategoryLexicon, CategoryTypeGrouping)> {
    let lp = lexicon_path.as_ref();
    let gp = grouping_path.as_ref();
    let lexicon = CategoryLexicon::parse(&fs::read_to_string(lp).map_err(|e| Error::io(lp, e))?)?;
    let grouping =
        CategoryTypeGrouping::parse(&fs::read_to_string(gp).map_err(|e| Error::io(gp, e))?, &lexicon)?;
    Ok((lexicon, grouping))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoryVector {
    pub category_type: CategoryType,
    pub values: Vec<f64>,
}

/// Relative frequency of each grouped category among the post's tokens.
pub fn vectorize_tokens<S: AsRef<str>>(
    lexicon: &CategoryLexicon,
    grouping: &CategoryTypeGrouping,
    category_type: CategoryType,
    tokens: &[S],
) -> Result<CategoryVector> {
    let cats = grouping
        .categories(category_type)
        .ok_or_else(|| Error::validation(format!("grouping has no {category_type} section")))?;
    let mut values = vec![0.0; cats.len()];
    if !tokens.is_empty() {
        for t in tokens {
            let hit = lexicon.categorize_token(t.as_ref());
            for (v, c) in values.iter_mut().zip(cats) {
                if hit.contains(c) {
                    *v += 1.0;
                }
            }
        }
        let n = tokens.len() as f64;
        values.iter_mut().for_each(|v| *v /= n);
    }
    Ok(CategoryVector {
        category_type,
        values,
    })
}

/// Euclidean distance between the first and last post's category vectors.
pub fn compute_outcome(v1: &CategoryVector, v3: &CategoryVector) -> Result<f64> {
    if v1.category_type != v3.category_type {
        return Err(Error::validation(format!(
            "category types differ: {} vs {}",
            v1.category_type, v3.category_type
        )));
    }
    if v1.values.len() != v3.values.len() {
        return Err(Error::DimensionMismatch {
            expected: v1.values.len(),
            found: v3.values.len(),
        });
    }
    Ok(v1
        .values
        .iter()
        .zip(&v3.values)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt())
}
