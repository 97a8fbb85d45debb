//! Unigram tokenizer with stop-word removal and a rule-based lemmatizer.

use std::collections::{HashMap, HashSet};
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

const DEFAULT_STOPWORDS: &str = include_str!("../../data/stopwords.txt");
const DEFAULT_EXCEPTIONS: &str = include_str!("../../data/lemma_exceptions.txt");

/// Reduces a lowercase token to its base form.
pub trait Lemmatizer: Send + Sync {
    fn lemmatize(&self, token: &str) -> String;
}

/// Suffix rules for `-s`/`-es`, `-ed` and `-ing` with an exception table consulted first.
#[derive(Debug, Clone, Default)]
pub struct RuleLemmatizer {
    exceptions: HashMap<String, String>,
}

impl RuleLemmatizer {
    pub fn new(exceptions: HashMap<String, String>) -> Self {
        RuleLemmatizer { exceptions }
    }

    /// Parse an exception table: `surface<TAB>base` per line, `#` comments.
    pub fn parse_exceptions(text: &str) -> Result<HashMap<String, String>> {
        let mut map = HashMap::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let mut parts = line.split('\t');
            match (parts.next(), parts.next(), parts.next()) {
                (Some(surface), Some(base), None) if !surface.is_empty() && !base.is_empty() => {
                    map.insert(surface.to_lowercase(), base.to_lowercase());
                }
                _ => {
                    return Err(Error::Parse {
                        file: "lemma exceptions".into(),
                        line: i + 1,
                        message: "expected `surface<TAB>base`".into(),
                    })
                }
            }
        }
        Ok(map)
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(Self::new(Self::parse_exceptions(&text)?))
    }

    pub fn with_defaults() -> Self {
        Self::new(Self::parse_exceptions(DEFAULT_EXCEPTIONS).expect("bundled exception table"))
    }
}

fn is_consonant(w: &[u8], i: usize) -> bool {
    match w[i] {
        b'a' | b'e' | b'i' | b'o' | b'u' => false,
        b'y' => i == 0 || !is_consonant(w, i - 1),
        _ => true,
    }
}

/// Number of vowel-consonant sequences in the stem.
fn measure(w: &[u8]) -> usize {
    let mut m = 0;
    let mut prev_vowel = false;
    for i in 0..w.len() {
        let c = is_consonant(w, i);
        if c && prev_vowel {
            m += 1;
        }
        prev_vowel = !c;
    }
    m
}

fn has_vowel(w: &[u8]) -> bool {
    (0..w.len()).any(|i| !is_consonant(w, i))
}

fn ends_cvc(w: &[u8]) -> bool {
    let n = w.len();
    n >= 3
        && is_consonant(w, n - 3)
        && !is_consonant(w, n - 2)
        && is_consonant(w, n - 1)
        && !matches!(w[n - 1], b'w' | b'x' | b'y')
}

fn strip_plural(word: &str) -> &str {
    if word.ends_with("ss") || word.ends_with("us") || word.ends_with("is") {
        return word;
    }
    for suffix in ["sses", "xes", "ches", "shes", "zes"] {
        if word.ends_with(suffix) {
            return &word[..word.len() - 2];
        }
    }
    if word.ends_with('s') && word.len() > 3 {
        return &word[..word.len() - 1];
    }
    word
}

/// Repair a stem after removing `-ed`/`-ing`.
fn restore_stem(stem: &str) -> String {
    let b = stem.as_bytes();
    let n = b.len();
    if stem.ends_with("at") || stem.ends_with("bl") || stem.ends_with("iz") || stem.ends_with('v') {
        return format!("{stem}e");
    }
    if n >= 2 && b[n - 1] == b[n - 2] && is_consonant(b, n - 1) {
        let keep_double = match b[n - 1] {
            b'l' => measure(b) <= 1,
            b's' | b'z' => true,
            _ => false,
        };
        if !keep_double {
            return stem[..n - 1].to_owned();
        }
    }
    if measure(b) == 1 && ends_cvc(b) {
        return format!("{stem}e");
    }
    stem.to_owned()
}

impl Lemmatizer for RuleLemmatizer {
    fn lemmatize(&self, token: &str) -> String {
        if let Some(base) = self.exceptions.get(token) {
            return base.clone();
        }
        if token.len() <= 3 || !token.bytes().all(|c| c.is_ascii_lowercase()) {
            return token.to_owned();
        }
        if let Some(stem) = token.strip_suffix("ies") {
            return if token.len() > 4 {
                format!("{stem}y")
            } else {
                format!("{stem}ie")
            };
        }
        let word = strip_plural(token);
        if let Some(stem) = word.strip_suffix("eed") {
            return if measure(stem.as_bytes()) > 0 {
                format!("{stem}ee")
            } else {
                word.to_owned()
            };
        }
        for suffix in ["ing", "ed"] {
            if let Some(stem) = word.strip_suffix(suffix) {
                if has_vowel(stem.as_bytes()) {
                    return restore_stem(stem);
                }
            }
        }
        word.to_owned()
    }
}

/// Lowercase, drop apostrophes, split on everything that is not alphanumeric.
pub fn split_words(text: &str) -> impl Iterator<Item = String> + '_ {
    text.split(|c: char| !(c.is_alphanumeric() || c == '\'' || c == '\u{2019}'))
        .map(|w| {
            w.chars()
                .filter(|&c| c != '\'' && c != '\u{2019}')
                .flat_map(char::to_lowercase)
                .collect::<String>()
        })
        .filter(|w| !w.is_empty())
}

pub struct Tokenizer {
    stopwords: HashSet<String>,
    lemmatizer: Option<Box<dyn Lemmatizer>>,
}

impl std::fmt::Debug for Tokenizer {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Tokenizer")
            .field("stopwords", &self.stopwords.len())
            .field("lemmatize", &self.lemmatizer.is_some())
            .finish()
    }
}

impl Default for Tokenizer {
    /// Bundled stop words and the rule lemmatizer with bundled exceptions.
    fn default() -> Self {
        Tokenizer {
            stopwords: Self::parse_stopwords(DEFAULT_STOPWORDS),
            lemmatizer: Some(Box::new(RuleLemmatizer::with_defaults())),
        }
    }
}

impl Tokenizer {
    pub fn new(stopwords: HashSet<String>, lemmatizer: Option<Box<dyn Lemmatizer>>) -> Self {
        let stopwords = stopwords
            .iter()
            .flat_map(|w| split_words(w).collect::<Vec<_>>())
            .collect();
        Tokenizer {
            stopwords,
            lemmatizer,
        }
    }

    /// Surface forms only: no stop-word removal, no lemmatization.
    /// Lexicon matching uses this so function words stay countable.
    pub fn surface() -> Self {
        Tokenizer {
            stopwords: HashSet::new(),
            lemmatizer: None,
        }
    }

    /// One word per line, `#` comments.
    pub fn parse_stopwords(text: &str) -> HashSet<String> {
        text.lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'))
            .flat_map(|l| split_words(l).collect::<Vec<_>>())
            .collect()
    }

    pub fn from_files(
        stopwords: Option<&Path>,
        exceptions: Option<&Path>,
    ) -> Result<Self> {
        let stop = match stopwords {
            Some(p) => Self::parse_stopwords(&fs::read_to_string(p).map_err(|e| Error::io(p, e))?),
            None => Self::parse_stopwords(DEFAULT_STOPWORDS),
        };
        let lemmatizer = match exceptions {
            Some(p) => RuleLemmatizer::from_file(p)?,
            None => RuleLemmatizer::with_defaults(),
        };
        Ok(Tokenizer {
            stopwords: stop,
            lemmatizer: Some(Box::new(lemmatizer)),
        })
    }

    pub fn tokenize(&self, text: &str) -> Vec<String> {
        split_words(text)
            .filter(|w| !self.stopwords.contains(w))
            .map(|w| match &self.lemmatizer {
                Some(l) => l.lemmatize(&w),
                None => w,
            })
            .filter(|w| !self.stopwords.contains(w))
            .collect()
    }
}
