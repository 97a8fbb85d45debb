use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::topics::LdaModel;

/// Top `n_words` terms of every topic in a saved model.
pub fn inspect_topics(model_path: impl AsRef<Path>, n_words: usize) -> Result<Vec<Vec<String>>> {
    if n_words == 0 {
        return Err(Error::validation("n_words must be at least 1"));
    }
    let model = LdaModel::load(model_path)?;
    (0..model.k).map(|i| model.top_words(i, n_words)).collect()
}

pub fn render_topic_table(lists: &[Vec<String>]) -> String {
    let mut out = String::from("topic  top words\n");
    for (i, words) in lists.iter().enumerate() {
        let _ = writeln!(out, "{i:>5}  {}", words.join(" "));
    }
    out
}
