//! Per-debate-topic vocabularies, document-term matrices and LDA topic models.

pub mod lda;
pub mod tokenize;
pub mod vocab;

pub use lda::{fit_lda, infer_theta, LdaConfig, LdaModel, ThetaInferencer, TopicProportions};
pub use tokenize::{Lemmatizer, RuleLemmatizer, Tokenizer};
pub use vocab::{build_dtm, build_vocabulary, DEFAULT_MAX_DF, DEFAULT_MIN_DF, DocumentTermMatrix, SparseRow, Vocabulary};
