//! Concept/person posting lists and fuzzy text retrieval.

mod levenshtein;
mod postings;
mod vocabulary;

use thiserror::Error;

use crate::model::AnnotationKind;

pub use levenshtein::{levenshtein, levenshtein_chars};
pub use postings::{PostingList, Postings};
pub use vocabulary::{word_similarity, Vocabulary, DEFAULT_SIMILARITY_FLOOR};

#[derive(Debug, Error, PartialEq)]
pub enum LexicalError {
    #[error("no such {kind}: {label:?}")]
    UnknownLabel { kind: AnnotationKind, label: String },
    #[error("query is empty after normalization")]
    EmptyQuery,
}
