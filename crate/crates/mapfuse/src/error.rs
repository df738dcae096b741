//! Error type shared across the crate.

use thiserror::Error;

/// Errors produced by dataset construction, parsing, and training.
#[derive(Debug, Error)]
pub enum Error {
    /// A weight vector does not match the ranker count of a panel or dataset.
    #[error("dimension mismatch: expected {expected} weights, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    /// A document id was requested that the panel does not contain.
    #[error("unknown document {doc_id:?} for query {query_id:?}")]
    UnknownDocument { query_id: String, doc_id: String },

    /// A query has no relevant documents where at least one is required.
    #[error("empty relevance set for query {query_id:?}")]
    EmptyRelevance { query_id: String },

    /// Invalid argument outside the more specific variants.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// A malformed line in a run or qrels file.
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    /// The same (query, document) pair appeared twice in one run file.
    #[error("duplicate entry for ({query_id}, {doc_id}) at lines {first_line} and {second_line}")]
    DuplicateRecord {
        query_id: String,
        doc_id: String,
        first_line: usize,
        second_line: usize,
    },

    /// Dataset assembly dropped every query.
    #[error("no usable queries after assembly: {0}")]
    EmptyDataset(String),

    /// Corpus preprocessing removed every term.
    #[error("preprocessing left an empty vocabulary")]
    EmptyVocabulary,

    /// Every optimization start aborted.
    #[error("optimization failed: {0}")]
    OptimizationFailed(String),

    /// An optimization start hit a non-finite objective.
    #[error("start aborted: {0}")]
    StartAborted(String),

    /// The fake-relevance score threshold excluded every document for every ranker.
    #[error("score threshold {threshold} yields no fake relevant documents for any ranker")]
    ThresholdTooHigh { threshold: f64 },
}

pub type Result<T> = std::result::Result<T, Error>;
