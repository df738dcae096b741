//! Learn weighted fusions of document rankers by directly maximizing a
//! smoothed mean-average-precision objective.
//!
//! Given run files from several rankers and relevance judgments, the crate
//! finds one nonnegative weight per ranker so that the weighted sum of
//! ranker scores puts relevant documents as high as possible:
//!
//! - [`model`] — exact fused scoring, ranks, and mean average precision;
//! - [`surrogate`] — the sigmoid-smoothed objective and its error bounds;
//! - [`derivatives`] — analytic gradient and Hessian with an optional
//!   accumulator window;
//! - [`optim`] — multi-start safeguarded Newton (batch), per-query
//!   stochastic gradient ascent (online), and unsupervised co-training;
//! - [`eval`] — precision at k, interpolated precision-recall curves,
//!   two-fold cross validation, Wilcoxon signed-rank comparison;
//! - [`ingest`] — run/qrels parsing and dataset assembly;
//! - [`text`] — corpus preprocessing and a tf-idf constituent ranker;
//! - [`synth`] — planted-truth dataset generation for recovery tests.
//!
//! The heavy inner loops run data-parallel under the `parallel` feature
//! (enabled by default) and fall back to sequential execution without it;
//! both modes produce bit-identical results.

pub mod derivatives;
pub mod error;
pub mod eval;
pub mod ingest;
pub mod kahan;
pub mod model;
pub mod optim;
pub mod parallel;
pub mod surrogate;
pub mod synth;
pub mod text;

pub use error::{Error, Result};
pub use model::{Dataset, PanelSet, RelevanceSet, ScorePanel, Weights};
pub use surrogate::SurrogateConfig;
