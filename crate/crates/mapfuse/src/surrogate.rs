//! Differentiable surrogate of the exact objective.
//!
//! The hard indicator "document d outranks d_j" becomes a sigmoid of the
//! fused score difference, which makes the rank — and through it the whole
//! mean-average-precision objective — smooth in the weights. The module
//! also evaluates the a-priori bounds tying the smoothed quantities back to
//! their exact counterparts, with everything controlled by the minimum
//! pairwise score separation.

use crate::error::{Error, Result};
use crate::kahan::KahanSum;
use crate::model::{
    ensemble_scores, sorted_relevant_indices, Dataset, ScorePanel, Weights,
};
use crate::parallel::map_indexed;

/// Sharpness of the sigmoid indicator.
#[derive(Debug, Clone, Copy)]
pub struct SurrogateConfig {
    /// Scaling constant applied to score differences; larger values tighten
    /// the surrogate toward the exact objective. Must be positive.
    pub beta: f64,
}

impl Default for SurrogateConfig {
    fn default() -> Self {
        Self { beta: 200.0 }
    }
}

impl SurrogateConfig {
    pub fn new(beta: f64) -> Self {
        assert!(beta > 0.0, "beta must be positive");
        Self { beta }
    }
}

/// Smooth stand-in for `I{s_diff < 0}`: `1 / (1 + exp(beta * s_diff))`.
///
/// Split into two algebraically equal branches so neither exponent can
/// overflow; `beta * s_diff` magnitudes well beyond 1e4 saturate smoothly
/// toward 0 or 1.
pub fn sigmoid_indicator(s_diff: f64, cfg: &SurrogateConfig) -> f64 {
    let z = cfg.beta * s_diff;
    if z >= 0.0 {
        let e = (-z).exp();
        e / (1.0 + e)
    } else {
        1.0 / (1.0 + z.exp())
    }
}

/// Smoothed rank: 1 plus the sigmoid indicator summed over every other
/// document. Lies strictly inside `(1, n_docs)` for finite inputs.
pub fn approx_rank(
    panel: &ScorePanel,
    weights: &Weights,
    doc_id: &str,
    cfg: &SurrogateConfig,
) -> Result<f64> {
    let idx = panel.doc_index(doc_id).ok_or_else(|| Error::UnknownDocument {
        query_id: panel.query_id().to_string(),
        doc_id: doc_id.to_string(),
    })?;
    let scores = ensemble_scores(panel, weights)?;
    Ok(approx_rank_of(&scores, idx, cfg))
}

pub(crate) fn approx_rank_of(scores: &[f64], idx: usize, cfg: &SurrogateConfig) -> f64 {
    let mine = scores[idx];
    let mut acc = KahanSum::new();
    for (i, &s) in scores.iter().enumerate() {
        if i != idx {
            acc.add(sigmoid_indicator(mine - s, cfg));
        }
    }
    1.0 + acc.value()
}

/// Smoothed objective: the mean-average-precision formula with every exact
/// rank replaced by [`approx_rank`].
///
/// The position index `j` of each term is re-derived from the relevant
/// documents sorted under the *current* weights, mirroring how the exact
/// objective orders them.
pub fn surrogate_objective(dataset: &Dataset, weights: &Weights, cfg: &SurrogateConfig) -> Result<f64> {
    let per_query = map_indexed(dataset.len(), |i| {
        query_objective_term(&dataset.panels()[i], dataset.relevant_indices(i), weights, cfg)
    });
    let mut acc = KahanSum::new();
    for term in per_query {
        acc.add(term?);
    }
    Ok(acc.value() / dataset.len() as f64)
}

/// One query's contribution `(1/|rel|) * sum_j j / approx_rank(d_j)`,
/// without the `1/L` factor.
pub(crate) fn query_objective_term(
    panel: &ScorePanel,
    rel_indices: &[usize],
    weights: &Weights,
    cfg: &SurrogateConfig,
) -> Result<f64> {
    let scores = ensemble_scores(panel, weights)?;
    let order = sorted_relevant_indices(&scores, rel_indices);
    let mut acc = KahanSum::new();
    for (j, &idx) in order.iter().enumerate() {
        acc.add((j + 1) as f64 / approx_rank_of(&scores, idx, cfg));
    }
    Ok(acc.value() / order.len() as f64)
}

/// The three approximation bounds evaluated on a dataset, alongside the
/// minimum pairwise separation they are driven by.
#[derive(Debug, Clone, Copy)]
pub struct BoundReport {
    /// Bound on |sigmoid - indicator| for a single pair.
    pub indicator_bound: f64,
    /// Bound on |approx_rank - exact_rank| for a single document.
    pub position_bound: f64,
    /// Bound on |surrogate objective - exact objective| for the dataset.
    pub objective_bound: f64,
    /// Minimum |fused score difference| over every (relevant, other) pair
    /// actually summed. Infinite when no pairs exist.
    pub delta_min: f64,
    /// Set when `delta_min` is zero: some pair is exactly tied and the
    /// sigmoid gap degenerates to its worst case 0.5.
    pub degenerate: bool,
}

/// Evaluate the bound chain for `dataset` at `weights`.
///
/// `delta_min` is the global minimum of |fused score difference| over all
/// (query, relevant document, other document) pairs; the document count in
/// the position and objective bounds is the largest panel in the dataset.
pub fn bound_report(dataset: &Dataset, weights: &Weights, cfg: &SurrogateConfig) -> Result<BoundReport> {
    let mut delta_min = f64::INFINITY;
    for (i, panel) in dataset.panels().iter().enumerate() {
        let scores = ensemble_scores(panel, weights)?;
        for &rel_idx in dataset.relevant_indices(i) {
            for d in 0..panel.n_docs() {
                if d != rel_idx {
                    delta_min = delta_min.min((scores[rel_idx] - scores[d]).abs());
                }
            }
        }
    }
    let max_docs = dataset.panels().iter().map(ScorePanel::n_docs).max().unwrap_or(0);
    let total_relevant: usize = (0..dataset.len()).map(|i| dataset.relevant_indices(i).len()).sum();
    let queries = dataset.len() as f64;
    let gap = if delta_min.is_finite() {
        sigmoid_indicator(delta_min, cfg)
    } else {
        0.0
    };
    let docs_term = (max_docs.saturating_sub(1)) as f64;
    Ok(BoundReport {
        indicator_bound: gap,
        position_bound: docs_term * gap,
        objective_bound: docs_term * (queries + total_relevant as f64) / (2.0 * queries) * gap,
        delta_min,
        degenerate: delta_min == 0.0,
    })
}
