//! Exact ensemble scoring, ranking, and mean average precision.
//!
//! A [`ScorePanel`] holds the raw scores every ranker assigned to one
//! query's documents. Fusing a panel with a [`Weights`] vector gives each
//! document the weighted sum of its per-ranker scores; ranking and the
//! precision metrics are defined on those fused scores. Everything here is
//! a pure function of immutable inputs and is the ground truth the smoothed
//! objective in [`crate::surrogate`] approximates.

use std::collections::{BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kahan::KahanSum;
use crate::parallel::map_indexed;

/// Per-query dense matrix of raw ranking scores (rows = documents,
/// columns = rankers).
#[derive(Debug, Clone)]
pub struct ScorePanel {
    query_id: String,
    doc_ids: Vec<String>,
    scores: Vec<f64>,
    n_rankers: usize,
    index: HashMap<String, usize>,
}

impl ScorePanel {
    /// Build a panel from one row of ranker scores per document.
    ///
    /// Rejects duplicate document ids, ragged rows, and non-finite scores.
    pub fn from_rows(
        query_id: impl Into<String>,
        doc_ids: Vec<String>,
        rows: Vec<Vec<f64>>,
    ) -> Result<Self> {
        let query_id = query_id.into();
        if rows.len() != doc_ids.len() {
            return Err(Error::InvalidArgument(format!(
                "panel {query_id}: {} doc ids but {} score rows",
                doc_ids.len(),
                rows.len()
            )));
        }
        let n_rankers = rows.first().map_or(0, Vec::len);
        let mut scores = Vec::with_capacity(doc_ids.len() * n_rankers);
        for (doc, row) in doc_ids.iter().zip(&rows) {
            if row.len() != n_rankers {
                return Err(Error::InvalidArgument(format!(
                    "panel {query_id}: ragged score row for document {doc}"
                )));
            }
            for &s in row {
                if !s.is_finite() {
                    return Err(Error::InvalidArgument(format!(
                        "panel {query_id}: non-finite score for document {doc}"
                    )));
                }
                scores.push(s);
            }
        }
        let mut index = HashMap::with_capacity(doc_ids.len());
        for (i, doc) in doc_ids.iter().enumerate() {
            if index.insert(doc.clone(), i).is_some() {
                return Err(Error::InvalidArgument(format!(
                    "panel {query_id}: duplicate document id {doc}"
                )));
            }
        }
        Ok(Self {
            query_id,
            doc_ids,
            scores,
            n_rankers,
            index,
        })
    }

    pub fn query_id(&self) -> &str {
        &self.query_id
    }

    pub fn doc_ids(&self) -> &[String] {
        &self.doc_ids
    }

    pub fn n_docs(&self) -> usize {
        self.doc_ids.len()
    }

    pub fn n_rankers(&self) -> usize {
        self.n_rankers
    }

    pub fn doc_index(&self, doc_id: &str) -> Option<usize> {
        self.index.get(doc_id).copied()
    }

    /// All ranker scores for one document.
    pub fn row(&self, doc: usize) -> &[f64] {
        &self.scores[doc * self.n_rankers..(doc + 1) * self.n_rankers]
    }

    pub fn score(&self, doc: usize, ranker: usize) -> f64 {
        self.scores[doc * self.n_rankers + ranker]
    }

    /// Copy of the panel without one ranker column.
    pub fn without_ranker(&self, ranker: usize) -> Result<Self> {
        if ranker >= self.n_rankers {
            return Err(Error::InvalidArgument(format!(
                "panel {}: no ranker column {ranker}",
                self.query_id
            )));
        }
        let rows = (0..self.n_docs())
            .map(|d| {
                self.row(d)
                    .iter()
                    .enumerate()
                    .filter(|(k, _)| *k != ranker)
                    .map(|(_, &s)| s)
                    .collect()
            })
            .collect();
        Self::from_rows(self.query_id.clone(), self.doc_ids.clone(), rows)
    }
}

/// Judged-relevant documents for one query.
#[derive(Debug, Clone)]
pub struct RelevanceSet {
    pub query_id: String,
    pub relevant_docs: BTreeSet<String>,
}

impl RelevanceSet {
    pub fn new(query_id: impl Into<String>, docs: impl IntoIterator<Item = String>) -> Self {
        Self {
            query_id: query_id.into(),
            relevant_docs: docs.into_iter().collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.relevant_docs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.relevant_docs.is_empty()
    }
}

/// One nonnegative-by-convention weight per ranker.
///
/// Intermediate optimizer iterates may go negative; the final clamp in
/// [`crate::optim`] restores nonnegativity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Weights(pub Vec<f64>);

impl Weights {
    pub fn uniform(len: usize, value: f64) -> Self {
        Self(vec![value; len])
    }

    pub fn zeros(len: usize) -> Self {
        Self(vec![0.0; len])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|w| w.is_finite())
    }

    /// Entries divided by their sum, when the sum is positive; otherwise a
    /// copy. Reporting-only convenience, ranking is scale invariant.
    pub fn normalized(&self) -> Self {
        let total: f64 = self.0.iter().sum();
        if total > 0.0 {
            Self(self.0.iter().map(|w| w / total).collect())
        } else {
            self.clone()
        }
    }

    /// Copy without the given entry.
    pub fn without(&self, idx: usize) -> Self {
        Self(
            self.0
                .iter()
                .enumerate()
                .filter(|(k, _)| *k != idx)
                .map(|(_, &w)| w)
                .collect(),
        )
    }

    /// Reinsert `value` at `idx`, undoing [`Weights::without`].
    pub fn with_inserted(&self, idx: usize, value: f64) -> Self {
        let mut out = self.0.clone();
        out.insert(idx, value);
        Self(out)
    }
}

/// Panels and ranker tags without relevance judgments, the input to
/// unsupervised training.
#[derive(Debug, Clone)]
pub struct PanelSet {
    panels: Vec<ScorePanel>,
    ranker_tags: Vec<String>,
}

impl PanelSet {
    pub fn new(panels: Vec<ScorePanel>, ranker_tags: Vec<String>) -> Result<Self> {
        if panels.is_empty() {
            return Err(Error::EmptyDataset("no panels".into()));
        }
        let mut seen = BTreeSet::new();
        for panel in &panels {
            if panel.n_rankers() != ranker_tags.len() {
                return Err(Error::DimensionMismatch {
                    expected: ranker_tags.len(),
                    got: panel.n_rankers(),
                });
            }
            if !seen.insert(panel.query_id().to_string()) {
                return Err(Error::InvalidArgument(format!(
                    "duplicate query id {}",
                    panel.query_id()
                )));
            }
        }
        Ok(Self { panels, ranker_tags })
    }

    pub fn len(&self) -> usize {
        self.panels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.panels.is_empty()
    }

    pub fn n_rankers(&self) -> usize {
        self.ranker_tags.len()
    }

    pub fn panels(&self) -> &[ScorePanel] {
        &self.panels
    }

    pub fn ranker_tags(&self) -> &[String] {
        &self.ranker_tags
    }
}

/// Aligned panels and relevance judgments for a set of queries.
#[derive(Debug, Clone)]
pub struct Dataset {
    panels: Vec<ScorePanel>,
    relevance: Vec<RelevanceSet>,
    ranker_tags: Vec<String>,
    rel_indices: Vec<Vec<usize>>,
}

impl Dataset {
    /// Validate alignment and cross-references and build the dataset.
    pub fn new(
        panels: Vec<ScorePanel>,
        relevance: Vec<RelevanceSet>,
        ranker_tags: Vec<String>,
    ) -> Result<Self> {
        if panels.is_empty() {
            return Err(Error::EmptyDataset("no panels".into()));
        }
        if panels.len() != relevance.len() {
            return Err(Error::InvalidArgument(format!(
                "{} panels but {} relevance sets",
                panels.len(),
                relevance.len()
            )));
        }
        let n_rankers = ranker_tags.len();
        let mut rel_indices = Vec::with_capacity(panels.len());
        for (panel, rel) in panels.iter().zip(&relevance) {
            if panel.query_id() != rel.query_id {
                return Err(Error::InvalidArgument(format!(
                    "panel {} is paired with relevance for {}",
                    panel.query_id(),
                    rel.query_id
                )));
            }
            if panel.n_rankers() != n_rankers {
                return Err(Error::DimensionMismatch {
                    expected: n_rankers,
                    got: panel.n_rankers(),
                });
            }
            if rel.is_empty() {
                return Err(Error::EmptyRelevance {
                    query_id: rel.query_id.clone(),
                });
            }
            // BTreeSet iteration gives ascending id order, the tie-break base.
            let mut indices = Vec::with_capacity(rel.len());
            for doc in &rel.relevant_docs {
                match panel.doc_index(doc) {
                    Some(i) => indices.push(i),
                    None => {
                        return Err(Error::UnknownDocument {
                            query_id: rel.query_id.clone(),
                            doc_id: doc.clone(),
                        })
                    }
                }
            }
            rel_indices.push(indices);
        }
        Ok(Self {
            panels,
            relevance,
            ranker_tags,
            rel_indices,
        })
    }

    pub fn len(&self) -> usize {
        self.panels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.panels.is_empty()
    }

    pub fn n_rankers(&self) -> usize {
        self.ranker_tags.len()
    }

    pub fn panels(&self) -> &[ScorePanel] {
        &self.panels
    }

    pub fn relevance(&self) -> &[RelevanceSet] {
        &self.relevance
    }

    pub fn ranker_tags(&self) -> &[String] {
        &self.ranker_tags
    }

    /// Relevant documents of query `i` as panel row indices, ascending by
    /// document id.
    pub fn relevant_indices(&self, query: usize) -> &[usize] {
        &self.rel_indices[query]
    }

    /// Dataset restricted to the given query positions (for fold splits and
    /// streaming).
    pub fn subset(&self, queries: &[usize]) -> Result<Self> {
        let panels = queries.iter().map(|&i| self.panels[i].clone()).collect();
        let relevance = queries.iter().map(|&i| self.relevance[i].clone()).collect();
        Self::new(panels, relevance, self.ranker_tags.clone())
    }

    /// Dataset without one ranker column (and its tag).
    pub fn without_ranker(&self, ranker: usize) -> Result<Self> {
        let panels = self
            .panels
            .iter()
            .map(|p| p.without_ranker(ranker))
            .collect::<Result<Vec<_>>>()?;
        let tags = (0..self.ranker_tags.len())
            .filter(|k| *k != ranker)
            .map(|k| self.ranker_tags[k].clone())
            .collect();
        Self::new(panels, self.relevance.clone(), tags)
    }

    /// The panels and tags alone, dropping relevance.
    pub fn panel_set(&self) -> PanelSet {
        PanelSet {
            panels: self.panels.clone(),
            ranker_tags: self.ranker_tags.clone(),
        }
    }

    /// Replace every relevance set, keeping panels and tags. Queries whose
    /// new set is empty are dropped together with their panels.
    pub fn with_relevance(&self, relevance: Vec<RelevanceSet>) -> Result<Self> {
        if relevance.len() != self.panels.len() {
            return Err(Error::InvalidArgument(
                "relevance replacement must cover every query".into(),
            ));
        }
        let mut panels = Vec::new();
        let mut kept = Vec::new();
        for (panel, rel) in self.panels.iter().zip(relevance) {
            if !rel.is_empty() {
                panels.push(panel.clone());
                kept.push(rel);
            }
        }
        if panels.is_empty() {
            return Err(Error::EmptyDataset("every replacement set was empty".into()));
        }
        Self::new(panels, kept, self.ranker_tags.clone())
    }
}

fn check_dims(panel: &ScorePanel, weights: &Weights) -> Result<()> {
    if weights.len() != panel.n_rankers() {
        return Err(Error::DimensionMismatch {
            expected: panel.n_rankers(),
            got: weights.len(),
        });
    }
    Ok(())
}

/// Fused score of every document: the weighted sum of its ranker scores,
/// in `doc_ids` order.
pub fn ensemble_scores(panel: &ScorePanel, weights: &Weights) -> Result<Vec<f64>> {
    check_dims(panel, weights)?;
    let w = weights.as_slice();
    Ok((0..panel.n_docs())
        .map(|d| {
            panel
                .row(d)
                .iter()
                .zip(w)
                .map(|(s, w)| s * w)
                .collect::<KahanSum>()
                .value()
        })
        .collect())
}

/// Rank by strict comparison: 1 plus the number of documents whose fused
/// score is strictly greater. Tied documents share the better position.
pub fn exact_rank(panel: &ScorePanel, weights: &Weights, doc_id: &str) -> Result<usize> {
    let idx = panel.doc_index(doc_id).ok_or_else(|| Error::UnknownDocument {
        query_id: panel.query_id().to_string(),
        doc_id: doc_id.to_string(),
    })?;
    let scores = ensemble_scores(panel, weights)?;
    Ok(strict_rank(&scores, idx))
}

pub(crate) fn strict_rank(scores: &[f64], idx: usize) -> usize {
    1 + scores.iter().filter(|&&s| s > scores[idx]).count()
}

/// Position in the deterministic full ordering: descending fused score,
/// ties by ascending document id.
pub(crate) fn total_order_rank(panel: &ScorePanel, scores: &[f64], idx: usize) -> usize {
    let mine = scores[idx];
    let my_id = &panel.doc_ids()[idx];
    let mut rank = 1;
    for (i, &s) in scores.iter().enumerate() {
        if s > mine || (s == mine && panel.doc_ids()[i].as_str() < my_id.as_str()) {
            rank += 1;
        }
    }
    rank
}

/// Every document index ordered by descending fused score, ties by
/// ascending document id.
pub fn ranking(panel: &ScorePanel, weights: &Weights) -> Result<Vec<usize>> {
    let scores = ensemble_scores(panel, weights)?;
    Ok(ranking_of(panel, &scores))
}

pub(crate) fn ranking_of(panel: &ScorePanel, scores: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..panel.n_docs()).collect();
    order.sort_by(|&a, &b| {
        scores[b]
            .partial_cmp(&scores[a])
            .unwrap()
            .then_with(|| panel.doc_ids()[a].cmp(&panel.doc_ids()[b]))
    });
    order
}

/// Relevant documents ordered by descending fused score, ties by ascending
/// document id. The 1-based position in this list is the `j` of each
/// average-precision term.
pub fn sorted_relevant(
    panel: &ScorePanel,
    weights: &Weights,
    rel: &RelevanceSet,
) -> Result<Vec<String>> {
    let scores = ensemble_scores(panel, weights)?;
    let indices = relevant_indices_of(panel, rel)?;
    let order = sorted_relevant_indices(&scores, &indices);
    Ok(order
        .into_iter()
        .map(|i| panel.doc_ids()[i].clone())
        .collect())
}

fn relevant_indices_of(panel: &ScorePanel, rel: &RelevanceSet) -> Result<Vec<usize>> {
    if rel.is_empty() {
        return Err(Error::EmptyRelevance {
            query_id: rel.query_id.clone(),
        });
    }
    // BTreeSet order = ascending doc id; the stable sort below keeps it
    // among equal scores.
    rel.relevant_docs
        .iter()
        .map(|doc| {
            panel.doc_index(doc).ok_or_else(|| Error::UnknownDocument {
                query_id: rel.query_id.clone(),
                doc_id: doc.clone(),
            })
        })
        .collect()
}

/// `indices` must be pre-sorted by ascending document id.
pub(crate) fn sorted_relevant_indices(scores: &[f64], indices: &[usize]) -> Vec<usize> {
    let mut order = indices.to_vec();
    order.sort_by(|&a, &b| scores[b].partial_cmp(&scores[a]).unwrap());
    order
}

/// Average precision of one query under the fused scores.
///
/// The j-th best relevant document contributes `j / rank`, with ranks taken
/// from the deterministic full ordering so that tied scores cannot push a
/// term above 1.
pub fn average_precision(panel: &ScorePanel, weights: &Weights, rel: &RelevanceSet) -> Result<f64> {
    let scores = ensemble_scores(panel, weights)?;
    let indices = relevant_indices_of(panel, rel)?;
    Ok(average_precision_of(panel, &scores, &indices))
}

pub(crate) fn average_precision_of(panel: &ScorePanel, scores: &[f64], indices: &[usize]) -> f64 {
    let order = sorted_relevant_indices(scores, indices);
    let mut acc = KahanSum::new();
    for (j, &idx) in order.iter().enumerate() {
        let rank = total_order_rank(panel, scores, idx);
        acc.add((j + 1) as f64 / rank as f64);
    }
    acc.value() / order.len() as f64
}

/// Mean of per-query average precision over the whole dataset.
pub fn mean_average_precision(dataset: &Dataset, weights: &Weights) -> Result<f64> {
    let per_query = map_indexed(dataset.len(), |i| {
        let panel = &dataset.panels()[i];
        ensemble_scores(panel, weights)
            .map(|scores| average_precision_of(panel, &scores, dataset.relevant_indices(i)))
    });
    let mut acc = KahanSum::new();
    for ap in per_query {
        acc.add(ap?);
    }
    Ok(acc.value() / dataset.len() as f64)
}
