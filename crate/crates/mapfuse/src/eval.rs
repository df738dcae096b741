//! Retrieval-quality measurement: precision at k, 11-point interpolated
//! precision-recall curves, query-level two-fold cross validation, and the
//! Wilcoxon signed-rank test for paired per-query scores.

use std::collections::BTreeMap;

use serde::Serialize;
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::kahan::KahanSum;
use crate::model::{
    ensemble_scores, ranking_of, Dataset, RelevanceSet, ScorePanel, Weights,
};
use crate::parallel::map_indexed;

pub use crate::model::{average_precision, mean_average_precision};

/// Aggregated retrieval metrics over a dataset.
#[derive(Debug, Clone, Serialize)]
pub struct EvalReport {
    pub map: f64,
    /// Precision at each requested cutoff, averaged over queries.
    pub pr_at: BTreeMap<usize, f64>,
    /// Interpolated precision at recall 0.0, 0.1, ..., 1.0, averaged over
    /// queries.
    pub pr_curve: Vec<f64>,
    pub per_query_ap: BTreeMap<String, f64>,
}

/// Fraction of the top `k` fused positions that are relevant. The
/// denominator stays `k` even when the panel has fewer documents.
pub fn precision_at_k(
    panel: &ScorePanel,
    weights: &Weights,
    rel: &RelevanceSet,
    k: usize,
) -> Result<f64> {
    if k == 0 {
        return Err(Error::InvalidArgument("precision cutoff must be positive".into()));
    }
    let scores = ensemble_scores(panel, weights)?;
    let order = ranking_of(panel, &scores);
    let hits = order
        .iter()
        .take(k)
        .filter(|&&d| rel.relevant_docs.contains(&panel.doc_ids()[d]))
        .count();
    Ok(hits as f64 / k as f64)
}

/// Interpolated precision at the 11 standard recall levels: at level r the
/// value is the maximum precision over all cut points whose recall is at
/// least r.
pub fn pr_curve_11pt(panel: &ScorePanel, weights: &Weights, rel: &RelevanceSet) -> Result<Vec<f64>> {
    if rel.is_empty() {
        return Err(Error::EmptyRelevance {
            query_id: rel.query_id.clone(),
        });
    }
    let scores = ensemble_scores(panel, weights)?;
    let order = ranking_of(panel, &scores);
    let total_relevant = rel.len() as f64;
    // (recall, precision) at each relevant hit; precision only peaks there.
    let mut points = Vec::new();
    let mut hits = 0usize;
    for (pos, &d) in order.iter().enumerate() {
        if rel.relevant_docs.contains(&panel.doc_ids()[d]) {
            hits += 1;
            points.push((hits as f64 / total_relevant, hits as f64 / (pos + 1) as f64));
        }
    }
    Ok((0..=10)
        .map(|level| {
            let r = level as f64 / 10.0;
            points
                .iter()
                .filter(|(recall, _)| *recall >= r - 1e-12)
                .map(|(_, p)| *p)
                .fold(0.0, f64::max)
        })
        .collect())
}

/// Evaluate a weight vector over a dataset: exact mean average precision,
/// precision at the requested cutoffs, and the averaged 11-point curve.
pub fn evaluate(dataset: &Dataset, weights: &Weights, ks: &[usize]) -> Result<EvalReport> {
    let per_query = map_indexed(dataset.len(), |i| -> Result<(String, f64, Vec<f64>, Vec<f64>)> {
        let panel = &dataset.panels()[i];
        let rel = &dataset.relevance()[i];
        let ap = average_precision(panel, weights, rel)?;
        let curve = pr_curve_11pt(panel, weights, rel)?;
        let precs = ks
            .iter()
            .map(|&k| precision_at_k(panel, weights, rel, k))
            .collect::<Result<Vec<_>>>()?;
        Ok((panel.query_id().to_string(), ap, curve, precs))
    });

    let mut per_query_ap = BTreeMap::new();
    let mut map_acc = KahanSum::new();
    let mut curve_acc = [KahanSum::new(); 11];
    let mut prec_acc = vec![KahanSum::new(); ks.len()];
    let n = dataset.len() as f64;
    for entry in per_query {
        let (qid, ap, curve, precs) = entry?;
        map_acc.add(ap);
        for (acc, v) in curve_acc.iter_mut().zip(curve) {
            acc.add(v);
        }
        for (acc, v) in prec_acc.iter_mut().zip(precs) {
            acc.add(v);
        }
        per_query_ap.insert(qid, ap);
    }
    Ok(EvalReport {
        map: map_acc.value() / n,
        pr_at: ks
            .iter()
            .zip(&prec_acc)
            .map(|(&k, acc)| (k, acc.value() / n))
            .collect(),
        pr_curve: curve_acc.iter().map(|acc| acc.value() / n).collect(),
        per_query_ap,
    })
}

/// Two-fold cross-validation outcome.
#[derive(Debug, Clone, Serialize)]
pub struct CvReport {
    /// `fold_maps[i]` is the exact score on fold i under the weights
    /// trained on the other fold.
    pub fold_maps: [f64; 2],
    pub mean_map: f64,
    /// `fold_weights[i]` was trained on fold i.
    pub fold_weights: [Weights; 2],
    pub split_seed: u64,
}

/// Split queries 50/50 by seeded shuffle, train on each half, and score on
/// the opposite half.
///
/// The shuffle runs over the sorted query ids, so the report depends only
/// on the seed and the query set, not on input order.
pub fn two_fold_cv<T>(dataset: &Dataset, trainer: T, split_seed: u64) -> Result<CvReport>
where
    T: Fn(&Dataset) -> Result<Weights>,
{
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    if dataset.len() < 2 {
        return Err(Error::InvalidArgument(
            "two-fold cross validation needs at least two queries".into(),
        ));
    }
    let mut by_id: Vec<usize> = (0..dataset.len()).collect();
    by_id.sort_by(|&a, &b| {
        dataset.panels()[a]
            .query_id()
            .cmp(dataset.panels()[b].query_id())
    });
    let mut rng = ChaCha8Rng::seed_from_u64(split_seed);
    by_id.shuffle(&mut rng);
    let half = dataset.len() / 2;
    let folds = [
        dataset.subset(&by_id[..half])?,
        dataset.subset(&by_id[half..])?,
    ];
    let fold_weights = [trainer(&folds[0])?, trainer(&folds[1])?];
    let fold_maps = [
        mean_average_precision(&folds[0], &fold_weights[1])?,
        mean_average_precision(&folds[1], &fold_weights[0])?,
    ];
    Ok(CvReport {
        fold_maps,
        mean_map: (fold_maps[0] + fold_maps[1]) / 2.0,
        fold_weights,
        split_seed,
    })
}

/// Wilcoxon signed-rank comparison of paired per-query scores.
#[derive(Debug, Clone, Serialize)]
pub struct SignificanceReport {
    /// Smaller of the positive-difference and negative-difference rank
    /// sums.
    pub statistic: f64,
    /// Two-sided p-value.
    pub p_value: f64,
    /// Pairs with a nonzero difference.
    pub n_effective: usize,
    /// True when p < 0.05 and enough nonzero differences exist.
    pub significant_95: bool,
    /// Fewer than 5 nonzero differences; significance is forced false.
    pub insufficient_data: bool,
}

/// Two-sided test on paired samples. Zero differences are dropped; ties
/// among the remaining magnitudes get average ranks. Exact distribution up
/// to 25 effective pairs, normal approximation with tie correction beyond.
pub fn wilcoxon_signed_rank(a: &[f64], b: &[f64]) -> Result<SignificanceReport> {
    if a.len() != b.len() {
        return Err(Error::InvalidArgument(format!(
            "paired samples differ in length: {} vs {}",
            a.len(),
            b.len()
        )));
    }
    let diffs: Vec<f64> = a
        .iter()
        .zip(b)
        .map(|(x, y)| x - y)
        .filter(|d| *d != 0.0)
        .collect();
    let n = diffs.len();
    if n == 0 {
        return Ok(SignificanceReport {
            statistic: 0.0,
            p_value: 1.0,
            n_effective: 0,
            significant_95: false,
            insufficient_data: true,
        });
    }

    let ranks = average_ranks(&diffs);
    let mut w_plus = 0.0;
    let mut w_minus = 0.0;
    for (d, r) in diffs.iter().zip(&ranks) {
        if *d > 0.0 {
            w_plus += r;
        } else {
            w_minus += r;
        }
    }
    let statistic = w_plus.min(w_minus);

    let p_value = if n <= 25 {
        exact_two_sided_p(&ranks, statistic)
    } else {
        normal_two_sided_p(&ranks, statistic, n)
    };
    let insufficient_data = n < 5;
    Ok(SignificanceReport {
        statistic,
        p_value,
        n_effective: n,
        significant_95: !insufficient_data && p_value < 0.05,
        insufficient_data,
    })
}

/// Ascending ranks of |diffs| with ties averaged.
fn average_ranks(diffs: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..diffs.len()).collect();
    order.sort_by(|&i, &j| diffs[i].abs().partial_cmp(&diffs[j].abs()).unwrap());
    let mut ranks = vec![0.0; diffs.len()];
    let mut pos = 0;
    while pos < order.len() {
        let mut end = pos + 1;
        while end < order.len() && diffs[order[end]].abs() == diffs[order[pos]].abs() {
            end += 1;
        }
        let avg = (pos + 1 + end) as f64 / 2.0;
        for &idx in &order[pos..end] {
            ranks[idx] = avg;
        }
        pos = end;
    }
    ranks
}

/// Exact two-sided p from the null distribution of the rank sum over all
/// sign assignments, computed by dynamic programming over doubled ranks
/// (ties make ranks half-integers; doubling restores integers).
fn exact_two_sided_p(ranks: &[f64], statistic: f64) -> f64 {
    let doubled: Vec<usize> = ranks.iter().map(|r| (r * 2.0).round() as usize).collect();
    let max_sum: usize = doubled.iter().sum();
    let mut counts = vec![0u64; max_sum + 1];
    counts[0] = 1;
    for &r in &doubled {
        for s in (r..=max_sum).rev() {
            counts[s] += counts[s - r];
        }
    }
    let cutoff = (statistic * 2.0).round() as usize;
    let below: u64 = counts[..=cutoff.min(max_sum)].iter().sum();
    let total = (1u64 << ranks.len()) as f64;
    (2.0 * below as f64 / total).min(1.0)
}

fn normal_two_sided_p(ranks: &[f64], statistic: f64, n: usize) -> f64 {
    let nf = n as f64;
    let mean = nf * (nf + 1.0) / 4.0;
    // Tie correction: sum of (t^3 - t) over tie groups, in rank units.
    let mut sorted = ranks.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mut tie_term = 0.0;
    let mut pos = 0;
    while pos < sorted.len() {
        let mut end = pos + 1;
        while end < sorted.len() && sorted[end] == sorted[pos] {
            end += 1;
        }
        let t = (end - pos) as f64;
        tie_term += t * t * t - t;
        pos = end;
    }
    let variance = nf * (nf + 1.0) * (2.0 * nf + 1.0) / 24.0 - tie_term / 48.0;
    let z = (statistic - mean + 0.5) / variance.sqrt();
    let normal = Normal::new(0.0, 1.0).unwrap();
    (2.0 * normal.cdf(z)).min(1.0)
}
