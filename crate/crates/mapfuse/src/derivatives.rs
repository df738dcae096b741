//! Analytic first and second derivatives of the smoothed objective.
//!
//! For a relevant document d_j the smoothed rank is 1 + G where G sums the
//! sigmoid over all other documents, so each objective term j/(1+G) has
//!
//! ```text
//! d/dw_k   :  -j * G_k / (1+G)^2
//! d2/dw_kdw_l: (-j * G_kl * (1+G)^2 + 2j * G_k * G_l * (1+G)) / (1+G)^4
//! ```
//!
//! with G_k and G_kl the pair sums of the sigmoid's first and second
//! partials. A configurable window drops pair contributions whose fused
//! score difference lies outside (-window, +window); past a couple of
//! sigmoid widths those contributions are vanishingly small, and zeroing
//! them makes the accumulator pass cheaper at large sharpness. The window
//! never applies to G itself.

use crate::error::Result;
use crate::kahan::KahanSum;
use crate::model::{ensemble_scores, sorted_relevant_indices, Dataset, Weights};
use crate::parallel::map_indexed;
use crate::surrogate::{sigmoid_indicator, SurrogateConfig};

/// How the accumulator pass is run.
#[derive(Debug, Clone, Copy)]
pub struct DerivativeOptions {
    /// Pairs with |fused score difference| at or beyond this are skipped in
    /// the derivative accumulators. `f64::INFINITY` disables the cutoff.
    pub window: f64,
    /// Accumulate the abbreviated first-derivative increment `beta * s_k`
    /// instead of the exact `-beta * s_k * g * (1 - g)`. Diagnostic only.
    pub literal_increments: bool,
    /// Retain the per-(query, relevant document) accumulator values.
    pub keep_accumulators: bool,
}

impl DerivativeOptions {
    /// Exact derivatives: no window, exact increments.
    pub fn exact() -> Self {
        Self {
            window: f64::INFINITY,
            literal_increments: false,
            keep_accumulators: false,
        }
    }

    /// Default windowed mode: contributions outside ±2/beta are zeroed.
    pub fn windowed(cfg: &SurrogateConfig) -> Self {
        Self {
            window: 2.0 / cfg.beta,
            ..Self::exact()
        }
    }
}

/// Accumulator snapshot for one (query, relevant document) pair.
#[derive(Debug, Clone)]
pub struct TermAccumulators {
    pub query: usize,
    /// 1-based position of the document among the sorted relevant ones.
    pub position: usize,
    /// Panel row index of the relevant document.
    pub doc: usize,
    /// Full sigmoid sum G.
    pub g_sum: f64,
    /// Windowed first-partial sums G_k, one per ranker.
    pub grad_sums: Vec<f64>,
    /// Windowed second-partial sums G_kl, row-major.
    pub hess_sums: Vec<f64>,
}

/// Gradient and Hessian of the smoothed objective at one point.
#[derive(Debug, Clone)]
pub struct Derivatives {
    pub gradient: Vec<f64>,
    /// Row-major K x K matrix.
    pub hessian: Vec<f64>,
    pub accumulators: Option<Vec<TermAccumulators>>,
}

impl Derivatives {
    pub fn hessian_at(&self, k: usize, l: usize) -> f64 {
        self.hessian[k * self.gradient.len() + l]
    }
}

/// Partials of a single sigmoid term with respect to each weight:
/// `-beta * s_k * g * (1 - g)` evaluated at the fused difference.
pub fn grad_g(s_diffs: &[f64], weights: &Weights, cfg: &SurrogateConfig) -> Vec<f64> {
    let fused: f64 = s_diffs
        .iter()
        .zip(weights.as_slice())
        .map(|(s, w)| s * w)
        .collect::<KahanSum>()
        .value();
    let g = sigmoid_indicator(fused, cfg);
    let slope = g * (1.0 - g);
    s_diffs.iter().map(|s| -cfg.beta * s * slope).collect()
}

struct QueryDerivatives {
    gradient: Vec<f64>,
    hessian: Vec<f64>,
    accumulators: Vec<TermAccumulators>,
}

fn query_derivatives(
    dataset: &Dataset,
    query: usize,
    weights: &Weights,
    cfg: &SurrogateConfig,
    opts: &DerivativeOptions,
) -> Result<QueryDerivatives> {
    let panel = &dataset.panels()[query];
    let k_rankers = panel.n_rankers();
    let scores = ensemble_scores(panel, weights)?;
    let order = sorted_relevant_indices(&scores, dataset.relevant_indices(query));
    let n_rel = order.len() as f64;

    let mut gradient = vec![KahanSum::new(); k_rankers];
    let mut hessian = vec![KahanSum::new(); k_rankers * k_rankers];
    let mut accumulators = Vec::new();

    for (j_zero, &rel_idx) in order.iter().enumerate() {
        let j = (j_zero + 1) as f64;
        let rel_row = panel.row(rel_idx);
        let mut g_sum = KahanSum::new();
        let mut grad_sums = vec![KahanSum::new(); k_rankers];
        let mut hess_sums = vec![KahanSum::new(); k_rankers * k_rankers];

        for d in 0..panel.n_docs() {
            if d == rel_idx {
                continue;
            }
            let fused = scores[rel_idx] - scores[d];
            let g = sigmoid_indicator(fused, cfg);
            g_sum.add(g);
            if fused.abs() >= opts.window {
                continue;
            }
            let other_row = panel.row(d);
            let slope = g * (1.0 - g);
            let curve = cfg.beta * cfg.beta * slope * (1.0 - 2.0 * g);
            for k in 0..k_rankers {
                let s_k = rel_row[k] - other_row[k];
                let inc = if opts.literal_increments {
                    cfg.beta * s_k
                } else {
                    -cfg.beta * s_k * slope
                };
                grad_sums[k].add(inc);
                for l in 0..k_rankers {
                    let s_l = rel_row[l] - other_row[l];
                    hess_sums[k * k_rankers + l].add(curve * s_k * s_l);
                }
            }
        }

        let g_total = g_sum.value();
        let denom = 1.0 + g_total;
        let denom2 = denom * denom;
        let denom4 = denom2 * denom2;
        let grad_vals: Vec<f64> = grad_sums.iter().map(KahanSum::value).collect();
        for k in 0..k_rankers {
            gradient[k].add(-j * grad_vals[k] / denom2 / n_rel);
            for l in 0..k_rankers {
                let g_kl = hess_sums[k * k_rankers + l].value();
                let numer = -j * g_kl * denom2 + 2.0 * j * grad_vals[k] * grad_vals[l] * denom;
                hessian[k * k_rankers + l].add(numer / denom4 / n_rel);
            }
        }
        if opts.keep_accumulators {
            accumulators.push(TermAccumulators {
                query,
                position: j_zero + 1,
                doc: rel_idx,
                g_sum: g_total,
                grad_sums: grad_vals,
                hess_sums: hess_sums.iter().map(KahanSum::value).collect(),
            });
        }
    }

    Ok(QueryDerivatives {
        gradient: gradient.iter().map(KahanSum::value).collect(),
        hessian: hessian.iter().map(KahanSum::value).collect(),
        accumulators,
    })
}

/// Run the accumulator pass over the dataset with the given options.
pub fn derivatives(
    dataset: &Dataset,
    weights: &Weights,
    cfg: &SurrogateConfig,
    opts: &DerivativeOptions,
) -> Result<Derivatives> {
    let k_rankers = dataset.n_rankers();
    let per_query = map_indexed(dataset.len(), |i| {
        query_derivatives(dataset, i, weights, cfg, opts)
    });
    let queries = dataset.len() as f64;
    let mut gradient = vec![KahanSum::new(); k_rankers];
    let mut hessian = vec![KahanSum::new(); k_rankers * k_rankers];
    let mut accumulators = opts.keep_accumulators.then(Vec::new);
    for q in per_query {
        let q = q?;
        for (acc, v) in gradient.iter_mut().zip(&q.gradient) {
            acc.add(v / queries);
        }
        for (acc, v) in hessian.iter_mut().zip(&q.hessian) {
            acc.add(v / queries);
        }
        if let Some(all) = accumulators.as_mut() {
            all.extend(q.accumulators);
        }
    }
    Ok(Derivatives {
        gradient: gradient.iter().map(KahanSum::value).collect(),
        hessian: hessian.iter().map(KahanSum::value).collect(),
        accumulators,
    })
}

/// Exact analytic gradient (no window).
pub fn gradient_full(dataset: &Dataset, weights: &Weights, cfg: &SurrogateConfig) -> Result<Vec<f64>> {
    Ok(derivatives(dataset, weights, cfg, &DerivativeOptions::exact())?.gradient)
}

/// Exact analytic Hessian (no window), row-major.
pub fn hessian_full(dataset: &Dataset, weights: &Weights, cfg: &SurrogateConfig) -> Result<Vec<f64>> {
    Ok(derivatives(dataset, weights, cfg, &DerivativeOptions::exact())?.hessian)
}

/// Gradient of a single query's objective term (no `1/L` factor); the
/// online update consumes one of these per step.
pub fn query_gradient(
    dataset: &Dataset,
    query: usize,
    weights: &Weights,
    cfg: &SurrogateConfig,
    opts: &DerivativeOptions,
) -> Result<Vec<f64>> {
    Ok(query_derivatives(dataset, query, weights, cfg, opts)?.gradient)
}
