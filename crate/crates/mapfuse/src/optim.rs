//! The three trainers: safeguarded multi-start Newton on the full batch,
//! per-query stochastic gradient ascent with a 1/t learning rate, and
//! unsupervised co-training where each ranker in turn provides pseudo
//! labels for updating the other rankers' weights.
//!
//! All of them climb the smoothed objective from [`crate::surrogate`]. The
//! batch trainer evaluates every candidate step and only accepts strict
//! improvements, so accepted trajectories are non-decreasing regardless of
//! what the raw Newton step proposes.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::derivatives::{derivatives, query_gradient, DerivativeOptions};
use crate::error::{Error, Result};
use crate::kahan::KahanSum;
use crate::model::{
    ensemble_scores, mean_average_precision, Dataset, PanelSet, RelevanceSet, ScorePanel, Weights,
};
use crate::parallel::map_indexed;
use crate::surrogate::{surrogate_objective, SurrogateConfig};

/// How multi-start optimization picks its initial points.
#[derive(Debug, Clone)]
pub enum StartPolicy {
    /// Every vector in {0,1}^K, the zero vector included.
    AllBinary,
    /// `count` vectors with entries uniform in [0, 1), seeded.
    Random { count: usize, seed: u64 },
    /// Caller-provided starting points.
    Explicit(Vec<Weights>),
}

impl StartPolicy {
    /// Materialize the start vectors for `k` rankers.
    pub fn starts(&self, k: usize) -> Result<Vec<Weights>> {
        match self {
            StartPolicy::AllBinary => {
                if k > 20 {
                    return Err(Error::InvalidArgument(format!(
                        "binary start enumeration over {k} rankers is 2^{k} points; use random starts"
                    )));
                }
                Ok((0..1usize << k)
                    .map(|bits| Weights((0..k).map(|r| ((bits >> r) & 1) as f64).collect()))
                    .collect())
            }
            StartPolicy::Random { count, seed } => {
                use rand::prelude::*;
                use rand_chacha::ChaCha8Rng;
                if *count == 0 {
                    return Err(Error::InvalidArgument("need at least one start".into()));
                }
                let mut rng = ChaCha8Rng::seed_from_u64(*seed);
                Ok((0..*count)
                    .map(|_| Weights((0..k).map(|_| rng.random_range(0.0..1.0)).collect()))
                    .collect())
            }
            StartPolicy::Explicit(list) => {
                if list.is_empty() {
                    return Err(Error::InvalidArgument("need at least one start".into()));
                }
                for w in list {
                    if w.len() != k {
                        return Err(Error::DimensionMismatch {
                            expected: k,
                            got: w.len(),
                        });
                    }
                }
                Ok(list.clone())
            }
        }
    }
}

/// Batch trainer configuration.
#[derive(Debug, Clone)]
pub struct BatchConfig {
    pub beta: f64,
    /// Stop a start once the objective improves by less than this. Zero
    /// means "stop when it fails to strictly increase".
    pub epsilon: f64,
    /// Safety cap on accepted iterations per start.
    pub max_iters: usize,
    pub starts: StartPolicy,
    /// Apply the ±2/beta derivative window.
    pub cutoff_enabled: bool,
    /// Use the abbreviated accumulator increments (diagnostic mode).
    pub literal_increments: bool,
}

impl Default for BatchConfig {
    fn default() -> Self {
        Self {
            beta: 200.0,
            epsilon: 0.0,
            max_iters: 100,
            starts: StartPolicy::AllBinary,
            cutoff_enabled: true,
            literal_increments: false,
        }
    }
}

impl BatchConfig {
    fn surrogate(&self) -> SurrogateConfig {
        SurrogateConfig::new(self.beta)
    }

    fn derivative_options(&self) -> DerivativeOptions {
        DerivativeOptions {
            window: if self.cutoff_enabled {
                2.0 / self.beta
            } else {
                f64::INFINITY
            },
            literal_increments: self.literal_increments,
            keep_accumulators: false,
        }
    }
}

/// Step-size schedule for the online update.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LearningRate {
    /// `1/t` with a global step counter; the convergence analysis assumes
    /// this one.
    InverseTime,
    /// Fixed step size, for diagnostics only.
    Constant(f64),
}

impl LearningRate {
    fn at(&self, step: u64) -> f64 {
        match self {
            LearningRate::InverseTime => 1.0 / step as f64,
            LearningRate::Constant(eta) => *eta,
        }
    }
}

/// Online trainer configuration.
#[derive(Debug, Clone)]
pub struct OnlineConfig {
    pub beta: f64,
    /// Stop once the epoch-end objective moves by less than this. Must be
    /// positive.
    pub epsilon: f64,
    pub max_epochs: usize,
    pub starts: StartPolicy,
    /// Reshuffle the query order each epoch with this seed; `None` keeps
    /// the given order.
    pub shuffle_seed: Option<u64>,
    pub learning_rate: LearningRate,
}

impl Default for OnlineConfig {
    fn default() -> Self {
        Self {
            beta: 200.0,
            epsilon: 1e-4,
            max_epochs: 100,
            starts: StartPolicy::AllBinary,
            shuffle_seed: None,
            learning_rate: LearningRate::InverseTime,
        }
    }
}

/// Unsupervised co-training configuration.
#[derive(Debug, Clone)]
pub struct UnsupConfig {
    pub beta: f64,
    /// Stop once the epoch-end objective moves by less than this.
    pub epsilon: f64,
    /// Documents whose teacher score exceeds this become pseudo relevant.
    pub score_threshold: f64,
    /// Penalty coefficient pulling fused scores toward the teacher's. Zero
    /// disables the penalty.
    pub sigma: f64,
    pub max_epochs: usize,
    pub starts: StartPolicy,
}

impl Default for UnsupConfig {
    fn default() -> Self {
        Self {
            beta: 200.0,
            epsilon: 1e-4,
            score_threshold: 0.5,
            sigma: 0.0,
            max_epochs: 50,
            starts: StartPolicy::AllBinary,
        }
    }
}

/// Replace negative entries by zero. The flag is set when the result is
/// entirely zero and therefore ranks nothing.
pub fn clamp_negative_weights(weights: &Weights) -> (Weights, bool) {
    let clamped: Vec<f64> = weights.0.iter().map(|&w| w.max(0.0)).collect();
    let degenerate = clamped.iter().all(|&w| w == 0.0);
    (Weights(clamped), degenerate)
}

/// Outcome of one optimization start.
#[derive(Debug, Clone, Serialize)]
pub struct StartRun {
    pub start: Weights,
    /// Objective value at the start point and after every accepted step
    /// (batch) or every epoch (online, co-training).
    pub trajectory: Vec<f64>,
    pub final_weights: Weights,
    pub final_objective: Option<f64>,
    pub final_map: Option<f64>,
    /// Abort diagnostic; the start is excluded from selection when set.
    pub error: Option<String>,
}

/// Multi-start training outcome.
#[derive(Debug, Clone, Serialize)]
pub struct FitResult {
    /// Selected weights after the negative-entry clamp.
    pub best_weights: Weights,
    /// The same weights before clamping.
    pub raw_weights: Weights,
    /// The clamp zeroed every entry.
    pub degenerate: bool,
    /// Smoothed objective of the selected (pre-clamp) weights.
    pub final_objective: f64,
    /// Exact mean average precision of `best_weights`, when relevance
    /// judgments exist.
    pub final_map: Option<f64>,
    /// Index of the start whose trained objective was largest; earlier
    /// starts win ties.
    pub chosen_start_index: usize,
    pub per_start: Vec<StartRun>,
}

/// One safeguarded Newton start on the full batch.
///
/// Each iteration proposes the Newton point `w - H^{-1} g` and a
/// backtracked step along the normalized gradient, evaluates both, and
/// keeps whichever improves the objective most. A singular Hessian simply
/// drops the Newton proposal for that iteration. Returns the final weights
/// and the objective trajectory over accepted iterates.
pub fn newton_batch(
    dataset: &Dataset,
    start: &Weights,
    cfg: &BatchConfig,
) -> Result<(Weights, Vec<f64>)> {
    let scfg = cfg.surrogate();
    let opts = cfg.derivative_options();
    let k = dataset.n_rankers();
    if start.len() != k {
        return Err(Error::DimensionMismatch {
            expected: k,
            got: start.len(),
        });
    }
    let mut weights = start.clone();
    let mut objective = surrogate_objective(dataset, &weights, &scfg)?;
    if !objective.is_finite() {
        return Err(Error::StartAborted(format!(
            "non-finite objective at start {:?}",
            start.0
        )));
    }
    let mut trajectory = vec![objective];

    for _ in 0..cfg.max_iters {
        let d = derivatives(dataset, &weights, &scfg, &opts)?;
        let grad_norm = d.gradient.iter().map(|g| g * g).sum::<f64>().sqrt();
        if grad_norm < 1e-12 {
            break;
        }

        let mut best: Option<(Weights, f64)> = None;
        let mut consider = |cand: Weights, value: f64| {
            if value > objective && best.as_ref().is_none_or(|(_, v)| value > *v) {
                best = Some((cand, value));
            }
        };

        let hess = DMatrix::from_row_slice(k, k, &d.hessian);
        let grad = DVector::from_column_slice(&d.gradient);
        if let Some(step) = hess.lu().solve(&grad) {
            let cand = Weights(
                weights
                    .0
                    .iter()
                    .zip(step.iter())
                    .map(|(w, s)| w - s)
                    .collect(),
            );
            if cand.is_finite() {
                if let Ok(value) = surrogate_objective(dataset, &cand, &scfg) {
                    consider(cand, value);
                }
            }
        }

        let mut step = 1.0;
        for _ in 0..=20 {
            let cand = Weights(
                weights
                    .0
                    .iter()
                    .zip(&d.gradient)
                    .map(|(w, g)| w + step * g / grad_norm)
                    .collect(),
            );
            let value = surrogate_objective(dataset, &cand, &scfg)?;
            if value > objective {
                consider(cand, value);
                break;
            }
            step *= 0.5;
        }

        match best {
            None => break,
            Some((cand, value)) => {
                let improvement = value - objective;
                weights = cand;
                objective = value;
                trajectory.push(objective);
                if improvement < cfg.epsilon {
                    break;
                }
            }
        }
    }
    Ok((weights, trajectory))
}

/// Stochastic gradient ascent over the query stream.
///
/// Every query visit takes one step `w += (1/t) * grad_f(query, w)` with a
/// global step counter `t`; the stopping test compares the full-stream
/// objective between consecutive epochs.
pub fn sgd_online(
    dataset: &Dataset,
    start: &Weights,
    cfg: &OnlineConfig,
) -> Result<(Weights, Vec<f64>)> {
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    if cfg.epsilon <= 0.0 {
        return Err(Error::InvalidArgument(
            "online stopping threshold must be positive".into(),
        ));
    }
    let scfg = SurrogateConfig::new(cfg.beta);
    if start.len() != dataset.n_rankers() {
        return Err(Error::DimensionMismatch {
            expected: dataset.n_rankers(),
            got: start.len(),
        });
    }
    let mut weights = start.clone();
    let mut step_counter: u64 = 1;
    let mut objective = surrogate_objective(dataset, &weights, &scfg)?;
    let mut trajectory = vec![objective];
    let mut rng = cfg.shuffle_seed.map(ChaCha8Rng::seed_from_u64);

    for _ in 0..cfg.max_epochs {
        let mut order: Vec<usize> = (0..dataset.len()).collect();
        if let Some(rng) = rng.as_mut() {
            order.shuffle(rng);
        }
        sgd_pass(
            dataset,
            &mut weights,
            &mut step_counter,
            &order,
            &scfg,
            cfg.learning_rate,
            None,
        )?;
        let next = surrogate_objective(dataset, &weights, &scfg)?;
        trajectory.push(next);
        let done = (next - objective).abs() < cfg.epsilon;
        objective = next;
        if done {
            break;
        }
    }
    Ok((weights, trajectory))
}

/// Extra per-query gradient term added on top of the objective gradient.
type ExtraGradient<'a> = &'a dyn Fn(usize, &Weights) -> Vec<f64>;

/// One pass of per-query gradient steps; shared by the online trainer and
/// each co-training round so the two update sequences are identical.
fn sgd_pass(
    dataset: &Dataset,
    weights: &mut Weights,
    step_counter: &mut u64,
    order: &[usize],
    scfg: &SurrogateConfig,
    learning_rate: LearningRate,
    extra: Option<ExtraGradient>,
) -> Result<()> {
    for &q in order {
        *step_counter += 1;
        let mut grad = query_gradient(dataset, q, weights, scfg, &DerivativeOptions::exact())?;
        if let Some(extra) = extra {
            for (g, e) in grad.iter_mut().zip(extra(q, weights)) {
                *g += e;
            }
        }
        let eta = learning_rate.at(*step_counter);
        for (w, g) in weights.0.iter_mut().zip(&grad) {
            *w += eta * g;
        }
        if !weights.is_finite() {
            return Err(Error::StartAborted(format!(
                "non-finite update at step {step_counter}"
            )));
        }
    }
    Ok(())
}

/// Pseudo-relevance for co-training: documents the teacher ranker scores
/// strictly above the threshold.
pub fn fake_relevance(panel: &ScorePanel, teacher: usize, threshold: f64) -> RelevanceSet {
    let docs = panel
        .doc_ids()
        .iter()
        .enumerate()
        .filter(|(d, _)| panel.score(*d, teacher) > threshold)
        .map(|(_, id)| id.clone());
    RelevanceSet::new(panel.query_id(), docs)
}

/// Weights after each co-training round, for diagnostics and round-level
/// verification.
#[derive(Debug, Clone, Serialize)]
pub struct CotrainTrace {
    /// Mean over teachers of the pseudo-labeled objective, at the start and
    /// after each epoch.
    pub objective_per_epoch: Vec<f64>,
    /// (teacher index, full weight vector after the round).
    pub rounds: Vec<(usize, Weights)>,
}

/// Unsupervised co-training over rankers.
///
/// Per epoch, each ranker in turn plays teacher: documents it scores above
/// the threshold become pseudo relevant, its own column and weight are
/// frozen out, and one stochastic-gradient pass updates the remaining
/// weights (optionally penalized toward the teacher's scores). Queries with
/// no pseudo-relevant document sit out that round.
pub fn unsup_cotrain(
    panels: &PanelSet,
    start: &Weights,
    cfg: &UnsupConfig,
) -> Result<(Weights, CotrainTrace)> {
    let k = panels.n_rankers();
    if k < 2 {
        return Err(Error::InvalidArgument(
            "co-training needs at least two rankers".into(),
        ));
    }
    if start.len() != k {
        return Err(Error::DimensionMismatch {
            expected: k,
            got: start.len(),
        });
    }
    if cfg.epsilon <= 0.0 {
        return Err(Error::InvalidArgument(
            "co-training stopping threshold must be positive".into(),
        ));
    }
    let scfg = SurrogateConfig::new(cfg.beta);

    // Pseudo-label sets depend only on scores, so an empty round now stays
    // empty forever; reject thresholds that silence every teacher.
    let teaches_anything = (0..k).any(|teacher| {
        panels
            .panels()
            .iter()
            .any(|p| !fake_relevance(p, teacher, cfg.score_threshold).is_empty())
    });
    if !teaches_anything {
        return Err(Error::ThresholdTooHigh {
            threshold: cfg.score_threshold,
        });
    }

    let mut weights = start.clone();
    let mut step_counter: u64 = 1;
    let mut objective = cotrain_objective(panels, &weights, cfg, &scfg)?;
    let mut trace = CotrainTrace {
        objective_per_epoch: vec![objective],
        rounds: Vec::new(),
    };

    for _ in 0..cfg.max_epochs {
        for teacher in 0..k {
            if let Some((reduced, teacher_scores)) = reduced_problem(panels, teacher, cfg)? {
                let mut reduced_weights = weights.without(teacher);
                let order: Vec<usize> = (0..reduced.len()).collect();
                let penalty = |q: usize, w: &Weights| {
                    penalty_gradient(&reduced, q, w, &teacher_scores, cfg.sigma)
                };
                let extra: Option<ExtraGradient> = if cfg.sigma > 0.0 {
                    Some(&penalty)
                } else {
                    None
                };
                sgd_pass(
                    &reduced,
                    &mut reduced_weights,
                    &mut step_counter,
                    &order,
                    &scfg,
                    LearningRate::InverseTime,
                    extra,
                )?;
                weights = reduced_weights.with_inserted(teacher, weights.0[teacher]);
            }
            trace.rounds.push((teacher, weights.clone()));
        }
        let next = cotrain_objective(panels, &weights, cfg, &scfg)?;
        trace.objective_per_epoch.push(next);
        let done = (next - objective).abs() < cfg.epsilon;
        objective = next;
        if done {
            break;
        }
    }
    Ok((weights, trace))
}

/// The teacher's reduced problem: panels without the teacher column, only
/// queries with a nonempty pseudo-relevance set, plus the teacher's scores
/// for the penalty term. `None` when every query sits out.
fn reduced_problem(
    panels: &PanelSet,
    teacher: usize,
    cfg: &UnsupConfig,
) -> Result<Option<(Dataset, Vec<Vec<f64>>)>> {
    let mut kept_panels = Vec::new();
    let mut kept_rels = Vec::new();
    let mut teacher_scores = Vec::new();
    for panel in panels.panels() {
        let rel = fake_relevance(panel, teacher, cfg.score_threshold);
        if rel.is_empty() {
            continue;
        }
        teacher_scores.push((0..panel.n_docs()).map(|d| panel.score(d, teacher)).collect());
        kept_panels.push(panel.without_ranker(teacher)?);
        kept_rels.push(rel);
    }
    if kept_panels.is_empty() {
        return Ok(None);
    }
    let tags = panels
        .ranker_tags()
        .iter()
        .enumerate()
        .filter(|(i, _)| *i != teacher)
        .map(|(_, t)| t.clone())
        .collect();
    Ok(Some((Dataset::new(kept_panels, kept_rels, tags)?, teacher_scores)))
}

/// Gradient of the penalty `-(sigma/2) * sum_d (H_d - teacher_d)^2` with
/// respect to each active weight: `-sigma * sum_d (H_d - teacher_d) * s_d`.
fn penalty_gradient(
    reduced: &Dataset,
    query: usize,
    weights: &Weights,
    teacher_scores: &[Vec<f64>],
    sigma: f64,
) -> Vec<f64> {
    let panel = &reduced.panels()[query];
    let fused = ensemble_scores(panel, weights).expect("dimensions checked upstream");
    let mut grad = vec![KahanSum::new(); weights.len()];
    for d in 0..panel.n_docs() {
        let residual = fused[d] - teacher_scores[query][d];
        for (acc, &s) in grad.iter_mut().zip(panel.row(d)) {
            acc.add(-sigma * residual * s);
        }
    }
    grad.iter().map(KahanSum::value).collect()
}

/// Mean over teachers of the smoothed objective on the full panels under
/// that teacher's pseudo labels; the co-training analogue of a validation
/// score.
fn cotrain_objective(
    panels: &PanelSet,
    weights: &Weights,
    cfg: &UnsupConfig,
    scfg: &SurrogateConfig,
) -> Result<f64> {
    let mut acc = KahanSum::new();
    let mut teachers = 0usize;
    for teacher in 0..panels.n_rankers() {
        let mut kept_panels = Vec::new();
        let mut kept_rels = Vec::new();
        for panel in panels.panels() {
            let rel = fake_relevance(panel, teacher, cfg.score_threshold);
            if !rel.is_empty() {
                kept_panels.push(panel.clone());
                kept_rels.push(rel);
            }
        }
        if kept_panels.is_empty() {
            continue;
        }
        let ds = Dataset::new(kept_panels, kept_rels, panels.ranker_tags().to_vec())?;
        acc.add(surrogate_objective(&ds, weights, scfg)?);
        teachers += 1;
    }
    Ok(acc.value() / teachers as f64)
}

/// Run a solver from every start and keep the best outcome.
///
/// Starts run independently (in parallel when enabled) and are reduced in
/// index order: the start with the strictly largest trained objective wins,
/// so equal outcomes keep the earliest index. The returned weights are the
/// better, by exact score when available, of the trained result and the
/// raw start points themselves — training can never hand back something
/// worse than its best initialization.
fn run_multistart<S, M>(
    starts: Vec<Weights>,
    solver: S,
    objective_of: impl Fn(&Weights) -> Result<f64>,
    map_of: Option<M>,
) -> Result<FitResult>
where
    S: Fn(&Weights) -> Result<(Weights, Vec<f64>)> + Sync,
    M: Fn(&Weights) -> Result<f64>,
{
    let runs = map_indexed(starts.len(), |i| solver(&starts[i]));
    let mut per_start = Vec::with_capacity(starts.len());
    for (start, run) in starts.iter().zip(runs) {
        match run {
            Ok((final_weights, trajectory)) => {
                let final_objective = trajectory.last().copied();
                let final_map = match &map_of {
                    Some(f) => Some(f(&final_weights)?),
                    None => None,
                };
                per_start.push(StartRun {
                    start: start.clone(),
                    trajectory,
                    final_weights,
                    final_objective,
                    final_map,
                    error: None,
                });
            }
            Err(Error::StartAborted(msg)) => per_start.push(StartRun {
                start: start.clone(),
                trajectory: Vec::new(),
                final_weights: start.clone(),
                final_objective: None,
                final_map: None,
                error: Some(msg),
            }),
            Err(other) => return Err(other),
        }
    }

    let mut chosen: Option<(usize, f64)> = None;
    for (i, run) in per_start.iter().enumerate() {
        if let Some(obj) = run.final_objective {
            if chosen.is_none_or(|(_, best)| obj > best) {
                chosen = Some((i, obj));
            }
        }
    }
    let (chosen_start_index, trained_objective) = chosen.ok_or_else(|| {
        Error::OptimizationFailed("every start aborted".into())
    })?;

    let trained = per_start[chosen_start_index].final_weights.clone();
    let (mut raw, mut objective) = (trained, trained_objective);
    let mut final_map = None;
    if let Some(map_of) = &map_of {
        let (clamped, _) = clamp_negative_weights(&raw);
        let mut best_map = map_of(&clamped)?;
        for start in &starts {
            let (clamped_start, degenerate) = clamp_negative_weights(start);
            if degenerate {
                continue;
            }
            let candidate_map = map_of(&clamped_start)?;
            if candidate_map > best_map {
                best_map = candidate_map;
                raw = start.clone();
                objective = objective_of(start)?;
            }
        }
        final_map = Some(best_map);
    }
    let (best_weights, degenerate) = clamp_negative_weights(&raw);
    Ok(FitResult {
        best_weights,
        raw_weights: raw,
        degenerate,
        final_objective: objective,
        final_map,
        chosen_start_index,
        per_start,
    })
}

/// Multi-start batch training.
pub fn multistart_batch(dataset: &Dataset, cfg: &BatchConfig) -> Result<FitResult> {
    let starts = cfg.starts.starts(dataset.n_rankers())?;
    let scfg = cfg.surrogate();
    run_multistart(
        starts,
        |start| newton_batch(dataset, start, cfg),
        |w| surrogate_objective(dataset, w, &scfg),
        Some(|w: &Weights| mean_average_precision(dataset, w)),
    )
}

/// Multi-start online training.
pub fn multistart_online(dataset: &Dataset, cfg: &OnlineConfig) -> Result<FitResult> {
    let starts = cfg.starts.starts(dataset.n_rankers())?;
    let scfg = SurrogateConfig::new(cfg.beta);
    run_multistart(
        starts,
        |start| sgd_online(dataset, start, cfg),
        |w| surrogate_objective(dataset, w, &scfg),
        Some(|w: &Weights| mean_average_precision(dataset, w)),
    )
}

/// Multi-start unsupervised co-training. No exact score exists without
/// relevance judgments, so selection is purely by the pseudo-labeled
/// objective.
pub fn multistart_unsup(panels: &PanelSet, cfg: &UnsupConfig) -> Result<FitResult> {
    let starts = cfg.starts.starts(panels.n_rankers())?;
    let scfg = SurrogateConfig::new(cfg.beta);
    run_multistart(
        starts,
        |start| unsup_cotrain(panels, start, cfg).map(|(w, trace)| (w, trace.objective_per_epoch)),
        |w| cotrain_objective(panels, w, cfg, &scfg),
        None::<fn(&Weights) -> Result<f64>>,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::test_fixtures::*;
    use approx::assert_relative_eq;

    fn toy_batch_config() -> BatchConfig {
        BatchConfig {
            cutoff_enabled: false,
            ..BatchConfig::default()
        }
    }

    #[test]
    fn clamp_examples() {
        let (w, flag) = clamp_negative_weights(&Weights(vec![0.7, -0.1, 0.4]));
        assert_eq!(w.0, vec![0.7, 0.0, 0.4]);
        assert!(!flag);

        let (w, flag) = clamp_negative_weights(&Weights(vec![0.2, 0.8]));
        assert_eq!(w.0, vec![0.2, 0.8]);
        assert!(!flag);

        let (w, flag) = clamp_negative_weights(&Weights(vec![-1.0, -2.0]));
        assert_eq!(w.0, vec![0.0, 0.0]);
        assert!(flag);
    }

    #[test]
    fn clamp_is_idempotent() {
        let (once, _) = clamp_negative_weights(&Weights(vec![0.3, -0.2, 0.0]));
        let (twice, _) = clamp_negative_weights(&once);
        assert_eq!(once, twice);
    }

    #[test]
    fn binary_starts_enumerate_the_cube() {
        let starts = StartPolicy::AllBinary.starts(4).unwrap();
        assert_eq!(starts.len(), 16);
        assert!(starts.iter().any(|w| w.0 == vec![0.0; 4]));
        assert!(starts.iter().any(|w| w.0 == vec![1.0; 4]));
        let unique: std::collections::BTreeSet<Vec<u8>> = starts
            .iter()
            .map(|w| w.0.iter().map(|&x| x as u8).collect())
            .collect();
        assert_eq!(unique.len(), 16);
    }

    #[test]
    fn random_starts_are_seeded() {
        let a = StartPolicy::Random { count: 5, seed: 9 }.starts(3).unwrap();
        let b = StartPolicy::Random { count: 5, seed: 9 }.starts(3).unwrap();
        assert_eq!(a.len(), 5);
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.0, y.0);
        }
    }

    #[test]
    fn newton_reaches_toy_optimum_from_all_ones() {
        let dataset = toy_dataset();
        let (weights, trajectory) =
            newton_batch(&dataset, &Weights(vec![1.0, 1.0]), &toy_batch_config()).unwrap();
        let map = mean_average_precision(&dataset, &weights).unwrap();
        assert_relative_eq!(map, 1.0, epsilon = 1e-9);
        for pair in trajectory.windows(2) {
            assert!(pair[1] >= pair[0]);
        }
    }

    #[test]
    fn stationary_start_returns_immediately() {
        let dataset = toy_dataset();
        // Far up the (0.7, 0.3) ray every sigmoid is saturated flat.
        let (weights, trajectory) =
            newton_batch(&dataset, &Weights(vec![70.0, 30.0]), &toy_batch_config()).unwrap();
        assert_eq!(trajectory.len(), 1);
        assert_eq!(weights.0, vec![70.0, 30.0]);
    }

    #[test]
    fn multistart_toy_binary_reaches_map_one() {
        let dataset = toy_dataset();
        let fit = multistart_batch(&dataset, &toy_batch_config()).unwrap();
        assert_eq!(fit.per_start.len(), 4);
        assert_relative_eq!(fit.final_map.unwrap(), 1.0, epsilon = 1e-9);
        assert!(fit.best_weights.0.iter().all(|&w| w >= 0.0));
    }

    #[test]
    fn multistart_tie_prefers_lower_index() {
        let dataset = toy_dataset();
        let cfg = BatchConfig {
            starts: StartPolicy::Explicit(vec![
                Weights(vec![0.7, 0.3]),
                Weights(vec![0.7, 0.3]),
            ]),
            ..toy_batch_config()
        };
        let fit = multistart_batch(&dataset, &cfg).unwrap();
        assert_eq!(fit.chosen_start_index, 0);
    }

    #[test]
    fn multistart_objective_dominates_every_start() {
        let dataset = toy_dataset();
        let fit = multistart_batch(&dataset, &toy_batch_config()).unwrap();
        for run in &fit.per_start {
            if let Some(obj) = run.final_objective {
                assert!(fit.final_objective >= obj);
            }
        }
    }

    #[test]
    fn sgd_single_query_trajectory_monotone() {
        let dataset = toy_dataset();
        let cfg = OnlineConfig {
            epsilon: 1e-12,
            max_epochs: 200,
            ..OnlineConfig::default()
        };
        let (weights, trajectory) = sgd_online(&dataset, &Weights(vec![1.0, 1.0]), &cfg).unwrap();
        assert!(weights.is_finite());
        for pair in trajectory.windows(2) {
            assert!(pair[1] >= pair[0], "objective decreased: {:?}", pair);
        }
        assert!(trajectory.last().unwrap() >= trajectory.first().unwrap());
    }

    #[test]
    fn sgd_improves_map_on_live_toy() {
        // At beta=20 the toy's score gaps keep the sigmoid responsive, so
        // the stream actually learns the reweighting.
        let dataset = toy_dataset();
        let cfg = OnlineConfig {
            beta: 20.0,
            epsilon: 1e-10,
            max_epochs: 400,
            ..OnlineConfig::default()
        };
        let (weights, trajectory) = sgd_online(&dataset, &Weights(vec![1.0, 1.0]), &cfg).unwrap();
        assert!(trajectory.last().unwrap() > trajectory.first().unwrap());
        let map = mean_average_precision(&dataset, &weights).unwrap();
        assert!(map >= 0.8333);
    }

    #[test]
    fn sgd_single_query_stays_near_stationarity() {
        // The convergence analysis presumes the iterate sits in a
        // near-stationary neighborhood; at beta=200 the all-ones start is
        // one, and the 1/t steps must keep the gradient small throughout.
        let dataset = toy_dataset();
        let cfg = OnlineConfig {
            epsilon: 1e-13,
            max_epochs: 500,
            ..OnlineConfig::default()
        };
        let (weights, trajectory) = sgd_online(&dataset, &Weights(vec![1.0, 1.0]), &cfg).unwrap();
        for pair in trajectory.windows(2) {
            assert!(pair[1] >= pair[0]);
        }
        let grad = crate::derivatives::gradient_full(
            &dataset,
            &weights,
            &SurrogateConfig::new(cfg.beta),
        )
        .unwrap();
        let norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
        assert!(norm < 1e-3, "gradient norm {norm}");
    }

    #[test]
    fn newton_stops_at_negligible_gradient() {
        let dataset = toy_dataset();
        let cfg = BatchConfig {
            beta: 20.0,
            ..toy_batch_config()
        };
        let (weights, _) = newton_batch(&dataset, &Weights(vec![1.0, 1.0]), &cfg).unwrap();
        let grad = crate::derivatives::gradient_full(
            &dataset,
            &weights,
            &SurrogateConfig::new(cfg.beta),
        )
        .unwrap();
        let norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
        assert!(norm < 1e-6, "gradient norm {norm}");
    }

    #[test]
    fn sgd_requires_positive_epsilon() {
        let dataset = toy_dataset();
        let cfg = OnlineConfig {
            epsilon: 0.0,
            ..OnlineConfig::default()
        };
        assert!(sgd_online(&dataset, &Weights(vec![1.0, 1.0]), &cfg).is_err());
    }

    #[test]
    fn shuffled_online_is_seed_deterministic() {
        let dataset = crate::synth::synth_generate(&crate::synth::SynthParams {
            rankers: 2,
            queries: 6,
            docs: 12,
            relevant: 3,
            noise: 0.05,
            seed: 2,
        })
        .unwrap()
        .0;
        let cfg = OnlineConfig {
            max_epochs: 5,
            shuffle_seed: Some(77),
            ..OnlineConfig::default()
        };
        let start = Weights(vec![1.0, 1.0]);
        let (a, ta) = sgd_online(&dataset, &start, &cfg).unwrap();
        let (b, tb) = sgd_online(&dataset, &start, &cfg).unwrap();
        assert_eq!(a.0, b.0);
        assert_eq!(ta, tb);
        // A different epoch order visits different gradients.
        let other = OnlineConfig {
            shuffle_seed: Some(78),
            ..cfg
        };
        let (c, _) = sgd_online(&dataset, &start, &other).unwrap();
        assert_ne!(a.0, c.0);
    }

    #[test]
    fn newton_handles_four_rankers() {
        let (dataset, planted) = crate::synth::synth_generate(&crate::synth::SynthParams {
            rankers: 4,
            queries: 8,
            docs: 25,
            relevant: 3,
            noise: 0.05,
            seed: 31,
        })
        .unwrap();
        let fit = multistart_batch(&dataset, &BatchConfig::default()).unwrap();
        assert_eq!(fit.per_start.len(), 16);
        let trained = fit.final_map.unwrap();
        let planted_map = mean_average_precision(&dataset, &planted).unwrap();
        assert!(trained >= planted_map - 0.05, "{trained} vs planted {planted_map}");
    }

    #[test]
    fn constant_rate_diagnostic_takes_plain_steps() {
        let dataset = toy_dataset();
        let start = Weights(vec![1.0, 1.0]);
        let cfg = OnlineConfig {
            beta: 20.0,
            epsilon: 1e-15,
            max_epochs: 1,
            learning_rate: LearningRate::Constant(0.5),
            ..OnlineConfig::default()
        };
        let (stepped, _) = sgd_online(&dataset, &start, &cfg).unwrap();
        let grad = crate::derivatives::query_gradient(
            &dataset,
            0,
            &start,
            &SurrogateConfig::new(20.0),
            &crate::derivatives::DerivativeOptions::exact(),
        )
        .unwrap();
        for ((s, w), g) in stepped.0.iter().zip(&start.0).zip(&grad) {
            assert_relative_eq!(*s, w + 0.5 * g, max_relative = 1e-12);
        }
    }

    #[test]
    fn fake_relevance_thresholds_scores() {
        let panel = toy_panel();
        let rel = fake_relevance(&panel, 1, 0.15);
        // Ranker 2 scores: d1=0.2, d2=0.1, d3=0.7.
        assert!(rel.relevant_docs.contains("d1"));
        assert!(!rel.relevant_docs.contains("d2"));
        assert!(rel.relevant_docs.contains("d3"));
    }

    #[test]
    fn cotrain_threshold_too_high_errors() {
        let panels = toy_dataset().panel_set();
        let cfg = UnsupConfig {
            score_threshold: 10.0,
            ..UnsupConfig::default()
        };
        assert!(matches!(
            unsup_cotrain(&panels, &Weights(vec![1.0, 1.0]), &cfg),
            Err(Error::ThresholdTooHigh { .. })
        ));
    }

    #[test]
    fn cotrain_needs_two_rankers() {
        let panel = ScorePanel::from_rows("q", vec!["a".into()], vec![vec![0.4]]).unwrap();
        let panels = PanelSet::new(vec![panel], vec!["only".into()]).unwrap();
        assert!(unsup_cotrain(&panels, &Weights(vec![1.0]), &UnsupConfig::default()).is_err());
    }

    #[test]
    fn cotrain_round_matches_sgd_pass_when_unpenalized() {
        let panels = toy_dataset().panel_set();
        let cfg = UnsupConfig {
            score_threshold: 0.15,
            sigma: 0.0,
            max_epochs: 1,
            ..UnsupConfig::default()
        };
        let start = Weights(vec![1.0, 1.0]);
        let (_, trace) = unsup_cotrain(&panels, &start, &cfg).unwrap();
        let (teacher, after_round) = &trace.rounds[0];
        assert_eq!(*teacher, 0);

        // Rebuild teacher 0's reduced problem by hand and take one online
        // epoch over it.
        let panel = &panels.panels()[0];
        let rel = fake_relevance(panel, 0, cfg.score_threshold);
        let reduced = Dataset::new(
            vec![panel.without_ranker(0).unwrap()],
            vec![rel],
            vec!["r2".into()],
        )
        .unwrap();
        let online = OnlineConfig {
            beta: cfg.beta,
            epsilon: 1e-15,
            max_epochs: 1,
            ..OnlineConfig::default()
        };
        let (expected, _) = sgd_online(&reduced, &start.without(0), &online).unwrap();
        let expected_full = expected.with_inserted(0, 1.0);
        assert_eq!(after_round.0, expected_full.0);
    }

    #[test]
    fn cotrain_penalty_changes_updates() {
        let panels = toy_dataset().panel_set();
        let base = UnsupConfig {
            score_threshold: 0.15,
            sigma: 0.0,
            max_epochs: 1,
            ..UnsupConfig::default()
        };
        let with_penalty = UnsupConfig { sigma: 0.5, ..base.clone() };
        let start = Weights(vec![1.0, 1.0]);
        let (w0, _) = unsup_cotrain(&panels, &start, &base).unwrap();
        let (w1, _) = unsup_cotrain(&panels, &start, &with_penalty).unwrap();
        assert_ne!(w0.0, w1.0);
    }

    #[test]
    fn multistart_unsup_runs() {
        let panels = toy_dataset().panel_set();
        let cfg = UnsupConfig {
            score_threshold: 0.15,
            max_epochs: 3,
            ..UnsupConfig::default()
        };
        let fit = multistart_unsup(&panels, &cfg).unwrap();
        assert!(fit.final_map.is_none());
        assert!(fit.best_weights.is_finite());
        assert_eq!(fit.per_start.len(), 4);
    }
}
