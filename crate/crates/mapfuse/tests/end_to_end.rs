//! Public-API walkthrough: generate, train in all three modes, evaluate,
//! and check the reported bound actually covers the surrogate gap.

use mapfuse::eval::{evaluate, two_fold_cv};
use mapfuse::model::{mean_average_precision, Weights};
use mapfuse::optim::{
    multistart_batch, multistart_online, multistart_unsup, BatchConfig, OnlineConfig, UnsupConfig,
};
use mapfuse::surrogate::{bound_report, surrogate_objective, SurrogateConfig};
use mapfuse::synth::{synth_generate, SynthParams};

fn fixture(seed: u64) -> mapfuse::Dataset {
    synth_generate(&SynthParams {
        rankers: 3,
        queries: 12,
        docs: 40,
        relevant: 4,
        noise: 0.08,
        seed,
    })
    .unwrap()
    .0
}

#[test]
fn batch_online_unsup_agree_on_easy_data() {
    let dataset = fixture(41);
    let batch = multistart_batch(&dataset, &BatchConfig::default()).unwrap();
    let online = multistart_online(&dataset, &OnlineConfig::default()).unwrap();
    let batch_map = batch.final_map.unwrap();
    let online_map = online.final_map.unwrap();
    assert!(batch_map > 0.5);
    assert!((batch_map - online_map).abs() < 0.05);

    // Unsupervised training never sees the judgments; it should still land
    // on weights that beat the raw uniform fusion.
    let panels = dataset.panel_set();
    let mut scores: Vec<f64> = panels
        .panels()
        .iter()
        .flat_map(|p| (0..p.n_docs()).map(|d| p.score(d, 0)).collect::<Vec<_>>())
        .collect();
    scores.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let cfg = UnsupConfig {
        score_threshold: scores[scores.len() * 9 / 10],
        max_epochs: 8,
        ..UnsupConfig::default()
    };
    let unsup = multistart_unsup(&panels, &cfg).unwrap();
    assert!(unsup.final_map.is_none());
    let unsup_map = mean_average_precision(&dataset, &unsup.best_weights).unwrap();
    let uniform_map =
        mean_average_precision(&dataset, &Weights(vec![1.0, 1.0, 1.0])).unwrap();
    assert!(unsup_map >= uniform_map - 0.05, "{unsup_map} vs uniform {uniform_map}");
}

#[test]
fn reported_bound_covers_measured_gap_after_training() {
    let dataset = fixture(42);
    let fit = multistart_batch(&dataset, &BatchConfig::default()).unwrap();
    let cfg = SurrogateConfig::default();
    let report = bound_report(&dataset, &fit.best_weights, &cfg).unwrap();
    if !report.degenerate {
        let gap = (surrogate_objective(&dataset, &fit.best_weights, &cfg).unwrap()
            - mean_average_precision(&dataset, &fit.best_weights).unwrap())
        .abs();
        assert!(gap <= report.objective_bound);
    }
}

#[test]
fn evaluation_and_cross_validation_run_on_trained_weights() {
    let dataset = fixture(43);
    let fit = multistart_batch(&dataset, &BatchConfig::default()).unwrap();
    let report = evaluate(&dataset, &fit.best_weights, &[1, 5]).unwrap();
    assert_eq!(report.map, fit.final_map.unwrap());
    assert!(report.pr_at[&1] >= report.map - 1.0);
    for pair in report.pr_curve.windows(2) {
        assert!(pair[0] >= pair[1]);
    }

    let cv = two_fold_cv(
        &dataset,
        |fold| Ok(multistart_batch(fold, &BatchConfig::default())?.best_weights),
        9,
    )
    .unwrap();
    assert!(cv.mean_map > 0.3);
    assert_eq!(cv.mean_map, (cv.fold_maps[0] + cv.fold_maps[1]) / 2.0);
}
