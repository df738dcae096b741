//! Benchmarks for the data-parallel inner loops: smoothed-objective
//! evaluation, derivative accumulation (windowed vs exact), and full
//! multi-start training. With the `parallel` feature each case is also
//! pinned to a single-thread pool for a sequential baseline; building with
//! `--no-default-features` benches the plain sequential code instead.

use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion, Throughput};

use mapfuse::derivatives::{derivatives, DerivativeOptions};
use mapfuse::model::{Dataset, Weights};
use mapfuse::optim::{multistart_batch, BatchConfig, StartPolicy};
use mapfuse::surrogate::{surrogate_objective, SurrogateConfig};
use mapfuse::synth::{synth_generate, SynthParams};

fn fixture(queries: usize, docs: usize, rankers: usize) -> (Dataset, Weights) {
    let (dataset, planted) = synth_generate(&SynthParams {
        rankers,
        queries,
        docs,
        relevant: (docs / 20).max(1),
        noise: 0.1,
        seed: 1,
    })
    .expect("fixture generation");
    (dataset, planted)
}

/// Run `f` normally and, when the parallel feature is on, inside a
/// 1-thread pool as the sequential baseline.
fn with_modes<F: FnMut(&str, bool)>(mut f: F) {
    f("parallel", false);
    #[cfg(feature = "parallel")]
    f("single-thread", true);
    #[cfg(not(feature = "parallel"))]
    f("sequential", false);
}

#[cfg(feature = "parallel")]
fn pinned<R: Send>(single: bool, body: impl FnOnce() -> R + Send) -> R {
    if single {
        rayon::ThreadPoolBuilder::new()
            .num_threads(1)
            .build()
            .unwrap()
            .install(body)
    } else {
        body()
    }
}

#[cfg(not(feature = "parallel"))]
fn pinned<R>(_single: bool, body: impl FnOnce() -> R) -> R {
    body()
}

fn bench_objective(c: &mut Criterion) {
    let mut group = c.benchmark_group("objective");
    for queries in [16, 128, 512] {
        let (dataset, weights) = fixture(queries, 200, 4);
        let cfg = SurrogateConfig::default();
        group.throughput(Throughput::Elements(queries as u64));
        with_modes(|mode, single| {
            group.bench_with_input(BenchmarkId::new(mode, queries), &dataset, |b, ds| {
                pinned(single, || {
                    b.iter(|| surrogate_objective(black_box(ds), &weights, &cfg).unwrap())
                })
            });
        });
    }
    group.finish();
}

fn bench_derivatives(c: &mut Criterion) {
    let mut group = c.benchmark_group("derivatives");
    let (dataset, weights) = fixture(64, 200, 4);
    let cfg = SurrogateConfig::default();
    for (label, opts) in [
        ("exact", DerivativeOptions::exact()),
        ("windowed", DerivativeOptions::windowed(&cfg)),
    ] {
        with_modes(|mode, single| {
            group.bench_function(BenchmarkId::new(label, mode), |b| {
                pinned(single, || {
                    b.iter(|| derivatives(black_box(&dataset), &weights, &cfg, &opts).unwrap())
                })
            });
        });
    }
    group.finish();
}

fn bench_training(c: &mut Criterion) {
    let mut group = c.benchmark_group("train_batch");
    group.sample_size(10);
    let (dataset, _) = fixture(32, 100, 3);
    let cfg = BatchConfig {
        max_iters: 20,
        starts: StartPolicy::AllBinary,
        ..BatchConfig::default()
    };
    with_modes(|mode, single| {
        group.bench_function(BenchmarkId::new("multistart", mode), |b| {
            pinned(single, || {
                b.iter(|| multistart_batch(black_box(&dataset), &cfg).unwrap())
            })
        });
    });
    group.finish();
}

criterion_group!(benches, bench_objective, bench_derivatives, bench_training);
criterion_main!(benches);
