//! Parallel and sequential execution of the hot paths.
//!
//! With the default `parallel` feature every benchmark runs twice, on the
//! global rayon pool and on a one-thread pool. Build with
//! `--no-default-features` to time the plain-iterator fallback.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use std::hint::black_box;

use tlssvm::cv::{grid_search, HyperGrid};
use tlssvm::dataset::{generate_synthetic, SyntheticData, SyntheticSpec};
use tlssvm::kernel::KernelSpec;
use tlssvm::model::Method;
use tlssvm::solver::{fit, FitConfig};

fn data(d: usize, sizes: Vec<usize>, per_task: usize) -> SyntheticData {
    generate_synthetic(&SyntheticSpec {
        d,
        mode_sizes: sizes,
        k_true: 3,
        train_per_task: per_task,
        test_per_task: 10,
        snr: 10.0,
        seed: 0,
    })
    .unwrap()
}

#[cfg(feature = "parallel")]
fn modes() -> Vec<(&'static str, Option<rayon::ThreadPool>)> {
    let single = rayon::ThreadPoolBuilder::new()
        .num_threads(1)
        .build()
        .unwrap();
    vec![("rayon", None), ("rayon-1-thread", Some(single))]
}

#[cfg(not(feature = "parallel"))]
fn modes() -> Vec<(&'static str, Option<()>)> {
    vec![("sequential", None)]
}

#[cfg(feature = "parallel")]
fn run_in<R: Send>(pool: &Option<rayon::ThreadPool>, f: impl FnOnce() -> R + Send) -> R {
    match pool {
        Some(p) => p.install(f),
        None => f(),
    }
}

#[cfg(not(feature = "parallel"))]
fn run_in<R>(_: &Option<()>, f: impl FnOnce() -> R) -> R {
    f()
}

fn bench_gram(c: &mut Criterion) {
    let set = data(100, vec![3, 4, 5], 20);
    let x = set.train.x();
    let kernel = KernelSpec::Rbf { gamma: 0.01 };
    let mut group = c.benchmark_group("gram_rbf_1200");
    for (name, pool) in modes() {
        group.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| run_in(&pool, || kernel.gram(black_box(x), black_box(x)).unwrap()))
        });
    }
    group.finish();
}

fn bench_fit(c: &mut Criterion) {
    let set = data(30, vec![3, 4], 30);
    let config = FitConfig {
        rank: 3,
        max_iters: 10,
        ..FitConfig::default()
    };
    let mut group = c.benchmark_group("fit_linear_360");
    group.sample_size(20);
    for (name, pool) in modes() {
        group.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| run_in(&pool, || fit(black_box(&set.train), &config).unwrap()))
        });
    }
    group.finish();
}

fn bench_cv(c: &mut Criterion) {
    let set = data(30, vec![3, 4], 30);
    let grid = HyperGrid {
        ranks: vec![1, 3],
        cs: vec![1.0, 100.0],
        ..HyperGrid::default()
    };
    let config = FitConfig {
        max_iters: 10,
        ..FitConfig::default()
    };
    let mut group = c.benchmark_group("cv_4_cells_3_folds");
    group.sample_size(10);
    for (name, pool) in modes() {
        group.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| {
                run_in(&pool, || {
                    grid_search(&set.train, Method::Tlssvm, &grid, &config, 3, 0).unwrap()
                })
            })
        });
    }
    group.finish();
}

criterion_group!(benches, bench_gram, bench_fit, bench_cv);
criterion_main!(benches);
