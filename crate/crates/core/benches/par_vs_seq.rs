//! Parallel-vs-sequential benchmarks for the data-parallel inner loops:
//! forest member fits, committee fits, batch prediction, and dataset
//! generation.
//!
//! With the default `parallel` feature the same workload is measured in a
//! 1-thread and an all-cores rayon pool; built with
//! `--no-default-features` everything runs on the plain sequential path
//! and only the `seq` rows are meaningful.

use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};

use tensortime::active::{fit_strategy_model, ALConfig, Strategy};
use tensortime::advisor::{ConfigGrid, ProblemSize};
use tensortime::data::Dataset;
use tensortime::regressors::{FamilyParams, ForestParams, Model, ModelSpec};
use tensortime::synth::{generate_dataset, CostModelParams};

fn bench_pool<F: Fn() + Sync>(c: &mut Criterion, name: &str, threads: Option<usize>, work: F) {
    let label = match threads {
        None => format!("{name}/seq"),
        Some(n) => format!("{name}/threads-{n}"),
    };
    match threads {
        None => {
            c.bench_function(&label, |b| b.iter(&work));
        }
        #[cfg(feature = "parallel")]
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .expect("worker pool");
            c.bench_function(&label, |b| b.iter(|| pool.install(&work)));
        }
        #[cfg(not(feature = "parallel"))]
        Some(_) => {}
    }
}

fn thread_variants() -> Vec<Option<usize>> {
    if cfg!(feature = "parallel") {
        let n = num_threads();
        if n > 1 {
            vec![Some(1), Some(n)]
        } else {
            vec![Some(1)]
        }
    } else {
        vec![None]
    }
}

fn num_threads() -> usize {
    std::thread::available_parallelism()
        .map(|n| n.get())
        .unwrap_or(1)
}

fn benchmark_dataset(seed: u64, n_per_cell: usize) -> Dataset {
    let problems: Vec<ProblemSize> = (0..10)
        .map(|i| ProblemSize {
            o: 60 + 15 * i,
            v: 400 + 80 * i,
        })
        .collect();
    let grid = ConfigGrid::new(
        vec![16, 32, 64, 128, 256, 512],
        vec![40, 60, 80, 100, 120, 140],
    )
    .unwrap();
    generate_dataset(&problems, &grid, n_per_cell, &CostModelParams::default(), seed).unwrap()
}

fn forest_fit(c: &mut Criterion) {
    let ds = benchmark_dataset(1, 2);
    let x = ds.features();
    let y = ds.runtimes();
    let spec = ModelSpec {
        params: FamilyParams::RandomForest(ForestParams {
            n_trees: 40,
            ..ForestParams::default()
        }),
        seed: 3,
    };
    for threads in thread_variants() {
        bench_pool(c, "forest_fit_40x720", threads, || {
            black_box(Model::fit(&spec, &x, &y).unwrap());
        });
    }
}

fn committee_fit(c: &mut Criterion) {
    let ds = benchmark_dataset(2, 1);
    let x = ds.features().select(&(0..120).collect::<Vec<_>>());
    let y: Vec<f64> = ds.runtimes()[..120].to_vec();
    let mut cfg = ALConfig::new(Strategy::QueryByCommittee, 9);
    cfg.n_committees = 5;
    for threads in thread_variants() {
        bench_pool(c, "committee_fit_5x120", threads, || {
            black_box(fit_strategy_model(&cfg, &x, &y).unwrap());
        });
    }
}

fn batch_predict(c: &mut Criterion) {
    let ds = benchmark_dataset(3, 2);
    let x = ds.features();
    let y = ds.runtimes();
    let mut spec = ModelSpec::default_for(tensortime::regressors::Family::GradientBoosting, 4);
    if let FamilyParams::GradientBoosting(p) = &mut spec.params {
        p.n_estimators = 150;
    }
    let model = Model::fit(&spec, &x, &y).unwrap();
    for threads in thread_variants() {
        bench_pool(c, "gb_predict_150x720", threads, || {
            black_box(model.predict(&x).unwrap());
        });
    }
}

fn generation(c: &mut Criterion) {
    for threads in thread_variants() {
        bench_pool(c, "generate_720x4", threads, || {
            black_box(benchmark_dataset(7, 4));
        });
    }
}

fn config() -> Criterion {
    Criterion::default()
        .configure_from_args()
        .sample_size(10)
        .warm_up_time(std::time::Duration::from_millis(500))
        .measurement_time(std::time::Duration::from_secs(3))
}

criterion_group! {
    name = benches;
    config = config();
    targets = forest_fit, committee_fit, batch_predict, generation
}
criterion_main!(benches);
