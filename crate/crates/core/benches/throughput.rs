//! Parallel vs sequential throughput: one training step and one k-means run,
//! each on a single-thread rayon pool and on the global pool. Build with
//! `--no-default-features` to time the plain sequential fallback.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use diffseg::baselines::{kmeans, window_features};
use diffseg::pipeline::train_step;
use diffseg::segnet::{init_params, HyperParams};
use diffseg::synthetic;

fn pools() -> Vec<(&'static str, rayon::ThreadPool)> {
    let global = rayon::current_num_threads();
    vec![
        ("1-thread", rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap()),
        ("global", rayon::ThreadPoolBuilder::new().num_threads(global).build().unwrap()),
    ]
}

fn train_steps(c: &mut Criterion) {
    let image = synthetic::regression_image();
    let hp = HyperParams::default();
    let mut group = c.benchmark_group("train_step_64x64_p100_q100");
    group.sample_size(10);
    for (name, pool) in pools() {
        let mut params = init_params::<f32>(&hp).unwrap();
        group.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| pool.install(|| train_step(&image, &mut params, &hp, None, 1).unwrap()))
        });
    }
    group.finish();
}

fn kmeans_runs(c: &mut Criterion) {
    let features = window_features(&synthetic::regression_image(), 5).unwrap();
    let mut group = c.benchmark_group("kmeans_64x64_w5_k17");
    group.sample_size(10);
    for (name, pool) in pools() {
        group.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| pool.install(|| kmeans(&features, 17, 0, 20).unwrap()))
        });
    }
    group.finish();
}

criterion_group!(benches, train_steps, kmeans_runs);
criterion_main!(benches);
