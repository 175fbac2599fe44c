//! Throughput benchmarks: example generation, the stacked solver, and
//! network passes at the published architecture size.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion, Throughput};
use std::hint::black_box;

use odmd_core::eval::{evaluate, BenchmarkSet, BoxLsEstimator};
use odmd_core::generate::{generate_batch, presets};
use odmd_core::network::{
    backward, forward_all, DBoxParams, LossMode, NetworkShape, PreparedBatch,
};

fn bench_generation(c: &mut Criterion) {
    let mut group = c.benchmark_group("generate");
    group.sample_size(10);
    for (name, cfg) in [
        ("normal", presets::normal()),
        ("perturb-all", presets::perturb_all()),
        ("z-normal", presets::z_axis_clean()),
    ] {
        let count = 10_000usize;
        group.throughput(Throughput::Elements(count as u64));
        group.bench_with_input(BenchmarkId::new("batch", name), &cfg, |b, cfg| {
            b.iter(|| black_box(generate_batch(cfg, count, 42).unwrap()));
        });
    }
    group.finish();
}

fn bench_solver(c: &mut Criterion) {
    let cfg = presets::normal();
    let set = BenchmarkSet::generate("bench", &cfg, 3_000, 7).unwrap();
    let mut group = c.benchmark_group("solve");
    group.sample_size(10);
    group.throughput(Throughput::Elements(set.examples.len() as u64));
    group.bench_function("box-ls-3000", |b| {
        b.iter(|| black_box(evaluate(&BoxLsEstimator, &set).unwrap()));
    });
    group.finish();
}

fn bench_network(c: &mut Criterion) {
    let shape = NetworkShape::dbox(10);
    let params = DBoxParams::<f32>::init(shape, 1);
    let cfg = presets::z_axis_clean();

    let forward_examples = generate_batch(&cfg, 1_000, 11).unwrap();
    let forward_batch =
        PreparedBatch::<f32>::new(&forward_examples, &cfg.intrinsics, LossMode::Rel, shape)
            .unwrap();

    let train_examples = generate_batch(&cfg, 512, 12).unwrap();
    let train_batch =
        PreparedBatch::<f32>::new(&train_examples, &cfg.intrinsics, LossMode::Rel, shape).unwrap();

    let mut group = c.benchmark_group("network");
    group.sample_size(10);
    group.throughput(Throughput::Elements(1_000));
    group.bench_function("forward-all-1000", |b| {
        b.iter(|| black_box(forward_all(&params, &forward_batch.input).unwrap()));
    });
    group.throughput(Throughput::Elements(512));
    group.bench_function("backward-512", |b| {
        b.iter(|| black_box(backward(&params, &train_batch)));
    });
    group.finish();
}

criterion_group!(benches, bench_generation, bench_solver, bench_network);
criterion_main!(benches);
