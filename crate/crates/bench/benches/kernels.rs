use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::hint::black_box;

use trustpc_core::analysis::{fisher_information, tr_solution};
use trustpc_core::energy::run_inference;
use trustpc_core::network::bp_grad;
use trustpc_core::trainers::pc_step;
use trustpc_core::{Activation, Batch, InferenceSchedule, NetworkSpec, Precisions, WeightSet};

const WIDTH: usize = 64;
const BATCH: usize = 64;

fn setup(hidden: usize) -> (NetworkSpec, WeightSet, Batch) {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let spec = NetworkSpec::mlp(WIDTH, &vec![WIDTH; hidden], 10, Activation::Tanh).unwrap();
    let w = WeightSet::uniform(&spec, 1.0 / (WIDTH as f64).sqrt(), &mut rng);
    let x = DMatrix::from_fn(WIDTH, BATCH, |_, _| rng.random_range(-1.0..1.0));
    let y = DMatrix::from_fn(10, BATCH, |_, _| rng.random_range(-1.0..1.0));
    (spec, w, Batch::new(x, y).unwrap())
}

fn inference(c: &mut Criterion) {
    let mut group = c.benchmark_group("inference_100_iters");
    let schedule = InferenceSchedule::wide().with_max_iters(100);
    for hidden in [2, 5, 10] {
        let (spec, w, batch) = setup(hidden);
        let prec = Precisions::ones(&spec);
        group.bench_with_input(BenchmarkId::from_parameter(hidden), &hidden, |b, _| {
            b.iter(|| run_inference(&spec, &w, &prec, black_box(&batch), &schedule).unwrap())
        });
    }
    group.finish();
}

fn backprop(c: &mut Criterion) {
    let mut group = c.benchmark_group("bp_grad");
    for hidden in [2, 5, 10] {
        let (spec, w, batch) = setup(hidden);
        group.bench_with_input(BenchmarkId::from_parameter(hidden), &hidden, |b, _| {
            b.iter(|| bp_grad(&spec, black_box(&w), &batch).unwrap())
        });
    }
    group.finish();
}

fn pc_update(c: &mut Criterion) {
    let (spec, w, batch) = setup(5);
    let prec = Precisions::ones(&spec);
    let schedule = InferenceSchedule::wide().with_max_iters(100);
    c.bench_function("pc_step_5_hidden", |b| {
        b.iter(|| pc_step(&spec, black_box(&w), &prec, &batch, 1e-3, &schedule).unwrap())
    });
}

fn fisher(c: &mut Criterion) {
    let mut group = c.benchmark_group("fisher");
    for hidden in [2, 5] {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let spec = NetworkSpec::mlp(8, &vec![16; hidden], 4, Activation::Tanh).unwrap();
        let w = WeightSet::uniform(&spec, 0.5, &mut rng);
        let prec = Precisions::ones(&spec);
        let x: Vec<f64> = (0..8).map(|_| rng.random_range(-1.0..1.0)).collect();
        let y: Vec<f64> = (0..4).map(|_| rng.random_range(-1.0..1.0)).collect();
        group.bench_with_input(BenchmarkId::new("information", hidden), &hidden, |b, _| {
            b.iter(|| fisher_information(&spec, &w, &prec, black_box(&x)).unwrap())
        });
        group.bench_with_input(BenchmarkId::new("tr_solution", hidden), &hidden, |b, _| {
            b.iter(|| tr_solution(&spec, &w, &prec, black_box(&x), &y).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, inference, backprop, pc_update, fisher);
criterion_main!(benches);
