use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use dataplace_bench::fee_free;
use dataplace_core::{eval_dual, solve_dual, Matrix, SolveConfig};

fn evaluation(c: &mut Criterion) {
    let mut group = c.benchmark_group("eval_dual");
    for n in [8, 32, 128] {
        let inst = fee_free(n, 4, 1);
        let beta = Matrix::filled(n, 4, inst.empty_set_distance / 4.0);
        group.bench_with_input(BenchmarkId::from_parameter(n), &n, |b, _| {
            b.iter(|| eval_dual(black_box(&inst), black_box(&beta)).unwrap())
        });
    }
    group.finish();
}

fn solver(c: &mut Criterion) {
    let mut group = c.benchmark_group("solve_dual");
    group.sample_size(10);
    let cfg = SolveConfig {
        max_iters: 5_000,
        ..SolveConfig::default()
    };
    for n in [5, 7] {
        let inst = fee_free(n, 3, 2);
        group.bench_with_input(BenchmarkId::from_parameter(n), &n, |b, _| {
            b.iter(|| solve_dual(black_box(&inst), &cfg).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, evaluation, solver);
criterion_main!(benches);
