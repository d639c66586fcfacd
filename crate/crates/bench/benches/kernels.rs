use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use fracrom_bench::gp_problem;
use fracrom_core::random::GaussianStream;
use fracrom_core::sketch::{SketchConfig, SketchState};
use fracrom_core::{SincRule, SparseCholesky};

fn spmv(c: &mut Criterion) {
    let mut g = c.benchmark_group("spmv");
    for n in [33, 65, 129] {
        let p = gp_problem(n);
        let (k, _) = p.materialize(&[50.0]).unwrap();
        let x = GaussianStream::new(0, 0).vector(k.ncols());
        g.bench_with_input(BenchmarkId::from_parameter(n), &n, |b, _| {
            b.iter(|| k.spmv(black_box(&x)).unwrap())
        });
    }
    g.finish();
}

fn cholesky(c: &mut Criterion) {
    let mut g = c.benchmark_group("sparse_cholesky");
    g.sample_size(20);
    for n in [33, 65] {
        let p = gp_problem(n);
        let (k, f) = p.materialize(&[50.0]).unwrap();
        let a = k.add_scaled(&p.mass, 1.0, 1.0).unwrap();
        g.bench_with_input(BenchmarkId::new("factorize", n), &n, |b, _| {
            b.iter(|| SparseCholesky::factorize(black_box(&a)).unwrap())
        });
        let fac = SparseCholesky::factorize(&a).unwrap();
        g.bench_with_input(BenchmarkId::new("solve", n), &n, |b, _| {
            b.iter(|| fac.solve(black_box(&f)).unwrap())
        });
    }
    g.finish();
}

fn sketch_update(c: &mut Criterion) {
    let mut g = c.benchmark_group("sketch_update");
    let n = 65 * 65;
    let block = GaussianStream::new(1, 0).matrix(n, 40);
    for k in [60, 100] {
        let cfg = SketchConfig::new(k, 3).unwrap();
        g.bench_with_input(BenchmarkId::from_parameter(k), &k, |b, _| {
            b.iter_batched(
                || SketchState::new(n, cfg).unwrap(),
                |mut s| s.update(black_box(&block)).unwrap(),
                criterion::BatchSize::LargeInput,
            )
        });
    }
    g.finish();
}

fn quadrature(c: &mut Criterion) {
    let rule = SincRule::build(0.5, 1.0 / 64.0).unwrap();
    c.bench_function("scalar_fractional", |b| {
        b.iter(|| rule.fractional_factor(black_box(37.5)))
    });
}

criterion_group!(kernels, spmv, cholesky, sketch_update, quadrature);
criterion_main!(kernels);
