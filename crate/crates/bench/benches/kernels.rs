use std::hint::black_box;

use bary_bench::{gaussian, line, potential, problem};
use bary_core::semidual::SemiDual;
use bary_core::sobolev::PoissonSolver;
use bary_core::{c_transform, estimate_density, sample, EstimatorConfig, Grid, GridFunction};
use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

fn legendre(c: &mut Criterion) {
    let mut group = c.benchmark_group("c_transform");
    for grid in [line(257), line(1025), Grid::square(0.0, 1.0, 64).unwrap()] {
        let f = potential(&grid);
        group.bench_with_input(BenchmarkId::from_parameter(grid.len()), &f, |b, f| {
            b.iter(|| c_transform(black_box(f)))
        });
    }
    group.finish();
}

fn poisson(c: &mut Criterion) {
    let mut group = c.benchmark_group("poisson");
    for grid in [line(257), line(1025), Grid::square(0.0, 1.0, 64).unwrap()] {
        let solver = PoissonSolver::new(&grid);
        let g: Vec<f64> = grid.tabulate(|x| (6.0 * x[0]).cos());
        group.bench_with_input(BenchmarkId::from_parameter(grid.len()), &g, |b, g| {
            b.iter(|| solver.solve_values(black_box(g)))
        });
    }
    group.finish();
}

fn semidual(c: &mut Criterion) {
    let mut group = c.benchmark_group("semidual_evaluate");
    let grid = line(257);
    for m in [2, 16, 128] {
        let prob = problem(&grid, m);
        let f = vec![potential(&grid).values().to_vec(); m - 1];
        let mut sd = SemiDual::new(&prob).unwrap();
        group.bench_function(BenchmarkId::from_parameter(m), |b| {
            b.iter(|| sd.evaluate(black_box(&f)).value)
        });
    }
    group.finish();
}

fn density(c: &mut Criterion) {
    let mut group = c.benchmark_group("estimate_density");
    let grid = line(257);
    let mu = gaussian(&grid, 0.5, 0.12);
    let cfg = EstimatorConfig::default();
    for n in [1000, 32000] {
        let s = sample(&mu, n, 7);
        group.bench_with_input(BenchmarkId::from_parameter(n), &s, |b, s| {
            b.iter(|| estimate_density(black_box(s), &cfg, &grid).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, legendre, poisson, semidual, density);
criterion_main!(benches);
