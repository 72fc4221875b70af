use criterion::{black_box, criterion_group, criterion_main, BenchmarkId, Criterion};

use regulab::harness::Experiment;
use regulab::linalg::{spectral_norm, svd_decompose, tikhonov_solve, tikhonov_solve_dense};
use regulab::rules::{select_alpha, AlphaGrid, Compensator, Functional, RuleSpec};
use regulab::ExperimentProblem;
use regulab_bench::{baart_instance, single_cell_config};

fn factorization(c: &mut Criterion) {
    let mut group = c.benchmark_group("factorization");
    for n in [50, 100, 200] {
        let inst = baart_instance(n);
        group.bench_with_input(BenchmarkId::new("svd", n), &inst.a_noisy, |b, a| {
            b.iter(|| svd_decompose(black_box(a), 1e-14).unwrap())
        });
        group.bench_with_input(BenchmarkId::new("spectral_norm", n), &inst.a_noisy, |b, a| {
            b.iter(|| spectral_norm(black_box(a)).unwrap())
        });
    }
    group.finish();
}

fn solves(c: &mut Criterion) {
    let inst = baart_instance(100);
    let svd = svd_decompose(&inst.a_noisy, 1e-14).unwrap();
    c.bench_function("tikhonov/svd_100", |b| b.iter(|| tikhonov_solve(&svd, black_box(&inst.y_noisy), 1e-4).unwrap()));
    c.bench_function("tikhonov/dense_100", |b| {
        b.iter(|| tikhonov_solve_dense(&inst.a_noisy, black_box(&inst.y_noisy), 1e-4).unwrap())
    });
}

fn selection(c: &mut Criterion) {
    let inst = baart_instance(100);
    let svd = svd_decompose(&inst.a_noisy, 1e-14).unwrap();
    let grid = AlphaGrid::standard(&svd, 200, 1e-14).unwrap();
    let mut group = c.benchmark_group("select_alpha");
    for f in Functional::ALL {
        let spec = RuleSpec::standard(f);
        group.bench_function(spec.id().to_string(), |b| {
            b.iter(|| select_alpha(&spec, &svd, black_box(&inst.y_noisy), inst.eta, &grid).unwrap())
        });
    }
    let sh1 = RuleSpec::semi_heuristic(Functional::QuasiOptimality, Compensator::SolutionNorm, 600.0, 0.07);
    let restricted = AlphaGrid::restricted(&sh1, inst.eta, svd.norm().powi(2), 200).unwrap();
    group.bench_function(sh1.id().to_string(), |b| {
        b.iter(|| select_alpha(&sh1, &svd, black_box(&inst.y_noisy), inst.eta, &restricted).unwrap())
    });
    group.finish();
}

fn realization(c: &mut Criterion) {
    let mut group = c.benchmark_group("run_realization");
    group.sample_size(10);
    for (problem, size) in [(ExperimentProblem::BaartHeat, 100), (ExperimentProblem::TomoGauss, 12)] {
        let experiment = Experiment::new(single_cell_config(problem, size)).unwrap();
        group.bench_function(problem.name(), |b| b.iter(|| experiment.run_realization(0, 0, black_box(0))));
    }
    group.finish();
}

criterion_group!(benches, factorization, solves, selection, realization);
criterion_main!(benches);
