use criterion::{black_box, criterion_group, criterion_main, BenchmarkId, Criterion};

use covshift_bench::{cohort, logistic_problem};
use covshift_core::nuisance::{build_design, fit_logistic_irls, IrlsOptions};
use covshift_core::simulation::{run_replicate, MvnSampler};
use covshift_core::{Arm, FeatureMap, ScenarioSpec};

fn irls(c: &mut Criterion) {
    let mut group = c.benchmark_group("irls");
    for n in [1_000, 10_000] {
        let (design, labels, weights) = logistic_problem(n);
        group.bench_with_input(BenchmarkId::from_parameter(n), &n, |b, _| {
            b.iter(|| fit_logistic_irls(black_box(&design), &labels, &weights, 0.0, &IrlsOptions::default()).unwrap())
        });
    }
    group.finish();
}

fn spline_design(c: &mut Criterion) {
    let data = cohort(5_000);
    let map = FeatureMap::spline();
    c.bench_function("spline_design_5000", |b| b.iter(|| build_design(black_box(&data), &map).unwrap()));
}

fn replicate(c: &mut Criterion) {
    let spec = ScenarioSpec::default();
    let sampler = MvnSampler::new(&spec.covariance()).unwrap();
    let mut group = c.benchmark_group("replicate");
    group.sample_size(10);
    group.bench_function("all_arms", |b| {
        b.iter(|| run_replicate(&spec, &sampler, black_box(0), &Arm::ALL).unwrap())
    });
    group.finish();
}

criterion_group!(benches, irls, spline_design, replicate);
criterion_main!(benches);
