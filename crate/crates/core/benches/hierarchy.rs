//! Sequential vs data-parallel posterior sampling and ranking.
//!
//! G = 10 treatments, Q* = 20 covariates, 100 000 draws.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use nalgebra::{DMatrix, DVector};

use rankforge_core::ranking::{personalized_hierarchy, HierarchyOptions};
use rankforge_core::stage2::sample_with;
use rankforge_core::{
    CovariateDescriptor, CovariateProfile, CovariateSchema, Direction, Execution, GaussianPosterior,
    GaussianPrior, NetworkSpec, ParameterLayout, TreatmentSet,
};

const G: usize = 10;
const Q: usize = 20;
const N: usize = 100_000;

fn setup() -> (NetworkSpec, GaussianPosterior, CovariateProfile) {
    let treatments = TreatmentSet::new((1..=G).map(|i| format!("T{i}"))).unwrap();
    let schema = CovariateSchema::new((0..Q).map(|j| CovariateDescriptor::continuous(format!("x{j}"))).collect()).unwrap();
    let network = NetworkSpec::new(treatments, schema, Direction::HigherBetter);
    let layout = ParameterLayout::for_network(&network);
    let p = layout.len();
    let mean = DVector::from_fn(p, |i, _| ((i * 7919) % 13) as f64 / 13.0 - 0.5);
    let b = DMatrix::from_fn(p, p, |i, j| if i == j { 0.3 } else { 0.01 * (((i + 3 * j) % 5) as f64 - 2.0) / p as f64 });
    let cov = &b * b.transpose();
    let prior = GaussianPrior::vague(p, 100.0).unwrap();
    let posterior = GaussianPosterior::new(layout, mean, cov, prior).unwrap();
    let profile = (0..Q).fold(CovariateProfile::new(), |p, j| p.with(format!("x{j}"), (j as f64 - 10.0) / 10.0));
    (network, posterior, profile)
}

fn bench(c: &mut Criterion) {
    let (network, posterior, profile) = setup();
    let mut group = c.benchmark_group("hierarchy");
    group.sample_size(10);
    for (name, exec) in [("sequential", Execution::Sequential), ("parallel", Execution::Parallel)] {
        group.bench_with_input(BenchmarkId::new("sample", name), &exec, |b, &exec| {
            b.iter(|| sample_with(&posterior, N, 1, exec).unwrap())
        });
        let samples = sample_with(&posterior, N, 1, exec).unwrap();
        let options = HierarchyOptions { seed: 1, execution: exec, ..HierarchyOptions::default() };
        group.bench_with_input(BenchmarkId::new("rank", name), &exec, |b, _| {
            b.iter(|| personalized_hierarchy(&samples, &profile, &network, &options).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, bench);
criterion_main!(benches);
