use std::hint::black_box;

use bideconv::estimator::{step_pi, FitConfig};
use bideconv::{
    pair_loglik, sample_truth, simulate_dataset, std_binorm_cdf, CellRule, ComponentParams, FeatureTheta,
    LikelihoodConfig, PairedObservation, SimConfig, TumourFractions,
};
use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

fn theta() -> FeatureTheta {
    FeatureTheta {
        tumour: ComponentParams::new(3.3, 3.3, 0.3, 0.3, 0.95).unwrap(),
        background: ComponentParams::new(1.5, 1.6, 0.3, 0.3, 0.7).unwrap(),
    }
}

fn binorm(c: &mut Criterion) {
    c.bench_function("std_binorm_cdf", |b| {
        b.iter(|| std_binorm_cdf(black_box(0.4), black_box(-1.2), black_box(0.7)).unwrap())
    });
}

fn pair(c: &mut Criterion) {
    let obs = PairedObservation::new(9.0, 6.0).unwrap();
    let pi = TumourFractions { pi0: 0.3, pi1: 0.05 };
    let th = theta();
    let mut g = c.benchmark_group("pair_loglik");
    for m in [8, 16, 32] {
        for rule in [CellRule::Hybrid, CellRule::Midpoint] {
            let cfg = LikelihoodConfig { m, rule, ..LikelihoodConfig::default() };
            g.bench_with_input(BenchmarkId::new(format!("{rule:?}"), m), &cfg, |b, cfg| {
                b.iter(|| pair_loglik(black_box(&obs), black_box(&pi), &th, cfg).unwrap())
            });
        }
    }
    g.finish();
}

fn pi_step(c: &mut Criterion) {
    let sim = SimConfig { n_patients: 20, n_features: 100, ..SimConfig::default() };
    let truth = sample_truth(&sim, None).unwrap();
    let data = simulate_dataset(&truth, sim.noise_sd, 3).unwrap();
    let cfg = FitConfig::default();
    let start = vec![cfg.pi_init; sim.n_patients];
    let mut g = c.benchmark_group("step");
    g.sample_size(10);
    g.bench_function("pi_20x100", |b| b.iter(|| step_pi(&data, &truth.theta, &start, &cfg).unwrap()));
    g.finish();
}

criterion_group!(benches, binorm, pair, pi_step);
criterion_main!(benches);
