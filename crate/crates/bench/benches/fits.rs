use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use revar::asymptotics::{avar_all, ParameterVectors};
use revar::sim::{generate_true_parameters, replication_rng, simulate_from};
use revar::{
    fit_olsvar, fit_revar, fit_rrvar, forecast_h, select_rank, Algorithm, AutocovarianceSet, Dims, ErrorFamily,
    OptimizerOptions,
};
use std::hint::black_box;

fn moments(dims: Dims, t: usize) -> AutocovarianceSet {
    let params = generate_true_parameters(dims, 11).expect("stable draw");
    let sim = simulate_from(&params, ErrorFamily::Normal, t, &mut replication_rng(5, 0, 0)).expect("simulate");
    AutocovarianceSet::from_design(&sim.design(dims.p).expect("design")).expect("moments")
}

fn closed_form(c: &mut Criterion) {
    let acov = moments(Dims::new(3, 4, 1, 7), 1000);
    let mut g = c.benchmark_group("closed_form");
    g.bench_function("olsvar_q7", |b| b.iter(|| fit_olsvar(black_box(&acov)).unwrap()));
    g.bench_function("rrvar_q7_d3", |b| b.iter(|| fit_rrvar(black_box(&acov), 3).unwrap()));
    g.bench_function("rank_test_q7", |b| {
        b.iter(|| select_rank(black_box(&acov), 0.05).unwrap())
    });
    g.finish();
}

fn envelope(c: &mut Criterion) {
    let mut g = c.benchmark_group("revar");
    g.sample_size(20);
    let opts = OptimizerOptions::default();
    for (dims, t) in [(Dims::new(3, 4, 1, 7), 700), (Dims::new(5, 10, 1, 20), 1200)] {
        let acov = moments(dims, t);
        let algorithms: &[Algorithm] = if dims.q <= 10 {
            &[Algorithm::Fg, Algorithm::OneD]
        } else {
            &[Algorithm::OneD, Algorithm::Auto]
        };
        for &alg in algorithms {
            let id = BenchmarkId::new(format!("{alg:?}"), format!("q{}_u{}", dims.q, dims.u));
            g.bench_with_input(id, &acov, |b, acov| {
                b.iter(|| fit_revar(acov, dims.d, dims.u, alg, &opts).unwrap())
            });
        }
    }
    g.finish();
}

fn asymptotics(c: &mut Criterion) {
    let dims = Dims::new(3, 4, 1, 7);
    let acov = moments(dims, 1000);
    let est = fit_revar(&acov, 3, 4, Algorithm::Fg, &OptimizerOptions::default()).unwrap();
    let params = ParameterVectors::from_estimate(&est, &acov.gamma_p).unwrap();
    c.bench_function("avar_all_q7", |b| b.iter(|| avar_all(black_box(&params)).unwrap()));

    let recent = simulate_from(
        &generate_true_parameters(dims, 11).unwrap(),
        ErrorFamily::Normal,
        50,
        &mut replication_rng(6, 0, 0),
    )
    .unwrap();
    let history = recent.data.values();
    c.bench_function("forecast_h8_q7", |b| {
        b.iter(|| forecast_h(&est, black_box(history), 8).unwrap())
    });
}

criterion_group!(benches, closed_form, envelope, asymptotics);
criterion_main!(benches);
