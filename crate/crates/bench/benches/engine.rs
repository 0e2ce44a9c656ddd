use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use repgeo_core::calculus;
use repgeo_core::charts::{make_chart, ChartKind};
use repgeo_core::curvature::{christoffel, endomorphism_sharpness, riemannian_hessian};
use repgeo_core::dynamics::{equivariant_reparam_flow, flow, Integrator};
use repgeo_core::harness::{BuiltinLoss, LossSpec};
use repgeo_core::metrics::{
    damped, euclidean, ggn, pushforward_metric_field, GgnMetric, MetricField,
};

fn mlp_problem(hidden: usize, samples: usize) -> BuiltinLoss {
    BuiltinLoss::from_spec(
        &LossSpec::SineMlp {
            hidden,
            samples,
            noise: 0.3,
            weight_decay: 0.0,
        },
        0,
    )
    .unwrap()
}

fn differentiation(c: &mut Criterion) {
    let loss = mlp_problem(16, 150);
    let theta = loss.mlp().unwrap().init.clone();
    let mut group = c.benchmark_group("differentiation");
    group.bench_function("mlp_gradient_d49", |b| {
        b.iter(|| calculus::gradient(&loss, black_box(&theta)).unwrap())
    });
    group.bench_function("mlp_hessian_d49", |b| {
        b.iter(|| calculus::hessian(&loss, black_box(&theta)).unwrap())
    });
    group.finish();
}

fn metrics(c: &mut Criterion) {
    let loss = mlp_problem(8, 60);
    let problem = loss.mlp().unwrap();
    let theta = problem.init.clone();
    // The raw GGN of a tanh network is singular at initialization.
    let metric = damped(GgnMetric(problem.spec.clone()), 0.1).unwrap();
    let mut group = c.benchmark_group("metrics");
    group.bench_function("ggn_d25", |b| {
        b.iter(|| ggn(&problem.spec, black_box(&theta)).unwrap())
    });
    group.bench_function("christoffel_damped_ggn_d25", |b| {
        b.iter(|| christoffel(&metric, black_box(&theta)).unwrap())
    });
    group.bench_function("riemannian_hessian_damped_ggn_d25", |b| {
        b.iter(|| riemannian_hessian(&loss, &metric, black_box(&theta)).unwrap())
    });
    let g = metric.eval(&theta).unwrap();
    let h = calculus::hessian(&loss, &theta).unwrap();
    group.bench_function("endomorphism_sharpness_d25", |b| {
        b.iter(|| endomorphism_sharpness(black_box(&g), black_box(&h)).unwrap())
    });
    group.finish();
}

fn flows(c: &mut Criterion) {
    let loss = BuiltinLoss::from_spec(&LossSpec::unit_quadratic(2), 0).unwrap();
    let chart = make_chart(&ChartKind::ElementwiseExp, 2).unwrap();
    let metric = euclidean(2);
    let theta0 = [1.0, -0.5];
    let psi0 = chart.apply(&theta0).unwrap();
    let mut group = c.benchmark_group("flows");
    group.bench_function("rk4_100_steps", |b| {
        b.iter(|| {
            flow(
                &loss,
                &metric,
                black_box(&theta0),
                0.01,
                100,
                Integrator::Rk4,
            )
            .unwrap()
        })
    });
    group.bench_function("equivariant_rk4_100_steps", |b| {
        b.iter(|| {
            equivariant_reparam_flow(
                &loss,
                &metric,
                &chart,
                black_box(&psi0),
                0.01,
                100,
                Integrator::Rk4,
            )
            .unwrap()
        })
    });
    let pushed = pushforward_metric_field(&chart, euclidean(2));
    group.bench_function("pushforward_metric_christoffel", |b| {
        b.iter(|| christoffel(&pushed, black_box(&psi0)).unwrap())
    });
    group.finish();
}

criterion_group!(benches, differentiation, metrics, flows);
criterion_main!(benches);
