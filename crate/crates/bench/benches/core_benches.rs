use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use nalgebra::dvector;

use contrakit::certify::{self, Thresholds};
use contrakit::expr;
use contrakit::flf::{self, FlfSpec};
use contrakit::lift::{self, TangentPoint};
use contrakit::metric::{self, MetricSpec};
use contrakit::ode::{self, IntegratorConfig};
use contrakit::sample::SamplePlan;
use contrakit_bench::{damped_cubic, pendulum};

fn bench_jacobian(c: &mut Criterion) {
    let sys = pendulum();
    let x = dvector![0.4, -0.2];
    c.bench_function("jacobian_pendulum", |b| {
        b.iter(|| sys.jacobian(black_box(0.0), black_box(&x)).unwrap())
    });
}

fn bench_integrate(c: &mut Criterion) {
    let sys = pendulum();
    let cfg = IntegratorConfig::default();
    let x0 = dvector![0.8, 0.0];
    c.bench_function("integrate_pendulum_10s", |b| {
        b.iter(|| ode::integrate(&sys, black_box(&x0), 0.0, 10.0, &cfg).unwrap())
    });
}

fn bench_lie_transport(c: &mut Criterion) {
    let sys = pendulum();
    let cfg = IntegratorConfig::default();
    let tp = TangentPoint::new(dvector![0.8, 0.0], dvector![1.0, 0.0]).unwrap();
    c.bench_function("lie_transport_pendulum_5s", |b| {
        b.iter(|| lift::lie_transport(&sys, black_box(&tp), 0.0, 5.0, &cfg).unwrap())
    });
}

fn bench_flf_integral(c: &mut Criterion) {
    let sys = damped_cubic();
    let spec = FlfSpec::integral(2.0, 1.0, MetricSpec::Euclidean).unwrap();
    let cfg = IntegratorConfig::default();
    let tp = TangentPoint::new(dvector![0.7], dvector![1.0]).unwrap();
    c.bench_function("flf_integral_eval", |b| {
        b.iter(|| flf::integral_eval(&sys, &spec, 0.0, black_box(&tp), &cfg).unwrap())
    });
}

fn bench_geodesic(c: &mut Criterion) {
    let m = MetricSpec::DiagExpr(vec![expr::parse_expression("exp(2*x1)", 1).unwrap()]);
    let a = dvector![0.0];
    let bpt = dvector![1.0];
    c.bench_function("geodesic_exp_metric", |b| {
        b.iter(|| metric::distance(&m, black_box(&a), black_box(&bpt)).unwrap())
    });
}

fn bench_demidovich(c: &mut Criterion) {
    let sys = damped_cubic();
    let mut plan = SamplePlan::new(&sys, 1);
    plan.states = 100;
    let thr = Thresholds::default();
    c.bench_function("demidovich_100_samples", |b| {
        b.iter(|| {
            certify::demidovich_check(&sys, &MetricSpec::Euclidean, 1.0, black_box(&plan), &thr)
                .unwrap()
        })
    });
}

criterion_group!(
    benches,
    bench_jacobian,
    bench_integrate,
    bench_lie_transport,
    bench_flf_integral,
    bench_geodesic,
    bench_demidovich
);
criterion_main!(benches);
