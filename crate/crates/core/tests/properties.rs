//! Property-level invariants: parser round-trips and totality, exact
//! Jacobians against finite differences, flow-distance envelopes, and the
//! integral-FLF sandwich/decrease inequalities with measured constants.

use contrakit::expr::{self, Expr, ExprKind};
use contrakit::flf::{self, FlfSpec};
use contrakit::lift::TangentPoint;
use contrakit::metric::{self, MetricSpec};
use contrakit::ode::{self, IntegratorConfig};
use contrakit::sample::SamplePlan;
use contrakit::system::SystemDef;
use nalgebra::DVector;
use proptest::prelude::*;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

// ---------------------------------------------------------------------------
// Parser properties
// ---------------------------------------------------------------------------

fn arb_expr(dim: usize) -> impl Strategy<Value = Expr> {
    let leaf = prop_oneof![
        (0u32..2000).prop_map(|k| parse_snippet(&format!("{}", k as f64 / 8.0))),
        (0..dim).prop_map(|i| parse_snippet(&format!("x{}", i + 1))),
        Just(parse_snippet("t")),
    ];
    leaf.prop_recursive(5, 64, 3, move |inner| {
        prop_oneof![
            inner.clone().prop_map(wrap_neg),
            (inner.clone(), inner.clone(), 0usize..5).prop_map(|(l, r, op)| wrap_bin(l, r, op)),
            (inner, 0usize..10).prop_map(|(c, f)| wrap_call(c, f)),
        ]
    })
}

fn parse_snippet(src: &str) -> Expr {
    expr::parse_expression(src, 9).unwrap()
}

fn wrap_neg(e: Expr) -> Expr {
    Expr {
        kind: ExprKind::Neg(Box::new(e)),
        span: 0,
    }
}

fn wrap_bin(l: Expr, r: Expr, op: usize) -> Expr {
    use contrakit::expr::BinOp::*;
    let op = [Add, Sub, Mul, Div, Pow][op];
    Expr {
        kind: ExprKind::Bin(op, Box::new(l), Box::new(r)),
        span: 0,
    }
}

fn wrap_call(c: Expr, f: usize) -> Expr {
    use contrakit::expr::Func::*;
    let f = [Sin, Cos, Tan, Exp, Log, Sqrt, Tanh, Sinh, Cosh, Atan][f];
    Expr {
        kind: ExprKind::Call(f, Box::new(c)),
        span: 0,
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    // Pretty-printing an AST and re-parsing yields a structurally
    // identical AST.
    #[test]
    fn print_parse_round_trip(e in arb_expr(9)) {
        let printed = e.to_string();
        let reparsed = expr::parse_expression(&printed, 9)
            .unwrap_or_else(|err| panic!("`{printed}` failed to reparse: {err}"));
        prop_assert_eq!(&reparsed, &e, "printed `{}`", printed);
    }

    // Parsing is total: every input yields an AST or a positioned error.
    #[test]
    fn parsing_never_panics(src in "\\PC*") {
        let _ = expr::parse_expression(&src, 3);
    }

    #[test]
    fn parsing_expression_like_soup_never_panics(
        src in "[-+*/^()a-z0-9. ]{0,64}"
    ) {
        let _ = expr::parse_expression(&src, 3);
    }
}

// ---------------------------------------------------------------------------
// Jacobian vs central finite differences
// ---------------------------------------------------------------------------

#[test]
fn jacobian_matches_central_differences_on_benchmarks() {
    let benchmarks: Vec<(Vec<&str>, usize)> = vec![
        (vec!["x2", "-sin(x1) - 0.5*x2"], 2),
        (vec!["-x1 - x1^3"], 1),
        (vec!["-(2 + sin(t))*x1"], 1),
        (vec!["-x1 + tanh(x2)", "-x2 + 0.3*cos(x1)"], 2),
        (vec!["exp(-x1^2)*x2", "x1/(1 + x2^2)"], 2),
    ];
    let mut rng = ChaCha8Rng::seed_from_u64(1234);
    for (srcs, n) in &benchmarks {
        let field: Vec<Expr> = srcs
            .iter()
            .map(|s| expr::parse_expression(s, *n).unwrap())
            .collect();
        for _ in 0..200 {
            let x = DVector::from_fn(*n, |_, _| rng.random_range(-1.0..1.0));
            let t = rng.random_range(0.0..10.0);
            let jac = expr::jacobian(&field, &x, t).unwrap();
            let h = 1e-5;
            for col in 0..*n {
                let mut xp = x.clone();
                let mut xm = x.clone();
                xp[col] += h;
                xm[col] -= h;
                for (row, e) in field.iter().enumerate() {
                    let fd = (expr::eval_expr(e, &xp, t).unwrap()
                        - expr::eval_expr(e, &xm, t).unwrap())
                        / (2.0 * h);
                    let err = (jac[(row, col)] - fd).abs();
                    assert!(
                        err <= 1e-6 * (1.0 + fd.abs()),
                        "{srcs:?} entry ({row},{col}) at x={x:?}: ad={} fd={fd}",
                        jac[(row, col)]
                    );
                }
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Flow-distance envelope from the Lipschitz constant
// ---------------------------------------------------------------------------

#[test]
fn flow_distance_envelope_from_lipschitz_constant() {
    let sys = SystemDef::parse("state = [\"x1\"]\nf = [\"-x1 - x1^3\"]").unwrap();
    // sampled sup of |J| underestimates the true Lipschitz constant;
    // inflate by the estimator's documented 2% band
    let lip = metric::lipschitz(&sys, &[0.0], 2000, 9).unwrap().value * 1.05;
    let cfg = IntegratorConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    for _ in 0..20 {
        let a = DVector::from_vec(vec![rng.random_range(-1.0..1.0)]);
        let b = DVector::from_vec(vec![rng.random_range(-1.0..1.0)]);
        let d0 = metric::distance(&sys.metric, &a, &b).unwrap().distance;
        if d0 < 1e-6 {
            continue;
        }
        let ta = ode::integrate(&sys, &a, 0.0, 2.0, &cfg).unwrap();
        let tb = ode::integrate(&sys, &b, 0.0, 2.0, &cfg).unwrap();
        for i in 1..=10 {
            let tau = 0.2 * i as f64;
            let d = metric::distance(&sys.metric, &ta.eval(tau), &tb.eval(tau))
                .unwrap()
                .distance;
            let lower = d0 * (-lip * tau).exp() - 1e-9;
            let upper = d0 * (lip * tau).exp() + 1e-9;
            assert!(
                d >= lower && d <= upper,
                "tau={tau}: d={d} outside [{lower}, {upper}]"
            );
        }
    }
}

// ---------------------------------------------------------------------------
// Integral-FLF sandwich and decrease with measured constants
// ---------------------------------------------------------------------------

struct Benchmark {
    sys: SystemDef,
    // valid decay envelope |Lie(v)(t)| <= K e^{-lambda t} |v|
    big_k: f64,
    lambda: f64,
}

fn flf_benchmarks() -> Vec<Benchmark> {
    vec![
        Benchmark {
            sys: SystemDef::parse("state = [\"x1\"]\nf = [\"-x1\"]").unwrap(),
            big_k: 1.0,
            lambda: 1.0,
        },
        Benchmark {
            // J = -1 - 3x^2 <= -1 pointwise on the default box
            sys: SystemDef::parse("state = [\"x1\"]\nf = [\"-x1 - x1^3\"]").unwrap(),
            big_k: 1.0,
            lambda: 1.0,
        },
    ]
}

#[test]
fn integral_flf_sandwich_holds_with_measured_constants() {
    let cfg = IntegratorConfig::default();
    let (p, delta) = (2.0, 1.0);
    for bench in flf_benchmarks() {
        let lip = metric::lipschitz(&bench.sys, &[0.0], 1000, 5).unwrap().value;
        let bounds = flf::sandwich_constants(lip, bench.lambda, bench.big_k, p, delta).unwrap();
        let spec = FlfSpec::integral(p, delta, MetricSpec::Euclidean).unwrap();
        let mut plan = SamplePlan::new(&bench.sys, 41);
        plan.states = 250;
        plan.tangents = 2;
        let states = plan.sample_states();
        let times = plan.sample_times();
        let tangents = plan.sample_unit_tangents(&spec.metric, &states).unwrap();
        for ((x, t), vs) in states.iter().zip(times.iter()).zip(tangents.iter()) {
            for v in vs {
                let tp = TangentPoint::new(x.clone(), v.clone()).unwrap();
                let value = flf::integral_eval(&bench.sys, &spec, *t, &tp, &cfg).unwrap();
                let vnorm = metric::norm(&spec.metric, x, v).unwrap();
                let lo = bounds.c1 * vnorm.powf(p);
                let hi = bounds.c2 * vnorm.powf(p);
                assert!(
                    value >= lo - 1e-6 && value <= hi + 1e-6,
                    "{}: V={value} outside [{lo}, {hi}] at x={x:?}",
                    bench.sys.name
                );
            }
        }
    }
}

#[test]
fn integral_flf_decrease_at_derived_rate() {
    let cfg = IntegratorConfig::default();
    let (p, delta) = (2.0, 1.0);
    for bench in flf_benchmarks() {
        let lip = metric::lipschitz(&bench.sys, &[0.0], 1000, 5).unwrap().value;
        let bounds = flf::sandwich_constants(lip, bench.lambda, bench.big_k, p, delta).unwrap();
        let k = bounds.k.expect("decrease rate must exist for delta = 1");
        let spec = FlfSpec::integral(p, delta, MetricSpec::Euclidean).unwrap();
        let mut plan = SamplePlan::new(&bench.sys, 43);
        plan.states = 100;
        let states = plan.sample_states();
        let times = plan.sample_times();
        let tangents = plan.sample_unit_tangents(&spec.metric, &states).unwrap();
        for ((x, t), vs) in states.iter().zip(times.iter()).zip(tangents.iter()) {
            let tp = TangentPoint::new(x.clone(), vs[0].clone()).unwrap();
            let value = flf::integral_eval(&bench.sys, &spec, *t, &tp, &cfg).unwrap();
            let deriv = flf::lie_derivative(&bench.sys, &spec, *t, &tp, &cfg).unwrap();
            assert!(
                deriv <= -k * value + 1e-5,
                "{}: LV={deriv} > -kV={} at x={x:?}",
                bench.sys.name,
                -k * value
            );
        }
    }
}

#[test]
fn lie_derivative_identity_vs_finite_difference() {
    let cfg = IntegratorConfig::default();
    let systems = [
        SystemDef::parse("state = [\"x1\"]\nf = [\"-x1 - x1^3\"]").unwrap(),
        SystemDef::parse("state = [\"x1\"]\nf = [\"-(2 + sin(t))*x1\"]").unwrap(),
    ];
    for sys in &systems {
        let spec = FlfSpec::integral(2.0, 1.0, MetricSpec::Euclidean).unwrap();
        let mut plan = SamplePlan::new(sys, 47);
        plan.states = 100;
        let states = plan.sample_states();
        let times = plan.sample_times();
        let tangents = plan.sample_unit_tangents(&spec.metric, &states).unwrap();
        for ((x, t), vs) in states.iter().zip(times.iter()).zip(tangents.iter()) {
            let tp = TangentPoint::new(x.clone(), vs[0].clone()).unwrap();
            let parts = flf::lie_derivative_parts(sys, &spec, *t, &tp, &cfg).unwrap();
            assert!(
                (parts.fd - parts.value).abs() <= 1e-4,
                "{}: identity {} vs fd {} at x={x:?}",
                sys.name,
                parts.value,
                parts.fd
            );
        }
    }
}
