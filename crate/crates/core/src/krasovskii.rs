//! Krasovskii-style Lyapunov functions built from the system's own
//! vector fields.
//!
//! If a time-invariant field h commutes with f (`[f, h] = 0`), then
//! `W(t, x) = V(t, x, h(x))` inherits the decrease of a Finsler-Lyapunov
//! function V: the transported h(x0) stays equal to h evaluated along the
//! flow, so the Lie derivative of W along f equals the Lie derivative of
//! V along the lifted flow. For autonomous f one can always take h = f.
//! The classical construction `W = f' P f` with
//! `P J + J' P <= -Q` is the quadratic special case.
//!
//! Everything here is checked numerically on sampled points and
//! trajectories: the bracket residual, the transported-field identity,
//! the decay `dW/dt <= -k W`, positivity of W away from the equilibrium,
//! and the radial growth of |h| (the latter fitted and reported, not
//! assumed).

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::certify::{pooled_log_fit, Thresholds};
use crate::error::{Error, Result};
use crate::expr::{self, Expr};
use crate::flf::{self, FlfSpec};
use crate::lift::{self, TangentPoint};
use crate::metric::{self, MetricSpec};
use crate::ode::{self, IntegratorConfig};
use crate::report::{
    echo_int, echo_num, echo_str, CertReport, ConfigEcho, RateEstimate, Verdict, Violation,
};
use crate::sample::SamplePlan;
use crate::system::SystemDef;

/// Tolerance of the transported-field identity
/// `Lie(h(x0))(t; t0) = h(phi(t; t0, x0))`.
pub const TRANSPORT_IDENTITY_TOL: f64 = 1e-5;

/// Default slack for the `dW/dt <= -k W` trajectory check. Finite
/// differences of W ride on the dense-output interpolant, whose error is
/// of this order relative to W.
pub const W_DECAY_TOL: f64 = 1e-4;

/// `[f, h] = (df/dx) h - (dh/dx) f` at (x, t); h must be time-invariant.
pub fn lie_bracket(
    f: &[Expr],
    h: &[Expr],
    x: &DVector<f64>,
    t: f64,
) -> Result<DVector<f64>> {
    if h.iter().any(|e| e.references_time()) {
        return Err(Error::Precondition(
            "lie_bracket requires a time-invariant h".into(),
        ));
    }
    let n = x.len();
    let jf = expr::jacobian(f, x, t)?;
    let jh = expr::jacobian(h, x, 0.0)?;
    let mut fx = DVector::zeros(n);
    let mut hx = DVector::zeros(n);
    expr::eval_field(f, x, t, &mut fx)?;
    expr::eval_field(h, x, 0.0, &mut hx)?;
    Ok(jf * hx - jh * fx)
}

/// Bracket residuals over a sample plan.
#[derive(Debug, Clone)]
pub struct BracketReport {
    pub max_residual: f64,
    pub residuals: Vec<f64>,
    /// All residuals within the scaled tolerance
    /// `1e-8 (1 + |f| |h|)`.
    pub commuting: bool,
}

/// Check `[f, h] = 0` on sampled (x, t), in the system metric.
pub fn commutation_check(sys: &SystemDef, plan: &SamplePlan) -> Result<BracketReport> {
    let h = effective_h(sys)?;
    let states = plan.sample_states();
    let times = plan.sample_times();
    let mut residuals = Vec::with_capacity(states.len());
    let mut commuting = true;
    let mut max_residual: f64 = 0.0;
    for (x, &t) in states.iter().zip(times.iter()) {
        let bracket = lie_bracket(&sys.f, h, x, t)?;
        let res = metric::norm(&sys.metric, x, &bracket)?;
        let mut fx = DVector::zeros(sys.dim());
        let mut hx = DVector::zeros(sys.dim());
        sys.eval_f(t, x, &mut fx)?;
        expr::eval_field(h, x, 0.0, &mut hx)?;
        let fn_ = metric::norm(&sys.metric, x, &fx)?;
        let hn = metric::norm(&sys.metric, x, &hx)?;
        if res > 1e-8 * (1.0 + fn_ * hn) {
            commuting = false;
        }
        max_residual = max_residual.max(res);
        residuals.push(res);
    }
    Ok(BracketReport {
        max_residual,
        residuals,
        commuting,
    })
}

/// The companion field used by the Krasovskii construction: the declared
/// h, or f itself when f is autonomous.
pub fn effective_h(sys: &SystemDef) -> Result<&[Expr]> {
    if let Some(h) = &sys.h {
        return Ok(h);
    }
    if sys.is_autonomous() {
        return Ok(&sys.f);
    }
    Err(Error::Precondition(
        "time-varying f needs an explicit time-invariant companion field h".into(),
    ))
}

/// `W(t, x) = V(t, (x, h(x)))` with V evaluated by the FLF machinery.
pub fn w_value(
    sys: &SystemDef,
    spec: &FlfSpec,
    t: f64,
    x: &DVector<f64>,
    cfg: &IntegratorConfig,
) -> Result<f64> {
    let h = effective_h(sys)?;
    let mut hx = DVector::zeros(sys.dim());
    expr::eval_field(h, x, 0.0, &mut hx)?;
    let tp = TangentPoint::new(x.clone(), hx)?;
    flf::value(sys, spec, t, &tp, cfg)
}

/// Fitted radial growth of |h|: `k1 d(x, x*)^q <= |h(x)| <= k2 d(x, x*)^q`.
#[derive(Debug, Clone, Copy)]
pub struct GrowthFit {
    pub k1: f64,
    pub k2: f64,
    pub q: f64,
}

#[derive(Debug, Clone)]
pub struct LyapunovCheck {
    /// min W over sampled points outside the exclusion ball around x*.
    pub positivity_margin: f64,
    /// Fitted decay rate of W along sampled trajectories.
    pub decay_rate: f64,
    /// Worst residual of the transported-field identity.
    pub transport_max_err: f64,
    pub violations: Vec<Violation>,
    pub growth: GrowthFit,
    pub trajectories: usize,
}

impl LyapunovCheck {
    pub fn passed(&self) -> bool {
        self.positivity_margin > 0.0 && self.violations.is_empty()
    }
}

/// Verify the Krasovskii construction along sampled trajectories:
///
/// (a) the transported-field identity
///     `Lie(h(x0))(t; t0) = h(phi(t; t0, x0))` within 1e-5;
/// (b) `dW/dt <= -k W + tol`, with dW/dt by central finite differences of
///     W on the dense output;
/// (c) positivity of W away from the equilibrium.
///
/// Fails with a precondition error when `[f, h] != 0` on the plan.
pub fn verify(
    sys: &SystemDef,
    spec: &FlfSpec,
    k_expected: f64,
    plan: &SamplePlan,
    cfg: &IntegratorConfig,
    tol: f64,
) -> Result<LyapunovCheck> {
    if plan.states == 0 {
        return Err(Error::Precondition("sample plan has zero states".into()));
    }
    let bracket = commutation_check(sys, plan)?;
    if !bracket.commuting {
        return Err(Error::Precondition(format!(
            "companion field does not commute with f (max residual {})",
            bracket.max_residual
        )));
    }
    let h = effective_h(sys)?;
    let x_star = sys
        .equilibrium
        .clone()
        .unwrap_or_else(|| DVector::zeros(sys.dim()));

    let states = plan.sample_states();
    let grid = plan.time_grid();
    let fd_h = 1e-4;

    struct TrajOut {
        transport_err: f64,
        decay_points: Vec<(f64, f64)>,
        violations: Vec<Violation>,
    }

    let outcomes: Vec<Result<TrajOut>> = states
        .par_iter()
        .map(|x0| {
            let mut h0 = DVector::zeros(sys.dim());
            expr::eval_field(h, x0, 0.0, &mut h0)?;
            let tp = TangentPoint::new(x0.clone(), h0)?;
            let traj =
                lift::transport_trajectory(sys, &tp, plan.t0, plan.t0 + plan.horizon, cfg)?;
            let mut transport_err: f64 = 0.0;
            let mut decay_points = Vec::new();
            let mut violations = Vec::new();
            let w_at = |s: f64| -> Result<f64> {
                let p = TangentPoint::from_stacked(&traj.eval(s));
                let mut hx = DVector::zeros(sys.dim());
                expr::eval_field(h, &p.x, 0.0, &mut hx)?;
                flf::value(sys, spec, s, &TangentPoint::new(p.x, hx)?, cfg)
            };
            for &s in &grid {
                let p = TangentPoint::from_stacked(&traj.eval(s));
                let mut hx = DVector::zeros(sys.dim());
                expr::eval_field(h, &p.x, 0.0, &mut hx)?;
                let err = (&p.v - &hx).norm();
                transport_err = transport_err.max(err);
                if err > TRANSPORT_IDENTITY_TOL {
                    violations.push(Violation {
                        t: s,
                        x: p.x.as_slice().to_vec(),
                        v: p.v.as_slice().to_vec(),
                        slack: err - TRANSPORT_IDENTITY_TOL,
                    });
                }
                let w = flf::value(sys, spec, s, &TangentPoint::new(p.x.clone(), hx)?, cfg)?;
                if w > 0.0 {
                    decay_points.push((s - plan.t0, w.ln()));
                }
                // dW/dt <= -k W + tol by finite differences on the dense
                // output: central inside the window, second-order one-sided
                // stencils at the ends
                let wdot = if s - fd_h < plan.t0 {
                    (-3.0 * w_at(s)? + 4.0 * w_at(s + fd_h)? - w_at(s + 2.0 * fd_h)?)
                        / (2.0 * fd_h)
                } else if s + fd_h > plan.t0 + plan.horizon {
                    (3.0 * w_at(s)? - 4.0 * w_at(s - fd_h)? + w_at(s - 2.0 * fd_h)?)
                        / (2.0 * fd_h)
                } else {
                    (w_at(s + fd_h)? - w_at(s - fd_h)?) / (2.0 * fd_h)
                };
                let slack = wdot + k_expected * w;
                if slack > tol {
                    violations.push(Violation {
                        t: s,
                        x: p.x.as_slice().to_vec(),
                        v: p.v.as_slice().to_vec(),
                        slack,
                    });
                }
            }
            Ok(TrajOut {
                transport_err,
                decay_points,
                violations,
            })
        })
        .collect();

    let mut transport_max_err: f64 = 0.0;
    let mut pooled = Vec::new();
    let mut violations = Vec::new();
    for out in outcomes {
        let out = out?;
        transport_max_err = transport_max_err.max(out.transport_err);
        pooled.extend(out.decay_points);
        violations.extend(out.violations);
    }
    let (slope, _, _) = pooled_log_fit(&pooled);
    let decay_rate = -slope;

    // positivity of W off a neighborhood of x*
    let excl = 0.05
        * sys
            .domain
            .iter()
            .map(|&(lo, hi)| hi - lo)
            .fold(0.0f64, f64::max);
    let mut positivity_margin = f64::INFINITY;
    let mut growth_points = Vec::new();
    for x in &states {
        let d = metric::distance(&sys.metric, x, &x_star)?.distance;
        if d < excl {
            continue;
        }
        let w = w_value(sys, spec, plan.t0, x, cfg)?;
        positivity_margin = positivity_margin.min(w);
        let mut hx = DVector::zeros(sys.dim());
        expr::eval_field(h, x, 0.0, &mut hx)?;
        let hn = metric::norm(&sys.metric, x, &hx)?;
        if hn > 0.0 && d > 1e-9 {
            growth_points.push((d.ln(), hn.ln()));
        }
    }
    if positivity_margin <= 0.0 && positivity_margin.is_finite() {
        violations.push(Violation {
            t: plan.t0,
            x: Vec::new(),
            v: Vec::new(),
            slack: -positivity_margin,
        });
    }

    // radial growth hypothesis: fit q, then envelope constants
    let (q, logk, _) = pooled_log_fit(&growth_points);
    let mut k1 = f64::INFINITY;
    let mut k2: f64 = 0.0;
    for &(ld, lh) in &growth_points {
        let ratio = (lh - q * ld).exp();
        k1 = k1.min(ratio);
        k2 = k2.max(ratio);
    }
    if growth_points.is_empty() {
        k1 = f64::NAN;
        k2 = f64::NAN;
    }
    let _ = logk;

    Ok(LyapunovCheck {
        positivity_margin,
        decay_rate,
        transport_max_err,
        violations,
        growth: GrowthFit { k1, k2, q },
        trajectories: states.len(),
    })
}

/// Classical Krasovskii check plus the verified construction.
#[derive(Debug, Clone)]
pub struct ClassicalKrasovskii {
    pub report: CertReport,
    /// Present when the pointwise inequality passed and the quadratic
    /// candidate `W = f' P f` was verified along trajectories.
    pub lyapunov: Option<LyapunovCheck>,
    /// Decrease rate used for the verification,
    /// `lambda_min(P^(-1/2) Q P^(-1/2))`.
    pub rate: f64,
}

/// Check `P J(x,t) + J(x,t)' P <= -Q` on sampled points; on success
/// register `W = f' P f` (the quadratic FLF in metric P evaluated at
/// v = f) and verify it along trajectories with h = f.
pub fn classical_check(
    sys: &SystemDef,
    p: &DMatrix<f64>,
    q: &DMatrix<f64>,
    plan: &SamplePlan,
    cfg: &IntegratorConfig,
    thresholds: &Thresholds,
) -> Result<ClassicalKrasovskii> {
    let n = sys.dim();
    for (name, m) in [("P", p), ("Q", q)] {
        if m.nrows() != n || m.ncols() != n {
            return Err(Error::Dimension {
                context: format!("matrix {name}"),
                expected: n,
                got: m.nrows(),
            });
        }
        let scale = m.amax().max(1.0);
        if (m - m.transpose()).amax() > 1e-12 * scale {
            return Err(Error::Precondition(format!("{name} must be symmetric")));
        }
        let eig = m.clone().symmetric_eigen();
        if eig.eigenvalues.iter().any(|&l| l <= 0.0) {
            return Err(Error::Precondition(format!(
                "{name} must be symmetric positive definite"
            )));
        }
    }

    let states = plan.sample_states();
    let times = plan.sample_times();
    let mut margin = f64::NEG_INFINITY;
    let mut violations = Vec::new();
    for (x, &t) in states.iter().zip(times.iter()) {
        let jac = sys.jacobian(t, x)?;
        let s = p * &jac + jac.transpose() * p + q;
        let slack = s
            .symmetric_eigen()
            .eigenvalues
            .iter()
            .cloned()
            .fold(f64::NEG_INFINITY, f64::max);
        margin = margin.max(slack);
        if slack > thresholds.tol {
            violations.push(Violation {
                t,
                x: x.as_slice().to_vec(),
                v: Vec::new(),
                slack,
            });
        }
    }

    // decrease rate of W = f'Pf implied by Q: lambda_min(P^-1/2 Q P^-1/2)
    let (_, p_inv_sqrt) = metric::spd_sqrt_pair(p)?;
    let rate = (&p_inv_sqrt * q * &p_inv_sqrt)
        .symmetric_eigen()
        .eigenvalues
        .iter()
        .cloned()
        .fold(f64::INFINITY, f64::min);

    let mut echo = ConfigEcho::new();
    echo_str(&mut echo, "check", "classical_krasovskii");
    echo_num(&mut echo, "rate", rate);
    echo_int(&mut echo, "dim", n);
    {
        use crate::report::json_num;
        use serde_json::Value;
        let flat = |m: &DMatrix<f64>| {
            Value::Array(
                m.row_iter()
                    .map(|r| Value::Array(r.iter().map(|&v| json_num(v)).collect()))
                    .collect(),
            )
        };
        echo.insert("P".into(), flat(p));
        echo.insert("Q".into(), flat(q));
    }
    {
        // reuse the common knob echo
        echo_int(&mut echo, "seed", plan.seed as usize);
        echo_int(&mut echo, "states", plan.states);
        echo_int(&mut echo, "times", plan.times);
        echo_num(&mut echo, "t0", plan.t0);
        echo_num(&mut echo, "horizon", plan.horizon);
        echo_num(&mut echo, "tol", thresholds.tol);
        echo_num(&mut echo, "rate_threshold", thresholds.rate_threshold);
    }

    let passed = violations.is_empty();
    let report = CertReport {
        verdict: if passed { Verdict::Ies } else { Verdict::Inconclusive },
        rate: RateEstimate {
            k: Some(rate),
            lambda: None,
            r_squared: None,
        },
        margin,
        violations,
        samples: states.len(),
        skipped: 0,
        notes: Vec::new(),
        config: echo,
    };

    let lyapunov = if passed && sys.is_autonomous() {
        let spec = FlfSpec::quadratic(MetricSpec::Constant(p.clone()));
        Some(verify(sys, &spec, rate, plan, cfg, W_DECAY_TOL)?)
    } else {
        None
    };

    Ok(ClassicalKrasovskii {
        report,
        lyapunov,
        rate,
    })
}

/// Decay of `W(t, x) = |f(x, t)|` along sampled trajectories: the
/// matrix-measure pathway for time-varying fields, where no commuting h
/// is available.
#[derive(Debug, Clone, Copy)]
pub struct DecayEstimate {
    pub rate: f64,
    pub r_squared: f64,
    pub trajectories: usize,
}

pub fn fnorm_decay(
    sys: &SystemDef,
    plan: &SamplePlan,
    cfg: &IntegratorConfig,
) -> Result<DecayEstimate> {
    Ok(fnorm_decay_detailed(sys, plan, cfg)?.0)
}

/// A `(t, value)` curve along one trajectory.
pub type ValueSeries = Vec<(f64, f64)>;

/// As [`fnorm_decay`], also returning the `(t, |f|)` curve of each
/// trajectory for export.
pub fn fnorm_decay_detailed(
    sys: &SystemDef,
    plan: &SamplePlan,
    cfg: &IntegratorConfig,
) -> Result<(DecayEstimate, Vec<ValueSeries>)> {
    let states = plan.sample_states();
    let grid = plan.time_grid();
    let mut pooled = Vec::new();
    let mut curves = Vec::new();
    let mut kept = 0usize;
    for x0 in &states {
        let traj = ode::integrate(sys, x0, plan.t0, plan.t0 + plan.horizon, cfg)?;
        let mut f = DVector::zeros(sys.dim());
        let mut series = Vec::new();
        let mut curve = Vec::with_capacity(grid.len());
        for &t in &grid {
            let x = traj.eval(t);
            sys.eval_f(t, &x, &mut f)?;
            let w = metric::norm(&sys.metric, &x, &f)?;
            curve.push((t, w));
            if w > 1e-300 {
                series.push((t - plan.t0, w.ln()));
            }
        }
        if series.len() >= 2 {
            kept += 1;
            pooled.extend(series);
        }
        curves.push(curve);
    }
    let (slope, _, r2) = pooled_log_fit(&pooled);
    let estimate = DecayEstimate {
        rate: -slope,
        r_squared: r2,
        trajectories: kept,
    };
    Ok((estimate, curves))
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{dmatrix, dvector};
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn parse2(src: &str) -> Vec<Expr> {
        let names = vec!["x1".to_string(), "x2".to_string()];
        src.split(';')
            .map(|s| expr::parse_with_names(s.trim(), &names).unwrap())
            .collect()
    }

    #[test]
    fn bracket_of_commuting_linear_fields() {
        // f = Ax, h = Bx with B = A + 2I: [f,h] = (BA - AB)x = 0
        let f = parse2("x2; -2*x1 - 3*x2");
        let h = parse2("2*x1 + x2; -2*x1 - x2");
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..20 {
            let x = dvector![rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0)];
            let b = lie_bracket(&f, &h, &x, 0.0).unwrap();
            assert!(b.norm() < 1e-12, "residual {}", b.norm());
        }
    }

    #[test]
    fn bracket_with_identity_field() {
        // [Ax, x] = 0
        let f = parse2("x2; -x1");
        let h = parse2("x1; x2");
        let b = lie_bracket(&f, &h, &dvector![0.3, -0.7], 0.0).unwrap();
        assert!(b.norm() < 1e-14);
    }

    #[test]
    fn bracket_noncommuting_hand_expansion() {
        // f = (-x1, -2 x2), h = (x2, x1): [f,h] = (x2, -x1)
        let f = parse2("-x1; -2*x2");
        let h = parse2("x2; x1");
        let x = dvector![0.4, -1.1];
        let b = lie_bracket(&f, &h, &x, 0.0).unwrap();
        assert!((b[0] - x[1]).abs() < 1e-14);
        assert!((b[1] + x[0]).abs() < 1e-14);
    }

    #[test]
    fn bracket_antisymmetry() {
        let f = parse2("x2; -sin(x1) - 0.5*x2");
        let h = parse2("x1^2; x1*x2");
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..10 {
            let x = dvector![rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)];
            let fh = lie_bracket(&f, &h, &x, 0.0).unwrap();
            let hf = lie_bracket(&h, &f, &x, 0.0).unwrap();
            assert!((fh + hf).norm() < 1e-10);
        }
    }

    #[test]
    fn bracket_of_f_with_itself_vanishes() {
        let sys = SystemDef::parse("state = [\"x1\"]\nf = [\"-x1 - x1^3\"]\nh = [\"-x1 - x1^3\"]")
            .unwrap();
        let plan = SamplePlan::new(&sys, 4);
        let report = commutation_check(&sys, &plan).unwrap();
        assert!(report.commuting);
        assert!(report.max_residual <= 1e-12);
    }

    #[test]
    fn identity_field_commutes_with_linear_flow() {
        // [Ax, x] = 0
        let sys = SystemDef::parse(
            "state = [\"x1\",\"x2\"]\nf = [\"x2\", \"-x1\"]\nh = [\"x1\", \"x2\"]",
        )
        .unwrap();
        let plan = SamplePlan::new(&sys, 4);
        let report = commutation_check(&sys, &plan).unwrap();
        assert!(report.commuting);
        assert!(report.max_residual <= 1e-12);
    }

    #[test]
    fn transported_field_identity_over_long_horizon() {
        // Lie(h(x0))(t; t0) = h(phi(t)) within 1e-5 for t - t0 up to 10
        let commuting = [
            SystemDef::parse("state = [\"x1\"]\nf = [\"-x1 - x1^3\"]\nh = [\"-x1 - x1^3\"]")
                .unwrap(),
            SystemDef::parse(
                "state = [\"x1\",\"x2\"]\nf = [\"-x1 + x2\", \"-2*x2\"]\nh = [\"x1\", \"x2\"]",
            )
            .unwrap(),
        ];
        let cfg = IntegratorConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        for sys in &commuting {
            let h = effective_h(sys).unwrap();
            for _ in 0..5 {
                let x0 = sys.sample_domain(&mut rng);
                let mut h0 = DVector::zeros(sys.dim());
                expr::eval_field(h, &x0, 0.0, &mut h0).unwrap();
                let tp = TangentPoint::new(x0, h0).unwrap();
                let traj = lift::transport_trajectory(sys, &tp, 0.0, 10.0, &cfg).unwrap();
                for i in 0..=10 {
                    let p = TangentPoint::from_stacked(&traj.eval(i as f64));
                    let mut hx = DVector::zeros(sys.dim());
                    expr::eval_field(h, &p.x, 0.0, &mut hx).unwrap();
                    assert!(
                        (&p.v - &hx).norm() <= 1e-5,
                        "{}: residual {} at t={i}",
                        sys.name,
                        (&p.v - &hx).norm()
                    );
                }
            }
        }
    }

    #[test]
    fn w_is_quadratic_form_in_state_for_identity_companion() {
        // linear f with h = x and quadratic FLF in metric P: W(x) = x'Px
        let sys = SystemDef::parse(
            "state = [\"x1\",\"x2\"]\nf = [\"-x1 + x2\", \"-2*x2\"]\nh = [\"x1\", \"x2\"]",
        )
        .unwrap();
        let p = dmatrix![0.5, 1.0/6.0; 1.0/6.0, 1.0/3.0];
        let spec = FlfSpec::quadratic(MetricSpec::Constant(p.clone()));
        let x = dvector![0.8, -0.3];
        let w = w_value(&sys, &spec, 0.0, &x, &IntegratorConfig::default()).unwrap();
        let expect = (x.transpose() * &p * &x)[(0, 0)];
        assert!((w - expect).abs() < 1e-14);
    }

    #[test]
    fn commutation_check_detects_noncommuting() {
        let sys = SystemDef::parse(
            "state = [\"x1\",\"x2\"]\nf = [\"-x1\", \"-2*x2\"]\nh = [\"x2\", \"x1\"]",
        )
        .unwrap();
        let plan = SamplePlan::new(&sys, 4);
        let report = commutation_check(&sys, &plan).unwrap();
        assert!(!report.commuting);
    }

    #[test]
    fn w_value_scalar_decay() {
        // h = f = -x, quadratic V: W(x) = x^2
        let sys = SystemDef::parse("state = [\"x1\"]\nf = [\"-x1\"]").unwrap();
        let spec = FlfSpec::quadratic(MetricSpec::Euclidean);
        let w = w_value(&sys, &spec, 0.0, &dvector![0.7], &IntegratorConfig::default()).unwrap();
        assert!((w - 0.49).abs() < 1e-14);
    }

    #[test]
    fn w_value_zero_at_equilibrium() {
        let sys = SystemDef::parse("state = [\"x1\"]\nf = [\"-x1\"]\nequilibrium = [0]").unwrap();
        let spec = FlfSpec::quadratic(MetricSpec::Euclidean);
        let w = w_value(&sys, &spec, 0.0, &dvector![0.0], &IntegratorConfig::default()).unwrap();
        assert_eq!(w, 0.0);
    }

    #[test]
    fn verify_scalar_decay_rate_two() {
        let sys = SystemDef::parse(
            "state = [\"x1\"]\nf = [\"-x1\"]\nequilibrium = [0]",
        )
        .unwrap();
        let spec = FlfSpec::quadratic(MetricSpec::Euclidean);
        let mut plan = SamplePlan::new(&sys, 8);
        plan.states = 10;
        plan.horizon = 3.0;
        let check = verify(
            &sys,
            &spec,
            2.0,
            &plan,
            &IntegratorConfig::default(),
            1e-4,
        )
        .unwrap();
        assert!(check.passed(), "violations: {:?}", check.violations.len());
        assert!((check.decay_rate - 2.0).abs() < 1e-3, "rate {}", check.decay_rate);
        assert!(check.transport_max_err < 1e-5);
        assert!(check.positivity_margin > 0.0);
        // |h| = |x| so the growth exponent fits q = 1 with k1 = k2 = 1
        assert!((check.growth.q - 1.0).abs() < 1e-6);
    }

    #[test]
    fn verify_rejects_noncommuting_h() {
        let sys = SystemDef::parse(
            "state = [\"x1\",\"x2\"]\nf = [\"-x1\", \"-2*x2\"]\nh = [\"x2\", \"x1\"]",
        )
        .unwrap();
        let spec = FlfSpec::quadratic(MetricSpec::Euclidean);
        let plan = SamplePlan::new(&sys, 8);
        assert!(matches!(
            verify(&sys, &spec, 1.0, &plan, &IntegratorConfig::default(), 1e-6),
            Err(Error::Precondition(_))
        ));
    }

    #[test]
    fn decrease_certificate_transfers_to_lyapunov_check() {
        // decrease certificate with alpha(r) = 2r and commuting h = f
        // imply the Lyapunov check passes with the same k
        let sys = SystemDef::parse("state = [\"x1\"]\nf = [\"-x1\"]\nequilibrium = [0]").unwrap();
        let spec = FlfSpec::quadratic(MetricSpec::Euclidean);
        let mut plan = SamplePlan::new(&sys, 12);
        plan.states = 15;
        let cfg = IntegratorConfig::default();
        let cert = crate::certify::decrease_certify(
            &sys,
            &spec,
            &flf::AlphaSpec::K(flf::ClassKSpec::Linear { a: 2.0 }),
            &plan,
            &cfg,
            &Thresholds::for_flf(),
        )
        .unwrap();
        assert_eq!(cert.verdict, Verdict::Ies);
        let com = commutation_check(&sys, &plan).unwrap();
        assert!(com.commuting);
        let check = verify(&sys, &spec, 2.0, &plan, &cfg, 1e-4).unwrap();
        assert!(check.passed());
    }

    #[test]
    fn w_scaling_with_doubled_h() {
        // replacing h by 2h scales W by 2^p (homogeneity)
        let base = "state = [\"x1\"]\nf = [\"-x1 - x1^3\"]\n";
        let sys1 = SystemDef::parse(&format!("{base}h = [\"-x1 - x1^3\"]")).unwrap();
        let sys2 = SystemDef::parse(&format!("{base}h = [\"2*(-x1 - x1^3)\"]")).unwrap();
        let cfg = IntegratorConfig::default();
        for (spec, p) in [
            (FlfSpec::quadratic(MetricSpec::Euclidean), 2.0),
            (FlfSpec::integral(2.0, 1.0, MetricSpec::Euclidean).unwrap(), 2.0),
        ] {
            let w1 = w_value(&sys1, &spec, 0.0, &dvector![0.6], &cfg).unwrap();
            let w2 = w_value(&sys2, &spec, 0.0, &dvector![0.6], &cfg).unwrap();
            assert!(
                (w2 - 2.0f64.powf(p) * w1).abs() < 1e-7 * (1.0 + w2.abs()),
                "w2 {w2} vs scaled {}",
                2.0f64.powf(p) * w1
            );
        }
    }

    #[test]
    fn classical_check_scalar() {
        // P = 1/2, Q = 1: 2 * (1/2) * (-1) = -1 <= -1
        let sys = SystemDef::parse("state = [\"x1\"]\nf = [\"-x1\"]\nequilibrium = [0]").unwrap();
        let mut plan = SamplePlan::new(&sys, 21);
        plan.states = 30;
        plan.horizon = 3.0;
        let out = classical_check(
            &sys,
            &dmatrix![0.5],
            &dmatrix![1.0],
            &plan,
            &IntegratorConfig::default(),
            &Thresholds::default(),
        )
        .unwrap();
        assert_eq!(out.report.verdict, Verdict::Ies);
        assert!((out.rate - 2.0).abs() < 1e-12);
        let lyap = out.lyapunov.unwrap();
        assert!(lyap.passed());
    }

    #[test]
    fn classical_check_cubic() {
        // P = 1, Q = 2: 2J = -2 - 6x^2 <= -2
        let sys = SystemDef::parse(
            "state = [\"x1\"]\nf = [\"-x1 - x1^3\"]\nequilibrium = [0]",
        )
        .unwrap();
        let mut plan = SamplePlan::new(&sys, 22);
        plan.states = 50;
        plan.horizon = 2.0;
        let out = classical_check(
            &sys,
            &dmatrix![1.0],
            &dmatrix![2.0],
            &plan,
            &IntegratorConfig::default(),
            &Thresholds::default(),
        )
        .unwrap();
        assert_eq!(out.report.verdict, Verdict::Ies);
        assert!(out.report.margin <= 0.0);
    }

    #[test]
    fn classical_check_rotation_fails() {
        let sys = SystemDef::parse("state = [\"x1\",\"x2\"]\nf = [\"x2\", \"-x1\"]").unwrap();
        let plan = SamplePlan::new(&sys, 23);
        let out = classical_check(
            &sys,
            &dmatrix![1.0, 0.0; 0.0, 1.0],
            &dmatrix![1.0, 0.0; 0.0, 1.0],
            &plan,
            &IntegratorConfig::default(),
            &Thresholds::default(),
        )
        .unwrap();
        assert_eq!(out.report.verdict, Verdict::Inconclusive);
        assert!(out.lyapunov.is_none());
    }

    #[test]
    fn fnorm_decays_at_measure_rate() {
        // mu_2(J) = -1 - 3x^2 <= -1: |f| decays at rate >= 1
        let sys = SystemDef::parse("state = [\"x1\"]\nf = [\"-x1 - x1^3\"]").unwrap();
        let mut plan = SamplePlan::new(&sys, 31);
        plan.states = 10;
        plan.horizon = 3.0;
        let decay = fnorm_decay(&sys, &plan, &IntegratorConfig::default()).unwrap();
        assert!(decay.rate >= 0.98, "rate {}", decay.rate);
        assert_eq!(decay.trajectories, 10);
    }
}
