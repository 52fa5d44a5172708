//! Sampling-based certification and empirical classification.
//!
//! All verdicts here are falsification-style: an inequality is evaluated
//! on N samples drawn from a deterministic plan and the verdict reports
//! "no violation found" together with the worst margin and every knob in
//! the configuration echo. Exhaustive verification is out of scope.
//!
//! Sample evaluations are independent and run in parallel; the report is
//! assembled in sample order, so results are identical to a sequential
//! run.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde_json::Value;

use crate::error::{Error, Result};
use crate::flf::{self, AlphaSpec, ClassKSpec, FlfKind, FlfSpec};
use crate::lift::TangentPoint;
use crate::metric::{self, MetricSpec};
use crate::ode::{self, IntegratorConfig, Method};
use crate::report::{echo_int, echo_num, echo_str, CertReport, ConfigEcho, RateEstimate, Verdict, Violation};
use crate::sample::SamplePlan;
use crate::system::SystemDef;

/// Norm choice for the matrix measure (logarithmic norm).
#[derive(Debug, Clone)]
pub enum MeasureNorm {
    One,
    Two,
    Inf,
    /// mu_P(A) = mu_2(P^(1/2) A P^(-1/2)) for symmetric positive-definite P.
    Weighted {
        sqrt: DMatrix<f64>,
        inv_sqrt: DMatrix<f64>,
    },
}

impl MeasureNorm {
    pub fn weighted(p: &DMatrix<f64>) -> Result<MeasureNorm> {
        let (sqrt, inv_sqrt) = metric::spd_sqrt_pair(p)?;
        Ok(MeasureNorm::Weighted { sqrt, inv_sqrt })
    }

    pub fn name(&self) -> &'static str {
        match self {
            MeasureNorm::One => "one",
            MeasureNorm::Two => "two",
            MeasureNorm::Inf => "inf",
            MeasureNorm::Weighted { .. } => "weighted",
        }
    }
}

/// Matrix measure mu(A): one-sided derivative of ||I + hA|| at h = 0.
///
/// * mu_2 = lambda_max((A + A') / 2)
/// * mu_1 = max_j (a_jj + sum_{i != j} |a_ij|)
/// * mu_inf = max_i (a_ii + sum_{j != i} |a_ij|)
pub fn matrix_measure(a: &DMatrix<f64>, norm: &MeasureNorm) -> f64 {
    match norm {
        MeasureNorm::Two => lambda_max_symmetric_part(a),
        MeasureNorm::One => {
            let n = a.nrows();
            (0..n)
                .map(|j| {
                    a[(j, j)]
                        + (0..n)
                            .filter(|&i| i != j)
                            .map(|i| a[(i, j)].abs())
                            .sum::<f64>()
                })
                .fold(f64::NEG_INFINITY, f64::max)
        }
        MeasureNorm::Inf => {
            let n = a.nrows();
            (0..n)
                .map(|i| {
                    a[(i, i)]
                        + (0..n)
                            .filter(|&j| j != i)
                            .map(|j| a[(i, j)].abs())
                            .sum::<f64>()
                })
                .fold(f64::NEG_INFINITY, f64::max)
        }
        MeasureNorm::Weighted { sqrt, inv_sqrt } => {
            lambda_max_symmetric_part(&(sqrt * a * inv_sqrt))
        }
    }
}

fn lambda_max_symmetric_part(a: &DMatrix<f64>) -> f64 {
    let sym = (a + a.transpose()) * 0.5;
    sym.symmetric_eigen()
        .eigenvalues
        .iter()
        .cloned()
        .fold(f64::NEG_INFINITY, f64::max)
}

/// Classification thresholds; defaults are echoed into every report.
#[derive(Debug, Clone, Copy)]
pub struct Thresholds {
    /// Slack tolerance of the pointwise inequality being checked.
    pub tol: f64,
    /// Minimum estimated rate counted as exponential evidence.
    pub rate_threshold: f64,
    /// Minimum R^2 of the log-linear fit for exponential evidence.
    pub r2_threshold: f64,
    /// Final distance ratio below which decay counts as asymptotic.
    pub decay_ratio: f64,
    /// Bound on sup d(t)/d(0) for plain incremental-stability evidence.
    pub k_max: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Thresholds {
            tol: 1e-9,
            rate_threshold: 0.01,
            r2_threshold: 0.95,
            decay_ratio: 0.1,
            k_max: 1.2,
        }
    }
}

impl Thresholds {
    /// Looser slack default for quadrature-backed FLF checks.
    pub fn for_flf() -> Thresholds {
        Thresholds {
            tol: 1e-6,
            ..Default::default()
        }
    }

    fn echo(&self, echo: &mut ConfigEcho) {
        echo_num(echo, "tol", self.tol);
        echo_num(echo, "rate_threshold", self.rate_threshold);
        echo_num(echo, "r2_threshold", self.r2_threshold);
        echo_num(echo, "decay_ratio", self.decay_ratio);
        echo_num(echo, "k_max", self.k_max);
    }
}

fn echo_plan(echo: &mut ConfigEcho, plan: &SamplePlan) {
    echo_int(echo, "seed", plan.seed as usize);
    echo_int(echo, "states", plan.states);
    echo_int(echo, "tangents", plan.tangents);
    echo_int(echo, "times", plan.times);
    echo_int(echo, "pairs", plan.pairs);
    echo_num(echo, "t0", plan.t0);
    echo_num(echo, "horizon", plan.horizon);
    echo.insert(
        "domain_lower".into(),
        Value::Array(plan.domain.iter().map(|d| crate::report::json_num(d.0)).collect()),
    );
    echo.insert(
        "domain_upper".into(),
        Value::Array(plan.domain.iter().map(|d| crate::report::json_num(d.1)).collect()),
    );
}

fn echo_integrator(echo: &mut ConfigEcho, cfg: &IntegratorConfig) {
    echo_str(
        echo,
        "method",
        match cfg.method {
            Method::FixedRk4 => "rk4",
            Method::AdaptiveRk45 => "rk45",
        },
    );
    echo_num(echo, "rel_tol", cfg.rel_tol);
    echo_num(echo, "abs_tol", cfg.abs_tol);
    echo_num(echo, "max_step", cfg.max_step);
    echo_int(echo, "max_steps", cfg.max_steps);
}

/// Demidovich-type pointwise check: at sampled (t, x),
/// `lambda_max(J' M + M J + dM_f + 2 lambda M) <= tol`
/// with `dM_f` the directional derivative of M along f (zero for constant
/// metrics). All samples passing certifies exponential contraction at
/// rate `lambda` in the metric M.
pub fn demidovich_check(
    sys: &SystemDef,
    m: &MetricSpec,
    lambda: f64,
    plan: &SamplePlan,
    thresholds: &Thresholds,
) -> Result<CertReport> {
    require_samples(plan)?;
    if !m.dim_matches(sys.dim()) {
        return Err(Error::Dimension {
            context: "demidovich metric".into(),
            expected: sys.dim(),
            got: 0,
        });
    }
    let states = plan.sample_states();
    let times = plan.sample_times();
    let slacks: Vec<Result<f64>> = states
        .par_iter()
        .zip(times.par_iter())
        .map(|(x, &t)| {
            let jac = sys.jacobian(t, x)?;
            let mm = m.matrix_at(x)?;
            let mut f = DVector::zeros(sys.dim());
            sys.eval_f(t, x, &mut f)?;
            let mdot = m.directional_derivative(x, &f)?;
            let s = jac.transpose() * &mm + &mm * &jac + &mdot + &mm * (2.0 * lambda);
            Ok(lambda_max_symmetric_part(&s))
        })
        .collect();

    let mut margin = f64::NEG_INFINITY;
    let mut violations = Vec::new();
    for (i, slack) in slacks.into_iter().enumerate() {
        let slack = slack?;
        margin = margin.max(slack);
        if slack > thresholds.tol {
            violations.push(Violation {
                t: times[i],
                x: states[i].as_slice().to_vec(),
                v: Vec::new(),
                slack,
            });
        }
    }

    let verdict = if !violations.is_empty() {
        Verdict::Inconclusive
    } else if lambda >= thresholds.rate_threshold {
        Verdict::Ies
    } else {
        Verdict::Is
    };

    let mut echo = ConfigEcho::new();
    echo_str(&mut echo, "check", "demidovich");
    echo_num(&mut echo, "rate", lambda);
    echo_str(&mut echo, "metric", metric_kind_name(m));
    echo_plan(&mut echo, plan);
    thresholds.echo(&mut echo);

    Ok(CertReport {
        verdict,
        rate: RateEstimate {
            k: None,
            lambda: Some(lambda),
            r_squared: None,
        },
        margin,
        violations,
        samples: states.len(),
        skipped: 0,
        notes: Vec::new(),
        config: echo,
    })
}

fn metric_kind_name(m: &MetricSpec) -> &'static str {
    match m {
        MetricSpec::Euclidean => "euclidean",
        MetricSpec::Constant(_) => "constant",
        MetricSpec::DiagExpr(_) => "expr",
    }
}

fn require_samples(plan: &SamplePlan) -> Result<()> {
    if plan.states == 0 {
        return Err(Error::Precondition("sample plan has zero states".into()));
    }
    Ok(())
}

/// FLF decrease certification: at every sampled (t, x, v) check
/// `L_f~ V + alpha(V) <= tol`. Verdict follows the decrease rate family:
/// alpha = 0 certifies IS, class-K certifies IAS, linear certifies IES.
pub fn decrease_certify(
    sys: &SystemDef,
    spec: &FlfSpec,
    alpha: &AlphaSpec,
    plan: &SamplePlan,
    cfg: &IntegratorConfig,
    thresholds: &Thresholds,
) -> Result<CertReport> {
    require_samples(plan)?;
    let states = plan.sample_states();
    let times = plan.sample_times();
    let tangents = plan.sample_unit_tangents(&spec.metric, &states)?;

    struct SampleOut {
        slack: f64,
        t: f64,
        x: Vec<f64>,
        v: Vec<f64>,
    }

    let mut tasks = Vec::new();
    for (i, x) in states.iter().enumerate() {
        for v in &tangents[i] {
            tasks.push((times[i], x.clone(), v.clone()));
        }
    }
    if tasks.is_empty() {
        return Err(Error::Precondition("sample plan has zero tangents".into()));
    }
    let outcomes: Vec<std::result::Result<SampleOut, String>> = tasks
        .par_iter()
        .map(|(t, x, v)| {
            let tp = TangentPoint::new(x.clone(), v.clone()).map_err(|e| e.to_string())?;
            let value = flf::value(sys, spec, *t, &tp, cfg).map_err(|e| e.to_string())?;
            let deriv = flf::lie_derivative(sys, spec, *t, &tp, cfg).map_err(|e| e.to_string())?;
            Ok(SampleOut {
                slack: deriv + alpha.eval(value),
                t: *t,
                x: x.as_slice().to_vec(),
                v: v.as_slice().to_vec(),
            })
        })
        .collect();

    let mut margin = f64::NEG_INFINITY;
    let mut violations = Vec::new();
    let mut skipped = 0usize;
    let mut notes = Vec::new();
    let mut evaluated = 0usize;
    for out in outcomes {
        match out {
            Ok(s) => {
                evaluated += 1;
                margin = margin.max(s.slack);
                if s.slack > thresholds.tol {
                    violations.push(Violation {
                        t: s.t,
                        x: s.x,
                        v: s.v,
                        slack: s.slack,
                    });
                }
            }
            Err(msg) => {
                skipped += 1;
                if notes.len() < 5 {
                    notes.push(format!("sample skipped: {msg}"));
                }
            }
        }
    }

    let verdict = if !violations.is_empty() || skipped > 0 {
        Verdict::Inconclusive
    } else {
        match alpha {
            AlphaSpec::Zero => Verdict::Is,
            AlphaSpec::K(ClassKSpec::Linear { a }) if *a >= thresholds.rate_threshold => {
                Verdict::Ies
            }
            AlphaSpec::K(_) => Verdict::Ias,
        }
    };

    let degree = spec.degree().unwrap_or(1.0);
    let rate = match (verdict, alpha) {
        (Verdict::Ies, AlphaSpec::K(ClassKSpec::Linear { a })) => RateEstimate {
            k: Some(*a),
            lambda: Some(*a / degree),
            r_squared: None,
        },
        _ => RateEstimate::default(),
    };

    let mut echo = ConfigEcho::new();
    echo_str(&mut echo, "check", "flf_decrease");
    echo_flf(&mut echo, spec);
    echo_alpha(&mut echo, alpha);
    echo_plan(&mut echo, plan);
    echo_integrator(&mut echo, cfg);
    thresholds.echo(&mut echo);

    Ok(CertReport {
        verdict,
        rate,
        margin,
        violations,
        samples: evaluated,
        skipped,
        notes,
        config: echo,
    })
}

fn echo_flf(echo: &mut ConfigEcho, spec: &FlfSpec) {
    echo_str(echo, "flf_metric", metric_kind_name(&spec.metric));
    match &spec.kind {
        FlfKind::Quadratic => echo_str(echo, "flf_kind", "quadratic"),
        FlfKind::IntegralFinite { p, delta } => {
            echo_str(echo, "flf_kind", "integral");
            echo_num(echo, "p", *p);
            echo_num(echo, "delta", *delta);
        }
        FlfKind::IntegralInfinite {
            alpha1,
            horizon,
            tail_tol,
        } => {
            echo_str(echo, "flf_kind", "integral_infinite");
            echo_str(echo, "alpha1", &alpha_name(&AlphaSpec::K(*alpha1)));
            echo_num(echo, "flf_horizon", *horizon);
            echo_num(echo, "tail_tol", *tail_tol);
        }
    }
}

fn alpha_name(alpha: &AlphaSpec) -> String {
    match alpha {
        AlphaSpec::Zero => "zero".into(),
        AlphaSpec::K(ClassKSpec::Linear { a }) => format!("linear:{a}"),
        AlphaSpec::K(ClassKSpec::Power { a, q }) => format!("power:{a},{q}"),
    }
}

fn echo_alpha(echo: &mut ConfigEcho, alpha: &AlphaSpec) {
    echo_str(echo, "alpha", &alpha_name(alpha));
}

/// Pooled least squares of `y = intercept + slope * tau`; returns
/// (slope, intercept, r_squared).
pub(crate) fn pooled_log_fit(points: &[(f64, f64)]) -> (f64, f64, f64) {
    let n = points.len() as f64;
    let mean_t = points.iter().map(|p| p.0).sum::<f64>() / n;
    let mean_y = points.iter().map(|p| p.1).sum::<f64>() / n;
    let mut cov = 0.0;
    let mut var_t = 0.0;
    for &(t, y) in points {
        cov += (t - mean_t) * (y - mean_y);
        var_t += (t - mean_t) * (t - mean_t);
    }
    let slope = if var_t > 0.0 { cov / var_t } else { 0.0 };
    let intercept = mean_y - slope * mean_t;
    let mut ss_res = 0.0;
    let mut ss_tot = 0.0;
    for &(t, y) in points {
        let fit = intercept + slope * t;
        ss_res += (y - fit) * (y - fit);
        ss_tot += (y - mean_y) * (y - mean_y);
    }
    let r2 = if ss_tot > 1e-12 * n {
        1.0 - ss_res / ss_tot
    } else {
        // flat data: a fit has no explanatory power
        0.0
    };
    (slope, intercept, r2)
}

/// Empirical incremental-rate estimation from trajectory pairs.
///
/// Integrates sampled pairs, computes geodesic distance ratios
/// `r(t) = d(t)/d(0)` on the plan's time grid, and fits
/// `log r = log K - lambda (t - t0)` pooled over all pairs.
pub fn rate_estimate(
    sys: &SystemDef,
    plan: &SamplePlan,
    cfg: &IntegratorConfig,
    thresholds: &Thresholds,
) -> Result<CertReport> {
    Ok(rate_estimate_detailed(sys, plan, cfg, thresholds)?.0)
}

/// Distance curve of one trajectory pair: `(t, d(t))` samples.
pub type DistanceSeries = Vec<(f64, f64)>;

/// As [`rate_estimate`], also returning the per-pair distance curves for
/// export.
pub fn rate_estimate_detailed(
    sys: &SystemDef,
    plan: &SamplePlan,
    cfg: &IntegratorConfig,
    thresholds: &Thresholds,
) -> Result<(CertReport, Vec<DistanceSeries>)> {
    if plan.pairs < 10 {
        return Err(Error::Precondition(format!(
            "rate estimation needs at least 10 trajectory pairs, got {}",
            plan.pairs
        )));
    }
    let pairs = plan.sample_pairs();
    let grid = plan.time_grid();

    let outcomes: Vec<std::result::Result<DistanceSeries, String>> = pairs
        .par_iter()
        .map(|(a, b)| {
            let d0 = metric::distance(&sys.metric, a, b)
                .map_err(|e| e.to_string())?
                .distance;
            if d0 < 1e-12 {
                return Err("degenerate pair (d(0) ~ 0)".into());
            }
            let ta = ode::integrate(sys, a, plan.t0, plan.t0 + plan.horizon, cfg)
                .map_err(|e| e.to_string())?;
            let tb = ode::integrate(sys, b, plan.t0, plan.t0 + plan.horizon, cfg)
                .map_err(|e| e.to_string())?;
            let mut series = Vec::with_capacity(grid.len());
            for &t in &grid {
                let xa = ta.eval(t);
                let xb = tb.eval(t);
                let d = metric::distance(&sys.metric, &xa, &xb)
                    .map_err(|e| e.to_string())?
                    .distance;
                series.push((t, d));
            }
            Ok(series)
        })
        .collect();

    let mut pooled: Vec<(f64, f64)> = Vec::new();
    let mut sup_r = f64::NEG_INFINITY;
    let mut final_ratios: Vec<f64> = Vec::new();
    let mut curves: Vec<DistanceSeries> = Vec::new();
    let mut kept = 0usize;
    let mut skipped = 0usize;
    let mut notes = Vec::new();
    for out in outcomes {
        match out {
            Ok(series) => {
                kept += 1;
                let d0 = series[0].1;
                for &(t, d) in &series {
                    let r = d / d0;
                    sup_r = sup_r.max(r);
                    if r > 0.0 {
                        pooled.push((t - plan.t0, r.ln()));
                    }
                }
                if let Some(&(_, d)) = series.last() {
                    final_ratios.push(d / d0);
                }
                curves.push(series);
            }
            Err(msg) => {
                skipped += 1;
                if notes.len() < 5 {
                    notes.push(format!("pair skipped: {msg}"));
                }
            }
        }
    }

    let mut echo = ConfigEcho::new();
    echo_str(&mut echo, "check", "empirical_rate");
    echo_plan(&mut echo, plan);
    echo_integrator(&mut echo, cfg);
    thresholds.echo(&mut echo);

    if kept < 3 {
        let report = CertReport {
            verdict: Verdict::Inconclusive,
            rate: RateEstimate::default(),
            margin: f64::NAN,
            violations: Vec::new(),
            samples: kept,
            skipped,
            notes,
            config: echo,
        };
        return Ok((report, curves));
    }

    let (slope, intercept, r2) = pooled_log_fit(&pooled);
    let lambda = -slope;
    let big_k = intercept.exp();
    let worst_final = final_ratios.iter().cloned().fold(f64::NEG_INFINITY, f64::max);

    let verdict = if lambda >= thresholds.rate_threshold && r2 >= thresholds.r2_threshold {
        Verdict::Ies
    } else if lambda.abs() < thresholds.rate_threshold && sup_r <= thresholds.k_max {
        Verdict::Is
    } else if worst_final < thresholds.decay_ratio {
        Verdict::Ias
    } else {
        Verdict::Inconclusive
    };

    let report = CertReport {
        verdict,
        rate: RateEstimate {
            k: Some(big_k),
            lambda: Some(lambda),
            r_squared: Some(r2),
        },
        margin: -lambda,
        violations: Vec::new(),
        samples: kept,
        skipped,
        notes,
        config: echo,
    };
    Ok((report, curves))
}

/// Tightest exponential envelope `d(t) <= K e^(-lambda (t - t0)) d(t0)`
/// valid on every sampled distance curve: lambda is the worst average
/// decay rate observed, and with that choice K = 1 already bounds every
/// sample. Returns `None` when some curve fails to decay.
pub fn decay_envelope(curves: &[DistanceSeries], t0: f64) -> Option<(f64, f64)> {
    let mut lambda = f64::INFINITY;
    for series in curves {
        let d0 = series.first()?.1;
        if d0 <= 0.0 {
            continue;
        }
        for &(t, d) in series.iter().skip(1) {
            let tau = t - t0;
            if tau <= 0.0 || d <= 0.0 {
                continue;
            }
            lambda = lambda.min(-((d / d0).ln()) / tau);
        }
    }
    if lambda.is_finite() && lambda > 0.0 {
        Some((1.0, lambda))
    } else {
        None
    }
}

/// Matrix-measure certification: `mu(J(t,x)) <= -c + tol` at sampled
/// (t, x). Uses the weighted measure when the system metric is a constant
/// matrix, mu_2 otherwise.
pub fn measure_certify(
    sys: &SystemDef,
    c: f64,
    plan: &SamplePlan,
    thresholds: &Thresholds,
) -> Result<CertReport> {
    require_samples(plan)?;
    let norm = match &sys.metric {
        MetricSpec::Constant(p) => MeasureNorm::weighted(p)?,
        _ => MeasureNorm::Two,
    };
    let states = plan.sample_states();
    let times = plan.sample_times();
    let slacks: Vec<Result<f64>> = states
        .par_iter()
        .zip(times.par_iter())
        .map(|(x, &t)| Ok(matrix_measure(&sys.jacobian(t, x)?, &norm) + c))
        .collect();

    let mut margin = f64::NEG_INFINITY;
    let mut violations = Vec::new();
    for (i, slack) in slacks.into_iter().enumerate() {
        let slack = slack?;
        margin = margin.max(slack);
        if slack > thresholds.tol {
            violations.push(Violation {
                t: times[i],
                x: states[i].as_slice().to_vec(),
                v: Vec::new(),
                slack,
            });
        }
    }
    let verdict = if !violations.is_empty() {
        Verdict::Inconclusive
    } else if c >= thresholds.rate_threshold {
        Verdict::Ies
    } else {
        Verdict::Is
    };

    let mut echo = ConfigEcho::new();
    echo_str(&mut echo, "check", "matrix_measure");
    echo_num(&mut echo, "rate", c);
    echo_str(&mut echo, "measure_norm", norm.name());
    echo_plan(&mut echo, plan);
    thresholds.echo(&mut echo);

    Ok(CertReport {
        verdict,
        rate: RateEstimate {
            k: None,
            lambda: Some(c),
            r_squared: None,
        },
        margin,
        violations,
        samples: states.len(),
        skipped: 0,
        notes: Vec::new(),
        config: echo,
    })
}
