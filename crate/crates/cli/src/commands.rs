//! Command implementations: load inputs, orchestrate analyses, assemble
//! the report JSON and decay-curve CSV.
//!
//! Verdicts never drive nonzero exit codes; "fail" is a scientific
//! result, not a program error. CI pipelines opt in with
//! `--fail-on-verdict`, which exits 1 on an inconclusive verdict.

use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector};
use serde_json::{Map, Value};

use contrakit::certify::{self, Thresholds};
use contrakit::flf::{self, AlphaSpec, ClassKSpec, FlfSpec};
use contrakit::krasovskii;
use contrakit::lift::TangentPoint;
use contrakit::ode::{self, IntegratorConfig};
use contrakit::report::{json_num, CertReport, RateEstimate};
use contrakit::sample::SamplePlan;
use contrakit::system::SystemDef;
use contrakit::{Error as CoreError, Verdict};

use crate::output;
use crate::{CheckArgs, CheckMode, KrasovskiiArgs, SimulateArgs};

const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

/// CLI failure classes, mapped onto exit codes: 2 usage, 3 input file,
/// 4 numerical failure.
#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Input(String),
    Numeric(String),
}

impl CliError {
    pub fn code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Input(_) => 3,
            CliError::Numeric(_) => 4,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "{m}"),
            CliError::Input(m) => write!(f, "{m}"),
            CliError::Numeric(m) => write!(f, "{m}"),
        }
    }
}

fn numeric_err(e: CoreError) -> CliError {
    CliError::Numeric(e.to_string())
}

fn load_system(path: &Path) -> Result<SystemDef, CliError> {
    SystemDef::from_path(path)
        .map_err(|e| CliError::Input(format!("{}: {e}", path.display())))
}

fn write_or_print(path: Option<&PathBuf>, content: &str) -> Result<(), CliError> {
    match path {
        Some(p) => std::fs::write(p, content)
            .map_err(|e| CliError::Input(format!("{}: {e}", p.display()))),
        None => {
            print!("{content}");
            Ok(())
        }
    }
}

// ---------------------------------------------------------------------------
// Report JSON assembly
// ---------------------------------------------------------------------------

struct FlfSection {
    kind: &'static str,
    p: Option<f64>,
    delta: Option<f64>,
    c1: Option<f64>,
    c2: Option<f64>,
    k: Option<f64>,
}

fn opt_num(v: Option<f64>) -> Value {
    v.map(json_num).unwrap_or(Value::Null)
}

fn rate_json(rate: &RateEstimate) -> Value {
    let mut m = Map::new();
    m.insert("K".into(), opt_num(rate.k));
    m.insert("lambda".into(), opt_num(rate.lambda));
    m.insert("r_squared".into(), opt_num(rate.r_squared));
    Value::Object(m)
}

fn build_report_json(
    report: &CertReport,
    bracket: Option<&krasovskii::BracketReport>,
    flf_section: Option<&FlfSection>,
    extra_config: &[(&str, Value)],
) -> Value {
    let mut root = Map::new();
    root.insert("verdict".into(), Value::String(report.verdict.as_str().into()));
    root.insert("rate_estimate".into(), rate_json(&report.rate));
    root.insert("margin".into(), json_num(report.margin));
    root.insert(
        "violations".into(),
        Value::Array(
            report
                .violations
                .iter()
                .map(|v| {
                    let mut m = Map::new();
                    m.insert("t".into(), json_num(v.t));
                    m.insert(
                        "x".into(),
                        Value::Array(v.x.iter().map(|&c| json_num(c)).collect()),
                    );
                    m.insert(
                        "v".into(),
                        Value::Array(v.v.iter().map(|&c| json_num(c)).collect()),
                    );
                    m.insert("slack".into(), json_num(v.slack));
                    Value::Object(m)
                })
                .collect(),
        ),
    );
    root.insert(
        "bracket".into(),
        match bracket {
            Some(b) => {
                let mut m = Map::new();
                m.insert("max_residual".into(), json_num(b.max_residual));
                m.insert("commuting".into(), Value::Bool(b.commuting));
                Value::Object(m)
            }
            None => Value::Null,
        },
    );
    root.insert(
        "flf".into(),
        match flf_section {
            Some(f) => {
                let mut m = Map::new();
                m.insert("kind".into(), Value::String(f.kind.into()));
                m.insert("p".into(), opt_num(f.p));
                m.insert("delta".into(), opt_num(f.delta));
                m.insert("c1".into(), opt_num(f.c1));
                m.insert("c2".into(), opt_num(f.c2));
                m.insert("k".into(), opt_num(f.k));
                Value::Object(m)
            }
            None => Value::Null,
        },
    );
    let mut config = Map::new();
    for (k, v) in &report.config {
        config.insert(k.clone(), v.clone());
    }
    for (k, v) in extra_config {
        config.insert((*k).into(), v.clone());
    }
    config.insert("samples_evaluated".into(), Value::from(report.samples as u64));
    config.insert("samples_skipped".into(), Value::from(report.skipped as u64));
    root.insert("config".into(), Value::Object(config));
    root.insert("tool_version".into(), Value::String(TOOL_VERSION.into()));
    Value::Object(root)
}

// ---------------------------------------------------------------------------
// check
// ---------------------------------------------------------------------------

fn parse_alpha(s: &str) -> Result<Option<AlphaSpec>, CliError> {
    if s == "auto" {
        return Ok(None);
    }
    if s == "zero" {
        return Ok(Some(AlphaSpec::Zero));
    }
    if let Some(rest) = s.strip_prefix("linear:") {
        let a: f64 = rest
            .parse()
            .map_err(|_| CliError::Usage(format!("invalid --alpha `{s}`")))?;
        let k = ClassKSpec::Linear { a };
        k.validate()
            .map_err(|e| CliError::Usage(format!("--alpha `{s}`: {e}")))?;
        return Ok(Some(AlphaSpec::K(k)));
    }
    if let Some(rest) = s.strip_prefix("power:") {
        let parts: Vec<&str> = rest.split(',').collect();
        if parts.len() == 2 {
            if let (Ok(a), Ok(q)) = (parts[0].parse(), parts[1].parse()) {
                let k = ClassKSpec::Power { a, q };
                k.validate()
                    .map_err(|e| CliError::Usage(format!("--alpha `{s}`: {e}")))?;
                return Ok(Some(AlphaSpec::K(k)));
            }
        }
        return Err(CliError::Usage(format!("invalid --alpha `{s}`")));
    }
    Err(CliError::Usage(format!(
        "invalid --alpha `{s}` (expected zero | linear:a | power:a,q | auto)"
    )))
}

fn plan_from_args(sys: &SystemDef, args: &CheckArgs) -> SamplePlan {
    let mut plan = SamplePlan::new(sys, args.seed);
    plan.states = args.samples;
    plan.pairs = args.pairs;
    plan.times = args.times;
    plan.t0 = args.t0;
    plan.horizon = args.horizon;
    plan
}

type NamedSeries = Vec<(String, Vec<(f64, f64)>)>;

pub fn check(args: &CheckArgs) -> Result<bool, CliError> {
    let sys = load_system(&args.system)?;
    let plan = plan_from_args(&sys, args);
    let cfg = IntegratorConfig::default();
    let mut thresholds = Thresholds::default();

    let (report, flf_section, curves): (CertReport, Option<FlfSection>, NamedSeries) =
        match args.mode {
            CheckMode::Demidovich => {
                if let Some(tol) = args.tol {
                    thresholds.tol = tol;
                }
                let report =
                    certify::demidovich_check(&sys, &sys.metric, args.rate, &plan, &thresholds)
                        .map_err(numeric_err)?;
                (report, None, Vec::new())
            }
            CheckMode::MatrixMeasure => {
                if let Some(tol) = args.tol {
                    thresholds.tol = tol;
                }
                let mut report = certify::measure_certify(&sys, args.rate, &plan, &thresholds)
                    .map_err(numeric_err)?;
                // Krasovskii-style companion diagnostic: decay of |f| along
                // trajectories
                let mut decay_plan = plan.clone();
                decay_plan.states = 10;
                let (decay, decay_curves) =
                    krasovskii::fnorm_decay_detailed(&sys, &decay_plan, &cfg)
                        .map_err(numeric_err)?;
                report.rate = RateEstimate {
                    k: None,
                    lambda: Some(decay.rate),
                    r_squared: Some(decay.r_squared),
                };
                let curves = decay_curves
                    .into_iter()
                    .enumerate()
                    .map(|(i, pts)| (format!("traj{i:02}"), pts))
                    .collect();
                (report, None, curves)
            }
            CheckMode::Empirical => {
                if let Some(tol) = args.tol {
                    thresholds.tol = tol;
                }
                let (report, series) =
                    certify::rate_estimate_detailed(&sys, &plan, &cfg, &thresholds)
                        .map_err(numeric_err)?;
                let curves = series
                    .into_iter()
                    .enumerate()
                    .map(|(i, pts)| (format!("pair{i:02}"), pts))
                    .collect();
                (report, None, curves)
            }
            CheckMode::Flf => {
                thresholds = Thresholds::for_flf();
                if let Some(tol) = args.tol {
                    thresholds.tol = tol;
                }
                check_flf(&sys, args, &plan, &cfg, &thresholds)?
            }
        };

    let extra = [
        ("command", Value::String("check".into())),
        ("mode", Value::String(args.mode.name().into())),
        (
            "system",
            Value::String(args.system.display().to_string()),
        ),
    ];
    let json = build_report_json(&report, None, flf_section.as_ref(), &extra);
    write_or_print(args.out.as_ref(), &output::canonical_json(&json))?;
    if let Some(curves_path) = &args.curves {
        write_or_print(Some(curves_path), &output::curves_csv(&curves))?;
    }
    for note in &report.notes {
        eprintln!("note: {note}");
    }
    eprintln!(
        "verdict: {} (margin {}, {} samples, {} violations)",
        report.verdict,
        output::fmt_g(report.margin),
        report.samples,
        report.violations.len()
    );
    Ok(report.verdict != Verdict::Inconclusive)
}

/// Safety deflation applied to the measured decay envelope before
/// deriving FLF constants from it: the worst sampled rate can still
/// overestimate the true worst-case rate between samples.
const ENVELOPE_SAFETY: f64 = 0.9;

/// The converse-construction pipeline: measure a decay envelope
/// (K, lambda) from trajectory pairs and a Lipschitz constant L from the
/// Jacobian, derive the horizon delta and sandwich constants, then
/// certify the decrease of the finite-horizon integral FLF.
fn check_flf(
    sys: &SystemDef,
    args: &CheckArgs,
    plan: &SamplePlan,
    cfg: &IntegratorConfig,
    thresholds: &Thresholds,
) -> Result<(CertReport, Option<FlfSection>, NamedSeries), CliError> {
    let p = args.p;
    let (mut rate_report, series) = certify::rate_estimate_detailed(sys, plan, cfg, thresholds)
        .map_err(numeric_err)?;
    let envelope = certify::decay_envelope(&series, plan.t0);
    let curves: NamedSeries = series
        .into_iter()
        .enumerate()
        .map(|(i, pts)| (format!("pair{i:02}"), pts))
        .collect();

    let envelope = envelope.map(|(k, lambda)| (k, lambda * ENVELOPE_SAFETY));

    let delta = match args.delta.as_str() {
        "auto" => match envelope {
            Some((k, lambda)) if lambda > thresholds.rate_threshold => {
                flf::choose_delta(k, lambda, p)
            }
            _ => {
                // no exponential envelope measured: the construction has no
                // finite horizon to offer
                rate_report.verdict = Verdict::Inconclusive;
                rate_report
                    .notes
                    .push("no exponential decay envelope measured; supply --delta".into());
                return Ok((rate_report, None, curves));
            }
        },
        s => s
            .parse::<f64>()
            .map_err(|_| CliError::Usage(format!("invalid --delta `{s}` (number or `auto`)")))?,
    };

    let t_grid = [plan.t0, plan.t0 + 0.5 * plan.horizon, plan.t0 + plan.horizon];
    let lip = contrakit::metric::lipschitz(sys, &t_grid, plan.states.max(200), plan.seed)
        .map_err(numeric_err)?;

    let bounds = envelope.and_then(|(k, lambda)| {
        flf::sandwich_constants(lip.value.max(1e-9), lambda, k, p, delta).ok()
    });

    let alpha = match parse_alpha(&args.alpha)? {
        Some(a) => a,
        None => match bounds.as_ref().and_then(|b| b.k) {
            Some(k) => AlphaSpec::K(ClassKSpec::Linear { a: k }),
            None => AlphaSpec::Zero,
        },
    };

    let spec = FlfSpec::integral(p, delta, sys.metric.clone()).map_err(numeric_err)?;
    let mut report = certify::decrease_certify(sys, &spec, &alpha, plan, cfg, thresholds)
        .map_err(numeric_err)?;
    // the measured envelope is the informative rate estimate
    report.rate = rate_report.rate;
    if let Some((k, lambda)) = envelope {
        contrakit::report::echo_num(&mut report.config, "envelope_K", k);
        contrakit::report::echo_num(&mut report.config, "envelope_lambda", lambda);
        contrakit::report::echo_num(&mut report.config, "envelope_safety", ENVELOPE_SAFETY);
    }
    contrakit::report::echo_num(&mut report.config, "lipschitz", lip.value);
    if lip.heuristic {
        report
            .notes
            .push("Lipschitz constant from heuristic pairwise estimator".into());
    }
    let section = FlfSection {
        kind: "integral",
        p: Some(p),
        delta: Some(delta),
        c1: bounds.as_ref().map(|b| b.c1),
        c2: bounds.as_ref().map(|b| b.c2),
        k: bounds.as_ref().and_then(|b| b.k),
    };
    Ok((report, Some(section), curves))
}

// ---------------------------------------------------------------------------
// simulate
// ---------------------------------------------------------------------------

fn parse_vector(s: &str, dim: usize, what: &str) -> Result<DVector<f64>, CliError> {
    let parts: Vec<&str> = s.split(',').collect();
    if parts.len() != dim {
        return Err(CliError::Usage(format!(
            "{what} has {} components, system dimension is {dim}",
            parts.len()
        )));
    }
    let mut v = DVector::zeros(dim);
    for (i, p) in parts.iter().enumerate() {
        v[i] = p
            .trim()
            .parse()
            .map_err(|_| CliError::Usage(format!("invalid number `{p}` in {what}")))?;
    }
    Ok(v)
}

pub fn simulate(args: &SimulateArgs) -> Result<bool, CliError> {
    let sys = load_system(&args.system)?;
    let x0 = parse_vector(&args.x0, sys.dim(), "--x0")?;
    if args.tf < args.t0 {
        return Err(CliError::Usage(format!(
            "--tf {} must be >= --t0 {}",
            args.tf, args.t0
        )));
    }
    let cfg = IntegratorConfig::default();
    let (traj, names) = match &args.v0 {
        Some(v0s) => {
            let v0 = parse_vector(v0s, sys.dim(), "--v0")?;
            let tp = TangentPoint::new(x0, v0).map_err(|e| CliError::Usage(e.to_string()))?;
            let traj = contrakit::lift::transport_trajectory(&sys, &tp, args.t0, args.tf, &cfg)
                .map_err(numeric_err)?;
            let mut names = sys.state_names.clone();
            names.extend(sys.state_names.iter().map(|n| format!("d_{n}")));
            (traj, names)
        }
        None => {
            let traj = ode::integrate(&sys, &x0, args.t0, args.tf, &cfg).map_err(numeric_err)?;
            (traj, sys.state_names.clone())
        }
    };
    let series: Vec<(String, Vec<(f64, f64)>)> = names
        .iter()
        .enumerate()
        .map(|(i, name)| {
            let pts = traj
                .times
                .iter()
                .zip(traj.states.iter())
                .map(|(&t, x)| (t, x[i]))
                .collect();
            (name.clone(), pts)
        })
        .collect();
    write_or_print(args.out.as_ref(), &output::curves_csv(&series))?;
    eprintln!(
        "integrated {} from t={} to t={} ({} accepted steps)",
        sys.name,
        args.t0,
        args.tf,
        traj.times.len() - 1
    );
    Ok(true)
}

// ---------------------------------------------------------------------------
// krasovskii
// ---------------------------------------------------------------------------

fn parse_matrix_file(path: &Path, dim: usize, what: &str) -> Result<DMatrix<f64>, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let row: Result<Vec<f64>, _> = line
            .split(|c: char| c == ',' || c.is_whitespace())
            .filter(|t| !t.is_empty())
            .map(|t| t.parse::<f64>())
            .collect();
        let row = row.map_err(|_| {
            CliError::Input(format!("{}: invalid number on line {}", path.display(), lineno + 1))
        })?;
        rows.push(row);
    }
    if rows.len() != dim || rows.iter().any(|r| r.len() != dim) {
        return Err(CliError::Input(format!(
            "{what} must be a {dim}x{dim} matrix ({} rows found)",
            rows.len()
        )));
    }
    Ok(DMatrix::from_fn(dim, dim, |i, j| rows[i][j]))
}

pub fn krasovskii_cmd(args: &KrasovskiiArgs) -> Result<bool, CliError> {
    let mut sys = load_system(&args.system)?;
    if args.h_equals_f {
        // drop any declared companion field; the autonomous fallback h = f
        // applies (and time-varying f is rejected by the library)
        sys.h = None;
        sys.h_src = Vec::new();
    }
    let mut plan = SamplePlan::new(&sys, args.seed);
    plan.states = args.samples;
    plan.horizon = args.horizon;
    let cfg = IntegratorConfig::default();
    let thresholds = Thresholds::default();

    let bracket = krasovskii::commutation_check(&sys, &plan).map_err(numeric_err)?;

    let (report, flf_section) = match (&args.p_matrix, &args.q_matrix) {
        (Some(p_path), Some(q_path)) => {
            let p = parse_matrix_file(p_path, sys.dim(), "--P")?;
            let q = parse_matrix_file(q_path, sys.dim(), "--Q")?;
            let eig = |m: &DMatrix<f64>| {
                let ev = m.clone().symmetric_eigen().eigenvalues;
                (
                    ev.iter().cloned().fold(f64::INFINITY, f64::min),
                    ev.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
                )
            };
            let (c1, c2) = eig(&p);
            let out = krasovskii::classical_check(&sys, &p, &q, &plan, &cfg, &thresholds)
                .map_err(numeric_err)?;
            let mut report = out.report;
            if let Some(lyap) = &out.lyapunov {
                report.violations.extend(lyap.violations.iter().cloned());
                if !lyap.passed() {
                    report.verdict = Verdict::Inconclusive;
                }
                report.rate.lambda = Some(lyap.decay_rate);
            }
            let section = FlfSection {
                kind: "quadratic",
                p: Some(2.0),
                delta: None,
                c1: Some(c1),
                c2: Some(c2),
                k: Some(out.rate),
            };
            (report, section)
        }
        (None, None) => {
            if !bracket.commuting {
                return Err(CliError::Numeric(format!(
                    "companion field does not commute with f (max residual {})",
                    bracket.max_residual
                )));
            }
            let spec = FlfSpec::quadratic(sys.metric.clone());
            let check = krasovskii::verify(
                &sys,
                &spec,
                args.rate,
                &plan,
                &cfg,
                krasovskii::W_DECAY_TOL,
            )
            .map_err(numeric_err)?;
            let verdict = if check.passed() && args.rate >= thresholds.rate_threshold {
                Verdict::Ies
            } else if check.passed() {
                Verdict::Is
            } else {
                Verdict::Inconclusive
            };
            let mut echo = contrakit::report::ConfigEcho::new();
            contrakit::report::echo_str(&mut echo, "check", "krasovskii_verify");
            contrakit::report::echo_num(&mut echo, "rate", args.rate);
            contrakit::report::echo_int(&mut echo, "seed", plan.seed as usize);
            contrakit::report::echo_int(&mut echo, "states", plan.states);
            contrakit::report::echo_int(&mut echo, "times", plan.times);
            contrakit::report::echo_num(&mut echo, "t0", plan.t0);
            contrakit::report::echo_num(&mut echo, "horizon", plan.horizon);
            contrakit::report::echo_num(&mut echo, "w_decay_tol", krasovskii::W_DECAY_TOL);
            contrakit::report::echo_num(
                &mut echo,
                "transport_identity_tol",
                krasovskii::TRANSPORT_IDENTITY_TOL,
            );
            contrakit::report::echo_num(&mut echo, "growth_k1", check.growth.k1);
            contrakit::report::echo_num(&mut echo, "growth_k2", check.growth.k2);
            contrakit::report::echo_num(&mut echo, "growth_q", check.growth.q);
            let report = CertReport {
                verdict,
                rate: RateEstimate {
                    k: None,
                    lambda: Some(check.decay_rate),
                    r_squared: None,
                },
                margin: -check.positivity_margin,
                violations: check.violations,
                samples: check.trajectories,
                skipped: 0,
                notes: Vec::new(),
                config: echo,
            };
            let section = FlfSection {
                kind: "quadratic",
                p: Some(2.0),
                delta: None,
                c1: None,
                c2: None,
                k: Some(args.rate),
            };
            (report, section)
        }
        _ => {
            return Err(CliError::Usage(
                "--P and --Q must be given together".into(),
            ))
        }
    };

    let extra = [
        ("command", Value::String("krasovskii".into())),
        ("system", Value::String(args.system.display().to_string())),
        ("h_equals_f", Value::Bool(args.h_equals_f)),
    ];
    let json = build_report_json(&report, Some(&bracket), Some(&flf_section), &extra);
    write_or_print(args.out.as_ref(), &output::canonical_json(&json))?;
    eprintln!(
        "verdict: {} (bracket residual {}, commuting: {})",
        report.verdict,
        output::fmt_g(bracket.max_residual),
        bracket.commuting
    );
    Ok(report.verdict != Verdict::Inconclusive)
}
