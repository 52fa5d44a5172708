//! Numerical integration: flow maps and transition matrices.
//!
//! Two methods are provided: a fixed-step classical RK4 and an adaptive
//! embedded Dormand-Prince 5(4) pair. Accepted steps store the state and
//! its derivative, so trajectories interpolate between samples with cubic
//! Hermite polynomials (the FLF quadratures evaluate between steps).
//!
//! Transition matrices integrate the variational matrix ODE jointly with
//! the base trajectory as one n + n^2 system, so both share step control.
//! Step-budget exhaustion is reported as an error rather than silently
//! truncating: the analysis assumes forward-complete solutions, so a
//! probable finite-time blowup must surface.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::system::SystemDef;

/// Right-hand side of an ODE. Implementations must be pure: integration
/// of independent initial conditions is embarrassingly parallel.
pub trait VectorField: Sync {
    fn dim(&self) -> usize;
    fn eval_into(&self, t: f64, x: &DVector<f64>, out: &mut DVector<f64>) -> Result<()>;
}

impl VectorField for SystemDef {
    fn dim(&self) -> usize {
        SystemDef::dim(self)
    }
    fn eval_into(&self, t: f64, x: &DVector<f64>, out: &mut DVector<f64>) -> Result<()> {
        self.eval_f(t, x, out)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    /// Classical RK4 with step size `max_step`.
    FixedRk4,
    /// Embedded Dormand-Prince 5(4) with PI-free standard step control.
    AdaptiveRk45,
}

#[derive(Debug, Clone, Copy)]
pub struct IntegratorConfig {
    pub method: Method,
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub max_step: f64,
    pub max_steps: usize,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        IntegratorConfig {
            method: Method::AdaptiveRk45,
            rel_tol: 1e-8,
            abs_tol: 1e-10,
            max_step: f64::INFINITY,
            max_steps: 100_000,
        }
    }
}

impl IntegratorConfig {
    fn validate(&self) -> Result<()> {
        // negated form so NaN tolerances fail validation
        #[allow(clippy::neg_cmp_op_on_partial_ord)]
        if !(self.rel_tol > 0.0) || !(self.abs_tol > 0.0) {
            return Err(Error::Config("tolerances must be positive".into()));
        }
        if self.max_steps == 0 {
            return Err(Error::Config("max_steps must be positive".into()));
        }
        if self.method == Method::FixedRk4 && !(self.max_step.is_finite() && self.max_step > 0.0) {
            return Err(Error::Config(
                "fixed RK4 requires a finite positive max_step".into(),
            ));
        }
        Ok(())
    }
}

/// A solution sampled at accepted steps, with stored derivatives for
/// cubic Hermite interpolation in between.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<DVector<f64>>,
    pub derivs: Vec<DVector<f64>>,
}

impl Trajectory {
    pub fn dim(&self) -> usize {
        self.states[0].len()
    }

    pub fn start_time(&self) -> f64 {
        self.times[0]
    }

    pub fn end_time(&self) -> f64 {
        *self.times.last().unwrap()
    }

    pub fn end_state(&self) -> &DVector<f64> {
        self.states.last().unwrap()
    }

    /// Dense output: cubic Hermite interpolation on the bracketing step.
    /// `t` is clamped to the trajectory span.
    pub fn eval(&self, t: f64) -> DVector<f64> {
        let times = &self.times;
        if t <= times[0] {
            return self.states[0].clone();
        }
        if t >= *times.last().unwrap() {
            return self.states.last().unwrap().clone();
        }
        let k = match times.binary_search_by(|probe| probe.partial_cmp(&t).unwrap()) {
            Ok(i) => return self.states[i].clone(),
            Err(i) => i - 1,
        };
        let h = times[k + 1] - times[k];
        let s = (t - times[k]) / h;
        let s2 = s * s;
        let s3 = s2 * s;
        let h00 = 2.0 * s3 - 3.0 * s2 + 1.0;
        let h10 = s3 - 2.0 * s2 + s;
        let h01 = -2.0 * s3 + 3.0 * s2;
        let h11 = s3 - s2;
        &self.states[k] * h00
            + &self.derivs[k] * (h10 * h)
            + &self.states[k + 1] * h01
            + &self.derivs[k + 1] * (h11 * h)
    }
}

// Dormand-Prince 5(4) tableau.
const A: [[f64; 6]; 6] = [
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [
        19372.0 / 6561.0,
        -25360.0 / 2187.0,
        64448.0 / 6561.0,
        -212.0 / 729.0,
        0.0,
        0.0,
    ],
    [
        9017.0 / 3168.0,
        -355.0 / 33.0,
        46732.0 / 5247.0,
        49.0 / 176.0,
        -5103.0 / 18656.0,
        0.0,
    ],
    [
        35.0 / 384.0,
        0.0,
        500.0 / 1113.0,
        125.0 / 192.0,
        -2187.0 / 6784.0,
        11.0 / 84.0,
    ],
];
const C: [f64; 6] = [1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];
// 4th-order weights for the error estimate.
const B4: [f64; 7] = [
    5179.0 / 57600.0,
    0.0,
    7571.0 / 16695.0,
    393.0 / 640.0,
    -92097.0 / 339200.0,
    187.0 / 2100.0,
    1.0 / 40.0,
];

/// Integrate a vector field from `t0` to `tf >= t0`.
pub fn integrate_field(
    field: &dyn VectorField,
    x0: &DVector<f64>,
    t0: f64,
    tf: f64,
    cfg: &IntegratorConfig,
) -> Result<Trajectory> {
    cfg.validate()?;
    if x0.len() != field.dim() {
        return Err(Error::Dimension {
            context: "initial state".into(),
            expected: field.dim(),
            got: x0.len(),
        });
    }
    if tf < t0 {
        return Err(Error::Precondition(format!("tf = {tf} < t0 = {t0}")));
    }
    match cfg.method {
        Method::FixedRk4 => rk4_fixed(field, x0, t0, tf, cfg),
        Method::AdaptiveRk45 => dopri5(field, x0, t0, tf, cfg),
    }
}

/// Integrate a system from `t0` to `tf`.
pub fn integrate(
    sys: &SystemDef,
    x0: &DVector<f64>,
    t0: f64,
    tf: f64,
    cfg: &IntegratorConfig,
) -> Result<Trajectory> {
    integrate_field(sys, x0, t0, tf, cfg)
}

/// The flow map φ(t; t0, x0): endpoint of the integrated trajectory.
pub fn flow_map(
    sys: &SystemDef,
    x0: &DVector<f64>,
    t0: f64,
    t: f64,
    cfg: &IntegratorConfig,
) -> Result<DVector<f64>> {
    Ok(integrate(sys, x0, t0, t, cfg)?.end_state().clone())
}

fn rk4_fixed(
    field: &dyn VectorField,
    x0: &DVector<f64>,
    t0: f64,
    tf: f64,
    cfg: &IntegratorConfig,
) -> Result<Trajectory> {
    let n = field.dim();
    let mut t = t0;
    let mut x = x0.clone();
    let mut k1 = DVector::zeros(n);
    let mut k2 = DVector::zeros(n);
    let mut k3 = DVector::zeros(n);
    let mut k4 = DVector::zeros(n);
    field.eval_into(t, &x, &mut k1)?;

    let mut traj = Trajectory {
        times: vec![t0],
        states: vec![x.clone()],
        derivs: vec![k1.clone()],
    };
    let mut steps = 0usize;
    while t < tf {
        if steps >= cfg.max_steps {
            return Err(Error::Integration {
                t,
                reason: format!("step budget of {} exhausted", cfg.max_steps),
            });
        }
        steps += 1;
        let h = cfg.max_step.min(tf - t);
        field.eval_into(t + 0.5 * h, &(&x + &k1 * (0.5 * h)), &mut k2)?;
        field.eval_into(t + 0.5 * h, &(&x + &k2 * (0.5 * h)), &mut k3)?;
        field.eval_into(t + h, &(&x + &k3 * h), &mut k4)?;
        x += (&k1 + &k2 * 2.0 + &k3 * 2.0 + &k4) * (h / 6.0);
        t = if tf - t <= cfg.max_step { tf } else { t + h };
        field.eval_into(t, &x, &mut k1)?;
        traj.times.push(t);
        traj.states.push(x.clone());
        traj.derivs.push(k1.clone());
    }
    Ok(traj)
}

fn dopri5(
    field: &dyn VectorField,
    x0: &DVector<f64>,
    t0: f64,
    tf: f64,
    cfg: &IntegratorConfig,
) -> Result<Trajectory> {
    let n = field.dim();
    let mut t = t0;
    let mut x = x0.clone();
    let mut k: Vec<DVector<f64>> = (0..7).map(|_| DVector::zeros(n)).collect();
    field.eval_into(t, &x, &mut k[0])?;

    let mut traj = Trajectory {
        times: vec![t0],
        states: vec![x.clone()],
        derivs: vec![k[0].clone()],
    };
    if tf == t0 {
        return Ok(traj);
    }

    let span = tf - t0;
    let mut h = (span / 100.0).min(cfg.max_step).min(span);
    let mut steps = 0usize;
    while t < tf {
        if steps >= cfg.max_steps {
            return Err(Error::Integration {
                t,
                reason: format!("step budget of {} exhausted", cfg.max_steps),
            });
        }
        if h < 1e-14 * (1.0 + t.abs()) {
            return Err(Error::Integration {
                t,
                reason: "step size underflow".into(),
            });
        }
        steps += 1;
        let last = t + h >= tf;
        if last {
            h = tf - t;
        }

        for i in 0..6 {
            let mut xs = x.clone();
            for (j, kj) in k.iter().enumerate().take(i + 1) {
                if A[i][j] != 0.0 {
                    xs += kj * (A[i][j] * h);
                }
            }
            field.eval_into(t + C[i] * h, &xs, &mut k[i + 1])?;
        }
        // 5th-order solution; row A[5] is the weight row, so the last stage
        // already evaluated f(t + h, x_new) into k[6] (FSAL)
        let mut x_new = x.clone();
        for (j, kj) in k.iter().enumerate().take(6) {
            if A[5][j] != 0.0 {
                x_new += kj * (A[5][j] * h);
            }
        }

        // embedded 4th-order solution for the error estimate
        let mut x_low = x.clone();
        for (j, kj) in k.iter().enumerate() {
            if B4[j] != 0.0 {
                x_low += kj * (B4[j] * h);
            }
        }
        let mut err_norm = 0.0f64;
        for i in 0..n {
            let scale = cfg.abs_tol + cfg.rel_tol * x[i].abs().max(x_new[i].abs());
            let e = (x_new[i] - x_low[i]) / scale;
            err_norm += e * e;
        }
        err_norm = (err_norm / n as f64).sqrt();

        if err_norm <= 1.0 {
            t = if last { tf } else { t + h };
            x = x_new;
            k[0] = k[6].clone();
            traj.times.push(t);
            traj.states.push(x.clone());
            traj.derivs.push(k[0].clone());
        }
        let scale = if err_norm == 0.0 {
            5.0
        } else if !err_norm.is_finite() {
            0.2
        } else {
            (0.9 * err_norm.powf(-0.2)).clamp(0.2, 5.0)
        };
        h = (h * scale).min(cfg.max_step);
    }
    Ok(traj)
}

/// Transition matrix Φ(t, t0) of the linearization along φ(·; t0, x0),
/// solution of dX/dτ = (∂f/∂x)(φ(τ), τ) X with X(t0) = I.
#[derive(Debug, Clone)]
pub struct TransitionMatrix {
    pub matrix: DMatrix<f64>,
    pub t0: f64,
    pub t1: f64,
}

struct VariationalSystem<'a> {
    sys: &'a SystemDef,
}

impl VectorField for VariationalSystem<'_> {
    fn dim(&self) -> usize {
        let n = self.sys.dim();
        n + n * n
    }
    fn eval_into(&self, t: f64, z: &DVector<f64>, out: &mut DVector<f64>) -> Result<()> {
        let n = self.sys.dim();
        let x = DVector::from_column_slice(&z.as_slice()[..n]);
        let mut fx = DVector::zeros(n);
        self.sys.eval_f(t, &x, &mut fx)?;
        let jac = self.sys.jacobian(t, &x)?;
        out.rows_mut(0, n).copy_from(&fx);
        // dPhi/dt = J * Phi, column-major layout
        for col in 0..n {
            for row in 0..n {
                let mut acc = 0.0;
                for m in 0..n {
                    acc += jac[(row, m)] * z[n + col * n + m];
                }
                out[n + col * n + row] = acc;
            }
        }
        Ok(())
    }
}

/// Integrate the joint base + variational system and return Φ(t, t0).
pub fn transition_matrix(
    sys: &SystemDef,
    x0: &DVector<f64>,
    t0: f64,
    t: f64,
    cfg: &IntegratorConfig,
) -> Result<TransitionMatrix> {
    let n = sys.dim();
    let mut z0 = DVector::zeros(n + n * n);
    z0.rows_mut(0, n).copy_from(x0);
    for i in 0..n {
        z0[n + i * n + i] = 1.0;
    }
    let var = VariationalSystem { sys };
    let traj = integrate_field(&var, &z0, t0, t, cfg)?;
    let end = traj.end_state();
    let matrix = DMatrix::from_column_slice(n, n, &end.as_slice()[n..]);
    Ok(TransitionMatrix { matrix, t0, t1: t })
}
