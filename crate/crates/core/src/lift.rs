//! Complete lift of a system onto its tangent bundle, and Lie transport
//! of tangent vectors along flows.
//!
//! In the single global chart used here the lifted field on (x, v) is
//! `(f(x,t), (∂f/∂x)(x,t) v)`: the base dynamics stacked with the
//! variational dynamics. The flow of the lifted system transports a
//! tangent vector along the base flow, and the transported vector equals
//! `Φ(t,t0) v` with Φ the transition matrix of the linearization. The
//! transport is computed by integrating the 2n lifted ODE directly;
//! finite-differencing the flow is kept only as a test oracle.

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::metric;
use crate::ode::{self, IntegratorConfig, Trajectory, VectorField};
use crate::system::SystemDef;

/// A base point paired with a tangent vector: the state of the lifted
/// system.
#[derive(Debug, Clone, PartialEq)]
pub struct TangentPoint {
    pub x: DVector<f64>,
    pub v: DVector<f64>,
}

impl TangentPoint {
    pub fn new(x: DVector<f64>, v: DVector<f64>) -> Result<TangentPoint> {
        if x.len() != v.len() {
            return Err(Error::Dimension {
                context: "tangent point".into(),
                expected: x.len(),
                got: v.len(),
            });
        }
        Ok(TangentPoint { x, v })
    }

    /// Pack into a 2n vector (x stacked over v).
    pub fn to_stacked(&self) -> DVector<f64> {
        let n = self.x.len();
        let mut z = DVector::zeros(2 * n);
        z.rows_mut(0, n).copy_from(&self.x);
        z.rows_mut(n, n).copy_from(&self.v);
        z
    }

    /// Split a 2n vector back into (x, v).
    pub fn from_stacked(z: &DVector<f64>) -> TangentPoint {
        let n = z.len() / 2;
        TangentPoint {
            x: DVector::from_column_slice(&z.as_slice()[..n]),
            v: DVector::from_column_slice(&z.as_slice()[n..]),
        }
    }
}

/// The complete lift of a system: a 2n vector field whose first n
/// equations never reference v (projecting the lifted flow recovers the
/// base flow).
#[derive(Debug, Clone)]
pub struct LiftedSystem<'a> {
    base: &'a SystemDef,
}

impl<'a> LiftedSystem<'a> {
    pub fn base(&self) -> &SystemDef {
        self.base
    }
}

/// Build the complete lift of a parsed system.
pub fn complete_lift(sys: &SystemDef) -> LiftedSystem<'_> {
    LiftedSystem { base: sys }
}

impl VectorField for LiftedSystem<'_> {
    fn dim(&self) -> usize {
        2 * self.base.dim()
    }

    fn eval_into(&self, t: f64, z: &DVector<f64>, out: &mut DVector<f64>) -> Result<()> {
        let n = self.base.dim();
        let x = DVector::from_column_slice(&z.as_slice()[..n]);
        let mut fx = DVector::zeros(n);
        self.base.eval_f(t, &x, &mut fx)?;
        let jac = self.base.jacobian(t, &x)?;
        out.rows_mut(0, n).copy_from(&fx);
        for i in 0..n {
            let mut acc = 0.0;
            for j in 0..n {
                acc += jac[(i, j)] * z[n + j];
            }
            out[n + i] = acc;
        }
        Ok(())
    }
}

/// Integrate the lifted system over [t0, tf], returning the full (2n)
/// trajectory for dense evaluation.
pub fn transport_trajectory(
    sys: &SystemDef,
    tp: &TangentPoint,
    t0: f64,
    tf: f64,
    cfg: &IntegratorConfig,
) -> Result<Trajectory> {
    let lifted = complete_lift(sys);
    ode::integrate_field(&lifted, &tp.to_stacked(), t0, tf, cfg)
}

/// Lie transport of a tangent vector along the flow:
/// `(φ(t;t0,x), Φ(t,t0) v)`, computed jointly from the lifted ODE.
pub fn lie_transport(
    sys: &SystemDef,
    tp: &TangentPoint,
    t0: f64,
    t: f64,
    cfg: &IntegratorConfig,
) -> Result<TangentPoint> {
    let traj = transport_trajectory(sys, tp, t0, t, cfg)?;
    Ok(TangentPoint::from_stacked(traj.end_state()))
}

/// Which side of the exponential envelope a sample broke.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoundSide {
    /// `|Lie(v)(t)| > K e^{-lambda (t-t0)} |v| + tol`
    Upper,
    /// `|Lie(v)(t)| < |v| e^{-L (t-t0)} - tol`
    Lower,
}

#[derive(Debug, Clone)]
pub struct TransportViolation {
    pub sample: usize,
    pub t: f64,
    pub side: BoundSide,
    pub actual: f64,
    pub limit: f64,
}

#[derive(Debug, Clone)]
pub struct TransportBoundReport {
    pub violations: Vec<TransportViolation>,
    pub grid_points: usize,
    pub samples: usize,
}

impl TransportBoundReport {
    pub fn ok(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Check the exponential transport envelope
/// `|v| e^(-L dt) - tol <= |Lie(v)(t)| <= K e^(-lambda dt) |v| + tol`
/// on a uniform grid over `[t0, t0 + horizon]`, in the system metric.
#[allow(clippy::too_many_arguments)]
pub fn transport_bound_check(
    sys: &SystemDef,
    samples: &[TangentPoint],
    t0: f64,
    horizon: f64,
    big_k: f64,
    lambda: f64,
    lipschitz: f64,
    grid_points: usize,
    tol: f64,
) -> Result<TransportBoundReport> {
    if big_k < 1.0 || lambda <= 0.0 || lipschitz <= 0.0 {
        return Err(Error::Precondition(
            "transport bounds need K >= 1, lambda > 0, L > 0".into(),
        ));
    }
    let grid_points = grid_points.max(2);
    let cfg = IntegratorConfig::default();
    let mut violations = Vec::new();
    for (idx, tp) in samples.iter().enumerate() {
        let v0 = metric::norm(&sys.metric, &tp.x, &tp.v)?;
        let traj = transport_trajectory(sys, tp, t0, t0 + horizon, &cfg)?;
        for g in 0..grid_points {
            let t = t0 + horizon * g as f64 / (grid_points - 1) as f64;
            let state = TangentPoint::from_stacked(&traj.eval(t));
            let actual = metric::norm(&sys.metric, &state.x, &state.v)?;
            let dt = t - t0;
            let upper = big_k * (-lambda * dt).exp() * v0 + tol;
            let lower = (-lipschitz * dt).exp() * v0 - tol;
            if actual > upper {
                violations.push(TransportViolation {
                    sample: idx,
                    t,
                    side: BoundSide::Upper,
                    actual,
                    limit: upper,
                });
            }
            if actual < lower {
                violations.push(TransportViolation {
                    sample: idx,
                    t,
                    side: BoundSide::Lower,
                    actual,
                    limit: lower,
                });
            }
        }
    }
    Ok(TransportBoundReport {
        violations,
        grid_points,
        samples: samples.len(),
    })
}
