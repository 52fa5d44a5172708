//! Riemannian metric structures in a single global chart: induced norms,
//! geodesic distances and Lipschitz-constant estimation.
//!
//! Three metric kinds are supported. Euclidean and constant-matrix metrics
//! are flat, so distances have the closed form `sqrt((a-b)' P (a-b))`.
//! State-dependent diagonal metrics go through a discrete path-energy
//! minimizer: a polyline with interior nodes is initialized on the straight
//! segment and descended on the energy
//! `sum_k |dx_k|^2_{M(mid_k)} / ds` until the improvement per iteration
//! drops below a threshold; the distance is then the summed segment length.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::expr::{self, Expr};
use crate::system::SystemDef;

/// Metric specification attached to a system.
#[derive(Debug, Clone, PartialEq)]
pub enum MetricSpec {
    Euclidean,
    /// Constant symmetric positive-definite matrix.
    Constant(DMatrix<f64>),
    /// Diagonal metric with state-dependent positive entries m_i(x).
    DiagExpr(Vec<Expr>),
}

impl MetricSpec {
    pub fn dim_matches(&self, n: usize) -> bool {
        match self {
            MetricSpec::Euclidean => true,
            MetricSpec::Constant(p) => p.nrows() == n && p.ncols() == n,
            MetricSpec::DiagExpr(m) => m.len() == n,
        }
    }

    /// The metric matrix M(x).
    pub fn matrix_at(&self, x: &DVector<f64>) -> Result<DMatrix<f64>> {
        let n = x.len();
        match self {
            MetricSpec::Euclidean => Ok(DMatrix::identity(n, n)),
            MetricSpec::Constant(p) => Ok(p.clone()),
            MetricSpec::DiagExpr(entries) => {
                let mut m = DMatrix::zeros(n, n);
                for (i, e) in entries.iter().enumerate() {
                    let v = expr::eval_expr(e, x, 0.0)?;
                    if v <= 0.0 {
                        return Err(Error::Metric(format!(
                            "metric entry m{} = {v} is not positive at x = {:?}",
                            i + 1,
                            x.as_slice()
                        )));
                    }
                    m[(i, i)] = v;
                }
                Ok(m)
            }
        }
    }

    /// Directional derivative of M along the vector `dir` (zero for flat
    /// metrics). Needed by quadratic Lie-derivative and Demidovich checks.
    pub fn directional_derivative(
        &self,
        x: &DVector<f64>,
        dir: &DVector<f64>,
    ) -> Result<DMatrix<f64>> {
        let n = x.len();
        match self {
            MetricSpec::Euclidean | MetricSpec::Constant(_) => Ok(DMatrix::zeros(n, n)),
            MetricSpec::DiagExpr(entries) => {
                let jac = expr::jacobian(entries, x, 0.0)?;
                let mut m = DMatrix::zeros(n, n);
                for i in 0..n {
                    m[(i, i)] = (0..n).map(|j| jac[(i, j)] * dir[j]).sum();
                }
                Ok(m)
            }
        }
    }
}

/// `sqrt(v' M(x) v)`.
pub fn norm(metric: &MetricSpec, x: &DVector<f64>, v: &DVector<f64>) -> Result<f64> {
    match metric {
        MetricSpec::Euclidean => Ok(v.norm()),
        MetricSpec::Constant(p) => Ok((v.transpose() * p * v)[(0, 0)].max(0.0).sqrt()),
        MetricSpec::DiagExpr(entries) => {
            let mut acc = 0.0;
            for (i, e) in entries.iter().enumerate() {
                let m = expr::eval_expr(e, x, 0.0)?;
                if m <= 0.0 {
                    return Err(Error::Metric(format!(
                        "metric entry m{} = {m} is not positive",
                        i + 1
                    )));
                }
                acc += m * v[i] * v[i];
            }
            Ok(acc.sqrt())
        }
    }
}

/// Result of a geodesic-distance computation.
#[derive(Debug, Clone)]
pub struct GeodesicResult {
    pub distance: f64,
    pub polyline: Vec<DVector<f64>>,
    pub converged: bool,
    pub iterations: usize,
}

/// Knobs for the discrete path-energy minimizer.
#[derive(Debug, Clone)]
pub struct GeodesicOptions {
    /// Interior polyline nodes.
    pub nodes: usize,
    pub max_iters: usize,
    /// Stop when the energy improvement in one iteration falls below this.
    pub energy_tol: f64,
}

impl Default for GeodesicOptions {
    fn default() -> Self {
        GeodesicOptions {
            nodes: 64,
            max_iters: 2000,
            energy_tol: 1e-10,
        }
    }
}

/// Geodesic distance between two states. Flat metrics use the closed form,
/// diagonal-expression metrics run the path-energy minimizer.
pub fn distance(metric: &MetricSpec, a: &DVector<f64>, b: &DVector<f64>) -> Result<GeodesicResult> {
    distance_with(metric, a, b, &GeodesicOptions::default())
}

pub fn distance_with(
    metric: &MetricSpec,
    a: &DVector<f64>,
    b: &DVector<f64>,
    opts: &GeodesicOptions,
) -> Result<GeodesicResult> {
    if a.len() != b.len() {
        return Err(Error::Dimension {
            context: "geodesic endpoints".into(),
            expected: a.len(),
            got: b.len(),
        });
    }
    if (a - b).amax() <= 1e-12 {
        return Ok(GeodesicResult {
            distance: 0.0,
            polyline: Vec::new(),
            converged: true,
            iterations: 0,
        });
    }
    match metric {
        MetricSpec::Euclidean => Ok(GeodesicResult {
            distance: (a - b).norm(),
            polyline: vec![a.clone(), b.clone()],
            converged: true,
            iterations: 0,
        }),
        MetricSpec::Constant(_) => {
            let d = norm(metric, a, &(a - b))?;
            Ok(GeodesicResult {
                distance: d,
                polyline: vec![a.clone(), b.clone()],
                converged: true,
                iterations: 0,
            })
        }
        MetricSpec::DiagExpr(_) => minimize_path_energy(metric, a, b, opts),
    }
}

fn segment_quadratic(metric: &MetricSpec, from: &DVector<f64>, to: &DVector<f64>) -> Result<f64> {
    let mid = (from + to) * 0.5;
    let delta = to - from;
    let m = metric.matrix_at(&mid)?;
    Ok((delta.transpose() * m * delta)[(0, 0)])
}

fn path_energy(metric: &MetricSpec, nodes: &[DVector<f64>]) -> Result<f64> {
    let w = (nodes.len() - 1) as f64; // 1/ds with uniform parameter
    let mut e = 0.0;
    for k in 0..nodes.len() - 1 {
        e += w * segment_quadratic(metric, &nodes[k], &nodes[k + 1])?;
    }
    Ok(e)
}

fn path_length(metric: &MetricSpec, nodes: &[DVector<f64>]) -> Result<f64> {
    let mut len = 0.0;
    for k in 0..nodes.len() - 1 {
        len += segment_quadratic(metric, &nodes[k], &nodes[k + 1])?.max(0.0).sqrt();
    }
    Ok(len)
}

/// Gradient of the path energy with respect to the interior nodes.
fn energy_gradient(metric: &MetricSpec, nodes: &[DVector<f64>]) -> Result<Vec<DVector<f64>>> {
    let n = nodes[0].len();
    let w = (nodes.len() - 1) as f64;
    let mut grads = vec![DVector::zeros(n); nodes.len() - 2];
    for (j, g) in grads.iter_mut().enumerate() {
        let idx = j + 1;
        // segment (idx-1, idx): d/dx_idx [d' M(mid) d] = 2 M d + (1/2) dM-term
        for (prev, sign) in [(idx - 1, 1.0), (idx + 1, -1.0)] {
            let (from, to) = if sign > 0.0 {
                (&nodes[prev], &nodes[idx])
            } else {
                (&nodes[idx], &nodes[prev])
            };
            let mid = (from + to) * 0.5;
            let delta = to - from;
            let m = metric.matrix_at(&mid)?;
            let linear = &m * &delta * (2.0 * sign);
            let dm = metric_quadratic_gradient(metric, &mid, &delta)?;
            *g += (linear + dm * 0.5) * w;
        }
    }
    Ok(grads)
}

/// Gradient of `d' M(y) d` with respect to y (diagonal metrics only; zero
/// for flat metrics).
fn metric_quadratic_gradient(
    metric: &MetricSpec,
    y: &DVector<f64>,
    delta: &DVector<f64>,
) -> Result<DVector<f64>> {
    let n = y.len();
    match metric {
        MetricSpec::Euclidean | MetricSpec::Constant(_) => Ok(DVector::zeros(n)),
        MetricSpec::DiagExpr(entries) => {
            let jac = expr::jacobian(entries, y, 0.0)?;
            let mut g = DVector::zeros(n);
            for l in 0..n {
                g[l] = (0..n).map(|i| jac[(i, l)] * delta[i] * delta[i]).sum();
            }
            Ok(g)
        }
    }
}

/// Fixed-step gradient descent with backtracking halving on the discrete
/// path energy. Exposed so flat metrics can be forced through the
/// optimizer for validation.
pub fn minimize_path_energy(
    metric: &MetricSpec,
    a: &DVector<f64>,
    b: &DVector<f64>,
    opts: &GeodesicOptions,
) -> Result<GeodesicResult> {
    let segments = opts.nodes + 1;
    let mut nodes: Vec<DVector<f64>> = (0..=segments)
        .map(|k| {
            let s = k as f64 / segments as f64;
            a * (1.0 - s) + b * s
        })
        .collect();
    let mut energy = path_energy(metric, &nodes)?;
    let mut step = 1e-3;
    let mut converged = false;
    let mut iterations = 0;
    for _ in 0..opts.max_iters {
        iterations += 1;
        let grads = energy_gradient(metric, &nodes)?;
        let gnorm = grads.iter().map(|g| g.norm_squared()).sum::<f64>().sqrt();
        if gnorm < 1e-12 {
            converged = true;
            break;
        }
        // backtracking halving until the step decreases the energy
        let mut improved = false;
        while step > 1e-18 {
            let trial: Vec<DVector<f64>> = nodes
                .iter()
                .enumerate()
                .map(|(k, p)| {
                    if k == 0 || k == nodes.len() - 1 {
                        p.clone()
                    } else {
                        p - &grads[k - 1] * step
                    }
                })
                .collect();
            match path_energy(metric, &trial) {
                Ok(e_trial) if e_trial < energy => {
                    let gain = energy - e_trial;
                    nodes = trial;
                    energy = e_trial;
                    step *= 1.5;
                    improved = true;
                    if gain < opts.energy_tol {
                        converged = true;
                    }
                    break;
                }
                _ => step *= 0.5,
            }
        }
        if !improved {
            // no descent at any representable step size: stationary point
            converged = true;
            break;
        }
        if converged {
            break;
        }
    }
    let dist = path_length(metric, &nodes)?;
    Ok(GeodesicResult {
        distance: dist,
        polyline: nodes,
        converged,
        iterations,
    })
}

/// Lipschitz-constant estimate for the vector field of `sys`.
#[derive(Debug, Clone, Copy)]
pub struct LipschitzEstimate {
    pub value: f64,
    /// Set when the metric kind forced the pairwise sampling fallback.
    pub heuristic: bool,
}

/// Estimate the metric-weighted Lipschitz constant of f by sampling.
///
/// Euclidean and constant metrics use the exact flat-space bound
/// `max ||P^(1/2) J(x,t) P^(-1/2)||_2` over samples. State-dependent
/// diagonal metrics fall back to a pairwise growth-ratio estimator and
/// flag the result as heuristic.
pub fn lipschitz(
    sys: &SystemDef,
    t_grid: &[f64],
    sample_count: usize,
    seed: u64,
) -> Result<LipschitzEstimate> {
    let n = sys.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sample = |rng: &mut ChaCha8Rng| -> DVector<f64> {
        DVector::from_iterator(
            n,
            sys.domain.iter().map(|&(lo, hi)| rng.random_range(lo..hi)),
        )
    };
    let times: Vec<f64> = if t_grid.is_empty() { vec![0.0] } else { t_grid.to_vec() };

    match &sys.metric {
        MetricSpec::Euclidean | MetricSpec::Constant(_) => {
            let (half, inv_half) = match &sys.metric {
                MetricSpec::Constant(p) => {
                    let (h, hi) = spd_sqrt_pair(p)?;
                    (Some(h), Some(hi))
                }
                _ => (None, None),
            };
            let mut worst: f64 = 0.0;
            for &t in &times {
                for _ in 0..sample_count {
                    let x = sample(&mut rng);
                    let j = sys.jacobian(t, &x)?;
                    let weighted = match (&half, &inv_half) {
                        (Some(h), Some(hi)) => h * &j * hi,
                        _ => j,
                    };
                    let sv = weighted.singular_values();
                    worst = worst.max(sv[0]);
                }
            }
            Ok(LipschitzEstimate {
                value: worst,
                heuristic: false,
            })
        }
        MetricSpec::DiagExpr(_) => {
            // Pairwise growth-ratio estimator: |f(b)-f(a)|_M(mid) / |b-a|_M(mid)
            // for nearby random pairs. Flagged heuristic.
            let scale: f64 = sys
                .domain
                .iter()
                .map(|&(lo, hi)| (hi - lo).powi(2))
                .sum::<f64>()
                .sqrt();
            let mut worst: f64 = 0.0;
            let mut fa = DVector::zeros(n);
            let mut fb = DVector::zeros(n);
            for &t in &times {
                for _ in 0..sample_count {
                    let a = sample(&mut rng);
                    let offset = DVector::from_iterator(
                        n,
                        (0..n).map(|_| rng.random_range(-1.0..1.0) * 1e-3 * scale),
                    );
                    let mut b = &a + offset;
                    for i in 0..n {
                        b[i] = b[i].clamp(sys.domain[i].0, sys.domain[i].1);
                    }
                    let mid = (&a + &b) * 0.5;
                    sys.eval_f(t, &a, &mut fa)?;
                    sys.eval_f(t, &b, &mut fb)?;
                    let num = norm(&sys.metric, &mid, &(&fb - &fa))?;
                    let den = norm(&sys.metric, &mid, &(&b - &a))?;
                    if den > 1e-14 {
                        worst = worst.max(num / den);
                    }
                }
            }
            Ok(LipschitzEstimate {
                value: worst,
                heuristic: true,
            })
        }
    }
}

/// P^(1/2) and P^(-1/2) of a symmetric positive-definite matrix.
pub fn spd_sqrt_pair(p: &DMatrix<f64>) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let eig = p.clone().symmetric_eigen();
    if eig.eigenvalues.iter().any(|&l| l <= 0.0) {
        return Err(Error::Metric(format!(
            "matrix is not positive definite (eigenvalue {})",
            eig.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min)
        )));
    }
    let q = &eig.eigenvectors;
    let sqrt_l = DMatrix::from_diagonal(&eig.eigenvalues.map(|l| l.sqrt()));
    let inv_sqrt_l = DMatrix::from_diagonal(&eig.eigenvalues.map(|l| 1.0 / l.sqrt()));
    Ok((q * sqrt_l * q.transpose(), q * inv_sqrt_l * q.transpose()))
}
