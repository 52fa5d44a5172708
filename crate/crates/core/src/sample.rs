//! Deterministic sample plans.
//!
//! Every randomized check draws from streams derived from one seed, so a
//! plan reproduces the same samples regardless of evaluation order or
//! parallelism.

use nalgebra::DVector;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::metric::{self, MetricSpec};
use crate::system::SystemDef;

/// Sampling configuration for certification checks.
#[derive(Debug, Clone, PartialEq)]
pub struct SamplePlan {
    pub seed: u64,
    /// Number of sampled states (one sampled time each).
    pub states: usize,
    /// Tangent vectors per sampled state, normalized to unit metric norm.
    pub tangents: usize,
    /// Grid points on the time window for trajectory-based checks.
    pub times: usize,
    /// Trajectory pairs for empirical rate estimation.
    pub pairs: usize,
    pub t0: f64,
    pub horizon: f64,
    pub domain: Vec<(f64, f64)>,
}

// stream ids, kept distinct per sample kind
const STREAM_STATES: u64 = 1;
const STREAM_TIMES: u64 = 2;
const STREAM_TANGENTS: u64 = 3;
const STREAM_PAIRS: u64 = 4;

impl SamplePlan {
    pub fn new(sys: &SystemDef, seed: u64) -> SamplePlan {
        SamplePlan {
            seed,
            states: 100,
            tangents: 1,
            times: 50,
            pairs: 20,
            t0: 0.0,
            horizon: 5.0,
            domain: sys.domain.clone(),
        }
    }

    fn rng(&self, stream: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(stream);
        rng
    }

    fn dim(&self) -> usize {
        self.domain.len()
    }

    fn draw_state(&self, rng: &mut ChaCha8Rng) -> DVector<f64> {
        DVector::from_iterator(
            self.dim(),
            self.domain.iter().map(|&(lo, hi)| rng.random_range(lo..hi)),
        )
    }

    /// `states` points uniform in the domain box.
    pub fn sample_states(&self) -> Vec<DVector<f64>> {
        let mut rng = self.rng(STREAM_STATES);
        (0..self.states).map(|_| self.draw_state(&mut rng)).collect()
    }

    /// One sampled time per state, uniform in the window.
    pub fn sample_times(&self) -> Vec<f64> {
        let mut rng = self.rng(STREAM_TIMES);
        (0..self.states)
            .map(|_| rng.random_range(self.t0..self.t0 + self.horizon))
            .collect()
    }

    /// Uniform grid over the window, `times` points.
    pub fn time_grid(&self) -> Vec<f64> {
        let m = self.times.max(2);
        (0..m)
            .map(|i| self.t0 + self.horizon * i as f64 / (m - 1) as f64)
            .collect()
    }

    /// `tangents` unit-metric-norm vectors per state: uniform direction on
    /// the Euclidean sphere, then normalized in M(x).
    pub fn sample_unit_tangents(
        &self,
        m: &MetricSpec,
        states: &[DVector<f64>],
    ) -> Result<Vec<Vec<DVector<f64>>>> {
        let mut rng = self.rng(STREAM_TANGENTS);
        let n = self.dim();
        let mut out = Vec::with_capacity(states.len());
        for x in states {
            let mut per_state = Vec::with_capacity(self.tangents);
            for _ in 0..self.tangents {
                let mut v: DVector<f64>;
                loop {
                    v = DVector::from_fn(n, |_, _| gaussian(&mut rng));
                    if v.norm() > 1e-8 {
                        break;
                    }
                }
                let nm = metric::norm(m, x, &v)?;
                per_state.push(v / nm);
            }
            out.push(per_state);
        }
        Ok(out)
    }

    /// Independent point pairs in the domain box.
    pub fn sample_pairs(&self) -> Vec<(DVector<f64>, DVector<f64>)> {
        let mut rng = self.rng(STREAM_PAIRS);
        (0..self.pairs)
            .map(|_| {
                let a = self.draw_state(&mut rng);
                let b = self.draw_state(&mut rng);
                (a, b)
            })
            .collect()
    }
}

// Box-Muller; two uniforms per deviate keeps the stream layout simple.
fn gaussian(rng: &mut ChaCha8Rng) -> f64 {
    let u1: f64 = rng.random_range(f64::MIN_POSITIVE..1.0);
    let u2: f64 = rng.random_range(0.0..std::f64::consts::TAU);
    (-2.0 * u1.ln()).sqrt() * u2.cos()
}
