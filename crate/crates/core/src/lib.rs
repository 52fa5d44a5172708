//! contrakit: certify and explore incremental stability of nonlinear
//! time-varying ODE systems.
//!
//! The toolkit builds the complete lift of a system onto its tangent
//! bundle, transports tangent vectors along flows, constructs and checks
//! Finsler-Lyapunov functions (including converse constructions from
//! measured decay data), and runs sampling-based certification:
//! Demidovich-type matrix inequalities, matrix measures, Lie-derivative
//! decrease checks, trajectory-pair rate estimation, and Krasovskii-style
//! Lyapunov functions built from the system's own vector field.
//!
//! Verdicts are empirical: "no violation found on N samples", with the
//! sample count, margins and every numeric knob echoed in the report.
//!
//! Quick start
//! ```rust
//! use contrakit::{certify, SamplePlan, SystemDef, Verdict};
//!
//! let sys = SystemDef::parse(r#"
//!     state = ["x1"]
//!     f = ["-x1 - x1^3"]
//!     domain.lower = [-2]
//!     domain.upper = [2]
//! "#)?;
//! let plan = SamplePlan::new(&sys, 7);
//! let report = certify::demidovich_check(
//!     &sys,
//!     &sys.metric,
//!     1.0,
//!     &plan,
//!     &certify::Thresholds::default(),
//! )?;
//! assert_eq!(report.verdict, Verdict::Ies);
//! # Ok::<(), contrakit::Error>(())
//! ```

pub mod certify;
pub mod dual;
pub mod error;
pub mod expr;
pub mod flf;
pub mod krasovskii;
pub mod lift;
pub mod metric;
pub mod ode;
pub mod report;
pub mod sample;
pub mod system;

pub use dual::Dual;
pub use error::{Error, Result};
pub use expr::{Expr, ExprKind};
pub use flf::{ClassKSpec, FlfBounds, FlfKind, FlfSpec};
pub use lift::{LiftedSystem, TangentPoint};
pub use metric::{GeodesicResult, LipschitzEstimate, MetricSpec};
pub use ode::{IntegratorConfig, Method, TransitionMatrix, Trajectory};
pub use report::{CertReport, RateEstimate, Verdict, Violation};
pub use sample::SamplePlan;
pub use system::SystemDef;
