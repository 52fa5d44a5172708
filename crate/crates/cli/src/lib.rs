//! Library half of the contrakit command line: argument structs, command
//! implementations, canonical report output. The thin `contrakit` binary
//! dispatches into [`commands`].

use std::path::PathBuf;

use clap::{Parser, Subcommand, ValueEnum};

pub mod commands;
pub mod output;

#[derive(Parser)]
#[command(
    name = "contrakit",
    version,
    about = "Certify and explore incremental stability of nonlinear ODE systems"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand)]
pub enum Command {
    /// Run a stability analysis and write a certification report.
    Check(CheckArgs),
    /// Integrate a system (or its complete lift) and write the trajectory.
    Simulate(SimulateArgs),
    /// Krasovskii-style Lyapunov construction and verification.
    Krasovskii(KrasovskiiArgs),
}

#[derive(Clone, Copy, ValueEnum)]
pub enum CheckMode {
    /// Pointwise matrix inequality J'M + MJ + dM + 2*rate*M <= 0.
    Demidovich,
    /// Finite-horizon integral FLF construction and decrease check.
    Flf,
    /// Trajectory-pair rate estimation.
    Empirical,
    /// Matrix measure of the Jacobian, mu(J) <= -rate.
    MatrixMeasure,
}

impl CheckMode {
    pub fn name(&self) -> &'static str {
        match self {
            CheckMode::Demidovich => "demidovich",
            CheckMode::Flf => "flf",
            CheckMode::Empirical => "empirical",
            CheckMode::MatrixMeasure => "matrix-measure",
        }
    }
}

#[derive(clap::Args)]
pub struct CheckArgs {
    /// System-definition file.
    #[arg(long)]
    pub system: PathBuf,
    /// Analysis mode.
    #[arg(long, value_enum)]
    pub mode: CheckMode,
    /// Contraction rate to certify (demidovich, matrix-measure).
    #[arg(long, default_value_t = 0.0)]
    pub rate: f64,
    /// FLF exponent p >= 1 (flf mode).
    #[arg(long, default_value_t = 2.0)]
    pub p: f64,
    /// FLF horizon delta, or `auto` to derive it from measured decay.
    #[arg(long, default_value = "auto")]
    pub delta: String,
    /// Decrease rate alpha: zero | linear:a | power:a,q | auto.
    #[arg(long, default_value = "auto")]
    pub alpha: String,
    /// Sampled states.
    #[arg(long, default_value_t = 100)]
    pub samples: usize,
    /// Trajectory pairs (empirical, flf modes).
    #[arg(long, default_value_t = 20)]
    pub pairs: usize,
    /// Time-grid points on the analysis window.
    #[arg(long, default_value_t = 50)]
    pub times: usize,
    /// Window start time.
    #[arg(long, default_value_t = 0.0)]
    pub t0: f64,
    /// Window length.
    #[arg(long, default_value_t = 5.0)]
    pub horizon: f64,
    /// RNG seed.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Slack tolerance override for the checked inequality.
    #[arg(long)]
    pub tol: Option<f64>,
    /// Report JSON path (stdout when omitted).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Decay-curve CSV path.
    #[arg(long)]
    pub curves: Option<PathBuf>,
    /// Exit 1 when the verdict is inconclusive.
    #[arg(long, default_value_t = false)]
    pub fail_on_verdict: bool,
}

#[derive(clap::Args)]
pub struct SimulateArgs {
    /// System-definition file.
    #[arg(long)]
    pub system: PathBuf,
    /// Initial state, comma separated.
    #[arg(long)]
    pub x0: String,
    /// Initial tangent vector; simulates the complete lift when given.
    #[arg(long)]
    pub v0: Option<String>,
    #[arg(long)]
    pub t0: f64,
    #[arg(long)]
    pub tf: f64,
    /// Trajectory CSV path (stdout when omitted).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(clap::Args)]
pub struct KrasovskiiArgs {
    /// System-definition file.
    #[arg(long)]
    pub system: PathBuf,
    /// Use h = f even when the file declares a companion field.
    #[arg(long, default_value_t = false)]
    pub h_equals_f: bool,
    /// Matrix file for P (classical check; requires --Q).
    #[arg(long = "P")]
    pub p_matrix: Option<PathBuf>,
    /// Matrix file for Q (classical check; requires --P).
    #[arg(long = "Q")]
    pub q_matrix: Option<PathBuf>,
    /// Expected decay rate k of W along trajectories.
    #[arg(long, default_value_t = 0.0)]
    pub rate: f64,
    /// Sampled trajectories.
    #[arg(long, default_value_t = 20)]
    pub samples: usize,
    /// Trajectory window length.
    #[arg(long, default_value_t = 5.0)]
    pub horizon: f64,
    /// RNG seed.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Report JSON path (stdout when omitted).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Exit 1 when the verdict is inconclusive.
    #[arg(long, default_value_t = false)]
    pub fail_on_verdict: bool,
}
