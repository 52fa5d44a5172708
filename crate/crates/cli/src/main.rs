//! contrakit command line: load system files, run incremental-stability
//! analyses, emit machine-readable reports and decay-curve CSV.
//!
//! Exit codes: 0 analysis completed (whatever the verdict), 1 inconclusive
//! verdict when `--fail-on-verdict` is set, 2 usage error, 3 input file
//! error, 4 numerical failure.

use std::process::ExitCode;

use clap::Parser;
use contrakit_cli::{commands, Cli, Command};

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (outcome, fail_on_verdict) = match &cli.command {
        Command::Check(args) => (commands::check(args), args.fail_on_verdict),
        Command::Simulate(args) => (commands::simulate(args), false),
        Command::Krasovskii(args) => (commands::krasovskii_cmd(args), args.fail_on_verdict),
    };
    match outcome {
        Ok(conclusive) => {
            if fail_on_verdict && !conclusive {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code())
        }
    }
}
