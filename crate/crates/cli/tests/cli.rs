//! End-to-end command-line tests: exit codes, report schema, canonical
//! serialization, curve output.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_contrakit"))
}

fn systems_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../systems")
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn parse_stdout_json(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).unwrap_or_else(|e| {
        panic!(
            "stdout is not JSON ({e}): {}",
            String::from_utf8_lossy(&out.stdout)
        )
    })
}

#[test]
fn bogus_flag_is_usage_error() {
    let out = run(&["check", "--bogus"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(!out.stderr.is_empty());
}

#[test]
fn missing_system_file_is_input_error() {
    let out = run(&[
        "check",
        "--system",
        "/nonexistent/path.sys",
        "--mode",
        "demidovich",
    ]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn malformed_system_file_is_input_error() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.sys");
    std::fs::write(&path, "state = [\"x1\"]\nf = [\"x1 +\"]\n").unwrap();
    let out = run(&["check", "--system", path.to_str().unwrap(), "--mode", "demidovich"]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn blowup_is_numerical_failure() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("blowup.sys");
    std::fs::write(&path, "state = [\"x1\"]\nf = [\"x1^2\"]\n").unwrap();
    let out = run(&[
        "simulate",
        "--system",
        path.to_str().unwrap(),
        "--x0",
        "1",
        "--t0",
        "0",
        "--tf",
        "5",
    ]);
    assert_eq!(out.status.code(), Some(4));
}

#[test]
fn bad_x0_dimension_is_usage_error() {
    let sys = systems_dir().join("rotation.sys");
    let out = run(&[
        "simulate",
        "--system",
        sys.to_str().unwrap(),
        "--x0",
        "1,2,3",
        "--t0",
        "0",
        "--tf",
        "1",
    ]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn demidovich_damped_cubic_reports_ies() {
    let sys = systems_dir().join("damped.sys");
    let out = run(&[
        "check",
        "--system",
        sys.to_str().unwrap(),
        "--mode",
        "demidovich",
        "--rate",
        "1.0",
        "--samples",
        "500",
    ]);
    assert_eq!(out.status.code(), Some(0));
    let report = parse_stdout_json(&out);
    assert_eq!(report["verdict"], "IES");
    assert!(report["margin"].as_f64().unwrap() <= 0.0);
    assert_eq!(report["violations"].as_array().unwrap().len(), 0);
}

#[test]
fn empirical_rotation_reports_is() {
    let sys = systems_dir().join("rotation.sys");
    let out = run(&[
        "check",
        "--system",
        sys.to_str().unwrap(),
        "--mode",
        "empirical",
        "--seed",
        "1",
    ]);
    assert_eq!(out.status.code(), Some(0));
    let report = parse_stdout_json(&out);
    assert_eq!(report["verdict"], "IS");
    let lambda = report["rate_estimate"]["lambda"].as_f64().unwrap();
    assert!(lambda.abs() < 0.01, "lambda {lambda}");
}

#[test]
fn verdicts_do_not_fail_exit_unless_opted_in() {
    let sys = systems_dir().join("rotation.sys");
    // demidovich on the rotation fails scientifically but exits 0
    let out = run(&[
        "check",
        "--system",
        sys.to_str().unwrap(),
        "--mode",
        "demidovich",
        "--rate",
        "0.5",
    ]);
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(parse_stdout_json(&out)["verdict"], "inconclusive");
    // opting in flips the exit code
    let out = run(&[
        "check",
        "--system",
        sys.to_str().unwrap(),
        "--mode",
        "demidovich",
        "--rate",
        "0.5",
        "--fail-on-verdict",
    ]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn report_schema_has_all_top_level_keys() {
    let sys = systems_dir().join("damped.sys");
    for mode in ["demidovich", "flf", "empirical", "matrix-measure"] {
        let out = run(&[
            "check",
            "--system",
            sys.to_str().unwrap(),
            "--mode",
            mode,
            "--rate",
            "1.0",
            "--samples",
            "20",
        ]);
        assert_eq!(out.status.code(), Some(0), "mode {mode}");
        let report = parse_stdout_json(&out);
        let obj = report.as_object().unwrap();
        let mut keys: Vec<&str> = obj.keys().map(|s| s.as_str()).collect();
        keys.sort_unstable();
        assert_eq!(
            keys,
            vec![
                "bracket",
                "config",
                "flf",
                "margin",
                "rate_estimate",
                "tool_version",
                "verdict",
                "violations"
            ],
            "mode {mode}"
        );
    }
}

#[test]
fn config_echo_contains_every_numeric_knob() {
    let sys = systems_dir().join("damped.sys");
    let out = run(&[
        "check",
        "--system",
        sys.to_str().unwrap(),
        "--mode",
        "empirical",
        "--seed",
        "3",
    ]);
    let report = parse_stdout_json(&out);
    let config = report["config"].as_object().unwrap();
    for key in [
        "seed",
        "states",
        "tangents",
        "times",
        "pairs",
        "t0",
        "horizon",
        "tol",
        "rate_threshold",
        "r2_threshold",
        "decay_ratio",
        "k_max",
        "rel_tol",
        "abs_tol",
        "max_step",
        "max_steps",
        "method",
        "domain_lower",
        "domain_upper",
        "mode",
        "command",
        "system",
    ] {
        assert!(config.contains_key(key), "missing config key `{key}`");
    }
}

#[test]
fn reports_are_byte_identical_for_same_seed() {
    let sys = systems_dir().join("damped.sys");
    let dir = tempfile::tempdir().unwrap();
    let out_a = dir.path().join("a.json");
    let out_b = dir.path().join("b.json");
    for out_path in [&out_a, &out_b] {
        let out = run(&[
            "check",
            "--system",
            sys.to_str().unwrap(),
            "--mode",
            "empirical",
            "--seed",
            "7",
            "--out",
            out_path.to_str().unwrap(),
        ]);
        assert_eq!(out.status.code(), Some(0));
    }
    let a = std::fs::read(&out_a).unwrap();
    let b = std::fs::read(&out_b).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.last(), Some(&b'\n'));
}

#[test]
fn report_rereads_and_reserializes_identically() {
    let sys = systems_dir().join("damped.sys");
    let out = run(&[
        "check",
        "--system",
        sys.to_str().unwrap(),
        "--mode",
        "demidovich",
        "--rate",
        "1.0",
    ]);
    let text = String::from_utf8(out.stdout).unwrap();
    let value: Value = serde_json::from_str(&text).unwrap();
    let rewritten = contrakit_cli::output::canonical_json(&value);
    assert_eq!(text, rewritten);
}

#[test]
fn empirical_curves_follow_exponential_decay() {
    // scalar linear decay: pair distances are d(0) e^{-t}
    let dir = tempfile::tempdir().unwrap();
    let sys_path = dir.path().join("decay.sys");
    std::fs::write(&sys_path, "state = [\"x1\"]\nf = [\"-x1\"]\n").unwrap();
    let curves_path = dir.path().join("curves.csv");
    let out = run(&[
        "check",
        "--system",
        sys_path.to_str().unwrap(),
        "--mode",
        "empirical",
        "--seed",
        "2",
        "--horizon",
        "3",
        "--curves",
        curves_path.to_str().unwrap(),
        "--out",
        dir.path().join("r.json").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0));
    let csv = std::fs::read_to_string(&curves_path).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("t,series_id,value"));
    let mut d0 = None;
    for line in lines {
        let cols: Vec<&str> = line.split(',').collect();
        assert_eq!(cols.len(), 3);
        if cols[1] != "pair00" {
            continue;
        }
        let t: f64 = cols[0].parse().unwrap();
        let d: f64 = cols[2].parse().unwrap();
        let d0 = *d0.get_or_insert(d);
        let expect = d0 * (-t).exp();
        assert!(
            (d - expect).abs() <= 1e-4 * d0,
            "t={t}: d={d} expected {expect}"
        );
    }
}

#[test]
fn simulate_matches_closed_form_endpoint() {
    let dir = tempfile::tempdir().unwrap();
    let sys_path = dir.path().join("decay.sys");
    std::fs::write(&sys_path, "state = [\"x1\"]\nf = [\"-x1\"]\n").unwrap();
    let out = run(&[
        "simulate",
        "--system",
        sys_path.to_str().unwrap(),
        "--x0",
        "1",
        "--t0",
        "0",
        "--tf",
        "1",
    ]);
    assert_eq!(out.status.code(), Some(0));
    let csv = String::from_utf8(out.stdout).unwrap();
    let last = csv.lines().last().unwrap();
    let cols: Vec<&str> = last.split(',').collect();
    assert_eq!(cols[0], "1");
    let end: f64 = cols[2].parse().unwrap();
    assert!((end - (-1.0f64).exp()).abs() < 1e-7);
}

#[test]
fn simulate_lifted_adds_tangent_series() {
    let sys = systems_dir().join("pendulum.sys");
    let out = run(&[
        "simulate",
        "--system",
        sys.to_str().unwrap(),
        "--x0",
        "0.4,0",
        "--v0",
        "1,0",
        "--t0",
        "0",
        "--tf",
        "2",
    ]);
    assert_eq!(out.status.code(), Some(0));
    let csv = String::from_utf8(out.stdout).unwrap();
    for id in ["theta", "omega", "d_theta", "d_omega"] {
        assert!(
            csv.lines().any(|l| l.split(',').nth(1) == Some(id)),
            "missing series {id}"
        );
    }
}

#[test]
fn krasovskii_verify_command() {
    let sys = systems_dir().join("damped.sys");
    let out = run(&[
        "krasovskii",
        "--system",
        sys.to_str().unwrap(),
        "--rate",
        "2.0",
    ]);
    assert_eq!(out.status.code(), Some(0));
    let report = parse_stdout_json(&out);
    assert_eq!(report["verdict"], "IES");
    assert_eq!(report["bracket"]["commuting"], true);
    assert_eq!(report["flf"]["kind"], "quadratic");
}

#[test]
fn krasovskii_classical_with_matrix_files() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("P.txt");
    let q = dir.path().join("Q.txt");
    std::fs::write(&p, "0.5\n").unwrap();
    std::fs::write(&q, "1\n").unwrap();
    let sys = systems_dir().join("damped.sys");
    let out = run(&[
        "krasovskii",
        "--system",
        sys.to_str().unwrap(),
        "--h-equals-f",
        "--P",
        p.to_str().unwrap(),
        "--Q",
        q.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0));
    let report = parse_stdout_json(&out);
    assert_eq!(report["verdict"], "IES");
    // W = f' P f with P = 1/2, Q = 1: implied decay rate 2
    assert_eq!(report["flf"]["k"].as_f64().unwrap(), 2.0);
}

#[test]
fn krasovskii_requires_both_matrices() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("P.txt");
    std::fs::write(&p, "0.5\n").unwrap();
    let sys = systems_dir().join("damped.sys");
    let out = run(&[
        "krasovskii",
        "--system",
        sys.to_str().unwrap(),
        "--P",
        p.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(2));
}
