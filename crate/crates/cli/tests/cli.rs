//! End-to-end contract tests for the `jflow` binary: exit codes, artifact
//! shapes, error diagnostics, and the round-trip guarantee on potential
//! dumps.

use std::path::Path;
use std::process::{Command, Output};

use jflow_core::field::{BackgroundForm, PotentialField};
use jflow_core::flow::{flow_rhs, Problem};
use jflow_core::grid::{GridMode, LatticeGrid};
use num_complex::Complex;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_jflow"))
}

fn write_config(dir: &Path, name: &str, body: &str) -> std::path::PathBuf {
    let path = dir.join(name);
    std::fs::write(&path, body).expect("write config");
    path
}

fn json_file(path: &Path) -> serde_json::Value {
    let text = std::fs::read_to_string(path).unwrap_or_else(|e| panic!("read {path:?}: {e}"));
    serde_json::from_str(&text).unwrap_or_else(|e| panic!("parse {path:?}: {e}"))
}

fn stdout_json(out: &Output) -> serde_json::Value {
    serde_json::from_slice(&out.stdout).unwrap_or_else(|e| {
        panic!("stdout is not JSON ({e}): {}", String::from_utf8_lossy(&out.stdout))
    })
}

const STATIONARY: &str = r#"{
  "n": 1, "N": 16,
  "g": [[1,0]],
  "chi0": [[2,0]],
  "phi_init": "zero"
}"#;

const ANISO_2D_N16: &str = r#"{
  "n": 2, "N": 16,
  "g": [[1,0],[0,0],[0,0],[1,0]],
  "chi0": [[2,0],[0,0],[0,0],[4,0]],
  "phi_init": { "terms": [
    { "amp": 0.2, "wave": [1,0] },
    { "amp": 0.1, "wave": [1,1] }
  ] },
  "flow": { "dt_init": 0.05, "dt_max": 0.05, "stop_residual": 1e-4 }
}"#;

#[test]
fn stationary_run_converges_without_stepping() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.json", STATIONARY);
    let out_dir = dir.path().join("out");
    let out = bin()
        .args(["run", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&out_dir)
        .env("JFLOW_THREADS", "2")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0), "stderr: {}", String::from_utf8_lossy(&out.stderr));

    let csv = std::fs::read_to_string(out_dir.join("trajectory.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines.len(), 2, "header plus the single initial record");
    assert!(lines[0].starts_with("t,dt,sup_phi,inf_phi,residual,I,J_cum"));

    let summary = json_file(&out_dir.join("summary.json"));
    assert_eq!(summary["converged"], serde_json::json!(true));
    assert_eq!(summary["accepted_steps"], serde_json::json!(0));
    assert_eq!(summary["final_residual"], serde_json::json!(0.0));
    assert_eq!(summary["monitors_passed"], serde_json::json!(true));
    assert!(summary["version"].as_str().is_some_and(|v| !v.is_empty()));
}

#[test]
fn non_positive_chi0_fails_naming_the_field() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "c.json",
        r#"{
          "n": 2, "N": 8,
          "g": [[1,0],[0,0],[0,0],[1,0]],
          "chi0": [[1,0],[0,0],[0,0],[-2,0]]
        }"#,
    );
    let out = bin().args(["check", "--config"]).arg(&cfg).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("chi0"), "diagnostic must name the field, got: {stderr}");
}

#[test]
fn malformed_json_reports_the_line() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.json", "{\n  \"n\": 1,\n  \"N\": 16,\n");
    let out = bin().args(["check", "--config"]).arg(&cfg).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("line"), "diagnostic must carry a position, got: {stderr}");
}

#[test]
fn check_reports_the_hand_values() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "c.json",
        r#"{
          "n": 2, "N": 8,
          "g": [[1,0],[0,0],[0,0],[1,0]],
          "chi0": [[2,0],[0,0],[0,0],[4,0]]
        }"#,
    );
    let out = bin().args(["check", "--config"]).arg(&cfg).output().unwrap();
    assert_eq!(out.status.code(), Some(0));
    let v = stdout_json(&out);
    assert_eq!(v["c"].as_f64(), Some(0.375));
    assert_eq!(v["cone_ok"], serde_json::json!(true));
    assert_eq!(v["donaldson_ok"], serde_json::json!(true));
    let eps = v["eps_max"].as_f64().expect("eps_max present");
    assert!((eps - 1.0 / 6.0).abs() <= 1e-11, "eps_max = {eps}");
}

#[test]
fn check_exits_six_when_the_cone_fails() {
    let dir = tempfile::tempdir().unwrap();
    // spread eigenvalues: nc = 12, nc·I − 2·diag(1,1,10) has a negative
    // eigenvalue while nc·I − diag(1,1,10) stays positive
    let cfg = write_config(
        dir.path(),
        "c.json",
        r#"{
          "n": 3, "N": 4,
          "g": [[1,0],[0,0],[0,0],[0,0],[1,0],[0,0],[0,0],[0,0],[10,0]],
          "chi0": [[1,0],[0,0],[0,0],[0,0],[1,0],[0,0],[0,0],[0,0],[1,0]]
        }"#,
    );
    let out = bin().args(["check", "--config"]).arg(&cfg).output().unwrap();
    assert_eq!(out.status.code(), Some(6));
    let v = stdout_json(&out);
    assert_eq!(v["cone_ok"], serde_json::json!(false));
    assert_eq!(v["donaldson_ok"], serde_json::json!(true));
    assert!(v["eps_max"].is_null());
}

/// Reloading final_phi.bin must reproduce the summary's residual exactly
/// (well under the 1e−12 round-trip budget, since the dump is bit-exact).
#[test]
fn final_phi_round_trips_through_the_dump() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "c.json",
        r#"{
          "n": 1, "N": 32,
          "g": [[1,0]],
          "chi0": [[2,0]],
          "phi_init": { "terms": [ { "amp": 0.1, "wave": [1] } ] },
          "flow": { "dt_init": 0.05, "dt_max": 0.05, "stop_residual": 1e-8 }
        }"#,
    );
    let out_dir = dir.path().join("out");
    let out = bin()
        .args(["run", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&out_dir)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0), "stderr: {}", String::from_utf8_lossy(&out.stderr));

    let sidecar = json_file(&out_dir.join("final_phi.json"));
    assert_eq!(sidecar["n"], serde_json::json!(1));
    assert_eq!(sidecar["dtype"], serde_json::json!("f64-le"));
    assert_eq!(sidecar["sites"], serde_json::json!(32));

    let raw = std::fs::read(out_dir.join("final_phi.bin")).unwrap();
    assert_eq!(raw.len(), 32 * 8);
    let values: Vec<f64> =
        raw.chunks_exact(8).map(|b| f64::from_le_bytes(b.try_into().unwrap())).collect();

    let grid = LatticeGrid::new(1, GridMode::Reduced, 32).unwrap();
    let g = BackgroundForm::new(1, vec![Complex::new(1.0, 0.0)]).unwrap();
    let chi0 = BackgroundForm::new(1, vec![Complex::new(2.0, 0.0)]).unwrap();
    let problem = Problem::new(grid, g, chi0).unwrap();
    let phi = PotentialField::from_values(problem.grid(), values).unwrap();
    let rhs = flow_rhs(&problem, &phi).unwrap();
    let residual = rhs.values().iter().fold(0.0f64, |m, &v| m.max(v.abs()));

    let summary = json_file(&out_dir.join("summary.json"));
    let reported = summary["final_residual"].as_f64().unwrap();
    assert!(
        (residual - reported).abs() <= 1e-12,
        "recomputed {residual:e} vs reported {reported:e}"
    );

    // and the dump compared against itself is exactly zero in both norms
    let cmp = bin()
        .args(["compare", "--a"])
        .arg(out_dir.join("final_phi.bin"))
        .arg("--b")
        .arg(out_dir.join("final_phi.bin"))
        .arg("--config")
        .arg(&cfg)
        .output()
        .unwrap();
    assert_eq!(cmp.status.code(), Some(0));
    let v = stdout_json(&cmp);
    assert_eq!(v["sup_diff"].as_f64(), Some(0.0));
    assert_eq!(v["l2_diff"].as_f64(), Some(0.0));
}

#[test]
fn newton_on_a_critical_start_does_no_work() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.json", STATIONARY);
    let out_dir = dir.path().join("out");
    let out = bin()
        .args(["newton", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&out_dir)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let report = json_file(&out_dir.join("newton_report.json"));
    assert_eq!(report["converged"], serde_json::json!(true));
    assert_eq!(report["iterations"], serde_json::json!(0));
    assert_eq!(report["final_residual"], serde_json::json!(0.0));
    assert!(out_dir.join("final_phi.bin").exists());
}

#[test]
fn newton_budget_exhaustion_exits_five_with_a_report() {
    let dir = tempfile::tempdir().unwrap();
    let mut body: serde_json::Value = serde_json::from_str(ANISO_2D_N16).unwrap();
    body["newton"] = serde_json::json!({ "tol": 1e-14, "max_iter": 1 });
    let cfg = write_config(dir.path(), "c.json", &body.to_string());
    let out_dir = dir.path().join("out");
    let out = bin()
        .args(["newton", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&out_dir)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(5), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let report = json_file(&out_dir.join("newton_report.json"));
    assert_eq!(report["converged"], serde_json::json!(false));
    assert!(report["error"].as_str().is_some_and(|s| !s.is_empty()));
    assert_eq!(report["iterations"], serde_json::json!(1));
}

#[test]
fn unreachable_tolerance_times_out_with_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "c.json",
        r#"{
          "n": 1, "N": 16,
          "g": [[1,0]],
          "chi0": [[2,0]],
          "phi_init": { "terms": [ { "amp": 0.1, "wave": [1] } ] },
          "flow": { "dt_init": 0.05, "dt_max": 0.05, "stop_residual": 1e-15, "t_max": 0.5 }
        }"#,
    );
    let out_dir = dir.path().join("out");
    let out = bin()
        .args(["run", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&out_dir)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    let summary = json_file(&out_dir.join("summary.json"));
    assert_eq!(summary["outcome"], serde_json::json!("timeout"));
}

#[test]
fn pinned_oversized_step_aborts_with_exit_four() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "c.json",
        r#"{
          "n": 1, "N": 32,
          "g": [[1,0]],
          "chi0": [[2,0]],
          "phi_init": { "terms": [ { "amp": 0.1, "wave": [1] } ] },
          "flow": { "dt_init": 5.0, "dt_min": 5.0, "dt_max": 5.0, "stop_residual": 1e-12 }
        }"#,
    );
    let out_dir = dir.path().join("out");
    let out = bin()
        .args(["run", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&out_dir)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(4), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let summary = json_file(&out_dir.join("summary.json"));
    assert_eq!(summary["outcome"], serde_json::json!("aborted"));
    assert!(summary["abort_reason"].as_str().is_some_and(|s| !s.is_empty()));
    assert!(out_dir.join("trajectory.csv").exists(), "partial trajectory is retained");
}

/// Integrating right at the explicit stability boundary lets the step
/// controller surf between stable and unstable dt; conservation degrades and
/// the I monitor must flag the converged-but-polluted run with exit 3.
#[test]
fn conservation_monitor_violation_exits_three() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "c.json",
        r#"{
          "n": 1, "N": 128,
          "g": [[1,0]],
          "chi0": [[2,0]],
          "phi_init": { "terms": [ { "amp": 0.3, "wave": [1] } ] },
          "flow": { "dt_init": 0.01, "dt_max": 0.02, "stop_residual": 1e-6 }
        }"#,
    );
    let out_dir = dir.path().join("out");
    let out = bin()
        .args(["run", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&out_dir)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(3), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let summary = json_file(&out_dir.join("summary.json"));
    assert_eq!(summary["converged"], serde_json::json!(true));
    assert_eq!(summary["monitors_passed"], serde_json::json!(false));
    assert_eq!(summary["monitors"]["I"]["passed"], serde_json::json!(false));
}

#[test]
fn verify_subcommand_round_trips_exit_codes() {
    let ok = bin().args(["verify", "--suite", "identities", "--seed", "7"]).output().unwrap();
    assert_eq!(ok.status.code(), Some(0), "stderr: {}", String::from_utf8_lossy(&ok.stderr));
    let text = String::from_utf8_lossy(&ok.stdout);
    assert!(text.contains("PASS"), "per-property verdict lines expected, got: {text}");
    assert!(text.contains("worst slack"), "slack report expected");

    let bad = bin().args(["verify", "--suite", "no-such-suite"]).output().unwrap();
    assert_ne!(bad.status.code(), Some(0));
}

#[test]
fn warm_start_from_a_previous_solution_converges_immediately() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "c.json",
        r#"{
          "n": 2, "N": 16,
          "g": [[1,0],[0,0],[0,0],[1,0]],
          "chi0": [[2,0],[0,0],[0,0],[4,0]],
          "phi_init": { "terms": [
            { "amp": 0.2, "wave": [1,0] },
            { "amp": 0.1, "wave": [1,1] }
          ] }
        }"#,
    );
    let first = dir.path().join("first");
    let out = bin()
        .args(["newton", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&first)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0), "stderr: {}", String::from_utf8_lossy(&out.stderr));

    let second = dir.path().join("second");
    let out = bin()
        .args(["newton", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&second)
        .arg("--warm-start")
        .arg(first.join("final_phi.bin"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let report = json_file(&second.join("newton_report.json"));
    let iters = report["iterations"].as_u64().unwrap();
    assert!(iters <= 1, "warm start should need at most one polish step, took {iters}");
}
