//! The five subcommands and the exit-code taxonomy.
//!
//! Completed commands exit with: 0 success, 1 config or I/O failure,
//! 2 flow timeout, 3 monitor violation, 4 positivity/step failure,
//! 5 Newton failure, 6 cone condition violated, 7 verification suite
//! failure. Runs integrate in the I = 0 gauge: the initial potential is
//! shifted onto it first, and the flow then conserves it.

use std::path::Path;
use std::time::Instant;

use jflow_core::error::JflowError;
use jflow_core::estimates::{self, ConeReport, EstimateConstants};
use jflow_core::flow::{run_flow, FlowOutcome, Problem, Trajectory};
use jflow_core::functionals;
use jflow_core::newton::newton_critical;
use jflow_core::verify;
use serde_json::json;

use crate::artifacts;
use crate::config::{ConfigError, Experiment, ExperimentConfig, MonitorChoices};

pub const EXIT_OK: u8 = 0;
pub const EXIT_CONFIG: u8 = 1;
pub const EXIT_TIMEOUT: u8 = 2;
pub const EXIT_MONITOR: u8 = 3;
pub const EXIT_ABORT: u8 = 4;
pub const EXIT_NEWTON: u8 = 5;
pub const EXIT_CONE: u8 = 6;
pub const EXIT_VERIFY: u8 = 7;

fn fail_config(err: &ConfigError) -> u8 {
    eprintln!("{err}");
    EXIT_CONFIG
}

fn fail_io(context: &str, err: &std::io::Error) -> u8 {
    eprintln!("i/o error: {context}: {err}");
    EXIT_CONFIG
}

fn load_experiment(config_path: &Path) -> Result<Experiment, ConfigError> {
    ExperimentConfig::load(config_path)?.build()
}

fn cone_json(cone: &ConeReport<f64>) -> serde_json::Value {
    json!({
        "n": cone.n,
        "c": cone.c,
        "donaldson_ok": cone.donaldson_ok,
        "cone_ok": cone.cone_ok,
        "eps_max": cone.eps_max,
        "min_eig_cone": cone.min_eig_cone,
        "min_eig_donaldson": cone.min_eig_donaldson,
    })
}

fn outcome_name(outcome: &FlowOutcome) -> &'static str {
    match outcome {
        FlowOutcome::Converged => "converged",
        FlowOutcome::Timeout => "timeout",
        FlowOutcome::Aborted { .. } => "aborted",
    }
}

/// Replays every enabled monitor over the recorded trajectory. Returns the
/// per-monitor JSON verdicts and whether all enabled monitors passed.
fn evaluate_monitors(
    problem: &Problem<f64>,
    traj: &Trajectory<f64>,
    choices: &MonitorChoices,
    cone: &ConeReport<f64>,
) -> (serde_json::Value, bool) {
    let mut entries = serde_json::Map::new();
    let mut all_passed = true;
    let records = &traj.records;

    if choices.i {
        let i0 = records[0].i_value;
        let mut max_drift = 0.0f64;
        let mut worst_slack = f64::NEG_INFINITY;
        for r in records {
            let allowance = 1e-6 * (1.0 + r.sup_phi.abs().max(r.inf_phi.abs()));
            let drift = (r.i_value - i0).abs();
            max_drift = max_drift.max(drift);
            worst_slack = worst_slack.max(drift - allowance);
        }
        let passed = worst_slack <= 0.0;
        all_passed &= passed;
        entries.insert(
            "I".into(),
            json!({
                "enabled": true,
                "passed": passed,
                "initial": i0,
                "max_drift": max_drift,
                "worst_slack": worst_slack,
            }),
        );
    } else {
        entries.insert("I".into(), json!({"enabled": false}));
    }

    if choices.j {
        let mut worst_increment = 0.0f64;
        for w in records.windows(2) {
            worst_increment = worst_increment.max(w[1].j_value - w[0].j_value);
        }
        let passed = worst_increment <= 1e-10;
        all_passed &= passed;
        entries.insert(
            "J".into(),
            json!({
                "enabled": true,
                "passed": passed,
                "worst_increment": worst_increment,
                "final": records.last().map(|r| r.j_value),
            }),
        );
    } else {
        entries.insert("J".into(), json!({"enabled": false}));
    }

    if choices.sup_inf {
        match functionals::sup_inf_monitor(records) {
            Ok(report) => {
                entries.insert(
                    "sup_inf".into(),
                    json!({
                        "enabled": true,
                        "passed": true,
                        "applicable": report.applicable,
                        "min_sup": report.min_sup,
                        "c1": report.c1,
                        "c2": report.c2,
                    }),
                );
            }
            Err(e) => {
                all_passed = false;
                entries.insert(
                    "sup_inf".into(),
                    json!({"enabled": true, "passed": false, "violation": e.to_string()}),
                );
            }
        }
    } else {
        entries.insert("sup_inf".into(), json!({"enabled": false}));
    }

    if choices.second_order {
        let epsilon = choices.epsilon.or(cone.eps_max.map(|e| e / 2.0));
        match epsilon {
            None => {
                entries.insert(
                    "second_order".into(),
                    json!({
                        "enabled": true,
                        "passed": true,
                        "skipped": "cone condition fails; no admissible epsilon",
                    }),
                );
            }
            Some(eps) => {
                let verdict = EstimateConstants::new(problem.grid().n(), eps, choices.a)
                    .and_then(|constants| estimates::second_order_monitor(problem, traj, &constants));
                match verdict {
                    Ok(report) => {
                        entries.insert(
                            "second_order".into(),
                            json!({
                                "enabled": true,
                                "passed": true,
                                "epsilon": eps,
                                "A": choices.a,
                                "m0": report.m0,
                                "max_m": report.max_m,
                                "worst_margin": report.worst_margin,
                                "states_checked": report.states_checked,
                            }),
                        );
                    }
                    Err(e) => {
                        all_passed = false;
                        entries.insert(
                            "second_order".into(),
                            json!({
                                "enabled": true,
                                "passed": false,
                                "epsilon": eps,
                                "violation": e.to_string(),
                            }),
                        );
                    }
                }
            }
        }
    } else {
        entries.insert("second_order".into(), json!({"enabled": false}));
    }

    (serde_json::Value::Object(entries), all_passed)
}

pub fn cmd_run(config_path: &Path, out_dir: &Path) -> u8 {
    let exp = match load_experiment(config_path) {
        Ok(e) => e,
        Err(err) => return fail_config(&err),
    };
    if let Err(e) = std::fs::create_dir_all(out_dir) {
        return fail_io("creating output directory", &e);
    }

    let started = Instant::now();
    // fix the additive gauge before integrating; the flow conserves it
    let phi0 = match functionals::normalize_to_i_zero(
        exp.problem.spectral(),
        &exp.phi_init,
        exp.problem.chi0(),
    ) {
        Ok(p) => p,
        Err(e) => return fail_initial_state(&e),
    };
    let traj = match run_flow(&exp.problem, phi0, &exp.flow) {
        Ok(t) => t,
        Err(e) => return fail_initial_state(&e),
    };
    let elapsed = started.elapsed().as_secs_f64();

    let cone = match estimates::check_cone(exp.problem.g(), exp.problem.chi0()) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("{e}");
            return EXIT_CONFIG;
        }
    };
    let (monitor_json, monitors_passed) =
        evaluate_monitors(&exp.problem, &traj, &exp.monitors, &cone);

    if let Err(e) = artifacts::write_trajectory_csv(&out_dir.join("trajectory.csv"), &traj.records)
    {
        return fail_io("writing trajectory.csv", &e);
    }
    let final_state = traj.final_state();
    if let Err(e) = artifacts::write_phi(out_dir, "final_phi", &final_state.phi, exp.problem.grid())
    {
        return fail_io("writing final_phi", &e);
    }

    let abort_reason = match &traj.outcome {
        FlowOutcome::Aborted { reason } => Some(reason.clone()),
        _ => None,
    };
    let exit_code = match &traj.outcome {
        FlowOutcome::Aborted { .. } => EXIT_ABORT,
        FlowOutcome::Timeout => EXIT_TIMEOUT,
        FlowOutcome::Converged if !monitors_passed => EXIT_MONITOR,
        FlowOutcome::Converged => EXIT_OK,
    };

    let last_record = traj.records.last().expect("at least the initial record");
    let summary = json!({
        "version": env!("CARGO_PKG_VERSION"),
        "command": "run",
        "config": {
            "n": exp.n,
            "mode": mode_str(exp.mode),
            "N": exp.points,
            "scheme": scheme_str(exp.flow.scheme),
            "stop_residual": exp.flow.stop_residual,
            "seed": exp.seed,
        },
        "c": exp.problem.c(),
        "cone": cone_json(&cone),
        "outcome": outcome_name(&traj.outcome),
        "abort_reason": abort_reason,
        "converged": traj.converged(),
        "final_residual": final_state.residual,
        "final_time": final_state.t,
        "final_sup_phi": last_record.sup_phi,
        "final_inf_phi": last_record.inf_phi,
        "final_i": last_record.i_value,
        "final_j": last_record.j_value,
        "accepted_steps": traj.accepted_steps,
        "rejected_steps": traj.rejected_steps,
        "records": traj.records.len(),
        "monitors": monitor_json,
        "monitors_passed": monitors_passed,
        "normalized_start": true,
        "timing_seconds": elapsed,
        "exit_code": exit_code,
    });
    if let Err(e) = artifacts::write_json(&out_dir.join("summary.json"), &summary) {
        return fail_io("writing summary.json", &e);
    }

    println!(
        "run {}: residual {:e} at t = {}, {} accepted / {} rejected steps, monitors {}",
        outcome_name(&traj.outcome),
        final_state.residual,
        final_state.t,
        traj.accepted_steps,
        traj.rejected_steps,
        if monitors_passed { "passed" } else { "VIOLATED" },
    );
    exit_code
}

fn mode_str(mode: jflow_core::grid::GridMode) -> &'static str {
    match mode {
        jflow_core::grid::GridMode::Reduced => "reduced",
        jflow_core::grid::GridMode::Full => "full",
    }
}

fn scheme_str(scheme: jflow_core::flow::Scheme) -> &'static str {
    match scheme {
        jflow_core::flow::Scheme::Euler => "euler",
        jflow_core::flow::Scheme::Rk4 => "rk4",
        jflow_core::flow::Scheme::Imex => "imex",
    }
}

/// Maps a hard failure of the initial state to the exit taxonomy.
fn fail_initial_state(err: &JflowError) -> u8 {
    eprintln!("{err}");
    match err {
        JflowError::PositivityLost { .. } => EXIT_ABORT,
        _ => EXIT_CONFIG,
    }
}

pub fn cmd_newton(config_path: &Path, out_dir: &Path, warm_start: Option<&Path>) -> u8 {
    let exp = match load_experiment(config_path) {
        Ok(e) => e,
        Err(err) => return fail_config(&err),
    };
    if let Err(e) = std::fs::create_dir_all(out_dir) {
        return fail_io("creating output directory", &e);
    }
    let phi0 = match warm_start {
        None => exp.phi_init.clone(),
        Some(path) => match artifacts::load_phi(path, exp.problem.grid()) {
            Ok(p) => p,
            Err(err) => return fail_config(&err),
        },
    };

    let started = Instant::now();
    let solved = newton_critical(&exp.problem, &phi0, &exp.newton);
    let elapsed = started.elapsed().as_secs_f64();

    let (report_json, phi_opt, exit_code) = match &solved {
        Ok((phi, report)) => (
            json!({
                "version": env!("CARGO_PKG_VERSION"),
                "command": "newton",
                "converged": report.converged,
                "iterations": report.iterations,
                "final_residual": report.final_residual,
                "residual_history": report.residual_history,
                "inner_iterations": report.inner_iterations,
                "step_scales": report.step_scales,
                "cone_ok": report.cone_ok,
                "timing_seconds": elapsed,
            }),
            Some(phi),
            EXIT_OK,
        ),
        Err(err) => {
            let (iterations, residual) = match err {
                JflowError::NoConvergence { iterations, residual } => {
                    (Some(*iterations), Some(*residual))
                }
                JflowError::SolverStall { iterations, residual } => {
                    (Some(*iterations), Some(*residual))
                }
                _ => (None, None),
            };
            let code = match err {
                JflowError::NoConvergence { .. } | JflowError::SolverStall { .. } => EXIT_NEWTON,
                JflowError::PositivityLost { .. } => EXIT_ABORT,
                _ => EXIT_CONFIG,
            };
            (
                json!({
                    "version": env!("CARGO_PKG_VERSION"),
                    "command": "newton",
                    "converged": false,
                    "error": err.to_string(),
                    "iterations": iterations,
                    "final_residual": residual,
                    "timing_seconds": elapsed,
                }),
                None,
                code,
            )
        }
    };

    if let Err(e) = artifacts::write_json(&out_dir.join("newton_report.json"), &report_json) {
        return fail_io("writing newton_report.json", &e);
    }
    if let Some(phi) = phi_opt {
        if let Err(e) = artifacts::write_phi(out_dir, "final_phi", phi, exp.problem.grid()) {
            return fail_io("writing final_phi", &e);
        }
    }
    match &solved {
        Ok((_, report)) => println!(
            "newton converged in {} iterations, residual {:e}",
            report.iterations, report.final_residual
        ),
        Err(err) => eprintln!("newton failed: {err}"),
    }
    exit_code
}

pub fn cmd_check(config_path: &Path) -> u8 {
    let exp = match load_experiment(config_path) {
        Ok(e) => e,
        Err(err) => return fail_config(&err),
    };
    let cone = match estimates::check_cone(exp.problem.g(), exp.problem.chi0()) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("{e}");
            return EXIT_CONFIG;
        }
    };
    let mut value = cone_json(&cone);
    if let serde_json::Value::Object(map) = &mut value {
        map.insert("version".into(), json!(env!("CARGO_PKG_VERSION")));
        map.insert("command".into(), json!("check"));
    }
    println!("{}", serde_json::to_string_pretty(&value).expect("static JSON"));
    if cone.cone_ok {
        EXIT_OK
    } else {
        EXIT_CONE
    }
}

pub fn cmd_verify(suite: &str, seed: u64) -> u8 {
    let report = match suite {
        "identities" => verify::run_identities::<f64>(seed),
        "eigenbound" => verify::run_eigenbound::<f64>(seed),
        "order" => verify::run_order::<f64>(seed),
        other => {
            eprintln!("unknown suite \"{other}\"");
            return EXIT_CONFIG;
        }
    };
    let report = match report {
        Ok(r) => r,
        Err(e) => {
            eprintln!("suite {suite} failed to complete: {e}");
            return EXIT_VERIFY;
        }
    };
    println!("suite {} (seed {})", report.suite, report.seed);
    let mut passed = 0usize;
    for p in &report.properties {
        println!(
            "{} {} — {} cases, worst slack {:e} — {}",
            if p.passed { "PASS" } else { "FAIL" },
            p.name,
            p.cases,
            p.slack,
            p.detail,
        );
        passed += usize::from(p.passed);
    }
    println!(
        "result: {} ({passed}/{} properties)",
        if report.passed() { "PASS" } else { "FAIL" },
        report.properties.len(),
    );
    if report.passed() {
        EXIT_OK
    } else {
        EXIT_VERIFY
    }
}

pub fn cmd_compare(a: &Path, b: &Path, config_path: &Path) -> u8 {
    let exp = match load_experiment(config_path) {
        Ok(e) => e,
        Err(err) => return fail_config(&err),
    };
    let grid = exp.problem.grid();
    let load = |p: &Path| -> Result<_, ConfigError> {
        let phi = artifacts::load_phi(p, grid)?;
        functionals::normalize_to_i_zero(exp.problem.spectral(), &phi, exp.problem.chi0())
            .map_err(|e| ConfigError(format!("{}: {e}", p.display())))
    };
    let phi_a = match load(a) {
        Ok(p) => p,
        Err(err) => return fail_config(&err),
    };
    let phi_b = match load(b) {
        Ok(p) => p,
        Err(err) => return fail_config(&err),
    };

    let mut sup = 0.0f64;
    let mut sum_sq = 0.0f64;
    for (&x, &y) in phi_a.values().iter().zip(phi_b.values()) {
        let d = (x - y).abs();
        sup = sup.max(d);
        sum_sq += d * d;
    }
    let l2 = (sum_sq * grid.cell_volume::<f64>()).sqrt();
    let value = json!({
        "version": env!("CARGO_PKG_VERSION"),
        "command": "compare",
        "a": a.display().to_string(),
        "b": b.display().to_string(),
        "gauge": "I = 0",
        "sup_diff": sup,
        "l2_diff": l2,
    });
    println!("{}", serde_json::to_string_pretty(&value).expect("static JSON"));
    EXIT_OK
}
