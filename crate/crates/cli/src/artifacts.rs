//! Run artifacts: the trajectory CSV, raw little-endian float64 potential
//! dumps with JSON sidecars, and loaders for warm starts and comparisons.
//!
//! Floats are written with Rust's shortest-round-trip formatting, so a file
//! is a pure function of the computed values: identical runs produce
//! byte-identical artifacts.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use jflow_core::field::PotentialField;
use jflow_core::functionals::DiagnosticsRecord;
use jflow_core::grid::{GridMode, LatticeGrid};

use crate::config::ConfigError;

pub const TRAJECTORY_COLUMNS: &str =
    "t,dt,sup_phi,inf_phi,residual,I,J_cum,max_lambda_omega_chi,min_eig_chi";

pub fn write_trajectory_csv(
    path: &Path,
    records: &[DiagnosticsRecord<f64>],
) -> std::io::Result<()> {
    let mut out = String::new();
    out.push_str(TRAJECTORY_COLUMNS);
    out.push('\n');
    for r in records {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{}\n",
            r.t,
            r.dt,
            r.sup_phi,
            r.inf_phi,
            r.residual,
            r.i_value,
            r.j_value,
            r.max_lambda_omega_chi,
            r.min_eig_chi
        ));
    }
    fs::write(path, out)
}

fn mode_name(mode: GridMode) -> &'static str {
    match mode {
        GridMode::Reduced => "reduced",
        GridMode::Full => "full",
    }
}

/// Writes `<stem>.bin` (raw little-endian f64, row-major with the last axis
/// fastest) plus `<stem>.json` describing the shape.
pub fn write_phi(
    dir: &Path,
    stem: &str,
    phi: &PotentialField<f64>,
    grid: &LatticeGrid,
) -> std::io::Result<PathBuf> {
    let bin_path = dir.join(format!("{stem}.bin"));
    let mut bytes = Vec::with_capacity(phi.len() * 8);
    for &v in phi.values() {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    let mut f = fs::File::create(&bin_path)?;
    f.write_all(&bytes)?;

    let sidecar = serde_json::json!({
        "dtype": "f64-le",
        "layout": "row-major, last axis fastest",
        "n": grid.n(),
        "mode": mode_name(grid.mode()),
        "N": grid.points(),
        "axes": grid.axes(),
        "sites": grid.sites(),
    });
    fs::write(
        dir.join(format!("{stem}.json")),
        serde_json::to_string_pretty(&sidecar).expect("static JSON") + "\n",
    )?;
    Ok(bin_path)
}

/// Reads a potential dumped by [`write_phi`], checking the byte count
/// against the grid.
pub fn load_phi(path: &Path, grid: &LatticeGrid) -> Result<PotentialField<f64>, ConfigError> {
    let bytes = fs::read(path)
        .map_err(|e| ConfigError(format!("cannot read {}: {e}", path.display())))?;
    let expected = grid.sites() * 8;
    if bytes.len() != expected {
        return Err(ConfigError(format!(
            "{}: holds {} bytes but the configured grid needs {} ({} sites)",
            path.display(),
            bytes.len(),
            expected,
            grid.sites()
        )));
    }
    let values: Vec<f64> = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
        .collect();
    PotentialField::from_values(grid, values)
        .map_err(|e| ConfigError(format!("{}: {e}", path.display())))
}

/// Pretty-prints a JSON value to `path` with a trailing newline.
pub fn write_json(path: &Path, value: &serde_json::Value) -> std::io::Result<()> {
    fs::write(path, serde_json::to_string_pretty(value).expect("serializable JSON") + "\n")
}
