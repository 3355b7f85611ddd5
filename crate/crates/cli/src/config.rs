//! Experiment configuration: one JSON document describing the torus, the
//! backgrounds, the initial potential, and the run parameters.
//!
//! Matrices are row-major arrays of `[re, im]` pairs. Every validation error
//! names the offending field so a bad config is a one-line fix.

use std::fmt;
use std::path::Path;

use jflow_core::field::{BackgroundForm, PotentialField};
use jflow_core::flow::{FlowConfig, Problem, Scheme};
use jflow_core::grid::{GridMode, LatticeGrid};
use jflow_core::newton::NewtonConfig;
use num_complex::Complex;
use serde::Deserialize;

/// A configuration problem, already formatted with its field path.
#[derive(Debug)]
pub struct ConfigError(pub String);

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "config error: {}", self.0)
    }
}

impl std::error::Error for ConfigError {}

fn field_err<E: fmt::Display>(field: &str) -> impl FnOnce(E) -> ConfigError + '_ {
    move |e| ConfigError(format!("{field}: {e}"))
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub n: usize,
    #[serde(default = "default_mode")]
    pub mode: String,
    #[serde(rename = "N")]
    pub points: usize,
    /// Row-major n×n matrix of the Kähler metric, entries as [re, im].
    pub g: Vec<[f64; 2]>,
    /// Row-major n×n matrix of the reference form, entries as [re, im].
    pub chi0: Vec<[f64; 2]>,
    #[serde(default)]
    pub phi_init: PhiInit,
    #[serde(default)]
    pub flow: FlowSection,
    #[serde(default)]
    pub newton: NewtonSection,
    #[serde(default)]
    pub monitors: MonitorSection,
    /// Seed for any randomized verifier; echoed into summaries.
    #[serde(default = "default_seed")]
    pub seed: u64,
}

fn default_mode() -> String {
    "reduced".into()
}

fn default_seed() -> u64 {
    1
}

/// Initial potential: the literal string "zero" or a sum of cosine terms
/// a·cos(k·x + θ).
#[derive(Debug, Deserialize)]
#[serde(untagged)]
pub enum PhiInit {
    Named(String),
    Expression { terms: Vec<PhiTerm> },
}

impl Default for PhiInit {
    fn default() -> Self {
        PhiInit::Named("zero".into())
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhiTerm {
    pub amp: f64,
    /// Integer wave vector, one entry per lattice axis.
    pub wave: Vec<i64>,
    #[serde(default)]
    pub phase: f64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FlowSection {
    pub scheme: String,
    pub dt_init: f64,
    pub dt_min: f64,
    pub dt_max: f64,
    pub stop_residual: f64,
    pub t_max: f64,
    pub record_every: usize,
}

impl Default for FlowSection {
    fn default() -> Self {
        let d = FlowConfig::<f64>::default();
        Self {
            scheme: "rk4".into(),
            dt_init: d.dt_init,
            dt_min: d.dt_min,
            dt_max: d.dt_max,
            stop_residual: d.stop_residual,
            t_max: d.t_max,
            record_every: d.record_every,
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NewtonSection {
    pub tol: f64,
    pub max_iter: usize,
    pub krylov_tol: f64,
    pub krylov_max: usize,
}

impl Default for NewtonSection {
    fn default() -> Self {
        let d = NewtonConfig::<f64>::default();
        Self { tol: d.tol, max_iter: d.max_iter, krylov_tol: d.krylov_tol, krylov_max: d.krylov_max }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MonitorSection {
    /// Any of "I", "J", "sup_inf", "second_order".
    pub enable: Vec<String>,
    /// Exponential weight A of the second-order monitor.
    #[serde(rename = "A")]
    pub a: f64,
    /// ε for the second-order bound; "auto" means half the largest
    /// admissible value for the configured backgrounds.
    pub epsilon: EpsilonSpec,
}

impl Default for MonitorSection {
    fn default() -> Self {
        Self {
            enable: ["I", "J", "sup_inf", "second_order"].map(String::from).to_vec(),
            a: 1.0,
            epsilon: EpsilonSpec::Auto("auto".into()),
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
pub enum EpsilonSpec {
    Value(f64),
    Auto(String),
}

/// Which monitors run after a flow, with their parameters.
#[derive(Debug, Clone, Copy)]
pub struct MonitorChoices {
    pub i: bool,
    pub j: bool,
    pub sup_inf: bool,
    pub second_order: bool,
    pub a: f64,
    /// None means "auto": resolve from the cone report at run time.
    pub epsilon: Option<f64>,
}

/// A validated experiment: the immutable problem, the initial potential as
/// written (gauge fixing happens at the command layer), and run parameters.
pub struct Experiment {
    pub problem: Problem<f64>,
    pub phi_init: PotentialField<f64>,
    pub flow: FlowConfig<f64>,
    pub newton: NewtonConfig<f64>,
    pub monitors: MonitorChoices,
    pub mode: GridMode,
    pub n: usize,
    pub points: usize,
    pub seed: u64,
}

impl ExperimentConfig {
    /// Reads and parses a config file; parse failures carry serde's
    /// line/column diagnostics.
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError(format!("cannot read {}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| ConfigError(format!("parse failure: {e}")))
    }

    fn matrix(&self, field: &str, raw: &[[f64; 2]]) -> Result<BackgroundForm<f64>, ConfigError> {
        if raw.len() != self.n * self.n {
            return Err(ConfigError(format!(
                "{field}: expected {}x{} = {} entries, got {}",
                self.n,
                self.n,
                self.n * self.n,
                raw.len()
            )));
        }
        let m: Vec<Complex<f64>> = raw.iter().map(|&[re, im]| Complex::new(re, im)).collect();
        BackgroundForm::new(self.n, m).map_err(field_err(field))
    }

    /// Validates every field and assembles the runnable experiment.
    pub fn build(self) -> Result<Experiment, ConfigError> {
        let mode = match self.mode.as_str() {
            "reduced" => GridMode::Reduced,
            "full" => GridMode::Full,
            other => {
                return Err(ConfigError(format!(
                    "mode: expected \"reduced\" or \"full\", got \"{other}\""
                )))
            }
        };
        let grid = LatticeGrid::new(self.n, mode, self.points)
            .map_err(|e| ConfigError(format!("n/N: {e}")))?;

        let g = self.matrix("g", &self.g)?;
        let chi0 = self.matrix("chi0", &self.chi0)?;

        let phi_init = build_phi(&self.phi_init, &grid)?;

        let scheme = match self.flow.scheme.as_str() {
            "euler" => Scheme::Euler,
            "rk4" => Scheme::Rk4,
            "imex" => Scheme::Imex,
            other => {
                return Err(ConfigError(format!(
                    "flow.scheme: expected \"euler\", \"rk4\" or \"imex\", got \"{other}\""
                )))
            }
        };
        let flow = FlowConfig {
            dt_init: self.flow.dt_init,
            dt_min: self.flow.dt_min,
            dt_max: self.flow.dt_max,
            scheme,
            stop_residual: self.flow.stop_residual,
            t_max: self.flow.t_max,
            record_every: self.flow.record_every,
        };
        flow.validate().map_err(field_err("flow"))?;

        let newton = NewtonConfig {
            tol: self.newton.tol,
            max_iter: self.newton.max_iter,
            krylov_tol: self.newton.krylov_tol,
            krylov_max: self.newton.krylov_max,
        };
        if !(newton.tol > 0.0) || !(newton.krylov_tol > 0.0) {
            return Err(ConfigError("newton: tolerances must be positive".into()));
        }

        let monitors = build_monitors(&self.monitors, self.n)?;

        let problem =
            Problem::new(grid, g, chi0).map_err(|e| ConfigError(format!("g/chi0: {e}")))?;

        Ok(Experiment {
            problem,
            phi_init,
            flow,
            newton,
            monitors,
            mode,
            n: self.n,
            points: self.points,
            seed: self.seed,
        })
    }
}

fn build_phi(init: &PhiInit, grid: &LatticeGrid) -> Result<PotentialField<f64>, ConfigError> {
    match init {
        PhiInit::Named(name) if name == "zero" => Ok(PotentialField::zeros(grid)),
        PhiInit::Named(other) => Err(ConfigError(format!(
            "phi_init: unknown named potential \"{other}\" (only \"zero\" exists)"
        ))),
        PhiInit::Expression { terms } => {
            for (i, term) in terms.iter().enumerate() {
                if term.wave.len() != grid.axes() {
                    return Err(ConfigError(format!(
                        "phi_init.terms[{i}].wave: expected {} components for this grid, got {}",
                        grid.axes(),
                        term.wave.len()
                    )));
                }
                if !term.amp.is_finite() || !term.phase.is_finite() {
                    return Err(ConfigError(format!(
                        "phi_init.terms[{i}]: amp and phase must be finite"
                    )));
                }
            }
            Ok(PotentialField::from_fn(grid, |x: &[f64]| {
                let mut v = 0.0;
                for term in terms {
                    let mut arg = term.phase;
                    for (k, xi) in term.wave.iter().zip(x) {
                        arg += *k as f64 * xi;
                    }
                    v += term.amp * arg.cos();
                }
                v
            }))
        }
    }
}

fn build_monitors(section: &MonitorSection, n: usize) -> Result<MonitorChoices, ConfigError> {
    let mut choices = MonitorChoices {
        i: false,
        j: false,
        sup_inf: false,
        second_order: false,
        a: section.a,
        epsilon: None,
    };
    for name in &section.enable {
        match name.as_str() {
            "I" => choices.i = true,
            "J" => choices.j = true,
            "sup_inf" => choices.sup_inf = true,
            "second_order" => choices.second_order = true,
            other => {
                return Err(ConfigError(format!(
                    "monitors.enable: unknown monitor \"{other}\" \
                     (expected I, J, sup_inf or second_order)"
                )))
            }
        }
    }
    if !(section.a > 0.0) || !section.a.is_finite() {
        return Err(ConfigError("monitors.A: must be positive and finite".into()));
    }
    choices.epsilon = match &section.epsilon {
        EpsilonSpec::Auto(s) if s == "auto" => None,
        EpsilonSpec::Auto(other) => {
            return Err(ConfigError(format!(
                "monitors.epsilon: expected a number or \"auto\", got \"{other}\""
            )))
        }
        EpsilonSpec::Value(v) => {
            let cap = 1.0 / (n as f64 + 1.0);
            if !(*v > 0.0 && *v < cap) {
                return Err(ConfigError(format!(
                    "monitors.epsilon: must lie in (0, 1/{}), got {v}",
                    n + 1
                )));
            }
            Some(*v)
        }
    };
    Ok(choices)
}
