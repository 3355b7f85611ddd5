//! Error taxonomy shared by the geometry, flow, and solver layers.

use thiserror::Error;

/// Errors surfaced by the lattice geometry and the solvers built on it.
#[derive(Debug, Clone, Error)]
pub enum JflowError {
    /// A matrix field left the positive cone: the state is no longer a
    /// Kähler potential. `site` is the lattice index of the worst offender.
    #[error("positivity lost at site {site}: min eigenvalue {min_eig:e} ({context})")]
    PositivityLost {
        site: usize,
        min_eig: f64,
        context: &'static str,
    },

    /// Time stepper hit the minimum step size while still rejecting steps.
    #[error("flow step failure at t = {t}: dt floor {dt_min:e} reached while rejecting")]
    StepFailure { t: f64, dt_min: f64 },

    /// Krylov inner solve stagnated above the acceptable residual.
    #[error("linear solver stalled after {iterations} iterations at relative residual {residual:e}")]
    SolverStall { iterations: usize, residual: f64 },

    /// Newton iteration exhausted its budget without meeting the tolerance.
    #[error("no convergence after {iterations} Newton iterations, residual {residual:e}")]
    NoConvergence { iterations: usize, residual: f64 },

    /// A runtime monitor found a state violating its inequality.
    #[error("monitor '{monitor}' violated at t = {t}: {detail}")]
    MonitorViolation {
        monitor: &'static str,
        t: f64,
        detail: String,
    },

    /// Parameter outside its admissible range.
    #[error("domain error: {0}")]
    Domain(String),

    /// Structural problem with input data (dimension mismatch, bad grid, ...).
    #[error("invalid input: {0}")]
    InvalidInput(String),
}

/// Convenience alias used throughout the crate.
pub type Result<V> = std::result::Result<V, JflowError>;
