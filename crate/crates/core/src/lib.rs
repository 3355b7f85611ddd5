//! Numerical laboratory for the J-flow on flat Kähler tori.
//!
//! The torus ℂⁿ/(2πℤ)^(2n) carries two constant positive (1,1)-forms: the
//! Kähler metric ω (matrix g) and a reference form χ₀. A potential φ deforms
//! the reference to χ_φ = χ₀ + (√−1/2)∂∂̄φ, and the J-flow
//!
//!   ∂φ/∂t = c − ω∧χ_φ^{n−1}/χ_φ^n,   c = ∫ω∧χ₀^{n−1} / ∫χ₀^n,
//!
//! descends toward the critical equation ω∧χ^{n−1} = c·χ^n. This crate
//! integrates the flow spectrally, solves the critical equation directly by
//! a damped Newton–Krylov iteration, and exposes the associated functionals,
//! positivity conditions, and a-priori-estimate monitors as executable
//! checks.
//!
//! All numerics are generic over the scalar type (f32/f64); the `*64`
//! aliases at the crate root are the concrete types used by the CLI.

pub mod error;
pub mod estimates;
pub mod fft;
pub mod field;
pub mod flow;
pub mod functionals;
pub mod geometry;
pub mod grid;
pub mod herm;
pub mod newton;
pub mod scalar;
pub mod spectral;
pub mod verify;

pub use error::{JflowError, Result};
pub use field::{BackgroundForm, HermitianField, PotentialField};
pub use grid::{GridMode, LatticeGrid};

/// Double-precision aliases; the concrete instantiation the CLI works with.
pub type PotentialField64 = field::PotentialField<f64>;
pub type HermitianField64 = field::HermitianField<f64>;
pub type BackgroundForm64 = field::BackgroundForm<f64>;
pub type Spectral64 = spectral::Spectral<f64>;
pub type ChiField64 = geometry::ChiField<f64>;
pub type Problem64 = flow::Problem<f64>;
pub type Trajectory64 = flow::Trajectory<f64>;
