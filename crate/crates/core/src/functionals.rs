//! The flow's conserved and monotone quantities: the constant c, the
//! functional I with its I = 0 gauge, discrete J increments, and the sup/inf
//! monitor.
//!
//! I is evaluated through its closed form along the linear path
//! φ_t = tφ: write det((1−t)χ₀ + tχ_φ) as a polynomial in t by multilinear
//! column expansion; the t-integral of each coefficient is a Beta integral,
//! giving
//!
//!   I(φ) = Σ_{k=0}^n w_k ∫ φ·μ_k,   w_k = C(n,k)·B(k+1, n−k+1)/n!,
//!
//! where μ_k is the mixed density of χ_φ^k ∧ χ₀^{n−k}. Every w_k reduces to
//! 1/(n+1)! — an identity the tests confirm against a numeric Beta oracle
//! rather than assume. Since χ_{φ+s} = χ_φ, the map s ↦ I(φ+s) is exactly
//! linear with slope Σ_k w_k ∫μ_k > 0, which makes the I = 0 normalization a
//! one-step Newton solve.

use crate::error::{JflowError, Result};
use crate::field::{BackgroundForm, HermitianField, PotentialField};
use crate::geometry;
use crate::grid::LatticeGrid;
use crate::herm;
use crate::scalar::{kahan_sum, real, Scalar};
use crate::spectral::Spectral;
use num_complex::Complex;
use rayon::prelude::*;

/// One row of the trajectory record: everything the CSV, the monitors, and
/// the acceptance checks consume.
#[derive(Clone, Copy, Debug)]
pub struct DiagnosticsRecord<T> {
    pub t: T,
    pub dt: T,
    pub sup_phi: T,
    pub inf_phi: T,
    /// sup |c − σ(φ)| over the lattice.
    pub residual: T,
    pub i_value: T,
    /// Cumulative J relative to the start of the run (J(0) := 0).
    pub j_value: T,
    /// sup over sites of tr(g_scaled⁻¹ χ), in the c = 1/n gauge.
    pub max_lambda_omega_chi: T,
    pub min_eig_chi: T,
}

fn factorial(m: usize) -> u64 {
    (1..=m as u64).product()
}

fn binomial(n: usize, k: usize) -> u64 {
    factorial(n) / (factorial(k) * factorial(n - k))
}

/// Path weight w_k = C(n,k)·B(k+1, n−k+1)/n!, assembled from exact integer
/// factorials (a single rounding in the final division).
pub fn i_weight<T: Scalar>(n: usize, k: usize) -> T {
    assert!(k <= n && n <= herm::MAX_DIM);
    let num = binomial(n, k) * factorial(k) * factorial(n - k);
    let den = factorial(n + 1) * factorial(n);
    real::<T>(num as f64) / real::<T>(den as f64)
}

/// Numeric Beta-integral oracle for the bracket C(n,k)∫₀¹ t^k (1−t)^{n−k} dt,
/// by composite Simpson quadrature (exact for the cubic integrands of n ≤ 3;
/// ~1e−13 for n = 4 at this panel count).
pub fn i_weight_beta_oracle<T: Scalar>(n: usize, k: usize) -> T {
    let panels = 1024usize;
    let h = T::one() / real::<T>(panels as f64);
    let integrand = |t: T| -> T {
        t.powi(k as i32) * (T::one() - t).powi((n - k) as i32)
    };
    let mut acc = integrand(T::zero()) + integrand(T::one());
    for i in 1..panels {
        let t = real::<T>(i as f64) * h;
        let w = if i % 2 == 1 { real::<T>(4.0) } else { real::<T>(2.0) };
        acc = acc + w * integrand(t);
    }
    let beta = acc * h / real::<T>(3.0);
    real::<T>(binomial(n, k) as f64) * beta / real::<T>(factorial(n) as f64)
}

/// The flow constant for constant backgrounds: c = (1/n)·tr(χ₀⁻¹ g).
pub fn compute_c<T: Scalar>(g: &BackgroundForm<T>, chi0: &BackgroundForm<T>) -> T {
    let n = g.dim();
    assert_eq!(chi0.dim(), n);
    herm::trace_inv_pair(n, chi0.matrix(), g.matrix()).expect("background is positive definite")
        / real::<T>(n as f64)
}

/// The flow constant from an arbitrary representative of the class:
/// c = ∫σ·detχ / ∫detχ by quadrature. Agrees with [`compute_c`] for any
/// χ = χ_ψ up to quadrature roundoff — the cohomological invariance the
/// property tests pin down.
pub fn compute_c_of_field<T: Scalar>(
    g: &BackgroundForm<T>,
    chi: &HermitianField<T>,
    grid: &LatticeGrid,
) -> Result<T> {
    let sigma = geometry::sigma_field(chi, g, grid)?;
    Ok(geometry::weighted_mean(&sigma, chi, grid))
}

/// Mixed densities μ_k of χ^k ∧ χ₀^{n−k} for all k at once, [k][site].
///
/// det((1−t)χ₀ + tχ) expands multilinearly over column subsets; collecting
/// the t^k(1−t)^{n−k} coefficient gives Σ_{|S|=k} det(columns S from χ, rest
/// from χ₀), and the wedge normalization multiplies by n!/C(n,k).
pub fn mixed_densities<T: Scalar>(
    chi: &HermitianField<T>,
    chi0: &BackgroundForm<T>,
) -> Vec<Vec<T>> {
    let n = chi.dim();
    assert_eq!(chi0.dim(), n);
    let nn = n * n;
    let sites = chi.sites();
    let base = chi0.matrix();

    // one parallel pass writes all n+1 coefficients per site
    let mut flat = vec![T::zero(); sites * (n + 1)];
    flat.par_chunks_mut(n + 1).zip(chi.data().par_chunks(nn)).for_each(|(coeffs, mat)| {
        let mut m = [Complex::new(T::zero(), T::zero()); herm::MAX_DIM * herm::MAX_DIM];
        for mask in 0..(1u32 << n) {
            let k = mask.count_ones() as usize;
            for i in 0..n {
                for j in 0..n {
                    m[i * n + j] = if mask & (1 << j) != 0 {
                        mat[i * n + j]
                    } else {
                        base[i * n + j]
                    };
                }
            }
            coeffs[k] = coeffs[k] + herm::det_re(n, &m[..nn]);
        }
    });

    let mut out = vec![vec![T::zero(); sites]; n + 1];
    for (k, out_k) in out.iter_mut().enumerate() {
        let scale = real::<T>(factorial(n) as f64) / real::<T>(binomial(n, k) as f64);
        for (s, v) in out_k.iter_mut().enumerate() {
            *v = flat[s * (n + 1) + k] * scale;
        }
    }
    out
}

/// I(φ) given the assembled χ_φ.
pub fn functional_i_with_chi<T: Scalar>(
    phi: &PotentialField<T>,
    chi: &HermitianField<T>,
    chi0: &BackgroundForm<T>,
    grid: &LatticeGrid,
) -> T {
    let n = chi.dim();
    let mu = mixed_densities(chi, chi0);
    let weights: Vec<T> = (0..=n).map(|k| i_weight(n, k)).collect();
    let cell = grid.cell_volume::<T>();
    kahan_sum((0..grid.sites()).map(|s| {
        let mut density = T::zero();
        for k in 0..=n {
            density = density + weights[k] * mu[k][s];
        }
        phi.values()[s] * density
    })) * cell
}

/// I(φ), assembling χ_φ spectrally first.
pub fn functional_i<T: Scalar>(
    spectral: &Spectral<T>,
    phi: &PotentialField<T>,
    chi0: &BackgroundForm<T>,
) -> Result<T> {
    let grid = spectral.grid();
    let mut hess = HermitianField::zeros(chi0.dim(), grid.sites());
    spectral.complex_hessian(phi, &mut hess);
    let chi = geometry::assemble_chi(chi0, &hess)?;
    Ok(functional_i_with_chi(phi, chi.field(), chi0, grid))
}

/// dI/ds for the shift family φ + s: the positive constant Σ_k w_k ∫μ_k.
pub fn i_shift_slope<T: Scalar>(
    chi: &HermitianField<T>,
    chi0: &BackgroundForm<T>,
    grid: &LatticeGrid,
) -> T {
    let n = chi.dim();
    let mu = mixed_densities(chi, chi0);
    let weights: Vec<T> = (0..=n).map(|k| i_weight(n, k)).collect();
    let cell = grid.cell_volume::<T>();
    kahan_sum((0..grid.sites()).map(|s| {
        let mut density = T::zero();
        for k in 0..=n {
            density = density + weights[k] * mu[k][s];
        }
        density
    })) * cell
}

/// Shifts φ by the unique constant making I vanish. Since I(φ+s) is exactly
/// linear in s with positive slope, one Newton step lands on the root; a
/// second pass polishes the last bits of roundoff.
pub fn normalize_to_i_zero<T: Scalar>(
    spectral: &Spectral<T>,
    phi: &PotentialField<T>,
    chi0: &BackgroundForm<T>,
) -> Result<PotentialField<T>> {
    let grid = spectral.grid();
    let mut hess = HermitianField::zeros(chi0.dim(), grid.sites());
    spectral.complex_hessian(phi, &mut hess);
    let chi = geometry::assemble_chi(chi0, &hess)?;
    let slope = i_shift_slope(chi.field(), chi0, grid);
    let mut out = phi.clone();
    for _ in 0..2 {
        let i_val = functional_i_with_chi(&out, chi.field(), chi0, grid);
        out.shift(-(i_val / slope));
    }
    Ok(out)
}

/// The instantaneous J dissipation rate ∫(c − σ)²·detχ ≥ 0; along the flow
/// dJ/dt = −(this).
pub fn j_dissipation<T: Scalar>(
    c: T,
    sigma: &PotentialField<T>,
    chi: &HermitianField<T>,
    grid: &LatticeGrid,
) -> T {
    let dets = geometry::det_field(chi);
    let cell = grid.cell_volume::<T>();
    kahan_sum(sigma.values().iter().zip(&dets).map(|(&s, &d)| {
        let r = c - s;
        r * r * d
    })) * cell
}

/// Trapezoidal J increment between two states with dissipation rates d_a,
/// d_b a time Δt apart: −Δt·(d_a + d_b)/2. Non-positive by construction,
/// which is exactly the descent property the flow must exhibit.
#[inline]
pub fn j_increment<T: Scalar>(dt: T, d_a: T, d_b: T) -> T {
    -(dt * (d_a + d_b) / real::<T>(2.0))
}

/// Verdict of the sup/inf gauge scan over a trajectory.
#[derive(Clone, Debug)]
pub struct SupInfReport<T> {
    /// False when the run was not started in the I = 0 gauge; the first
    /// inequality is then meaningless and nothing is asserted.
    pub applicable: bool,
    /// Worst value of sup φ over the records (must stay ≥ −1e−8).
    pub min_sup: T,
    /// Fitted smallest constants with sup φ ≤ −C₁·inf φ + C₂ over the run.
    pub c1: T,
    pub c2: T,
}

/// Scans recorded states for the gauge inequality 0 ≤ sup φ and fits the
/// smallest (C₁, C₂) with sup φ ≤ −C₁·inf φ + C₂ over the whole run.
///
/// The first inequality is asserted (it is forced by I = 0 with positive
/// mixed densities); the second is reported only, its constants being
/// non-constructive. Runs whose initial I is visibly nonzero get
/// `applicable: false` instead of a spurious violation.
pub fn sup_inf_monitor<T: Scalar>(records: &[DiagnosticsRecord<T>]) -> Result<SupInfReport<T>> {
    if records.is_empty() {
        return Err(JflowError::InvalidInput("empty trajectory".into()));
    }
    let first = &records[0];
    let scale = T::one() + first.sup_phi.abs().max(first.inf_phi.abs());
    let gauge_tol = real::<T>(1e-6) * scale;
    if first.i_value.abs() > gauge_tol {
        return Ok(SupInfReport {
            applicable: false,
            min_sup: records.iter().map(|r| r.sup_phi).fold(T::infinity(), T::min),
            c1: T::zero(),
            c2: T::zero(),
        });
    }

    let sup_floor = real::<T>(-1e-8);
    let mut min_sup = T::infinity();
    for r in records {
        min_sup = min_sup.min(r.sup_phi);
        if r.sup_phi < sup_floor {
            return Err(JflowError::MonitorViolation {
                monitor: "sup_inf",
                t: r.t.to_f64().unwrap_or(f64::NAN),
                detail: format!("sup phi = {:e} dropped below -1e-8", r.sup_phi),
            });
        }
    }

    // smallest (C₁, C₂) minimizing C₁+C₂ subject to C₂ ≥ sup_t + C₁·inf_t:
    // the optimum sits at a vertex, so enumerate single- and pairwise-active
    // candidates for C₁ and take the best feasible point
    let mut candidates: Vec<T> = vec![T::zero()];
    for i in 0..records.len() {
        let (si, fi) = (records[i].sup_phi, records[i].inf_phi);
        if fi < T::zero() && si > T::zero() {
            candidates.push(si / -fi);
        }
        for j in (i + 1)..records.len() {
            let (sj, fj) = (records[j].sup_phi, records[j].inf_phi);
            let denom = fj - fi;
            if denom != T::zero() {
                let c1 = (si - sj) / denom;
                if c1 >= T::zero() && c1.is_finite() {
                    candidates.push(c1);
                }
            }
        }
    }
    let mut best = (T::infinity(), T::zero(), T::zero());
    for &c1 in &candidates {
        let mut c2 = T::zero();
        for r in records {
            c2 = c2.max(r.sup_phi + c1 * r.inf_phi);
        }
        let obj = c1 + c2;
        if obj < best.0 {
            best = (obj, c1, c2);
        }
    }
    Ok(SupInfReport { applicable: true, min_sup, c1: best.1, c2: best.2 })
}
