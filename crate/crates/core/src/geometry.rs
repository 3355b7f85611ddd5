//! Pointwise geometry of the metric pair (ω, χ): assembling χ_φ from the
//! background and a Hessian, the wedge-ratio density σ, and lattice
//! quadrature.
//!
//! The pointwise identity behind everything: for positive Hermitian forms,
//! ω ∧ χ^{n−1} / χ^n = (1/n)·tr(χ⁻¹ g). The main path computes the trace
//! side; `wedge_ratio_oracle` evaluates the left side independently as a
//! log-determinant derivative so the identity itself stays testable. Volume
//! forms are represented by plain determinants — the constant relating
//! det(χ) to χ^n/n! is fixed to 1 throughout and cancels in every ratio and
//! every conserved quantity.

use std::sync::atomic::{AtomicUsize, Ordering};

use num_complex::Complex;
use rayon::prelude::*;

use crate::error::{JflowError, Result};
use crate::field::{BackgroundForm, HermitianField, PotentialField};
use crate::grid::LatticeGrid;
use crate::herm;
use crate::scalar::{kahan_sum, real, Cplx, Scalar};

/// χ_φ together with its positivity certificate.
#[derive(Clone, Debug)]
pub struct ChiField<T> {
    field: HermitianField<T>,
    min_eig: T,
    argmin_site: usize,
}

impl<T: Scalar> ChiField<T> {
    #[inline]
    pub fn field(&self) -> &HermitianField<T> {
        &self.field
    }

    /// Global minimum eigenvalue over all sites; > 0 by construction.
    #[inline]
    pub fn min_eig(&self) -> T {
        self.min_eig
    }

    /// Site attaining the minimum eigenvalue.
    #[inline]
    pub fn argmin_site(&self) -> usize {
        self.argmin_site
    }

    /// The 𝓗-membership certificate. Construction fails otherwise, so this
    /// is always true on a live value; kept for report plumbing.
    #[inline]
    pub fn kahler_valid(&self) -> bool {
        self.min_eig > T::zero()
    }

    pub fn into_field(self) -> HermitianField<T> {
        self.field
    }
}

/// χ_φ = χ₀ + hess, with the global positivity check.
///
/// Fails with `PositivityLost` at the first offending site when the minimum
/// eigenvalue over the lattice is not strictly positive — the signal that φ
/// has left the space of Kähler potentials.
pub fn assemble_chi<T: Scalar>(
    chi0: &BackgroundForm<T>,
    hess: &HermitianField<T>,
) -> Result<ChiField<T>> {
    let n = chi0.dim();
    assert_eq!(hess.dim(), n, "background and Hessian dimensions differ");
    let nn = n * n;
    let sites = hess.sites();
    let mut field = hess.clone();
    let mut eigs = vec![T::zero(); sites];
    let base = chi0.matrix();
    field
        .data_mut()
        .par_chunks_mut(nn)
        .zip(eigs.par_iter_mut())
        .for_each(|(site_mat, eig)| {
            for (v, b) in site_mat.iter_mut().zip(base) {
                *v = *v + *b;
            }
            *eig = herm::min_eig(n, site_mat);
        });

    let mut min_eig = T::infinity();
    let mut argmin_site = 0;
    for (s, &e) in eigs.iter().enumerate() {
        if e < min_eig {
            min_eig = e;
            argmin_site = s;
        }
    }
    if !(min_eig > T::zero()) {
        return Err(JflowError::PositivityLost {
            site: argmin_site,
            min_eig: min_eig.to_f64().unwrap_or(f64::NAN),
            context: "chi assembly",
        });
    }
    Ok(ChiField { field, min_eig, argmin_site })
}

/// Pointwise wedge ratio via the trace identity: σ = (1/n)·tr(χ⁻¹ g).
/// Returns `None` when χ is not invertible-positive at this point.
#[inline]
pub fn sigma_site<T: Scalar>(n: usize, chi: &[Cplx<T>], g: &[Cplx<T>]) -> Option<T> {
    herm::trace_inv_pair(n, chi, g).map(|t| t / real::<T>(n as f64))
}

/// σ over the lattice. Errors with `PositivityLost` at the lowest offending
/// site if χ is not invertible everywhere.
pub fn sigma_field<T: Scalar>(
    chi: &HermitianField<T>,
    g: &BackgroundForm<T>,
    grid: &LatticeGrid,
) -> Result<PotentialField<T>> {
    let n = chi.dim();
    assert_eq!(g.dim(), n);
    assert_eq!(chi.sites(), grid.sites());
    let nn = n * n;
    let mut values = vec![T::zero(); chi.sites()];
    let first_bad = AtomicUsize::new(usize::MAX);
    values
        .par_iter_mut()
        .zip(chi.data().par_chunks(nn))
        .enumerate()
        .for_each(|(s, (v, site_mat))| match sigma_site(n, site_mat, g.matrix()) {
            Some(sig) => *v = sig,
            None => {
                first_bad.fetch_min(s, Ordering::Relaxed);
            }
        });
    let bad = first_bad.load(Ordering::Relaxed);
    if bad != usize::MAX {
        return Err(JflowError::PositivityLost {
            site: bad,
            min_eig: herm::det_re(n, chi.site(bad)).to_f64().unwrap_or(f64::NAN),
            context: "sigma evaluation (determinant not positive)",
        });
    }
    PotentialField::from_values(grid, values)
}

/// det(χ) at every site.
pub fn det_field<T: Scalar>(chi: &HermitianField<T>) -> Vec<T> {
    let n = chi.dim();
    let nn = n * n;
    let mut dets = vec![T::zero(); chi.sites()];
    dets.par_iter_mut().zip(chi.data().par_chunks(nn)).for_each(|(d, site_mat)| {
        *d = herm::det_re(n, site_mat);
    });
    dets
}

/// Independent oracle for the wedge ratio ω∧χ^{n−1}/χ^n on one matrix pair:
/// (1/n)·d/ds log det(χ + s·g) at s = 0, by central differencing with two
/// Richardson extrapolation levels (error O(h⁶) + roundoff).
///
/// Used by tests and the verification suites; the main path uses the trace
/// identity.
pub fn wedge_ratio_oracle<T: Scalar>(chi: &[Cplx<T>], g: &[Cplx<T>], n: usize) -> T {
    let mut tr_chi = T::zero();
    let mut tr_g = T::zero();
    for i in 0..n {
        tr_chi = tr_chi + chi[i * n + i].re;
        tr_g = tr_g + g[i * n + i].re;
    }
    // step sized to the relative scale of the two forms
    let h = real::<T>(1e-3) * tr_chi / tr_g;

    let logdet_at = |s: T| -> T {
        let mut m = [Complex::new(T::zero(), T::zero()); herm::MAX_DIM * herm::MAX_DIM];
        for (i, v) in m[..n * n].iter_mut().enumerate() {
            *v = chi[i] + g[i] * Complex::new(s, T::zero());
        }
        herm::det_re(n, &m[..n * n]).ln()
    };
    let central = |h: T| (logdet_at(h) - logdet_at(-h)) / (real::<T>(2.0) * h);

    let d1 = central(h);
    let d2 = central(h / real::<T>(2.0));
    let d3 = central(h / real::<T>(4.0));
    let four = real::<T>(4.0);
    let r1 = (four * d2 - d1) / real::<T>(3.0);
    let r2 = (four * d3 - d2) / real::<T>(3.0);
    let rr = (real::<T>(16.0) * r2 - r1) / real::<T>(15.0);
    rr / real::<T>(n as f64)
}

/// Quadrature of f (optionally against the determinant density of a matrix
/// field) over the torus: Σ f·det(weight)·(2π/N)^d. Exact for trigonometric
/// polynomials below the Nyquist frequency; summation is compensated and in
/// site order, so results are identical across thread counts.
pub fn integrate_density<T: Scalar>(
    f: &PotentialField<T>,
    weight: Option<&HermitianField<T>>,
    grid: &LatticeGrid,
) -> T {
    assert_eq!(f.len(), grid.sites());
    let cell = grid.cell_volume::<T>();
    match weight {
        None => kahan_sum(f.values().iter().copied()) * cell,
        Some(w) => {
            assert_eq!(w.sites(), grid.sites());
            let dets = det_field(w);
            kahan_sum(f.values().iter().zip(&dets).map(|(&a, &b)| a * b)) * cell
        }
    }
}

/// Mean of a density against det(weight): ∫f·detw / ∫detw.
pub fn weighted_mean<T: Scalar>(
    f: &PotentialField<T>,
    weight: &HermitianField<T>,
    grid: &LatticeGrid,
) -> T {
    let dets = det_field(weight);
    let cell = grid.cell_volume::<T>();
    let num = kahan_sum(f.values().iter().zip(&dets).map(|(&a, &b)| a * b)) * cell;
    let den = kahan_sum(dets.iter().copied()) * cell;
    num / den
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::GridMode;
    use crate::spectral::Spectral;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn cosine_hessian(chi0_val: f64, points: usize) -> (Spectral<f64>, HermitianField<f64>, BackgroundForm<f64>) {
        let grid = LatticeGrid::new(1, GridMode::Reduced, points).unwrap();
        let spectral = Spectral::new(grid);
        let phi = PotentialField::from_fn(spectral.grid(), |x: &[f64]| x[0].cos());
        let mut h = HermitianField::zeros(1, grid.sites());
        spectral.complex_hessian(&phi, &mut h);
        let chi0 = BackgroundForm::new(1, vec![Complex::new(chi0_val, 0.0)]).unwrap();
        (spectral, h, chi0)
    }

    #[test]
    fn assemble_zero_hessian_reproduces_background() {
        let chi0 = BackgroundForm::<f64>::new(
            2,
            vec![
                Complex::new(2.0, 0.0),
                Complex::new(0.0, 0.0),
                Complex::new(0.0, 0.0),
                Complex::new(4.0, 0.0),
            ],
        )
        .unwrap();
        let hess = HermitianField::zeros(2, 16);
        let chi = assemble_chi(&chi0, &hess).unwrap();
        assert!((chi.min_eig() - 2.0).abs() < 1e-14);
        for s in 0..16 {
            assert_eq!(chi.field().site(s), chi0.matrix());
        }
    }

    #[test]
    fn assemble_cosine_min_eig() {
        // χ = 1 − (1/4)cos x: minimum 3/4 on the lattice
        let (_, h, chi0) = cosine_hessian(1.0, 64);
        let chi = assemble_chi(&chi0, &h).unwrap();
        assert!((chi.min_eig() - 0.75).abs() <= 1e-12);
    }

    #[test]
    fn assemble_detects_positivity_loss() {
        // χ = 0.2 − (1/4)cos x dips to −0.05
        let (_, h, chi0) = cosine_hessian(0.2, 64);
        match assemble_chi(&chi0, &h) {
            Err(JflowError::PositivityLost { min_eig, .. }) => {
                assert!((min_eig + 0.05).abs() <= 1e-12, "min eig {min_eig}");
            }
            other => panic!("expected PositivityLost, got {other:?}"),
        }
    }

    #[test]
    fn sigma_identity_metric_is_one() {
        let grid = LatticeGrid::new(1, GridMode::Reduced, 8).unwrap();
        let g = BackgroundForm::new(1, vec![Complex::new(3.0, 0.0)]).unwrap();
        let mut chi = HermitianField::<f64>::zeros(1, grid.sites());
        for s in 0..grid.sites() {
            chi.site_mut(s)[0] = Complex::new(3.0, 0.0);
        }
        let sigma = sigma_field(&chi, &g, &grid).unwrap();
        for &v in sigma.values() {
            assert!((v - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn sigma_constant_diagonal_case() {
        // g = I, χ = diag(2,4): σ = (1/2)(1/2 + 1/4) = 0.375
        let grid = LatticeGrid::new(2, GridMode::Reduced, 4).unwrap();
        let g = BackgroundForm::scaled_identity(2, 1.0).unwrap();
        let mut chi = HermitianField::<f64>::zeros(2, grid.sites());
        for s in 0..grid.sites() {
            chi.site_mut(s)[0] = Complex::new(2.0, 0.0);
            chi.site_mut(s)[3] = Complex::new(4.0, 0.0);
        }
        let sigma = sigma_field(&chi, &g, &grid).unwrap();
        for &v in sigma.values() {
            assert!((v - 0.375).abs() < 1e-15);
        }
    }

    #[test]
    fn oracle_scalar_and_diagonal_examples() {
        // n=1: (1/1)·d/ds log(4 + 2s) = 0.5
        let chi = [Complex::<f64>::new(4.0, 0.0)];
        let g = [Complex::new(2.0, 0.0)];
        assert!((wedge_ratio_oracle(&chi, &g, 1) - 0.5).abs() <= 1e-10);

        // n=2: (1/2)·d/ds log((2+s)(4+s)) = (1/2)(1/2 + 1/4) = 0.375
        let chi = [
            Complex::<f64>::new(2.0, 0.0),
            Complex::new(0.0, 0.0),
            Complex::new(0.0, 0.0),
            Complex::new(4.0, 0.0),
        ];
        let g = [
            Complex::new(1.0, 0.0),
            Complex::new(0.0, 0.0),
            Complex::new(0.0, 0.0),
            Complex::new(1.0, 0.0),
        ];
        assert!((wedge_ratio_oracle(&chi, &g, 2) - 0.375).abs() <= 1e-10);
    }

    #[test]
    fn oracle_matches_trace_identity_on_random_pairs() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        for n in 1..=4 {
            for _ in 0..100 {
                let chi = herm::random_hpd::<f64, _>(n, 1.0, &mut rng);
                let g = herm::random_hpd::<f64, _>(n, 1.0, &mut rng);
                let trace = sigma_site(n, &chi, &g).expect("positive chi");
                let oracle = wedge_ratio_oracle(&chi, &g, n);
                let rel = (trace - oracle).abs() / trace.abs();
                assert!(rel <= 1e-9, "n={n} rel={rel:e}");
            }
        }
    }

    #[test]
    fn quadrature_basics() {
        let grid = LatticeGrid::new(1, GridMode::Reduced, 64).unwrap();
        let one = PotentialField::from_fn(&grid, |_| 1.0);
        let tau = 2.0 * std::f64::consts::PI;
        assert!((integrate_density(&one, None, &grid) - tau).abs() <= 1e-12);

        let cosx = PotentialField::from_fn(&grid, |x: &[f64]| x[0].cos());
        assert!(integrate_density(&cosx, None, &grid).abs() <= 1e-12);

        // constant determinant weight: ∫1·det(diag(2,4)) = (2π)²·8
        let grid2 = LatticeGrid::new(2, GridMode::Reduced, 8).unwrap();
        let one2 = PotentialField::from_fn(&grid2, |_| 1.0);
        let mut w = HermitianField::zeros(2, grid2.sites());
        for s in 0..grid2.sites() {
            w.site_mut(s)[0] = Complex::new(2.0, 0.0);
            w.site_mut(s)[3] = Complex::new(4.0, 0.0);
        }
        let got = integrate_density(&one2, Some(&w), &grid2);
        let want = tau * tau * 8.0;
        assert!((got - want).abs() <= 1e-10 * want);
    }
}
