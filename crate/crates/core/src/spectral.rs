//! Spectral differentiation: complex Hessians and Fourier-diagonal filters.
//!
//! Everything here reduces to one rule: differentiation multiplies the mode
//! K by a symbol. The complex Hessian ∂_k∂_l̄ of a mode e^{iK·x} picks up
//!   reduced mode:  s_kl(K) = −κ_k κ_l / 4
//!   full mode:     s_kl(K) = ζ_k ω_l,  ζ_k = (iκ_{x_k} + κ_{y_k})/2,
//!                                      ω_l = (iκ_{x_l} − κ_{y_l})/2
//! with the reduced form being the full form restricted to y-independent
//! data. Symbols satisfy conj(s_kl(−K)) = s_lk(K), so the Hessian of a real
//! field is Hermitian analytically; we additionally enforce it exactly by
//! writing only the k ≤ l entries and mirroring.
//!
//! Constant-coefficient operators contracted against a fixed Hermitian
//! weight are diagonal in Fourier space with real non-positive symbol
//! λ(K) = Σ_kl conj(W_kl) s_kl(K) = −ζ†Wζ; `weight_symbol` tabulates it and
//! `filter` applies an arbitrary gain function of it. That one primitive
//! covers the implicit time step, the Krylov preconditioner, and the Poisson
//! pseudo-inverse used by the test oracles.

use num_complex::Complex;
use rayon::prelude::*;

use crate::fft::NdFft;
use crate::field::{HermitianField, PotentialField};
use crate::grid::{GridMode, LatticeGrid};
use crate::scalar::{real, Cplx, Scalar};

pub struct Spectral<T> {
    grid: LatticeGrid,
    fft: NdFft<T>,
    /// wavenumber of every mode along every axis, [site-flat × axes]
    mode_wn: Vec<T>,
}

impl<T: Scalar> Spectral<T> {
    pub fn new(grid: LatticeGrid) -> Self {
        let fft = NdFft::new(&grid);
        let axes = grid.axes();
        let mut mode_wn = vec![T::zero(); grid.sites() * axes];
        grid.for_each_site(|flat, idx| {
            for (a, &i) in idx.iter().enumerate() {
                mode_wn[flat * axes + a] = grid.wavenumber(i);
            }
        });
        Self { grid, fft, mode_wn }
    }

    #[inline]
    pub fn grid(&self) -> &LatticeGrid {
        &self.grid
    }

    /// Unnormalized forward DFT of a complex buffer (site order).
    #[inline]
    pub fn forward(&self, buf: &mut [Cplx<T>]) {
        self.fft.forward(buf);
    }

    /// Normalized inverse DFT.
    #[inline]
    pub fn inverse(&self, buf: &mut [Cplx<T>]) {
        self.fft.inverse(buf);
    }

    /// Symbol of ∂_k∂_l̄ at the given flat mode index.
    #[inline]
    pub fn hessian_symbol(&self, mode: usize, k: usize, l: usize) -> Cplx<T> {
        let axes = self.grid.axes();
        let wn = &self.mode_wn[mode * axes..(mode + 1) * axes];
        match self.grid.mode() {
            GridMode::Reduced => {
                let quarter = real::<T>(0.25);
                Complex::new(-(wn[k] * wn[l]) * quarter, T::zero())
            }
            GridMode::Full => {
                let n = self.grid.n();
                let half = real::<T>(0.5);
                let zeta = Complex::new(wn[n + k] * half, wn[k] * half);
                let omega = Complex::new(-(wn[n + l] * half), wn[l] * half);
                zeta * omega
            }
        }
    }

    /// Complex Hessian ∂_k∂_l̄ φ of a real potential, exactly Hermitian.
    pub fn complex_hessian(&self, phi: &PotentialField<T>, out: &mut HermitianField<T>) {
        self.complex_hessian_values(phi.values(), out);
    }

    /// Same as [`Self::complex_hessian`], for a bare slice of site values.
    pub fn complex_hessian_values(&self, phi: &[T], out: &mut HermitianField<T>) {
        let n = self.grid.n();
        let sites = self.grid.sites();
        assert_eq!(phi.len(), sites, "potential not on this grid");
        assert_eq!(out.dim(), n);
        assert_eq!(out.sites(), sites);

        let mut spectrum: Vec<Cplx<T>> =
            phi.iter().map(|&v| Complex::new(v, T::zero())).collect();
        self.fft.forward(&mut spectrum);

        let mut buf = vec![Complex::new(T::zero(), T::zero()); sites];
        let nn = n * n;
        for k in 0..n {
            for l in k..n {
                buf.par_iter_mut().enumerate().for_each(|(m, b)| {
                    *b = spectrum[m] * self.hessian_symbol(m, k, l);
                });
                self.fft.inverse(&mut buf);
                out.data_mut().par_chunks_mut(nn).zip(buf.par_iter()).for_each(
                    |(site_mat, &v)| {
                        if k == l {
                            site_mat[k * n + k] = Complex::new(v.re, T::zero());
                        } else {
                            site_mat[k * n + l] = v;
                            site_mat[l * n + k] = v.conj();
                        }
                    },
                );
            }
        }
    }

    /// Fourier symbol of the constant-coefficient operator
    /// f ↦ Σ_kl conj(W_kl) ∂_k∂_l̄ f for a Hermitian weight W. Real and ≤ 0,
    /// with equality exactly at the zero mode (W positive definite).
    pub fn weight_symbol(&self, dim: usize, weight: &[Cplx<T>]) -> Vec<T> {
        let sites = self.grid.sites();
        let mut sym = vec![T::zero(); sites];
        sym.par_iter_mut().enumerate().for_each(|(m, s)| {
            let mut acc = Complex::new(T::zero(), T::zero());
            for k in 0..dim {
                for l in 0..dim {
                    acc = acc + weight[k * dim + l].conj() * self.hessian_symbol(m, k, l);
                }
            }
            *s = acc.re;
        });
        sym
    }

    /// Applies a Fourier-diagonal gain: out = Re iFFT( gain(λ_K) · FFT(in) ).
    pub fn filter(&self, input: &[T], symbol: &[T], gain: impl Fn(T) -> T + Sync) -> Vec<T> {
        assert_eq!(input.len(), symbol.len());
        let mut buf: Vec<Cplx<T>> =
            input.iter().map(|&v| Complex::new(v, T::zero())).collect();
        self.fft.forward(&mut buf);
        buf.par_iter_mut().zip(symbol.par_iter()).for_each(|(b, &s)| {
            let g = gain(s);
            *b = *b * Complex::new(g, T::zero());
        });
        self.fft.inverse(&mut buf);
        buf.into_iter().map(|v| v.re).collect()
    }
}
