//! Damped Newton–Krylov solution of the critical equation σ(χ_φ) = c.
//!
//! The Newton correction solves the linearized equation ∆̃δ = σ(φ) − c,
//! where ∆̃ = Σ_kl conj(W_kl) ∂_k∂_l̄ with the Hermitian positive weight
//! W = (1/n)χ⁻¹gχ⁻¹ evaluated at the current state; the derivative of σ in
//! direction δ is exactly −∆̃δ, so φ + δ cancels the residual to first
//! order. ∆̃ is elliptic but not self-adjoint in the plain lattice inner
//! product, and its kernel on the grid consists of the constants together
//! with the handful of modes whose wavenumbers the symbol annihilates.
//! Solvability therefore requires projecting the right side: the annihilated
//! modes are filtered spectrally, and the component against the left-kernel
//! weight w (the solution of ∆̃ᵀw = 0 near the constants, found by a
//! preconditioned Richardson iteration) is removed along the constant
//! direction.
//!
//! The projected system is solved by BiCGSTAB, preconditioned with the
//! constant-coefficient operator built from the site-mean of W, which is
//! diagonal in Fourier space. A backtracking line search keeps every Newton
//! iterate inside the positive cone and monotone in the residual.

use num_complex::Complex;
use rayon::prelude::*;

use crate::error::{JflowError, Result};
use crate::estimates;
use crate::field::{BackgroundForm, HermitianField, PotentialField};
use crate::flow::Problem;
use crate::functionals;
use crate::geometry;
use crate::herm;
use crate::scalar::{kahan_sum, real, Scalar};
use crate::spectral::Spectral;

fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    kahan_sum(a.iter().zip(b).map(|(&x, &y)| x * y))
}

fn l2<T: Scalar>(a: &[T]) -> T {
    dot(a, a).sqrt()
}

fn mean<T: Scalar>(a: &[T]) -> T {
    kahan_sum(a.iter().copied()) / real::<T>(a.len() as f64)
}

/// The linearization ∆̃ frozen at one state, with everything the Krylov
/// solve needs: the site weights, the Fourier-diagonal preconditioner, and
/// the left-kernel weight for the solvability projection.
pub struct LinearizedOperator<T> {
    w: HermitianField<T>,
    /// Symbol of the constant-coefficient comparison operator (mean W).
    precond_symbol: Vec<T>,
    /// ∆̃ᵀ-kernel vector normalized near 1; defines the range of ∆̃.
    left_kernel: Vec<T>,
    /// Achieved relative residual ‖∆̃ᵀw‖/‖w‖ of the kernel iteration.
    kernel_residual: T,
}

impl<T: Scalar> LinearizedOperator<T> {
    /// Builds the operator at a state χ (assumed positive on every site).
    pub fn at_state(
        spectral: &Spectral<T>,
        g: &BackgroundForm<T>,
        chi: &HermitianField<T>,
    ) -> Result<Self> {
        let n = chi.dim();
        let nn = n * n;
        let sites = chi.sites();
        let inv_n = Complex::new(T::one() / real::<T>(n as f64), T::zero());

        let mut w = HermitianField::zeros(n, sites);
        let bad_site = std::sync::atomic::AtomicUsize::new(usize::MAX);
        w.data_mut()
            .par_chunks_mut(nn)
            .zip(chi.data().par_chunks(nn))
            .enumerate()
            .for_each(|(site, (w_site, chi_site))| {
                let mut inv = [Complex::new(T::zero(), T::zero()); herm::MAX_DIM * herm::MAX_DIM];
                let det = herm::inverse(n, chi_site, &mut inv[..nn]).re;
                if !(det > T::zero()) {
                    bad_site.fetch_min(site, std::sync::atomic::Ordering::Relaxed);
                    return;
                }
                let mut tmp = [Complex::new(T::zero(), T::zero()); herm::MAX_DIM * herm::MAX_DIM];
                herm::mul(n, &inv[..nn], g.matrix(), &mut tmp[..nn]);
                herm::mul(n, &tmp[..nn], &inv[..nn], w_site);
                for v in w_site.iter_mut() {
                    *v = *v * inv_n;
                }
                herm::hermitize(n, w_site);
            });
        let bad = bad_site.load(std::sync::atomic::Ordering::Relaxed);
        if bad != usize::MAX {
            return Err(JflowError::PositivityLost {
                site: bad,
                min_eig: f64::NAN,
                context: "linearization weight at a non-positive state",
            });
        }

        // site mean of W, summed compensated per entry for determinism
        let mut w_mean = vec![Complex::new(T::zero(), T::zero()); nn];
        let inv_sites = real::<T>(1.0 / sites as f64);
        for e in 0..nn {
            let re = kahan_sum((0..sites).map(|s| w.data()[s * nn + e].re));
            let im = kahan_sum((0..sites).map(|s| w.data()[s * nn + e].im));
            w_mean[e] = Complex::new(re * inv_sites, im * inv_sites);
        }
        herm::hermitize(n, &mut w_mean);
        let precond_symbol = spectral.weight_symbol(n, &w_mean);

        let mut op = Self {
            w,
            precond_symbol,
            left_kernel: vec![T::one(); sites],
            kernel_residual: T::infinity(),
        };
        op.refine_left_kernel(spectral);
        Ok(op)
    }

    #[inline]
    pub fn weight(&self) -> &HermitianField<T> {
        &self.w
    }

    #[inline]
    pub fn precond_symbol(&self) -> &[T] {
        &self.precond_symbol
    }

    #[inline]
    pub fn left_kernel(&self) -> &[T] {
        &self.left_kernel
    }

    /// Relative residual the left-kernel iteration achieved.
    #[inline]
    pub fn kernel_residual(&self) -> T {
        self.kernel_residual
    }

    /// Projector onto the modes the Hessian symbol can represent; the few
    /// annihilated modes (all wavenumbers zero after Nyquist folding) are
    /// removed. Exact: the mean-W symbol vanishes exactly on those modes and
    /// is strictly negative elsewhere.
    fn resolvable(&self, spectral: &Spectral<T>, u: &[T]) -> Vec<T> {
        spectral.filter(u, &self.precond_symbol, |s| {
            if s < T::zero() {
                T::one()
            } else {
                T::zero()
            }
        })
    }

    /// ∆̃u: the complex Hessian of u contracted against conj(W) per site,
    /// then truncated back onto the resolvable modes. The truncation keeps
    /// the discrete operator's range orthogonal to the spectrally
    /// annihilated directions, so the Krylov system stays consistent at the
    /// aliasing level instead of stalling there.
    pub fn apply(&self, spectral: &Spectral<T>, u: &[T]) -> Vec<T> {
        let n = self.w.dim();
        let nn = n * n;
        let mut hess = HermitianField::zeros(n, self.w.sites());
        spectral.complex_hessian_values(u, &mut hess);
        let mut out = vec![T::zero(); u.len()];
        out.par_iter_mut()
            .zip(self.w.data().par_chunks(nn))
            .zip(hess.data().par_chunks(nn))
            .for_each(|((o, w_site), h_site)| {
                *o = herm::trace_prod_re(n, w_site, h_site);
            });
        self.resolvable(spectral, &out)
    }

    /// Adjoint of [`Self::apply`]: the mode truncation moves to the input,
    /// then the raw transpose of ∆̃ acts.
    pub fn apply_adjoint(&self, spectral: &Spectral<T>, u: &[T]) -> Vec<T> {
        let u = self.resolvable(spectral, u);
        self.apply_adjoint_raw(spectral, &u)
    }

    /// ∆̃ᵀu = Re Σ_kl F⁻¹[ conj(s_kl) · F(W_kl · u) ]: each mixed derivative
    /// moves from the test function onto the product W·u. No truncation —
    /// this is the transpose of the untruncated operator, which is what the
    /// left-kernel weight is defined by.
    fn apply_adjoint_raw(&self, spectral: &Spectral<T>, u: &[T]) -> Vec<T> {
        let n = self.w.dim();
        let nn = n * n;
        let sites = u.len();
        let mut out = vec![T::zero(); sites];
        let mut buf = vec![Complex::new(T::zero(), T::zero()); sites];
        for k in 0..n {
            for l in 0..n {
                let e = k * n + l;
                buf.par_iter_mut().enumerate().for_each(|(m, b)| {
                    *b = self.w.data()[m * nn + e] * Complex::new(u[m], T::zero());
                });
                spectral.forward(&mut buf);
                buf.par_iter_mut().enumerate().for_each(|(m, b)| {
                    *b = *b * spectral.hessian_symbol(m, k, l).conj();
                });
                spectral.inverse(&mut buf);
                out.par_iter_mut().zip(buf.par_iter()).for_each(|(o, v)| {
                    *o = *o + v.re;
                });
            }
        }
        out
    }

    /// Fourier-diagonal preconditioner: pseudo-inverse of the mean-W
    /// operator, zeroing the modes its symbol annihilates.
    pub fn precondition(&self, spectral: &Spectral<T>, u: &[T]) -> Vec<T> {
        spectral.filter(u, &self.precond_symbol, |s| {
            if s < T::zero() {
                T::one() / s
            } else {
                T::zero()
            }
        })
    }

    /// Preconditioned Richardson iteration for ∆̃ᵀw = 0 with w = 1 + u and
    /// mean-zero u; the system is consistent because ∆̃1 = 0.
    fn refine_left_kernel(&mut self, spectral: &Spectral<T>) {
        let scale = self
            .precond_symbol
            .iter()
            .fold(T::zero(), |m, &s| m.max(s.abs()))
            .max(T::min_positive_value());
        let tol = real::<T>(1e-13);
        let mut w = vec![T::one(); self.left_kernel.len()];
        for _ in 0..200 {
            let mut r = self.apply_adjoint_raw(spectral, &w);
            let m = mean(&r);
            for v in r.iter_mut() {
                *v = *v - m;
            }
            let rel = l2(&r) / (scale * l2(&w));
            self.kernel_residual = rel;
            if rel <= tol {
                break;
            }
            let delta = self.precondition(spectral, &r);
            for (wv, &d) in w.iter_mut().zip(&delta) {
                *wv = *wv - d;
            }
        }
        self.left_kernel = w;
    }

    /// Makes ∆̃δ = rhs solvable: first removes the left-kernel pairing along
    /// the constant direction, rhs − (⟨w,rhs⟩/⟨w,1⟩)·1, then truncates onto
    /// the resolvable modes of the discrete operator.
    pub fn project_rhs(&self, spectral: &Spectral<T>, rhs: &[T]) -> Vec<T> {
        let ones = vec![T::one(); rhs.len()];
        let coeff = dot(&self.left_kernel, rhs) / dot(&self.left_kernel, &ones);
        let shifted: Vec<T> = rhs.iter().map(|&v| v - coeff).collect();
        self.resolvable(spectral, &shifted)
    }
}

/// Iteration count and the final true relative residual of a Krylov solve.
#[derive(Clone, Copy, Debug)]
pub struct SolveStats<T> {
    pub iterations: usize,
    pub rel_residual: T,
}

/// Preconditioned BiCGSTAB for ∆̃δ = b. The right side must already be
/// projected ([`LinearizedOperator::project_rhs`]). Accepts the solution if
/// the true relative residual meets `tol_rel`, tolerates a degraded solve up
/// to 1e−8, and reports `SolverStall` beyond that. The returned correction
/// has exact zero mean.
pub fn solve_linearized<T: Scalar>(
    spectral: &Spectral<T>,
    op: &LinearizedOperator<T>,
    b: &[T],
    tol_rel: T,
    max_iter: usize,
) -> Result<(Vec<T>, SolveStats<T>)> {
    let sites = b.len();
    let norm_b = l2(b);
    if norm_b == T::zero() {
        return Ok((vec![T::zero(); sites], SolveStats { iterations: 0, rel_residual: T::zero() }));
    }

    let mut x = vec![T::zero(); sites];
    let mut r = b.to_vec();
    let mut r_hat = r.clone();
    let mut rho = T::one();
    let mut alpha = T::one();
    let mut omega = T::one();
    let mut v = vec![T::zero(); sites];
    let mut p = vec![T::zero(); sites];
    let tiny = real::<T>(1e-300);
    let mut iterations = 0usize;

    for it in 1..=max_iter {
        iterations = it;
        let mut rho_new = dot(&r_hat, &r);
        if rho_new.abs() < tiny * norm_b * norm_b {
            // shadow vector lost its angle: restart on the current residual
            r_hat.copy_from_slice(&r);
            rho_new = dot(&r, &r);
            p.copy_from_slice(&r);
        } else {
            let beta = (rho_new / rho) * (alpha / omega);
            for i in 0..sites {
                p[i] = r[i] + beta * (p[i] - omega * v[i]);
            }
        }
        rho = rho_new;

        let y = op.precondition(spectral, &p);
        v = op.apply(spectral, &y);
        let denom = dot(&r_hat, &v);
        if denom.abs() < tiny * norm_b {
            r_hat.copy_from_slice(&r);
            continue;
        }
        alpha = rho / denom;
        let mut s = r.clone();
        for i in 0..sites {
            s[i] = s[i] - alpha * v[i];
        }
        for i in 0..sites {
            x[i] = x[i] + alpha * y[i];
        }
        if l2(&s) / norm_b <= tol_rel {
            break;
        }

        let z = op.precondition(spectral, &s);
        let t = op.apply(spectral, &z);
        let tt = dot(&t, &t);
        if tt < tiny {
            break;
        }
        omega = dot(&t, &s) / tt;
        for i in 0..sites {
            x[i] = x[i] + omega * z[i];
        }
        for i in 0..sites {
            r[i] = s[i] - omega * t[i];
        }
        if l2(&r) / norm_b <= tol_rel {
            break;
        }
        if omega.abs() < tiny {
            break;
        }
    }

    // recurrence residuals drift; judge by the true one
    let ax = op.apply(spectral, &x);
    let true_res: Vec<T> = b.iter().zip(&ax).map(|(&bi, &ai)| bi - ai).collect();
    let rel = l2(&true_res) / norm_b;
    if rel > tol_rel && rel > real::<T>(1e-8) {
        return Err(JflowError::SolverStall {
            iterations,
            residual: rel.to_f64().unwrap_or(f64::NAN),
        });
    }
    let m = mean(&x);
    for xi in x.iter_mut() {
        *xi = *xi - m;
    }
    Ok((x, SolveStats { iterations, rel_residual: rel }))
}

#[derive(Clone, Copy, Debug)]
pub struct NewtonConfig<T> {
    /// Stop once sup|σ − c| falls to this level.
    pub tol: T,
    pub max_iter: usize,
    /// Relative tolerance for each inner Krylov solve.
    pub krylov_tol: T,
    pub krylov_max: usize,
}

impl<T: Scalar> Default for NewtonConfig<T> {
    fn default() -> Self {
        Self { tol: real(1e-10), max_iter: 50, krylov_tol: real(1e-10), krylov_max: 500 }
    }
}

/// Everything observable about one Newton run.
#[derive(Clone, Debug)]
pub struct NewtonReport<T> {
    pub converged: bool,
    pub iterations: usize,
    pub final_residual: T,
    /// sup|σ − c| before each iteration, plus the final value.
    pub residual_history: Vec<T>,
    /// Krylov iterations spent per Newton step.
    pub inner_iterations: Vec<usize>,
    /// Accepted line-search scale per Newton step.
    pub step_scales: Vec<T>,
    /// Whether χ₀ − (n−1)·g_scaled ≻ 0 holds; when it fails the solution,
    /// if any, lies outside the regime the a-priori theory covers.
    pub cone_ok: bool,
}

/// Damped Newton iteration for σ(χ_φ) = c starting from `phi0`.
///
/// Each step solves ∆̃δ = σ − c and backtracks (halving, floor 2⁻²⁰) until
/// the update both keeps χ positive and strictly decreases the residual.
/// The converged potential is returned in the I = 0 gauge. Fails with
/// `NoConvergence` when the budget is exhausted or the line search dies.
pub fn newton_critical<T: Scalar>(
    problem: &Problem<T>,
    phi0: &PotentialField<T>,
    config: &NewtonConfig<T>,
) -> Result<(PotentialField<T>, NewtonReport<T>)> {
    let spectral = problem.spectral();
    let grid = problem.grid();
    let g = problem.g();
    let c = problem.c();
    let cone_ok = estimates::check_cone(g, problem.chi0())?.cone_ok;

    let mut phi = phi0.clone();
    let mut chi = problem.chi(&phi)?;
    let mut sigma = geometry::sigma_field(chi.field(), g, grid)?;
    let mut residual = sigma.values().iter().fold(T::zero(), |m, &s| m.max((s - c).abs()));

    let mut report = NewtonReport {
        converged: false,
        iterations: 0,
        final_residual: residual,
        residual_history: vec![residual],
        inner_iterations: Vec::new(),
        step_scales: Vec::new(),
        cone_ok,
    };

    let scale_floor = real::<T>((2.0f64).powi(-20));
    while residual > config.tol {
        if report.iterations >= config.max_iter {
            return Err(JflowError::NoConvergence {
                iterations: report.iterations,
                residual: residual.to_f64().unwrap_or(f64::NAN),
            });
        }
        let op = LinearizedOperator::at_state(spectral, g, chi.field())?;
        let rhs: Vec<T> = sigma.values().iter().map(|&s| s - c).collect();
        let rhs_p = op.project_rhs(spectral, &rhs);
        let (delta, stats) =
            solve_linearized(spectral, &op, &rhs_p, config.krylov_tol, config.krylov_max)?;
        report.inner_iterations.push(stats.iterations);

        let mut scale = T::one();
        loop {
            let mut trial = phi.clone();
            for (t, &d) in trial.values_mut().iter_mut().zip(&delta) {
                *t = *t + scale * d;
            }
            let accepted = match problem.chi(&trial) {
                Ok(chi_trial) => {
                    let sigma_trial = geometry::sigma_field(chi_trial.field(), g, grid)?;
                    let res_trial =
                        sigma_trial.values().iter().fold(T::zero(), |m, &s| m.max((s - c).abs()));
                    if res_trial < residual {
                        phi = trial;
                        chi = chi_trial;
                        sigma = sigma_trial;
                        residual = res_trial;
                        true
                    } else {
                        false
                    }
                }
                Err(JflowError::PositivityLost { .. }) => false,
                Err(other) => return Err(other),
            };
            if accepted {
                break;
            }
            scale = scale / real::<T>(2.0);
            if scale < scale_floor {
                return Err(JflowError::NoConvergence {
                    iterations: report.iterations,
                    residual: residual.to_f64().unwrap_or(f64::NAN),
                });
            }
        }
        report.step_scales.push(scale);
        report.iterations += 1;
        report.residual_history.push(residual);
    }

    // fix the additive gauge; constant shifts leave σ untouched
    let phi = functionals::normalize_to_i_zero(spectral, &phi, problem.chi0())?;
    report.converged = true;
    report.final_residual = residual;
    Ok((phi, report))
}
