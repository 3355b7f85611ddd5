//! Pointwise Hermitian linear algebra for small matrices (n ≤ 4).
//!
//! The lattice stores one n×n Hermitian matrix per site, with n the complex
//! dimension of the torus. These kernels run inside the per-site loops of the
//! flow and the Newton solver, so they work on plain slices and stack
//! buffers, no per-call allocation. Matrices are row-major, `a[i * n + j]`.
//!
//! Eigenvalues come from a cyclic complex Jacobi iteration; the unit tests
//! check all kernels against nalgebra on random Hermitian input.

use num_complex::Complex;
use rand::Rng;

use crate::scalar::{Cplx, Scalar};

/// Largest matrix dimension the kernels accept.
pub const MAX_DIM: usize = 4;

const BUF: usize = MAX_DIM * MAX_DIM;

#[inline]
fn check_dim(n: usize) {
    assert!(n >= 1 && n <= MAX_DIM, "matrix dimension {n} outside 1..=4");
}

/// Replaces `a` by (a + a†)/2, making it exactly Hermitian.
pub fn hermitize<T: Scalar>(n: usize, a: &mut [Cplx<T>]) {
    check_dim(n);
    let half = crate::scalar::real::<T>(0.5);
    for i in 0..n {
        a[i * n + i] = Complex::new(a[i * n + i].re, T::zero());
        for j in (i + 1)..n {
            let m = (a[i * n + j] + a[j * n + i].conj()) * half;
            a[i * n + j] = m;
            a[j * n + i] = m.conj();
        }
    }
}

/// Determinant by cofactor expansion.
pub fn det<T: Scalar>(n: usize, a: &[Cplx<T>]) -> Cplx<T> {
    check_dim(n);
    match n {
        1 => a[0],
        2 => a[0] * a[3] - a[1] * a[2],
        3 => {
            a[0] * (a[4] * a[8] - a[5] * a[7]) - a[1] * (a[3] * a[8] - a[5] * a[6])
                + a[2] * (a[3] * a[7] - a[4] * a[6])
        }
        _ => {
            let mut acc = Complex::new(T::zero(), T::zero());
            let mut minor = [Complex::new(T::zero(), T::zero()); 9];
            let mut sign = T::one();
            for col in 0..n {
                write_minor(n, a, 0, col, &mut minor);
                acc = acc + a[col] * det(n - 1, &minor[..(n - 1) * (n - 1)]) * sign;
                sign = -sign;
            }
            acc
        }
    }
}

/// Real part of the determinant; for Hermitian input this is the whole thing.
#[inline]
pub fn det_re<T: Scalar>(n: usize, a: &[Cplx<T>]) -> T {
    det(n, a).re
}

fn write_minor<T: Scalar>(n: usize, a: &[Cplx<T>], row: usize, col: usize, out: &mut [Cplx<T>]) {
    let m = n - 1;
    let mut r = 0;
    for i in 0..n {
        if i == row {
            continue;
        }
        let mut c = 0;
        for j in 0..n {
            if j == col {
                continue;
            }
            out[r * m + c] = a[i * n + j];
            c += 1;
        }
        r += 1;
    }
}

/// Adjugate matrix: `a * adj(a) = det(a) * I`.
pub fn adjugate<T: Scalar>(n: usize, a: &[Cplx<T>], out: &mut [Cplx<T>]) {
    check_dim(n);
    if n == 1 {
        out[0] = Complex::new(T::one(), T::zero());
        return;
    }
    let mut minor = [Complex::new(T::zero(), T::zero()); 9];
    for i in 0..n {
        for j in 0..n {
            // adj(a)[i][j] is the (j, i) cofactor
            write_minor(n, a, j, i, &mut minor);
            let m = det(n - 1, &minor[..(n - 1) * (n - 1)]);
            let neg = (i + j) % 2 == 1;
            out[i * n + j] = if neg { -m } else { m };
        }
    }
}

/// Inverse via adjugate over determinant. Returns the determinant so callers
/// can check invertibility themselves; `out` is garbage when it is ~0.
pub fn inverse<T: Scalar>(n: usize, a: &[Cplx<T>], out: &mut [Cplx<T>]) -> Cplx<T> {
    let d = det(n, a);
    adjugate(n, a, out);
    let inv_d = Complex::new(T::one(), T::zero()) / d;
    for v in out.iter_mut().take(n * n) {
        *v = *v * inv_d;
    }
    d
}

/// Matrix product `out = a * b`.
pub fn mul<T: Scalar>(n: usize, a: &[Cplx<T>], b: &[Cplx<T>], out: &mut [Cplx<T>]) {
    check_dim(n);
    for i in 0..n {
        for j in 0..n {
            let mut acc = Complex::new(T::zero(), T::zero());
            for k in 0..n {
                acc = acc + a[i * n + k] * b[k * n + j];
            }
            out[i * n + j] = acc;
        }
    }
}

/// Real part of tr(a · b); real by itself when both arguments are Hermitian.
pub fn trace_prod_re<T: Scalar>(n: usize, a: &[Cplx<T>], b: &[Cplx<T>]) -> T {
    check_dim(n);
    let mut acc = T::zero();
    for i in 0..n {
        for k in 0..n {
            let p = a[i * n + k] * b[k * n + i];
            acc = acc + p.re;
        }
    }
    acc
}

/// tr(chi⁻¹ · g) for Hermitian positive `chi`, evaluated as
/// tr(adj(chi) · g) / det(chi) so no explicit inverse is formed.
///
/// Returns `None` when det(chi) is not strictly positive, i.e. `chi` has left
/// the positive cone.
pub fn trace_inv_pair<T: Scalar>(n: usize, chi: &[Cplx<T>], g: &[Cplx<T>]) -> Option<T> {
    let d = det_re(n, chi);
    if !(d > T::zero()) || !d.is_finite() {
        return None;
    }
    let mut adj = [Complex::new(T::zero(), T::zero()); BUF];
    adjugate(n, chi, &mut adj);
    Some(trace_prod_re(n, &adj[..n * n], g) / d)
}

/// Eigenvalues of a Hermitian matrix, ascending, via cyclic complex Jacobi.
///
/// Returns the count actually filled (= n). Converges quadratically; 30
/// sweeps is far beyond what n ≤ 4 ever needs.
pub fn eigenvalues<T: Scalar>(n: usize, a: &[Cplx<T>], out: &mut [T]) {
    check_dim(n);
    let mut w = [Complex::new(T::zero(), T::zero()); BUF];
    w[..n * n].copy_from_slice(&a[..n * n]);

    let mut norm_sq = T::zero();
    for v in &w[..n * n] {
        norm_sq = norm_sq + v.norm_sqr();
    }
    let tol = norm_sq * T::epsilon() * T::epsilon();

    for _sweep in 0..30 {
        let mut off = T::zero();
        for p in 0..n {
            for q in (p + 1)..n {
                off = off + w[p * n + q].norm_sqr();
            }
        }
        if off <= tol || n == 1 {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                jacobi_rotate(n, &mut w, p, q);
            }
        }
    }

    for i in 0..n {
        out[i] = w[i * n + i].re;
    }
    out[..n].sort_by(|x, y| x.partial_cmp(y).expect("eigenvalues must be finite"));
}

/// One complex Jacobi rotation zeroing w[p][q].
fn jacobi_rotate<T: Scalar>(n: usize, w: &mut [Cplx<T>], p: usize, q: usize) {
    let apq = w[p * n + q];
    let abs = apq.norm();
    if abs == T::zero() {
        return;
    }
    // phase factor making the pivot real, then a classical symmetric rotation
    let u = apq / Complex::new(abs, T::zero());
    let app = w[p * n + p].re;
    let aqq = w[q * n + q].re;
    let two = crate::scalar::real::<T>(2.0);
    let tau = (aqq - app) / (two * abs);
    let t = if tau >= T::zero() {
        T::one() / (tau + (T::one() + tau * tau).sqrt())
    } else {
        -T::one() / (-tau + (T::one() + tau * tau).sqrt())
    };
    let c = T::one() / (T::one() + t * t).sqrt();
    let s = t * c;

    let cs = Complex::new(c, T::zero());
    let sv = Complex::new(s, T::zero()) * u.conj(); // column factor for q
    // columns: [p q] <- [p q] * [[c, s], [-s*conj(u), c*conj(u)]]
    for i in 0..n {
        let aip = w[i * n + p];
        let aiq = w[i * n + q];
        w[i * n + p] = aip * cs - aiq * sv;
        w[i * n + q] = aip * Complex::new(s, T::zero()) + aiq * cs * u.conj();
    }
    // rows: conjugate-transposed factor
    for j in 0..n {
        let apj = w[p * n + j];
        let aqj = w[q * n + j];
        w[p * n + j] = apj * cs - aqj * Complex::new(s, T::zero()) * u;
        w[q * n + j] = apj * Complex::new(s, T::zero()) + aqj * cs * u;
    }
    // clean up symmetry drift at the pivot
    w[p * n + q] = Complex::new(T::zero(), T::zero());
    w[q * n + p] = Complex::new(T::zero(), T::zero());
    w[p * n + p] = Complex::new(w[p * n + p].re, T::zero());
    w[q * n + q] = Complex::new(w[q * n + q].re, T::zero());
}

/// Smallest eigenvalue of a Hermitian matrix.
pub fn min_eig<T: Scalar>(n: usize, a: &[Cplx<T>]) -> T {
    let mut eigs = [T::zero(); MAX_DIM];
    eigenvalues(n, a, &mut eigs);
    eigs[0]
}

/// Random Hermitian positive definite matrix: A·A†/n + shift·I with A's
/// entries uniform in the complex unit box. Used by the verification suites
/// and the property tests.
pub fn random_hpd<T: Scalar, R: Rng>(n: usize, shift: f64, rng: &mut R) -> Vec<Cplx<T>> {
    check_dim(n);
    let mut a = vec![Complex::new(T::zero(), T::zero()); n * n];
    for v in a.iter_mut() {
        let re: f64 = rng.gen_range(-1.0..1.0);
        let im: f64 = rng.gen_range(-1.0..1.0);
        *v = Complex::new(crate::scalar::real(re), crate::scalar::real(im));
    }
    let mut m = vec![Complex::new(T::zero(), T::zero()); n * n];
    let inv_n = crate::scalar::real::<T>(1.0 / n as f64);
    for i in 0..n {
        for j in 0..n {
            let mut acc = Complex::new(T::zero(), T::zero());
            for k in 0..n {
                acc = acc + a[i * n + k] * a[j * n + k].conj();
            }
            m[i * n + j] = acc * Complex::new(inv_n, T::zero());
        }
    }
    for i in 0..n {
        m[i * n + i] = m[i * n + i] + Complex::new(crate::scalar::real(shift), T::zero());
    }
    hermitize(n, &mut m);
    m
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{Complex as NaComplex, DMatrix};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn to_na(n: usize, a: &[Cplx<f64>]) -> DMatrix<NaComplex<f64>> {
        DMatrix::from_fn(n, n, |i, j| {
            let v = a[i * n + j];
            NaComplex::new(v.re, v.im)
        })
    }

    #[test]
    fn det_and_inverse_match_nalgebra() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for n in 1..=4 {
            for _ in 0..50 {
                let m = random_hpd::<f64, _>(n, 0.3, &mut rng);
                let na = to_na(n, &m);
                let d = det(n, &m);
                let d_na = na.clone().determinant();
                assert!((d.re - d_na.re).abs() <= 1e-10 * (1.0 + d_na.norm()));
                assert!(d.im.abs() <= 1e-12 * (1.0 + d_na.norm()));

                let mut inv = vec![Complex::new(0.0, 0.0); n * n];
                let dd = inverse(n, &m, &mut inv);
                assert!(dd.re > 0.0);
                let inv_na = na.try_inverse().expect("hpd is invertible");
                for i in 0..n {
                    for j in 0..n {
                        let got = inv[i * n + j];
                        let want = inv_na[(i, j)];
                        assert!((got.re - want.re).abs() <= 1e-9);
                        assert!((got.im - want.im).abs() <= 1e-9);
                    }
                }
            }
        }
    }

    #[test]
    fn eigenvalues_match_nalgebra_hermitian_solver() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for n in 1..=4 {
            for _ in 0..50 {
                let m = random_hpd::<f64, _>(n, 0.1, &mut rng);
                let mut eigs = [0.0; MAX_DIM];
                eigenvalues(n, &m, &mut eigs);
                let mut na_eigs: Vec<f64> =
                    to_na(n, &m).symmetric_eigen().eigenvalues.iter().copied().collect();
                na_eigs.sort_by(|a, b| a.partial_cmp(b).unwrap());
                for i in 0..n {
                    assert!(
                        (eigs[i] - na_eigs[i]).abs() <= 1e-10 * (1.0 + na_eigs[i].abs()),
                        "n={n} i={i} jacobi={} nalgebra={}",
                        eigs[i],
                        na_eigs[i]
                    );
                }
            }
        }
    }

    #[test]
    fn trace_inv_pair_matches_explicit_inverse() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        for n in 1..=4 {
            for _ in 0..50 {
                let chi = random_hpd::<f64, _>(n, 0.5, &mut rng);
                let g = random_hpd::<f64, _>(n, 0.5, &mut rng);
                let got = trace_inv_pair(n, &chi, &g).expect("chi is positive");
                let inv = to_na(n, &chi).try_inverse().unwrap();
                let want = (inv * to_na(n, &g)).trace();
                assert!((got - want.re).abs() <= 1e-10 * (1.0 + want.re.abs()));
                assert!(want.im.abs() <= 1e-10);
            }
        }
    }

    #[test]
    fn trace_inv_pair_rejects_singular() {
        let chi = [Complex::new(0.0, 0.0)];
        let g = [Complex::new(1.0, 0.0)];
        assert!(trace_inv_pair(1, &chi, &g).is_none());
    }

    #[test]
    fn hermitize_is_projection() {
        let mut a = [
            Complex::new(1.0, 0.5),
            Complex::new(2.0, 1.0),
            Complex::new(3.0, 2.0),
            Complex::new(4.0, -0.25),
        ];
        hermitize(2, &mut a);
        assert_eq!(a[0].im, 0.0);
        assert_eq!(a[3].im, 0.0);
        assert_eq!(a[1], a[2].conj());
        let snapshot = a;
        hermitize(2, &mut a);
        assert_eq!(a, snapshot);
    }

    #[test]
    fn min_eig_diag_case() {
        let m = [
            Complex::new(2.0, 0.0),
            Complex::new(0.0, 0.0),
            Complex::new(0.0, 0.0),
            Complex::new(4.0, 0.0),
        ];
        assert_eq!(min_eig(2, &m), 2.0);
    }
}
