//! Scalar abstraction: the lattice code is generic over the real type.
//!
//! Everything downstream works for `f32` and `f64`; the concrete aliases at
//! the crate root fix `f64`, which is what the tolerances in the test suites
//! assume.

use std::fmt::{Debug, Display, LowerExp};
use std::iter::Sum;

use num_complex::Complex;
use num_traits::{Float, FloatConst, FromPrimitive, NumAssign};
use rustfft::FftNum;

/// Real scalar the torus fields are built over (`f32` or `f64`).
pub trait Scalar:
    Float + FloatConst + FromPrimitive + NumAssign + Sum + FftNum + Display + LowerExp + Debug
{
}

impl<T> Scalar for T where
    T: Float + FloatConst + FromPrimitive + NumAssign + Sum + FftNum + Display + LowerExp + Debug
{
}

/// Complex number over the chosen scalar.
pub type Cplx<T> = Complex<T>;

/// Converts an `f64` literal into the working scalar type.
///
/// Panics only if the conversion fails, which cannot happen for the
/// supported `f32`/`f64` instantiations.
#[inline]
pub fn real<T: Scalar>(x: f64) -> T {
    T::from_f64(x).expect("f64 literal must convert into the scalar type")
}

/// Shorthand for a purely real complex value.
#[inline]
pub fn creal<T: Scalar>(x: f64) -> Cplx<T> {
    Complex::new(real(x), T::zero())
}

/// Compensated (Kahan) summation over a slice, in index order.
///
/// Used for every global reduction so that results are independent of any
/// site-level parallelism and bit-identical between runs.
pub fn kahan_sum<T: Scalar, I: IntoIterator<Item = T>>(values: I) -> T {
    let mut sum = T::zero();
    let mut carry = T::zero();
    for v in values {
        let y = v - carry;
        let t = sum + y;
        carry = (t - sum) - y;
        sum = t;
    }
    sum
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kahan_sum_matches_exact_series() {
        let xs: Vec<f64> = (0..10_000).map(|i| 1.0 / (i as f64 + 1.0)).collect();
        let naive: f64 = xs.iter().sum();
        let kahan = kahan_sum(xs.iter().copied());
        assert!((naive - kahan).abs() < 1e-10);
        // order sensitivity: kahan over reversed input agrees to machine precision
        let rev = kahan_sum(xs.iter().rev().copied());
        assert!((kahan - rev).abs() < 1e-12);
    }

    #[test]
    fn real_round_trips_for_both_precisions() {
        let a: f64 = real(0.375);
        let b: f32 = real(0.375);
        assert_eq!(a, 0.375);
        assert_eq!(b, 0.375f32);
    }
}
