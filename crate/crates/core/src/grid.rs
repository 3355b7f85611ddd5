//! Uniform periodic lattice on the torus ℂⁿ/(2πℤ)^(2n).
//!
//! Two storage modes exist for the same geometry. In `Reduced` mode the
//! potential depends on the real parts x₁,…,xₙ only, so the lattice is
//! n-dimensional and complex second derivatives collapse to one quarter of
//! the real Hessian. `Full` mode keeps all 2n real coordinates, ordered
//! (x₁,…,xₙ,y₁,…,yₙ). Both use the same row-major site indexing with the
//! last axis fastest.

use crate::error::{JflowError, Result};

/// Whether the lattice resolves all 2n real coordinates or only the n
/// holomorphic real parts.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GridMode {
    /// d = n axes; fields constant in the imaginary directions.
    Reduced,
    /// d = 2n axes, ordered (x₁,…,xₙ,y₁,…,yₙ).
    Full,
}

/// Discretization of the torus: complex dimension, storage mode, and points
/// per axis. Axis length is always 2π, so the spacing is 2π/N.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct LatticeGrid {
    n: usize,
    mode: GridMode,
    points: usize,
}

impl LatticeGrid {
    /// Builds a grid after validating the discretization parameters.
    ///
    /// `points` must be even (the spectral differentiation pairs ±k modes and
    /// drops the unmatched Nyquist frequency) and at least 4.
    pub fn new(n: usize, mode: GridMode, points: usize) -> Result<Self> {
        if n < 1 || n > 3 {
            return Err(JflowError::InvalidInput(format!(
                "complex dimension {n} outside supported range 1..=3"
            )));
        }
        if points < 4 || points % 2 != 0 {
            return Err(JflowError::InvalidInput(format!(
                "points per axis must be even and >= 4, got {points}"
            )));
        }
        let grid = Self { n, mode, points };
        // desk-scale cap: keeps every field comfortably in memory
        let max_sites: usize = 1 << 24;
        let mut sites: usize = 1;
        for _ in 0..grid.axes() {
            sites = sites.checked_mul(points).filter(|&s| s <= max_sites).ok_or_else(|| {
                JflowError::InvalidInput(format!(
                    "grid {points}^{} exceeds the 2^24 site budget",
                    grid.axes()
                ))
            })?;
        }
        Ok(grid)
    }

    /// Complex dimension of the torus.
    #[inline]
    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn mode(&self) -> GridMode {
        self.mode
    }

    /// Points per axis.
    #[inline]
    pub fn points(&self) -> usize {
        self.points
    }

    /// Number of stored real axes: n in reduced mode, 2n in full mode.
    #[inline]
    pub fn axes(&self) -> usize {
        match self.mode {
            GridMode::Reduced => self.n,
            GridMode::Full => 2 * self.n,
        }
    }

    /// Total number of lattice sites, points^axes.
    #[inline]
    pub fn sites(&self) -> usize {
        self.points.pow(self.axes() as u32)
    }

    /// Volume of one lattice cell, (2π/N)^axes. The spectral quadrature is
    /// exactly this weight times a plain sum.
    pub fn cell_volume<T: crate::scalar::Scalar>(&self) -> T {
        let h = T::TAU() / crate::scalar::real::<T>(self.points as f64);
        let mut v = T::one();
        for _ in 0..self.axes() {
            v = v * h;
        }
        v
    }

    /// Row-major flat index of a multi-index, last axis fastest.
    #[inline]
    pub fn flat_index(&self, idx: &[usize]) -> usize {
        debug_assert_eq!(idx.len(), self.axes());
        let mut f = 0;
        for &i in idx {
            debug_assert!(i < self.points);
            f = f * self.points + i;
        }
        f
    }

    /// Inverse of [`flat_index`](Self::flat_index).
    pub fn multi_index(&self, mut flat: usize, out: &mut [usize]) {
        let axes = self.axes();
        debug_assert_eq!(out.len(), axes);
        for a in (0..axes).rev() {
            out[a] = flat % self.points;
            flat /= self.points;
        }
        debug_assert_eq!(flat, 0);
    }

    /// Coordinate of grid point `i` along one axis, in [0, 2π).
    #[inline]
    pub fn coord<T: crate::scalar::Scalar>(&self, i: usize) -> T {
        T::TAU() * crate::scalar::real::<T>(i as f64) / crate::scalar::real::<T>(self.points as f64)
    }

    /// Fourier wavenumber of mode index `m` along one axis, with the
    /// unmatched Nyquist mode mapped to zero so differentiation stays
    /// conjugate-symmetric.
    #[inline]
    pub fn wavenumber<T: crate::scalar::Scalar>(&self, m: usize) -> T {
        let half = self.points / 2;
        if m == half {
            T::zero()
        } else if m < half {
            crate::scalar::real::<T>(m as f64)
        } else {
            crate::scalar::real::<T>(m as f64 - self.points as f64)
        }
    }

    /// Iterates coordinates of every site in flat-index order, invoking `f`
    /// with (flat, multi-index). Allocation-free; the multi-index buffer is
    /// reused.
    pub fn for_each_site<F: FnMut(usize, &[usize])>(&self, mut f: F) {
        let axes = self.axes();
        let mut idx = [0usize; 2 * crate::herm::MAX_DIM];
        let idx = &mut idx[..axes];
        for flat in 0..self.sites() {
            self.multi_index(flat, idx);
            f(flat, idx);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn index_round_trip() {
        let g = LatticeGrid::new(2, GridMode::Full, 6).unwrap();
        assert_eq!(g.axes(), 4);
        assert_eq!(g.sites(), 6usize.pow(4));
        let mut idx = [0usize; 4];
        for flat in [0, 1, 5, 6, 35, 1295] {
            g.multi_index(flat, &mut idx);
            assert_eq!(g.flat_index(&idx), flat);
        }
        // last axis fastest
        assert_eq!(g.flat_index(&[0, 0, 0, 1]), 1);
        assert_eq!(g.flat_index(&[1, 0, 0, 0]), 216);
    }

    #[test]
    fn wavenumbers_zero_out_nyquist() {
        let g = LatticeGrid::new(1, GridMode::Reduced, 8).unwrap();
        let ks: Vec<f64> = (0..8).map(|m| g.wavenumber(m)).collect();
        assert_eq!(ks, vec![0.0, 1.0, 2.0, 3.0, 0.0, -3.0, -2.0, -1.0]);
    }

    #[test]
    fn cell_volume_is_torus_volume_over_sites() {
        let g = LatticeGrid::new(2, GridMode::Reduced, 16).unwrap();
        let v: f64 = g.cell_volume();
        let total = v * g.sites() as f64;
        let expect = (2.0 * std::f64::consts::PI).powi(2);
        assert!((total - expect).abs() < 1e-12 * expect);
    }

    #[test]
    fn rejects_odd_or_tiny_grids() {
        assert!(LatticeGrid::new(2, GridMode::Reduced, 7).is_err());
        assert!(LatticeGrid::new(2, GridMode::Reduced, 2).is_err());
        assert!(LatticeGrid::new(0, GridMode::Reduced, 8).is_err());
        assert!(LatticeGrid::new(4, GridMode::Reduced, 8).is_err());
        // 256^3 = 2^24 sites is the boundary; 258^3 exceeds it
        assert!(LatticeGrid::new(3, GridMode::Reduced, 256).is_ok());
        assert!(LatticeGrid::new(3, GridMode::Reduced, 258).is_err());
    }
}
