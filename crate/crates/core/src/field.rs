//! Lattice-valued data: scalar potentials and per-site Hermitian matrices.

use num_complex::Complex;

use crate::error::{JflowError, Result};
use crate::grid::LatticeGrid;
use crate::herm;
use crate::scalar::{kahan_sum, Cplx, Scalar};

/// Real scalar field sampled on every lattice site, flat-index order.
#[derive(Clone, Debug, PartialEq)]
pub struct PotentialField<T> {
    values: Vec<T>,
}

impl<T: Scalar> PotentialField<T> {
    /// Zero field on the given grid.
    pub fn zeros(grid: &LatticeGrid) -> Self {
        Self { values: vec![T::zero(); grid.sites()] }
    }

    /// Wraps existing site values; length must equal `grid.sites()`.
    pub fn from_values(grid: &LatticeGrid, values: Vec<T>) -> Result<Self> {
        if values.len() != grid.sites() {
            return Err(JflowError::InvalidInput(format!(
                "field has {} values but the grid has {} sites",
                values.len(),
                grid.sites()
            )));
        }
        Ok(Self { values })
    }

    /// Samples a pointwise function of the site coordinates.
    pub fn from_fn(grid: &LatticeGrid, mut f: impl FnMut(&[T]) -> T) -> Self {
        let axes = grid.axes();
        let mut coords = [T::zero(); 2 * herm::MAX_DIM];
        let mut values = vec![T::zero(); grid.sites()];
        grid.for_each_site(|flat, idx| {
            for (a, &i) in idx.iter().enumerate() {
                coords[a] = grid.coord(i);
            }
            values[flat] = f(&coords[..axes]);
        });
        Self { values }
    }

    #[inline]
    pub fn values(&self) -> &[T] {
        &self.values
    }

    #[inline]
    pub fn values_mut(&mut self) -> &mut [T] {
        &mut self.values
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.values.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Largest value over the lattice.
    pub fn sup(&self) -> T {
        self.values.iter().copied().fold(T::neg_infinity(), T::max)
    }

    /// Smallest value over the lattice.
    pub fn inf(&self) -> T {
        self.values.iter().copied().fold(T::infinity(), T::min)
    }

    /// Lattice mean, compensated summation in site order.
    pub fn mean(&self) -> T {
        kahan_sum(self.values.iter().copied()) / crate::scalar::real::<T>(self.len() as f64)
    }

    /// Adds a constant to every site.
    pub fn shift(&mut self, s: T) {
        for v in &mut self.values {
            *v = *v + s;
        }
    }

    /// In-place `self += scale * other`.
    pub fn axpy(&mut self, scale: T, other: &Self) {
        debug_assert_eq!(self.len(), other.len());
        for (v, o) in self.values.iter_mut().zip(&other.values) {
            *v = *v + scale * *o;
        }
    }

    /// Maximum absolute value over the lattice.
    pub fn sup_abs(&self) -> T {
        self.values.iter().fold(T::zero(), |m, v| m.max(v.abs()))
    }
}

/// One n×n complex matrix per lattice site, row-major within a site, sites in
/// flat-index order. The matrix dimension is the complex dimension of the
/// torus, independent of how many real axes the grid stores.
#[derive(Clone, Debug)]
pub struct HermitianField<T> {
    dim: usize,
    data: Vec<Cplx<T>>,
}

impl<T: Scalar> HermitianField<T> {
    /// All-zero field of `sites` matrices of size `dim`.
    pub fn zeros(dim: usize, sites: usize) -> Self {
        assert!(dim >= 1 && dim <= herm::MAX_DIM);
        Self { dim, data: vec![Complex::new(T::zero(), T::zero()); sites * dim * dim] }
    }

    /// Matrix dimension n.
    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Number of stored sites.
    #[inline]
    pub fn sites(&self) -> usize {
        self.data.len() / (self.dim * self.dim)
    }

    /// Matrix at one site.
    #[inline]
    pub fn site(&self, s: usize) -> &[Cplx<T>] {
        let nn = self.dim * self.dim;
        &self.data[s * nn..(s + 1) * nn]
    }

    #[inline]
    pub fn site_mut(&mut self, s: usize) -> &mut [Cplx<T>] {
        let nn = self.dim * self.dim;
        &mut self.data[s * nn..(s + 1) * nn]
    }

    /// Entry (i, j) of the matrix at site `s`.
    #[inline]
    pub fn entry(&self, s: usize, i: usize, j: usize) -> Cplx<T> {
        self.data[s * self.dim * self.dim + i * self.dim + j]
    }

    #[inline]
    pub fn entry_mut(&mut self, s: usize, i: usize, j: usize) -> &mut Cplx<T> {
        &mut self.data[s * self.dim * self.dim + i * self.dim + j]
    }

    /// Raw storage, sites × dim², row-major.
    #[inline]
    pub fn data(&self) -> &[Cplx<T>] {
        &self.data
    }

    #[inline]
    pub fn data_mut(&mut self) -> &mut [Cplx<T>] {
        &mut self.data
    }

    /// Smallest eigenvalue over all sites, and the site attaining it.
    pub fn min_eig_global(&self) -> (T, usize) {
        let mut best = T::infinity();
        let mut arg = 0;
        for s in 0..self.sites() {
            let e = herm::min_eig(self.dim, self.site(s));
            if e < best {
                best = e;
                arg = s;
            }
        }
        (best, arg)
    }
}

/// Constant positive-definite Hermitian form on the torus: either the Kähler
/// background ω (matrix g) or the reference form χ₀. Validated at
/// construction so downstream code can assume Hermitian positive input.
#[derive(Clone, Debug)]
pub struct BackgroundForm<T> {
    dim: usize,
    matrix: Vec<Cplx<T>>,
    min_eig: T,
}

impl<T: Scalar> BackgroundForm<T> {
    /// Builds the form from a row-major dim×dim complex matrix, checking that
    /// it is Hermitian to roundoff and positive definite. The stored matrix
    /// is the exact Hermitian average of the input.
    pub fn new(dim: usize, matrix: Vec<Cplx<T>>) -> Result<Self> {
        if dim < 1 || dim > herm::MAX_DIM {
            return Err(JflowError::InvalidInput(format!(
                "form dimension {dim} outside supported range 1..=4"
            )));
        }
        if matrix.len() != dim * dim {
            return Err(JflowError::InvalidInput(format!(
                "form matrix has {} entries, expected {}",
                matrix.len(),
                dim * dim
            )));
        }
        let mut m = matrix;
        let mut scale = T::zero();
        for v in &m {
            scale = scale.max(v.norm());
        }
        let tol = scale * crate::scalar::real::<T>(64.0) * T::epsilon();
        for i in 0..dim {
            if m[i * dim + i].im.abs() > tol {
                return Err(JflowError::InvalidInput(
                    "form matrix is not Hermitian: complex diagonal".into(),
                ));
            }
            for j in (i + 1)..dim {
                let drift = (m[i * dim + j] - m[j * dim + i].conj()).norm();
                if drift > tol {
                    return Err(JflowError::InvalidInput(format!(
                        "form matrix is not Hermitian: entries ({i},{j})/({j},{i}) differ by {drift:e}"
                    )));
                }
            }
        }
        herm::hermitize(dim, &mut m);
        let min_eig = herm::min_eig(dim, &m);
        if !(min_eig > T::zero()) {
            return Err(JflowError::InvalidInput(format!(
                "form matrix is not positive definite: min eigenvalue {min_eig:e}"
            )));
        }
        Ok(Self { dim, matrix: m, min_eig })
    }

    /// Identity form scaled by `s`.
    pub fn scaled_identity(dim: usize, s: T) -> Result<Self> {
        let mut m = vec![Complex::new(T::zero(), T::zero()); dim * dim];
        for i in 0..dim {
            m[i * dim + i] = Complex::new(s, T::zero());
        }
        Self::new(dim, m)
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    /// The validated Hermitian matrix, row-major.
    #[inline]
    pub fn matrix(&self) -> &[Cplx<T>] {
        &self.matrix
    }

    /// Smallest eigenvalue (strictly positive by construction).
    #[inline]
    pub fn min_eig(&self) -> T {
        self.min_eig
    }
}
