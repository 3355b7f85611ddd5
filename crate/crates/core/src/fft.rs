//! Multidimensional FFT over the lattice, built lane-by-lane from rustfft.
//!
//! The grid is an N^d hypercube stored row-major with the last axis fastest.
//! Transforms along the last axis run in place on contiguous chunks; other
//! axes gather each lane into a scratch buffer first. `forward` is the plain
//! unnormalized DFT; `inverse` folds in the 1/N^d factor so the pair is an
//! identity round trip.

use std::sync::Arc;

use num_complex::Complex;
use rustfft::{Fft, FftPlanner};

use crate::grid::LatticeGrid;
use crate::scalar::{Cplx, Scalar};

pub struct NdFft<T> {
    points: usize,
    axes: usize,
    fwd: Arc<dyn Fft<T>>,
    inv: Arc<dyn Fft<T>>,
}

impl<T: Scalar> NdFft<T> {
    pub fn new(grid: &LatticeGrid) -> Self {
        let mut planner = FftPlanner::new();
        Self {
            points: grid.points(),
            axes: grid.axes(),
            fwd: planner.plan_fft_forward(grid.points()),
            inv: planner.plan_fft_inverse(grid.points()),
        }
    }

    /// Unnormalized forward DFT along every axis.
    pub fn forward(&self, data: &mut [Cplx<T>]) {
        for axis in 0..self.axes {
            self.transform_axis(data, axis, &self.fwd);
        }
    }

    /// Inverse DFT along every axis, normalized so inverse ∘ forward = id.
    pub fn inverse(&self, data: &mut [Cplx<T>]) {
        for axis in 0..self.axes {
            self.transform_axis(data, axis, &self.inv);
        }
        let scale = T::one() / crate::scalar::real::<T>(data.len() as f64);
        let scale = Complex::new(scale, T::zero());
        for v in data.iter_mut() {
            *v = *v * scale;
        }
    }

    fn transform_axis(&self, data: &mut [Cplx<T>], axis: usize, fft: &Arc<dyn Fft<T>>) {
        let n = self.points;
        let stride = n.pow((self.axes - 1 - axis) as u32);
        if stride == 1 {
            // contiguous lanes: rustfft batches over chunks of length n
            fft.process(data);
            return;
        }
        let mut lane = vec![Complex::new(T::zero(), T::zero()); n];
        let block = n * stride;
        for block_start in (0..data.len()).step_by(block) {
            for inner in 0..stride {
                let base = block_start + inner;
                for (i, l) in lane.iter_mut().enumerate() {
                    *l = data[base + i * stride];
                }
                fft.process(&mut lane);
                for (i, l) in lane.iter().enumerate() {
                    data[base + i * stride] = *l;
                }
            }
        }
    }
}
