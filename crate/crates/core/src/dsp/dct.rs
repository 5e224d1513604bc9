//! Orthonormal DCT-II, truncated to the leading coefficients.

use alloc::vec::Vec;
use core::f64::consts::PI;

#[derive(Debug, Clone)]
pub struct Dct {
    /// `coeffs x inputs`, row-major
    basis: Vec<f64>,
    inputs: usize,
    coeffs: usize,
}

impl Dct {
    pub fn new(inputs: usize, coeffs: usize) -> Self {
        let mut basis = Vec::with_capacity(inputs * coeffs);
        for c in 0..coeffs {
            let scale = if c == 0 {
                libm::sqrt(1.0 / inputs as f64)
            } else {
                libm::sqrt(2.0 / inputs as f64)
            };
            for m in 0..inputs {
                basis.push(scale * libm::cos(PI * c as f64 * (m as f64 + 0.5) / inputs as f64));
            }
        }
        Self {
            basis,
            inputs,
            coeffs,
        }
    }

    pub fn forward(&self, x: &[f64], out: &mut [f64]) {
        for (o, row) in out.iter_mut().zip(self.basis.chunks_exact(self.inputs)) {
            *o = row.iter().zip(x).map(|(b, v)| b * v).sum();
        }
    }

    pub fn transpose(&self, g: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|o| *o = 0.0);
        for (&gc, row) in g.iter().zip(self.basis.chunks_exact(self.inputs)) {
            for (o, b) in out.iter_mut().zip(row) {
                *o += gc * b;
            }
        }
    }

    pub fn coeffs(&self) -> usize {
        self.coeffs
    }
}
