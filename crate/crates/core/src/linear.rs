//! Dense affine map `y = W x + b` with a row-major weight.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Linear {
    pub rows: usize,
    pub cols: usize,
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Linear {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            weight: vec![0.0; rows * cols],
            bias: vec![0.0; rows],
        }
    }

    /// Gaussian weights with standard deviation `scale / sqrt(cols)`, zero bias.
    pub fn random<R: Rng + ?Sized>(rows: usize, cols: usize, scale: f64, rng: &mut R) -> Self {
        let std = scale / (cols.max(1) as f64).sqrt();
        let normal = Normal::new(0.0, std).expect("finite std");
        Self {
            rows,
            cols,
            weight: (0..rows * cols).map(|_| normal.sample(rng)).collect(),
            bias: vec![0.0; rows],
        }
    }

    pub fn w(&self, r: usize, c: usize) -> f64 {
        self.weight[r * self.cols + c]
    }

    pub fn w_mut(&mut self, r: usize, c: usize) -> &mut f64 {
        &mut self.weight[r * self.cols + c]
    }

    /// Writes `W x + b` into `out`.
    pub fn apply_into(&self, x: &[f64], out: &mut [f64]) {
        debug_assert_eq!(x.len(), self.cols);
        debug_assert_eq!(out.len(), self.rows);
        for (r, o) in out.iter_mut().enumerate() {
            let row = &self.weight[r * self.cols..(r + 1) * self.cols];
            *o = self.bias[r] + row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>();
        }
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.rows];
        self.apply_into(x, &mut out);
        out
    }

    /// Number of scalar parameters (weights then biases).
    pub fn len(&self) -> usize {
        self.weight.len() + self.bias.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Flattens weights then biases.
    pub fn to_flat(&self) -> Vec<f64> {
        self.weight.iter().chain(&self.bias).copied().collect()
    }

    /// Inverse of [`Linear::to_flat`].
    pub fn set_flat(&mut self, flat: &[f64]) {
        let (w, b) = flat.split_at(self.weight.len());
        self.weight.copy_from_slice(w);
        self.bias.copy_from_slice(b);
    }

    pub fn is_finite(&self) -> bool {
        self.weight.iter().chain(&self.bias).all(|v| v.is_finite())
    }
}
