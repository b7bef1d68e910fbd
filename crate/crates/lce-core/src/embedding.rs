//! Dense row-major embedding tables.

use rand::Rng;
use serde::{Deserialize, Serialize};

/// A `rows x dim` matrix of f64 in row-major order. Row `i` is the
/// embedding of node `i` of whatever kind the caller assigned.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingTable {
    rows: usize,
    dim: usize,
    values: Vec<f64>,
}

impl EmbeddingTable {
    pub fn zeros(rows: usize, dim: usize) -> Self {
        Self { rows, dim, values: vec![0.0; rows * dim] }
    }

    pub fn from_values(rows: usize, dim: usize, values: Vec<f64>) -> Self {
        assert_eq!(values.len(), rows * dim, "value buffer does not match rows x dim");
        Self { rows, dim, values }
    }

    /// Uniform init on `[-b, b]` with `b = sqrt(6 / (rows + dim))`, the
    /// usual fan-based bound for a `rows x dim` table.
    pub fn xavier_uniform<R: Rng>(rows: usize, dim: usize, rng: &mut R) -> Self {
        let bound = (6.0 / (rows + dim) as f64).sqrt();
        let values = (0..rows * dim).map(|_| rng.gen_range(-bound..=bound)).collect();
        Self { rows, dim, values }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.dim..(i + 1) * self.dim]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.values[i * self.dim..(i + 1) * self.dim]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn fill(&mut self, v: f64) {
        self.values.fill(v);
    }

    /// Squared Frobenius norm.
    pub fn norm_sq(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum()
    }

    /// Stack `self` on top of `other` (same dim).
    pub fn vstack(&self, other: &EmbeddingTable) -> EmbeddingTable {
        assert_eq!(self.dim, other.dim, "cannot stack tables of different dim");
        let mut values = Vec::with_capacity((self.rows + other.rows) * self.dim);
        values.extend_from_slice(&self.values);
        values.extend_from_slice(&other.values);
        EmbeddingTable { rows: self.rows + other.rows, dim: self.dim, values }
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}
