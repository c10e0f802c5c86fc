//! Shared fixtures for the criterion benchmarks.

use dualse::datasets::synthesize_subspaces;
use dualse::{DataSet, Matrix, ModelState};

/// Deterministic dense matrix with entries in `[-1, 1)`.
pub fn dense(rows: usize, cols: usize, seed: u64) -> Matrix {
    let mut s = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
    Matrix::from_fn(rows, cols, |_, _| {
        s ^= s << 13;
        s ^= s >> 7;
        s ^= s << 17;
        (s >> 11) as f64 / (1u64 << 52) as f64 - 1.0
    })
}

pub fn symmetric(n: usize, seed: u64) -> Matrix {
    let a = dense(n, n, seed);
    Matrix::from_fn(n, n, |i, j| a.get(i, j) + a.get(j, i))
}

/// Union-of-subspaces data with `n` points in `R^ambient` and a model for it.
pub fn problem(n: usize, ambient: usize, layers: &[usize]) -> (DataSet, ModelState) {
    let data = synthesize_subspaces(4, 3, ambient, n / 4, 0.01, 0).expect("synthetic data");
    let mut dims = vec![ambient];
    dims.extend_from_slice(layers);
    let state = ModelState::init(&dims, data.n(), 0).expect("model");
    (data, state)
}
