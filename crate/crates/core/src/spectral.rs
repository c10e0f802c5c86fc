//! Normalized-cut spectral clustering on a learned coefficient matrix.

use crate::error::{Error, Result};
use crate::numerics::{kmeans, matmul_tn, sym_eig, Matrix, JACOBI_TOLERANCE};

/// Degree substituted for isolated nodes.
pub const ZERO_DEGREE_EPS: f64 = 1e-12;

/// Independent k-means++ restarts; the lowest objective wins.
pub const KMEANS_RESTARTS: u64 = 10;

const KMEANS_MAX_ITER: usize = 300;

/// Nonnegative symmetric graph with zero diagonal.
#[derive(Clone, Debug, PartialEq)]
pub struct AffinityGraph {
    weights: Matrix,
}

impl AffinityGraph {
    pub fn new(weights: Matrix) -> Result<Self> {
        if !weights.is_square() {
            return Err(Error::shape(
                "affinity graph",
                weights.shape(),
                (weights.rows(), weights.rows()),
            ));
        }
        if weights.max_asymmetry() != Some(0.0) && weights.rows() > 0 {
            return Err(Error::Symmetry {
                max_asymmetry: weights.max_asymmetry().unwrap_or(f64::NAN),
                tol: 0.0,
            });
        }
        if weights.as_slice().iter().any(|&v| !(v >= 0.0) || !v.is_finite()) {
            return Err(Error::Numeric("affinity weights must be finite and nonnegative".into()));
        }
        Ok(Self { weights })
    }

    pub fn weights(&self) -> &Matrix {
        &self.weights
    }

    pub fn n(&self) -> usize {
        self.weights.rows()
    }

    pub fn degrees(&self) -> Vec<f64> {
        self.weights.row_sums()
    }
}

/// `(|C| + |Cᵀ|)/2` with zero diagonal; with `topk`, only the `topk`
/// largest entries of each row survive before a max-symmetrization.
pub fn postprocess_affinity(c: &Matrix, topk: Option<usize>) -> Result<AffinityGraph> {
    if !c.is_square() {
        return Err(Error::shape("postprocess_affinity", c.shape(), (c.rows(), c.rows())));
    }
    if topk == Some(0) {
        return Err(Error::Argument("topk must be at least 1".into()));
    }
    let n = c.rows();
    let mut w = Matrix::from_fn(n, n, |i, j| {
        if i == j {
            0.0
        } else {
            0.5 * (c.get(i, j).abs() + c.get(j, i).abs())
        }
    });
    if let Some(k) = topk {
        if k < n {
            let mut order: Vec<usize> = Vec::with_capacity(n);
            for i in 0..n {
                order.clear();
                order.extend(0..n);
                let row = w.row(i).to_vec();
                // descending weight, then ascending index
                order.sort_by(|&a, &b| row[b].total_cmp(&row[a]).then(a.cmp(&b)));
                let out = w.row_mut(i);
                for &j in &order[k..] {
                    out[j] = 0.0;
                }
            }
            w = Matrix::from_fn(n, n, |i, j| w.get(i, j).max(w.get(j, i)));
        }
    }
    AffinityGraph::new(w)
}

/// Absolute cosine similarity between the columns of `x`.
///
/// Zero columns have similarity 0 with everything.
pub fn cosine_affinity(x: &Matrix) -> Result<Matrix> {
    let norms: Vec<f64> = (0..x.cols())
        .map(|j| x.column(j).iter().map(|v| v * v).sum::<f64>().sqrt())
        .collect();
    let gram = matmul_tn(x, x)?;
    let n = x.cols();
    Ok(Matrix::from_fn(n, n, |i, j| {
        let d = norms[i] * norms[j];
        if d > 0.0 {
            (gram.get(i, j) / d).abs()
        } else {
            0.0
        }
    }))
}

/// `L_sym = I − D^{-1/2}·W·D^{-1/2}`.
pub fn normalized_laplacian(g: &AffinityGraph) -> Matrix {
    let n = g.n();
    let deg = g.degrees();
    let isolated = deg.iter().filter(|&&d| d <= 0.0).count();
    if isolated > 0 {
        log::warn!("spectral: {isolated} isolated node(s); using degree {ZERO_DEGREE_EPS:e}");
    }
    let inv_sqrt: Vec<f64> = deg
        .iter()
        .map(|&d| 1.0 / if d > 0.0 { d } else { ZERO_DEGREE_EPS }.sqrt())
        .collect();
    let w = g.weights();
    Matrix::from_fn(n, n, |i, j| {
        let off = w.get(i, j) * (inv_sqrt[i] * inv_sqrt[j]);
        if i == j {
            1.0 - off
        } else {
            -off
        }
    })
}

/// Eigenvalues (ascending) and the `n × k` row-normalized embedding made
/// of the eigenvectors for the `k` smallest of them.
pub fn spectral_embedding(g: &AffinityGraph, k: usize) -> Result<(Vec<f64>, Matrix)> {
    let n = g.n();
    if k == 0 {
        return Err(Error::Argument("spectral clustering needs k >= 1".into()));
    }
    if k > n {
        return Err(Error::Cardinality(format!("k = {k} clusters but only {n} nodes")));
    }
    let lap = normalized_laplacian(g);
    let eig = sym_eig(&lap, JACOBI_TOLERANCE)?;
    let mut emb = eig.vectors.columns(0, k);
    for i in 0..n {
        let row = emb.row_mut(i);
        let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm > 0.0 {
            row.iter_mut().for_each(|v| *v /= norm);
        }
    }
    Ok((eig.values, emb))
}

/// Normalized-cut labels in `0..k`, deterministic for a fixed seed.
pub fn cluster(g: &AffinityGraph, k: usize, seed: u64) -> Result<Vec<usize>> {
    let (_, emb) = spectral_embedding(g, k)?;
    let mut best: Option<(f64, Vec<usize>)> = None;
    for r in 0..KMEANS_RESTARTS {
        let fit = kmeans(&emb, k, seed.wrapping_add(r), KMEANS_MAX_ITER)?;
        let obj = fit.objective();
        if best.as_ref().is_none_or(|(b, _)| obj < *b) {
            best = Some((obj, fit.labels));
        }
    }
    Ok(best.map(|(_, l)| l).unwrap_or_default())
}
