use crate::error::{Error, Result};

use super::matrix::{frobenius_norm, Matrix};

const MAX_SWEEPS: usize = 100;

/// Relative off-diagonal mass at which the rotations stop.
pub const JACOBI_TOLERANCE: f64 = 1e-12;

/// Eigen-decomposition of a real symmetric matrix.
#[derive(Clone, Debug)]
pub struct SymEig {
    /// Eigenvalues, ascending.
    pub values: Vec<f64>,
    /// Orthonormal eigenvectors stored as columns, ordered like `values`.
    pub vectors: Matrix,
}

/// Cyclic Jacobi eigensolver.
///
/// The input must be square and symmetric to within `tol`; the symmetric
/// part `(a + aᵀ)/2` is decomposed. Rotations sweep over all `(p, q)`
/// pairs until the off-diagonal Frobenius mass drops below
/// `1e-12 · ‖a‖_F`.
pub fn sym_eig(a: &Matrix, tol: f64) -> Result<SymEig> {
    if !a.is_square() {
        return Err(Error::shape("sym_eig", a.shape(), (a.cols(), a.rows())));
    }
    let max_asymmetry = a.max_asymmetry().unwrap_or(0.0);
    if !(max_asymmetry <= tol) {
        return Err(Error::Symmetry { max_asymmetry, tol });
    }
    if !a.is_finite() {
        return Err(Error::Numeric("sym_eig input contains non-finite entries".into()));
    }

    let n = a.rows();
    let mut w = Matrix::from_fn(n, n, |i, j| 0.5 * (a.get(i, j) + a.get(j, i)));
    // Eigenvectors accumulate as rows of `vt` so every rotation touches
    // contiguous memory.
    let mut vt = Matrix::identity(n);

    let target = JACOBI_TOLERANCE * frobenius_norm(&w);
    // Skipping pairs below this bound cannot stop convergence: if every
    // |a_pq| <= target / n, the off-diagonal mass is below `target`.
    let skip = if n > 1 { target / n as f64 } else { 0.0 };

    for sweep in 0..MAX_SWEEPS {
        if off_diagonal_norm(&w) <= target {
            break;
        }
        if sweep + 1 == MAX_SWEEPS {
            log::warn!("jacobi: sweep limit reached for {n}x{n} matrix");
        }
        for p in 0..n.saturating_sub(1) {
            for q in p + 1..n {
                let apq = w.get(p, q);
                if apq.abs() <= skip {
                    continue;
                }
                let app = w.get(p, p);
                let aqq = w.get(q, q);
                let theta = (aqq - app) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                rotate(&mut w, &mut vt, p, q, c, s);
                w.set(p, p, app - t * apq);
                w.set(q, q, aqq + t * apq);
                w.set(p, q, 0.0);
                w.set(q, p, 0.0);
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| w.get(i, i).total_cmp(&w.get(j, j)).then(i.cmp(&j)));
    let values = order.iter().map(|&i| w.get(i, i)).collect();
    let vectors = Matrix::from_fn(n, n, |row, col| vt.get(order[col], row));
    Ok(SymEig { values, vectors })
}

fn off_diagonal_norm(w: &Matrix) -> f64 {
    let n = w.rows();
    let mut acc = 0.0;
    for i in 0..n {
        for (j, v) in w.row(i).iter().enumerate() {
            if i != j {
                acc += v * v;
            }
        }
    }
    acc.sqrt()
}

/// Applies `Jᵀ W J` and `Vᵀ ← Jᵀ Vᵀ` for the plane rotation in `(p, q)`.
fn rotate(w: &mut Matrix, vt: &mut Matrix, p: usize, q: usize, c: f64, s: f64) {
    let n = w.rows();
    rotate_rows(w.as_mut_slice(), n, p, q, c, s);
    let data = w.as_mut_slice();
    for k in 0..n {
        let x = data[k * n + p];
        let y = data[k * n + q];
        data[k * n + p] = c * x - s * y;
        data[k * n + q] = s * x + c * y;
    }
    rotate_rows(vt.as_mut_slice(), n, p, q, c, s);
}

fn rotate_rows(data: &mut [f64], n: usize, p: usize, q: usize, c: f64, s: f64) {
    let (head, tail) = data.split_at_mut(q * n);
    let rp = &mut head[p * n..(p + 1) * n];
    let rq = &mut tail[..n];
    for (x, y) in rp.iter_mut().zip(rq.iter_mut()) {
        let (a, b) = (*x, *y);
        *x = c * a - s * b;
        *y = s * a + c * b;
    }
}
