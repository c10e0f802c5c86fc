//! Dense matrix kernels, a symmetric eigensolver, k-means and a
//! finite-difference gradient oracle.

mod eigen;
mod gradcheck;
mod kmeans;
mod matrix;

pub use eigen::{sym_eig, SymEig, JACOBI_TOLERANCE};
pub use gradcheck::finite_diff_grad;
pub use kmeans::{kmeans, KMeansFit};
pub use matrix::{frobenius_norm, frobenius_norm_sq, matmul, matmul_nt, matmul_tn, Matrix};
