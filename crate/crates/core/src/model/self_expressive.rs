use crate::error::{Error, Result};
use crate::numerics::{frobenius_norm_sq, matmul, matmul_tn, Matrix};

use super::{SelfExpressiveLayer, StructureVariant};

fn se_terms(z: &Matrix, c: &Matrix, op: &'static str) -> Result<(f64, f64)> {
    if !c.is_square() || c.rows() != z.cols() {
        return Err(Error::shape(op, z.shape(), c.shape()));
    }
    let zc = matmul(z, c)?;
    Ok((frobenius_norm_sq(c), frobenius_norm_sq(&z.sub(&zc)?)))
}

/// `(‖C_A‖²_F, ‖Z_A − Z_A·C_A‖²_F)`; the caller applies `γ`.
pub fn attribute_se_loss(z_a: &Matrix, c_a: &SelfExpressiveLayer) -> Result<(f64, f64)> {
    se_terms(z_a, &c_a.coeff, "attribute self-expression")
}

/// `(‖C_S‖²_F, ‖Z_S − Z_S·C_S‖²_F)`; the caller applies `λ₁`, `λ₂`.
pub fn structure_se_loss(z_s: &Matrix, c_s: &SelfExpressiveLayer) -> Result<(f64, f64)> {
    if !z_s.is_square() {
        return Err(Error::shape(
            "structure self-expression",
            z_s.shape(),
            c_s.coeff.shape(),
        ));
    }
    se_terms(z_s, &c_s.coeff, "structure self-expression")
}

/// Builds `Z_S` from the attribute coefficients (or, for the cosine
/// variant, from the latent code `z`).
pub fn build_structure_matrix(c_a: &Matrix, z: &Matrix, variant: StructureVariant) -> Result<Matrix> {
    if !c_a.is_square() {
        return Err(Error::shape("structure matrix", c_a.shape(), (c_a.rows(), c_a.rows())));
    }
    if z.cols() != c_a.rows() {
        return Err(Error::shape("structure matrix", c_a.shape(), z.shape()));
    }
    let n = c_a.rows();
    let out = match variant {
        StructureVariant::MixedSymmetric => Matrix::from_fn(n, n, |i, j| 0.5 * (c_a.get(i, j) + c_a.get(j, i))),
        StructureVariant::AbsSymmetric => {
            Matrix::from_fn(n, n, |i, j| 0.5 * (c_a.get(i, j).abs() + c_a.get(j, i).abs()))
        }
        StructureVariant::Raw => c_a.clone(),
        StructureVariant::Cosine => {
            // ‖Zᵀ‖_F · ‖Z‖_F = ‖Z‖²_F
            let denom = frobenius_norm_sq(z);
            if denom == 0.0 {
                return Err(Error::DivisionByZero("cosine structure matrix of an all-zero Z".into()));
            }
            matmul_tn(z, z)?.scale(1.0 / denom)
        }
    };
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn layer(c: Matrix) -> SelfExpressiveLayer {
        SelfExpressiveLayer::new(c).unwrap()
    }

    #[test]
    fn zero_and_identity_coefficients() {
        let z = Matrix::from_fn(3, 4, |i, j| (i as f64 + 1.0) * (j as f64 - 1.5));
        let (reg, se) = attribute_se_loss(&z, &layer(Matrix::zeros(4, 4))).unwrap();
        assert_eq!(reg, 0.0);
        assert_eq!(se, frobenius_norm_sq(&z));
        let (reg, se) = attribute_se_loss(&z, &layer(Matrix::identity(4))).unwrap();
        assert_eq!(reg, 4.0);
        assert_eq!(se, 0.0);
    }

    #[test]
    fn structure_terms() {
        let zs = Matrix::from_fn(3, 3, |i, j| (i * 3 + j) as f64);
        assert_eq!(structure_se_loss(&zs, &layer(Matrix::identity(3))).unwrap(), (3.0, 0.0));
        let (reg, se) = structure_se_loss(&zs, &layer(Matrix::zeros(3, 3))).unwrap();
        assert_eq!(reg, 0.0);
        assert_eq!(se, frobenius_norm_sq(&zs));
        assert!(structure_se_loss(&Matrix::zeros(2, 2), &layer(Matrix::zeros(3, 3))).is_err());
    }

    #[test]
    fn shape_mismatch() {
        assert!(matches!(
            attribute_se_loss(&Matrix::zeros(2, 3), &layer(Matrix::zeros(4, 4))),
            Err(Error::Shape { .. })
        ));
    }

    #[test]
    fn structure_variants_by_hand() {
        let z = Matrix::identity(2);
        let c = Matrix::from_rows(&[[0.0, 1.0], [0.0, 0.0]]);
        let mixed = build_structure_matrix(&c, &z, StructureVariant::MixedSymmetric).unwrap();
        assert_eq!(mixed, Matrix::from_rows(&[[0.0, 0.5], [0.5, 0.0]]));

        let cos = build_structure_matrix(&c, &z, StructureVariant::Cosine).unwrap();
        assert!((cos.get(0, 0) - 0.5).abs() < 1e-15 && (cos.get(1, 1) - 0.5).abs() < 1e-15);
        assert_eq!(cos.get(0, 1), 0.0);

        let neg = Matrix::from_rows(&[[0.0, -1.0], [0.0, 0.0]]);
        let abs = build_structure_matrix(&neg, &z, StructureVariant::AbsSymmetric).unwrap();
        assert_eq!(abs, Matrix::from_rows(&[[0.0, 0.5], [0.5, 0.0]]));

        assert_eq!(build_structure_matrix(&c, &z, StructureVariant::Raw).unwrap(), c);
    }

    #[test]
    fn symmetric_input_is_fixed_point() {
        let c = Matrix::from_rows(&[[1.0, -2.0, 0.5], [-2.0, 0.0, 3.0], [0.5, 3.0, 4.0]]);
        let z = Matrix::zeros(2, 3);
        assert_eq!(
            build_structure_matrix(&c, &z, StructureVariant::MixedSymmetric).unwrap(),
            c
        );
    }

    #[test]
    fn cosine_of_zero_latent_fails() {
        let r = build_structure_matrix(&Matrix::zeros(2, 2), &Matrix::zeros(3, 2), StructureVariant::Cosine);
        assert!(matches!(r, Err(Error::DivisionByZero(_))));
    }
}
