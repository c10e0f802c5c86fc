use crate::error::{Error, Result};
use crate::numerics::{frobenius_norm_sq, matmul, matmul_nt, matmul_tn, Matrix};

use super::autoencoder::{autoencoder_forward, backprop_autoencoder, AeCache, AeGradients};
use super::fusion::{attention_forward, fuse, fusion_backward, AttentionCache};
use super::self_expressive::build_structure_matrix;
use super::{Hyperparams, ModelState, StructureGradient, StructureVariant};

/// Unweighted loss terms of the joint objective.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct LossTerms {
    /// `½‖X − X̂‖²_F`
    pub ae: f64,
    /// `‖C_A‖²_F`
    pub reg_a: f64,
    /// `‖Z − Z·C_A‖²_F`
    pub se_a: f64,
    /// `‖C_S‖²_F`
    pub reg_s: f64,
    /// `‖Z_S − Z_S·C_S‖²_F`
    pub se_s: f64,
    /// `‖Z_S − Z_S·C_F‖²_F`, only evaluated when `fusion_in_loss` is set.
    pub fusion: f64,
}

impl LossTerms {
    pub fn total(&self, hp: &Hyperparams) -> f64 {
        let mut t = self.ae + self.reg_a + hp.gamma * self.se_a + hp.lambda1 * self.reg_s + hp.lambda2 * self.se_s;
        if hp.fusion_in_loss {
            t += hp.lambda2 * self.fusion;
        }
        t
    }
}

/// Everything `backward` needs from a forward pass.
#[derive(Clone, Debug)]
pub struct ForwardCache {
    pub(crate) ae: AeCache,
    /// `Z·C_A`
    pub c_a_out: Matrix,
    pub z_s: Matrix,
    /// `Z_S·C_S`
    pub c_s_out: Matrix,
    /// Row-wise attention weights, `n × 2`.
    pub m: Matrix,
    pub c_f: Matrix,
    pub loss_terms: LossTerms,
    pub total: f64,
    pub(crate) attention: AttentionCache,
    /// `Z_S·C_F` when the fusion term is active.
    pub(crate) c_f_out: Option<Matrix>,
}

impl ForwardCache {
    /// Latent code `Z` (`d × n`).
    pub fn z(&self) -> &Matrix {
        &self.ae.z
    }

    pub fn x_hat(&self) -> &Matrix {
        &self.ae.x_hat
    }
}

/// Gradients of the total loss for every parameter of [`ModelState`].
#[derive(Clone, Debug, PartialEq)]
pub struct Gradients {
    pub ae: AeGradients,
    pub c_a: Matrix,
    pub c_s: Matrix,
    pub w: Matrix,
}

impl Gradients {
    /// Same order as `ModelState::param_slices_mut`.
    pub fn slices(&self) -> Vec<&[f64]> {
        let mut out = self.ae.slices();
        out.push(self.c_a.as_slice());
        out.push(self.c_s.as_slice());
        out.push(self.w.as_slice());
        out
    }
}

/// Runs encoder, decoder, both self-expressive layers, the structure
/// matrix and the attention fusion; fills every loss term.
pub fn forward(state: &ModelState, x: &Matrix, hp: &Hyperparams) -> Result<ForwardCache> {
    hp.validate()?;
    state.check_input(x)?;
    let ae = autoencoder_forward(&state.ae, x)?;
    let c_a = &state.c_a.coeff;
    let c_s = &state.c_s.coeff;

    let c_a_out = matmul(&ae.z, c_a)?;
    let reg_a = frobenius_norm_sq(c_a);
    let se_a = frobenius_norm_sq(&ae.z.sub(&c_a_out)?);

    let z_s = build_structure_matrix(c_a, &ae.z, hp.structure_variant)?;
    let c_s_out = matmul(&z_s, c_s)?;
    let reg_s = frobenius_norm_sq(c_s);
    let se_s = frobenius_norm_sq(&z_s.sub(&c_s_out)?);

    let attention = attention_forward(c_a, c_s, &state.attention.w)?;
    let c_f = fuse(c_a, c_s, &attention.m)?;

    let (fusion, c_f_out) = if hp.fusion_in_loss {
        let out = matmul(&z_s, &c_f)?;
        (frobenius_norm_sq(&z_s.sub(&out)?), Some(out))
    } else {
        (0.0, None)
    };

    let loss_terms = LossTerms {
        ae: ae.loss,
        reg_a,
        se_a,
        reg_s,
        se_s,
        fusion,
    };
    let total = loss_terms.total(hp);
    Ok(ForwardCache {
        m: attention.m.clone(),
        ae,
        c_a_out,
        z_s,
        c_s_out,
        c_f,
        loss_terms,
        total,
        attention,
        c_f_out,
    })
}

/// `R − R·Cᵀ`, the gradient factor of `‖Y − Y·C‖²_F` w.r.t. `Y` (up to 2).
fn residual_back(r: &Matrix, c: &Matrix) -> Result<Matrix> {
    r.sub(&matmul_nt(r, c)?)
}

/// Exact gradients of the total loss, including the paths through `Z_S`
/// into `C_A` (unless stopped) and, with `fusion_in_loss`, through the
/// attention module.
pub fn backward(state: &ModelState, cache: &ForwardCache, x: &Matrix, hp: &Hyperparams) -> Result<Gradients> {
    state.check_input(x)?;
    let n = state.n();
    if cache.c_a_out.shape() != (state.ae.latent_dim(), n) || cache.z_s.shape() != (n, n) {
        return Err(Error::Consistency("forward cache does not match model state".into()));
    }
    if hp.fusion_in_loss != cache.c_f_out.is_some() {
        return Err(Error::Consistency(
            "forward cache built with different fusion_in_loss".into(),
        ));
    }
    let z = &cache.ae.z;
    let c_a = &state.c_a.coeff;
    let c_s = &state.c_s.coeff;

    // attribute term: ‖C_A‖² + γ‖Z − Z C_A‖²
    let r_a = z.sub(&cache.c_a_out)?;
    let mut g_z = residual_back(&r_a, c_a)?.scale(2.0 * hp.gamma);
    let mut g_ca = c_a.scale(2.0);
    g_ca.axpy(-2.0 * hp.gamma, &matmul_tn(z, &r_a)?)?;

    // structure term: λ₁‖C_S‖² + λ₂‖Z_S − Z_S C_S‖²
    let mut g_cs = c_s.scale(2.0 * hp.lambda1);
    let mut g_zs = Matrix::zeros(n, n);
    if hp.lambda2 != 0.0 {
        let r_s = cache.z_s.sub(&cache.c_s_out)?;
        g_cs.axpy(-2.0 * hp.lambda2, &matmul_tn(&cache.z_s, &r_s)?)?;
        g_zs.axpy(2.0 * hp.lambda2, &residual_back(&r_s, c_s)?)?;
    }

    let mut g_w = Matrix::zeros(2 * n, 2);
    if let Some(c_f_out) = &cache.c_f_out {
        if hp.lambda2 != 0.0 {
            let r_f = cache.z_s.sub(c_f_out)?;
            let g_cf = matmul_tn(&cache.z_s, &r_f)?.scale(-2.0 * hp.lambda2);
            g_zs.axpy(2.0 * hp.lambda2, &residual_back(&r_f, &cache.c_f)?)?;
            let fg = fusion_backward(c_a, c_s, &state.attention.w, &cache.attention, &g_cf)?;
            g_ca.axpy(1.0, &fg.c_a)?;
            g_cs.axpy(1.0, &fg.c_s)?;
            g_w = fg.w;
        }
    }

    if hp.structure_gradient == StructureGradient::Through && hp.lambda2 != 0.0 {
        match hp.structure_variant {
            StructureVariant::MixedSymmetric => {
                for i in 0..n {
                    for j in 0..n {
                        let v = 0.5 * (g_zs.get(i, j) + g_zs.get(j, i));
                        g_ca.set(i, j, g_ca.get(i, j) + v);
                    }
                }
            }
            StructureVariant::Raw => g_ca.axpy(1.0, &g_zs)?,
            StructureVariant::AbsSymmetric => {
                for i in 0..n {
                    for j in 0..n {
                        let v = 0.5 * (g_zs.get(i, j) + g_zs.get(j, i)) * c_a.get(i, j).signum_or_zero();
                        g_ca.set(i, j, g_ca.get(i, j) + v);
                    }
                }
            }
            StructureVariant::Cosine => {
                // Z_S = ZᵀZ / s with s = ‖Z‖²_F
                let s = frobenius_norm_sq(z);
                let sym = g_zs.add(&g_zs.transpose())?;
                let inner: f64 = g_zs
                    .as_slice()
                    .iter()
                    .zip(cache.z_s.as_slice())
                    .map(|(a, b)| a * b)
                    .sum();
                g_z.axpy(1.0 / s, &matmul(z, &sym)?)?;
                g_z.axpy(-2.0 * inner / s, z)?;
            }
        }
    }

    let ae = backprop_autoencoder(&state.ae, &cache.ae, x, Some(&g_z))?;
    Ok(Gradients {
        ae,
        c_a: g_ca,
        c_s: g_cs,
        w: g_w,
    })
}

trait SignumOrZero {
    fn signum_or_zero(self) -> f64;
}

impl SignumOrZero for f64 {
    fn signum_or_zero(self) -> f64 {
        if self > 0.0 {
            1.0
        } else if self < 0.0 {
            -1.0
        } else {
            0.0
        }
    }
}
