use crate::error::{Error, Result};
use crate::numerics::{matmul, matmul_nt, matmul_tn, Matrix};

/// Negative-side slope of the LeakyReLU in front of the softmax.
pub const LEAKY_SLOPE: f64 = 0.2;

#[derive(Clone, Debug)]
pub(crate) struct AttentionCache {
    /// `[C_A C_S]·W`, `n × 2`
    pub logits: Matrix,
    /// Row-wise softmax of the activated logits.
    pub softmax: Matrix,
    /// Unit-norm rows of `softmax`.
    pub m: Matrix,
}

fn check_pair(c_a: &Matrix, c_s: &Matrix) -> Result<()> {
    if !c_a.is_square() || c_a.shape() != c_s.shape() {
        return Err(Error::shape("fusion inputs", c_a.shape(), c_s.shape()));
    }
    Ok(())
}

pub(crate) fn attention_forward(c_a: &Matrix, c_s: &Matrix, w: &Matrix) -> Result<AttentionCache> {
    check_pair(c_a, c_s)?;
    let n = c_a.rows();
    if w.shape() != (2 * n, 2) {
        return Err(Error::shape("attention weights", w.shape(), (2 * n, 2)));
    }
    // [C_A C_S]·W = C_A·W_top + C_S·W_bottom
    let mut logits = matmul(c_a, &w.top(n))?;
    logits.axpy(1.0, &matmul(c_s, &w.bottom(n))?)?;

    let mut softmax = Matrix::zeros(n, 2);
    let mut m = Matrix::zeros(n, 2);
    for i in 0..n {
        let a: Vec<f64> = logits.row(i).iter().map(|&u| leaky(u)).collect();
        let top = a[0].max(a[1]);
        let e0 = (a[0] - top).exp();
        let e1 = (a[1] - top).exp();
        let s = [e0 / (e0 + e1), e1 / (e0 + e1)];
        let r = (s[0] * s[0] + s[1] * s[1]).sqrt();
        softmax.row_mut(i).copy_from_slice(&s);
        m.row_mut(i).copy_from_slice(&[s[0] / r, s[1] / r]);
    }
    Ok(AttentionCache { logits, softmax, m })
}

#[inline]
fn leaky(u: f64) -> f64 {
    if u < 0.0 {
        LEAKY_SLOPE * u
    } else {
        u
    }
}

/// `M = ℓ₂(softmax(LeakyReLU([C_A C_S]·W)))`, row-wise; `n × 2`.
pub fn attention_weights(c_a: &Matrix, c_s: &Matrix, w: &Matrix) -> Result<Matrix> {
    attention_forward(c_a, c_s, w).map(|c| c.m)
}

/// `C_F = (m₁𝟏) ⊙ C_A + (m₂𝟏) ⊙ C_S`: row `i` mixes the two graphs with
/// weights `m[i, 0]` and `m[i, 1]`.
pub fn fuse(c_a: &Matrix, c_s: &Matrix, m: &Matrix) -> Result<Matrix> {
    check_pair(c_a, c_s)?;
    let n = c_a.rows();
    if m.shape() != (n, 2) {
        return Err(Error::shape("fusion weights", m.shape(), (n, 2)));
    }
    let mut out = Matrix::zeros(n, n);
    for i in 0..n {
        let (w1, w2) = (m.get(i, 0), m.get(i, 1));
        for ((o, a), s) in out.row_mut(i).iter_mut().zip(c_a.row(i)).zip(c_s.row(i)) {
            *o = w1 * a + w2 * s;
        }
    }
    Ok(out)
}

/// Gradients flowing out of the fusion module.
pub(crate) struct FusionGrads {
    pub c_a: Matrix,
    pub c_s: Matrix,
    pub w: Matrix,
}

/// Back-propagates `grad_cf` (gradient w.r.t. `C_F`) through `fuse` and
/// the attention module.
pub(crate) fn fusion_backward(
    c_a: &Matrix,
    c_s: &Matrix,
    w: &Matrix,
    cache: &AttentionCache,
    grad_cf: &Matrix,
) -> Result<FusionGrads> {
    let n = c_a.rows();
    let mut g_ca = Matrix::zeros(n, n);
    let mut g_cs = Matrix::zeros(n, n);
    let mut g_logits = Matrix::zeros(n, 2);
    for i in 0..n {
        let (m1, m2) = (cache.m.get(i, 0), cache.m.get(i, 1));
        let g = grad_cf.row(i);
        let mut gm = [0.0; 2];
        for (j, &gij) in g.iter().enumerate() {
            gm[0] += gij * c_a.get(i, j);
            gm[1] += gij * c_s.get(i, j);
        }
        for (dst, &gij) in g_ca.row_mut(i).iter_mut().zip(g) {
            *dst = m1 * gij;
        }
        for (dst, &gij) in g_cs.row_mut(i).iter_mut().zip(g) {
            *dst = m2 * gij;
        }

        // m = s / ‖s‖
        let s = cache.softmax.row(i);
        let r = (s[0] * s[0] + s[1] * s[1]).sqrt();
        let m_dot = m1 * gm[0] + m2 * gm[1];
        let gs = [(gm[0] - m1 * m_dot) / r, (gm[1] - m2 * m_dot) / r];
        // softmax Jacobian
        let s_dot = s[0] * gs[0] + s[1] * gs[1];
        let ga = [s[0] * (gs[0] - s_dot), s[1] * (gs[1] - s_dot)];
        for c in 0..2 {
            let u = cache.logits.get(i, c);
            let slope = if u < 0.0 { LEAKY_SLOPE } else { 1.0 };
            g_logits.set(i, c, ga[c] * slope);
        }
    }

    let w_top = w.top(n);
    let w_bottom = w.bottom(n);
    g_ca.axpy(1.0, &matmul_nt(&g_logits, &w_top)?)?;
    g_cs.axpy(1.0, &matmul_nt(&g_logits, &w_bottom)?)?;
    let gw_top = matmul_tn(c_a, &g_logits)?;
    let gw_bottom = matmul_tn(c_s, &g_logits)?;
    let mut gw = Matrix::zeros(2 * n, 2);
    gw.as_mut_slice()[..2 * n].copy_from_slice(gw_top.as_slice());
    gw.as_mut_slice()[2 * n..].copy_from_slice(gw_bottom.as_slice());
    Ok(FusionGrads {
        c_a: g_ca,
        c_s: g_cs,
        w: gw,
    })
}

trait Halves {
    fn top(&self, n: usize) -> Matrix;
    fn bottom(&self, n: usize) -> Matrix;
}

impl Halves for Matrix {
    fn top(&self, n: usize) -> Matrix {
        Matrix::new(n, self.cols(), self.as_slice()[..n * self.cols()].to_vec()).expect("row split")
    }

    fn bottom(&self, n: usize) -> Matrix {
        Matrix::new(
            self.rows() - n,
            self.cols(),
            self.as_slice()[n * self.cols()..].to_vec(),
        )
        .expect("row split")
    }
}
