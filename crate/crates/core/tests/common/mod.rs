#![allow(dead_code)]

//! Loop-based re-implementation of the joint loss, written independently of
//! the library so finite differences of it can check analytic gradients.

use dualse::model::{Hyperparams, ModelState, StructureGradient, StructureVariant};
use dualse::Matrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub type Mat = Vec<Vec<f64>>;

pub fn zeros(r: usize, c: usize) -> Mat {
    vec![vec![0.0; c]; r]
}

pub fn mul(a: &Mat, b: &Mat) -> Mat {
    let mut out = zeros(a.len(), b[0].len());
    for i in 0..a.len() {
        for j in 0..b[0].len() {
            for (k, brow) in b.iter().enumerate() {
                out[i][j] += a[i][k] * brow[j];
            }
        }
    }
    out
}

pub fn fro2(a: &Mat) -> f64 {
    a.iter().flatten().map(|v| v * v).sum()
}

pub fn diff(a: &Mat, b: &Mat) -> Mat {
    a.iter()
        .zip(b)
        .map(|(r, s)| r.iter().zip(s).map(|(x, y)| x - y).collect())
        .collect()
}

fn reshape(flat: &[f64], r: usize, c: usize) -> Mat {
    (0..r).map(|i| flat[i * c..(i + 1) * c].to_vec()).collect()
}

pub fn to_mat(m: &Matrix) -> Mat {
    reshape(m.as_slice(), m.rows(), m.cols())
}

/// Layer widths of the encoder, e.g. `[5, 4, 3]`; the decoder mirrors them.
#[derive(Clone, Debug)]
pub struct Layout {
    pub dims: Vec<usize>,
    pub n: usize,
}

impl Layout {
    /// `(out, in)` of every layer in parameter order: encoder then decoder.
    fn layers(&self) -> Vec<(usize, usize)> {
        let enc = self.dims.windows(2).map(|w| (w[1], w[0]));
        let dec = self.dims.windows(2).rev().map(|w| (w[0], w[1]));
        enc.chain(dec).collect()
    }

    fn encoder_len(&self) -> usize {
        self.dims.len() - 1
    }
}

/// Runs a stack of affine layers with ReLU between them (none after the last).
fn mlp(params: &[Vec<f64>], shapes: &[(usize, usize)], x: &Mat) -> Mat {
    let mut h = x.clone();
    for (l, &(out, inp)) in shapes.iter().enumerate() {
        let w = reshape(&params[2 * l], out, inp);
        let b = &params[2 * l + 1];
        let mut next = mul(&w, &h);
        for (i, row) in next.iter_mut().enumerate() {
            for v in row.iter_mut() {
                *v += b[i];
                if l + 1 < shapes.len() && *v < 0.0 {
                    *v = 0.0;
                }
            }
        }
        h = next;
    }
    h
}

pub fn structure_matrix(c_a: &Mat, z: &Mat, variant: StructureVariant) -> Mat {
    let n = c_a.len();
    match variant {
        StructureVariant::MixedSymmetric => (0..n)
            .map(|i| (0..n).map(|j| (c_a[i][j] + c_a[j][i]) / 2.0).collect())
            .collect(),
        StructureVariant::AbsSymmetric => (0..n)
            .map(|i| (0..n).map(|j| (c_a[i][j].abs() + c_a[j][i].abs()) / 2.0).collect())
            .collect(),
        StructureVariant::Raw => c_a.clone(),
        StructureVariant::Cosine => {
            let s = fro2(z);
            (0..n)
                .map(|i| {
                    (0..n)
                        .map(|j| (0..z.len()).map(|r| z[r][i] * z[r][j]).sum::<f64>() / s)
                        .collect()
                })
                .collect()
        }
    }
}

fn attention_rows(c_a: &Mat, c_s: &Mat, w: &Mat) -> Vec<[f64; 2]> {
    let n = c_a.len();
    (0..n)
        .map(|i| {
            let mut logits = [0.0; 2];
            for (c, l) in logits.iter_mut().enumerate() {
                for j in 0..n {
                    *l += c_a[i][j] * w[j][c] + c_s[i][j] * w[n + j][c];
                }
                if *l < 0.0 {
                    *l *= 0.2;
                }
            }
            let e: Vec<f64> = logits.iter().map(|l| l.exp()).collect();
            let s = [e[0] / (e[0] + e[1]), e[1] / (e[0] + e[1])];
            let r = (s[0] * s[0] + s[1] * s[1]).sqrt();
            [s[0] / r, s[1] / r]
        })
        .collect()
}

/// Latent code and `Z_S` at the given parameters.
pub fn latent_and_structure(params: &[Vec<f64>], layout: &Layout, x: &Mat, hp: &Hyperparams) -> (Mat, Mat) {
    let shapes = layout.layers();
    let e = layout.encoder_len();
    let z = mlp(&params[..2 * e], &shapes[..e], x);
    let n = layout.n;
    let c_a = reshape(&params[4 * e], n, n);
    let z_s = structure_matrix(&c_a, &z, hp.structure_variant);
    (z, z_s)
}

/// The joint loss. With `frozen_zs`, `Z_S` is taken as that constant.
pub fn naive_loss(params: &[Vec<f64>], layout: &Layout, x: &Mat, hp: &Hyperparams, frozen_zs: Option<&Mat>) -> f64 {
    let shapes = layout.layers();
    let e = layout.encoder_len();
    let n = layout.n;
    let z = mlp(&params[..2 * e], &shapes[..e], x);
    let x_hat = mlp(&params[2 * e..4 * e], &shapes[e..], &z);
    let c_a = reshape(&params[4 * e], n, n);
    let c_s = reshape(&params[4 * e + 1], n, n);
    let w = reshape(&params[4 * e + 2], 2 * n, 2);

    let z_s = match frozen_zs {
        Some(f) => f.clone(),
        None => structure_matrix(&c_a, &z, hp.structure_variant),
    };
    let mut loss = 0.5 * fro2(&diff(x, &x_hat));
    loss += fro2(&c_a) + hp.gamma * fro2(&diff(&z, &mul(&z, &c_a)));
    loss += hp.lambda1 * fro2(&c_s) + hp.lambda2 * fro2(&diff(&z_s, &mul(&z_s, &c_s)));
    if hp.fusion_in_loss {
        let m = attention_rows(&c_a, &c_s, &w);
        let c_f: Mat = (0..n)
            .map(|i| (0..n).map(|j| m[i][0] * c_a[i][j] + m[i][1] * c_s[i][j]).collect())
            .collect();
        loss += hp.lambda2 * fro2(&diff(&z_s, &mul(&z_s, &c_f)));
    }
    loss
}

/// A model with every parameter drawn from `U(-0.5, 0.5)` and data in `[0, 1)`.
pub fn random_instance(layout: &Layout, seed: u64) -> (ModelState, Matrix) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut state = ModelState::init(&layout.dims, layout.n, seed).unwrap();
    for slice in state.param_slices_mut() {
        for v in slice.iter_mut() {
            *v = rng.random_range(-0.5..0.5);
        }
    }
    let x = Matrix::from_fn(layout.dims[0], layout.n, |_, _| rng.random_range(0.0..1.0));
    (state, x)
}

pub fn flat_params(state: &mut ModelState) -> Vec<Vec<f64>> {
    state.param_slices_mut().into_iter().map(|s| s.to_vec()).collect()
}

/// Worst `|analytic − numeric| / max(1, |numeric|)` over all parameters,
/// with central differences of [`naive_loss`].
pub fn worst_gradient_error(state: &ModelState, x: &Matrix, layout: &Layout, hp: &Hyperparams, h: f64) -> f64 {
    let cache = dualse::model::forward(state, x, hp).unwrap();
    let grads = dualse::model::backward(state, &cache, x, hp).unwrap();
    let analytic: Vec<Vec<f64>> = grads.slices().into_iter().map(|s| s.to_vec()).collect();

    let mut owned = state.clone();
    let params = flat_params(&mut owned);
    let xm = to_mat(x);
    let frozen = match hp.structure_gradient {
        StructureGradient::Stop => Some(latent_and_structure(&params, layout, &xm, hp).1),
        StructureGradient::Through => None,
    };
    let loss_at = naive_loss(&params, layout, &xm, hp, frozen.as_ref());
    assert!(
        (loss_at - cache.total).abs() <= 1e-9 * loss_at.abs().max(1.0),
        "oracle loss {loss_at} vs forward {}",
        cache.total
    );

    let mut worst: f64 = 0.0;
    let mut p = params.clone();
    for t in 0..p.len() {
        for j in 0..p[t].len() {
            let orig = p[t][j];
            p[t][j] = orig + h;
            let up = naive_loss(&p, layout, &xm, hp, frozen.as_ref());
            p[t][j] = orig - h;
            let down = naive_loss(&p, layout, &xm, hp, frozen.as_ref());
            p[t][j] = orig;
            let numeric = (up - down) / (2.0 * h);
            let err = (analytic[t][j] - numeric).abs() / numeric.abs().max(1.0);
            worst = worst.max(err);
        }
    }
    worst
}
