use crate::error::{Error, Result};
use crate::numerics::{frobenius_norm_sq, matmul, matmul_nt, matmul_tn, Matrix};

use super::{AutoEncoderParams, Layer};

/// Intermediate values of one stack (encoder or decoder).
#[derive(Clone, Debug)]
pub(crate) struct StackCache {
    /// Input to each layer.
    pub inputs: Vec<Matrix>,
    /// Affine output of each layer before the activation.
    pub pre: Vec<Matrix>,
}

fn affine(layer: &Layer, x: &Matrix) -> Result<Matrix> {
    if x.rows() != layer.in_dim() {
        return Err(Error::shape("layer input", layer.weight.shape(), x.shape()));
    }
    let mut out = matmul(&layer.weight, x)?;
    for (i, b) in layer.bias.iter().enumerate() {
        for v in out.row_mut(i) {
            *v += b;
        }
    }
    Ok(out)
}

pub(crate) fn run_stack(layers: &[Layer], x: &Matrix) -> Result<(Matrix, StackCache)> {
    let mut inputs = Vec::with_capacity(layers.len());
    let mut pre = Vec::with_capacity(layers.len());
    let mut h = x.clone();
    for (i, layer) in layers.iter().enumerate() {
        let p = affine(layer, &h)?;
        let next = if i + 1 < layers.len() {
            p.map(|v| v.max(0.0))
        } else {
            p.clone()
        };
        inputs.push(h);
        pre.push(p);
        h = next;
    }
    Ok((h, StackCache { inputs, pre }))
}

/// Back-propagates `grad_out` through a stack; returns the gradient with
/// respect to the stack input and per-layer parameter gradients.
pub(crate) fn backprop_stack(layers: &[Layer], cache: &StackCache, grad_out: Matrix) -> Result<(Matrix, Vec<Layer>)> {
    let mut grads = Vec::with_capacity(layers.len());
    let mut g = grad_out;
    for i in (0..layers.len()).rev() {
        if i + 1 < layers.len() {
            for (gv, pv) in g.as_mut_slice().iter_mut().zip(cache.pre[i].as_slice()) {
                if *pv <= 0.0 {
                    *gv = 0.0;
                }
            }
        }
        let weight = matmul_nt(&g, &cache.inputs[i])?;
        let bias = g.row_sums();
        let g_in = matmul_tn(&layers[i].weight, &g)?;
        grads.push(Layer { weight, bias });
        g = g_in;
    }
    grads.reverse();
    Ok((g, grads))
}

/// `Z = f_E(X)`; the final encoder layer is linear.
pub fn encode(p: &AutoEncoderParams, x: &Matrix) -> Result<Matrix> {
    run_stack(&p.encoder, x).map(|(z, _)| z)
}

/// `X̂ = f_D(Z)`; the final decoder layer is linear.
pub fn decode(p: &AutoEncoderParams, z: &Matrix) -> Result<Matrix> {
    run_stack(&p.decoder, z).map(|(x, _)| x)
}

/// `½‖X − X̂‖²_F`
pub fn ae_loss(x: &Matrix, x_hat: &Matrix) -> Result<f64> {
    Ok(0.5 * frobenius_norm_sq(&x.sub(x_hat)?))
}

/// Forward pass of the auto-encoder alone.
#[derive(Clone, Debug)]
pub struct AeCache {
    pub z: Matrix,
    pub x_hat: Matrix,
    pub loss: f64,
    pub(crate) encoder: StackCache,
    pub(crate) decoder: StackCache,
}

pub fn autoencoder_forward(p: &AutoEncoderParams, x: &Matrix) -> Result<AeCache> {
    let (z, encoder) = run_stack(&p.encoder, x)?;
    let (x_hat, decoder) = run_stack(&p.decoder, &z)?;
    let loss = ae_loss(x, &x_hat)?;
    Ok(AeCache {
        z,
        x_hat,
        loss,
        encoder,
        decoder,
    })
}

/// Gradients of the auto-encoder parameters; each [`Layer`] holds the
/// gradient of the matching weight and bias.
#[derive(Clone, Debug, PartialEq)]
pub struct AeGradients {
    pub encoder: Vec<Layer>,
    pub decoder: Vec<Layer>,
}

impl AeGradients {
    pub fn slices(&self) -> Vec<&[f64]> {
        let mut out = Vec::new();
        for layer in self.encoder.iter().chain(&self.decoder) {
            out.push(layer.weight.as_slice());
            out.push(layer.bias.as_slice());
        }
        out
    }
}

/// Gradient of `½‖X − X̂‖²_F` plus an optional extra gradient arriving at
/// the latent code `Z`.
pub(crate) fn backprop_autoencoder(
    p: &AutoEncoderParams,
    cache: &AeCache,
    x: &Matrix,
    grad_z_extra: Option<&Matrix>,
) -> Result<AeGradients> {
    let g_xhat = cache.x_hat.sub(x)?;
    let (mut g_z, decoder) = backprop_stack(&p.decoder, &cache.decoder, g_xhat)?;
    if let Some(extra) = grad_z_extra {
        g_z.axpy(1.0, extra)?;
    }
    let (_, encoder) = backprop_stack(&p.encoder, &cache.encoder, g_z)?;
    Ok(AeGradients { encoder, decoder })
}

pub fn autoencoder_backward(p: &AutoEncoderParams, cache: &AeCache, x: &Matrix) -> Result<AeGradients> {
    backprop_autoencoder(p, cache, x, None)
}
