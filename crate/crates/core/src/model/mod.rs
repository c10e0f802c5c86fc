//! The differentiable pipeline: auto-encoder, attribute and structure
//! self-expressive layers, attention fusion, and the joint objective with
//! hand-derived gradients.

mod autoencoder;
mod fusion;
mod objective;
mod self_expressive;

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::numerics::Matrix;

pub use autoencoder::{ae_loss, autoencoder_backward, autoencoder_forward, decode, encode, AeCache, AeGradients};
pub use fusion::{attention_weights, fuse, LEAKY_SLOPE};
pub use objective::{backward, forward, ForwardCache, Gradients, LossTerms};
pub use self_expressive::{attribute_se_loss, build_structure_matrix, structure_se_loss};

/// Affine layer `y = W x + b` applied column-wise; `weight` is `out × in`.
#[derive(Clone, Debug, PartialEq)]
pub struct Layer {
    pub weight: Matrix,
    pub bias: Vec<f64>,
}

impl Layer {
    pub fn new(weight: Matrix, bias: Vec<f64>) -> Result<Self> {
        if bias.len() != weight.rows() {
            return Err(Error::shape("layer bias", weight.shape(), (bias.len(), 1)));
        }
        Ok(Self { weight, bias })
    }

    pub fn in_dim(&self) -> usize {
        self.weight.cols()
    }

    pub fn out_dim(&self) -> usize {
        self.weight.rows()
    }

    fn he_normal(in_dim: usize, out_dim: usize, rng: &mut ChaCha8Rng) -> Self {
        let weight = he_normal_matrix(out_dim, in_dim, in_dim, rng);
        Self {
            weight,
            bias: vec![0.0; out_dim],
        }
    }
}

fn he_normal_matrix(rows: usize, cols: usize, fan_in: usize, rng: &mut ChaCha8Rng) -> Matrix {
    let normal = Normal::new(0.0, (2.0 / fan_in as f64).sqrt()).expect("positive std");
    Matrix::from_fn(rows, cols, |_, _| normal.sample(rng))
}

/// Encoder and mirrored decoder. ReLU follows every layer except the last
/// one of each stack.
#[derive(Clone, Debug, PartialEq)]
pub struct AutoEncoderParams {
    pub encoder: Vec<Layer>,
    pub decoder: Vec<Layer>,
}

impl AutoEncoderParams {
    pub fn new(encoder: Vec<Layer>, decoder: Vec<Layer>) -> Result<Self> {
        if encoder.is_empty() || decoder.is_empty() {
            return Err(Error::Argument("encoder and decoder need at least one layer".into()));
        }
        for stack in [&encoder, &decoder] {
            for pair in stack.windows(2) {
                if pair[0].out_dim() != pair[1].in_dim() {
                    return Err(Error::shape(
                        "layer chain",
                        pair[0].weight.shape(),
                        pair[1].weight.shape(),
                    ));
                }
            }
        }
        let latent = encoder.last().unwrap().out_dim();
        if decoder[0].in_dim() != latent {
            return Err(Error::shape(
                "encoder/decoder latent",
                encoder.last().unwrap().weight.shape(),
                decoder[0].weight.shape(),
            ));
        }
        Ok(Self { encoder, decoder })
    }

    /// He-normal weights and zero biases for encoder widths `dims`
    /// (`dims[0]` is the input dimension, the last entry the latent size);
    /// the decoder mirrors them.
    pub fn he_init(dims: &[usize], rng: &mut ChaCha8Rng) -> Result<Self> {
        if dims.len() < 2 || dims.contains(&0) {
            return Err(Error::Argument(format!(
                "layer sizes {dims:?} need >= 2 positive entries"
            )));
        }
        let encoder = dims.windows(2).map(|w| Layer::he_normal(w[0], w[1], rng)).collect();
        let decoder = dims
            .windows(2)
            .rev()
            .map(|w| Layer::he_normal(w[1], w[0], rng))
            .collect();
        Self::new(encoder, decoder)
    }

    pub fn input_dim(&self) -> usize {
        self.encoder[0].in_dim()
    }

    pub fn latent_dim(&self) -> usize {
        self.encoder.last().unwrap().out_dim()
    }

    pub fn output_dim(&self) -> usize {
        self.decoder.last().unwrap().out_dim()
    }

    pub fn param_slices_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out = Vec::new();
        for layer in self.encoder.iter_mut().chain(self.decoder.iter_mut()) {
            out.push(layer.weight.as_mut_slice());
            out.push(layer.bias.as_mut_slice());
        }
        out
    }
}

/// Bias-free, activation-free `n × n` layer realizing `Z ↦ Z·C`.
#[derive(Clone, Debug, PartialEq)]
pub struct SelfExpressiveLayer {
    pub coeff: Matrix,
}

impl SelfExpressiveLayer {
    pub fn new(coeff: Matrix) -> Result<Self> {
        if !coeff.is_square() {
            return Err(Error::shape(
                "self-expressive layer",
                coeff.shape(),
                (coeff.rows(), coeff.rows()),
            ));
        }
        Ok(Self { coeff })
    }

    pub fn n(&self) -> usize {
        self.coeff.rows()
    }
}

/// Attention weights `W` (`2n × 2`) of the fusion module.
#[derive(Clone, Debug, PartialEq)]
pub struct AttentionFusion {
    pub w: Matrix,
    pub leaky_slope: f64,
}

impl AttentionFusion {
    pub fn new(w: Matrix) -> Result<Self> {
        if w.cols() != 2 || !w.rows().is_multiple_of(2) {
            return Err(Error::shape("attention weights", w.shape(), (w.rows(), 2)));
        }
        Ok(Self {
            w,
            leaky_slope: LEAKY_SLOPE,
        })
    }
}

/// How the structure matrix `Z_S` is built from `C_A` (or `Z`).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Default)]
pub enum StructureVariant {
    /// `(C_A + C_Aᵀ)/2`
    #[default]
    MixedSymmetric,
    /// `ZᵀZ / (‖Zᵀ‖_F ‖Z‖_F)`
    Cosine,
    /// `C_A`
    Raw,
    /// `(|C_A| + |C_Aᵀ|)/2`
    AbsSymmetric,
}

impl StructureVariant {
    pub const ALL: [StructureVariant; 4] = [
        StructureVariant::Cosine,
        StructureVariant::Raw,
        StructureVariant::AbsSymmetric,
        StructureVariant::MixedSymmetric,
    ];

    pub fn name(self) -> &'static str {
        match self {
            StructureVariant::MixedSymmetric => "mixed_symmetric",
            StructureVariant::Cosine => "cosine",
            StructureVariant::Raw => "raw",
            StructureVariant::AbsSymmetric => "abs_symmetric",
        }
    }

    pub fn is_symmetric(self) -> bool {
        !matches!(self, StructureVariant::Raw)
    }
}

impl fmt::Display for StructureVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for StructureVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| Error::config("structure_variant", format!("unknown variant `{s}`")))
    }
}

/// Whether the structure losses back-propagate into `C_A` through `Z_S`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum StructureGradient {
    #[default]
    Through,
    Stop,
}

impl FromStr for StructureGradient {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "through" => Ok(StructureGradient::Through),
            "stop" => Ok(StructureGradient::Stop),
            other => Err(Error::config(
                "structure_grad",
                format!("expected `through` or `stop`, got `{other}`"),
            )),
        }
    }
}

impl fmt::Display for StructureGradient {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            StructureGradient::Through => "through",
            StructureGradient::Stop => "stop",
        })
    }
}

/// Loss weights and structural options of the joint objective.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Hyperparams {
    pub gamma: f64,
    pub lambda1: f64,
    pub lambda2: f64,
    pub structure_variant: StructureVariant,
    pub structure_gradient: StructureGradient,
    /// Adds `λ₂‖Z_S − Z_S·C_F‖²_F` so the attention weights receive gradient.
    pub fusion_in_loss: bool,
}

impl Default for Hyperparams {
    fn default() -> Self {
        Self {
            gamma: 1.0,
            lambda1: 1.0,
            lambda2: 1.0,
            structure_variant: StructureVariant::MixedSymmetric,
            structure_gradient: StructureGradient::Through,
            fusion_in_loss: false,
        }
    }
}

impl Hyperparams {
    pub fn validate(&self) -> Result<()> {
        if !(self.gamma > 0.0 && self.gamma.is_finite()) {
            return Err(Error::config(
                "gamma",
                format!("must be finite and > 0, got {}", self.gamma),
            ));
        }
        for (name, v) in [("lambda1", self.lambda1), ("lambda2", self.lambda2)] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::config(name, format!("must be finite and >= 0, got {v}")));
            }
        }
        Ok(())
    }
}

/// All trainable parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelState {
    pub ae: AutoEncoderParams,
    pub c_a: SelfExpressiveLayer,
    pub c_s: SelfExpressiveLayer,
    pub attention: AttentionFusion,
}

/// Half-width of the uniform initialization of `C_A` and `C_S`.
pub const COEFF_INIT_SCALE: f64 = 1e-4;

impl ModelState {
    pub fn new(
        ae: AutoEncoderParams,
        c_a: SelfExpressiveLayer,
        c_s: SelfExpressiveLayer,
        attention: AttentionFusion,
    ) -> Result<Self> {
        let n = c_a.n();
        if c_s.n() != n {
            return Err(Error::shape("C_S vs C_A", c_s.coeff.shape(), c_a.coeff.shape()));
        }
        if attention.w.rows() != 2 * n {
            return Err(Error::shape("attention vs C_A", attention.w.shape(), c_a.coeff.shape()));
        }
        Ok(Self {
            ae,
            c_a,
            c_s,
            attention,
        })
    }

    /// Seeded initialization for `n` samples and encoder widths `dims`.
    pub fn init(dims: &[usize], n: usize, seed: u64) -> Result<Self> {
        if n == 0 {
            return Err(Error::Argument("model needs at least one sample".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let ae = AutoEncoderParams::he_init(dims, &mut rng)?;
        let uniform =
            |rng: &mut ChaCha8Rng| Matrix::from_fn(n, n, |_, _| rng.random_range(-COEFF_INIT_SCALE..COEFF_INIT_SCALE));
        let c_a = SelfExpressiveLayer {
            coeff: uniform(&mut rng),
        };
        let c_s = SelfExpressiveLayer {
            coeff: uniform(&mut rng),
        };
        let attention = AttentionFusion::new(he_normal_matrix(2 * n, 2, 2 * n, &mut rng))?;
        Self::new(ae, c_a, c_s, attention)
    }

    pub fn n(&self) -> usize {
        self.c_a.n()
    }

    /// Checks that `x` (`d̂ × n`) fits this model.
    pub fn check_input(&self, x: &Matrix) -> Result<()> {
        if x.rows() != self.ae.input_dim() || x.cols() != self.n() {
            return Err(Error::shape("model input", x.shape(), (self.ae.input_dim(), self.n())));
        }
        Ok(())
    }

    pub fn param_slices_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out = self.ae.param_slices_mut();
        out.push(self.c_a.coeff.as_mut_slice());
        out.push(self.c_s.coeff.as_mut_slice());
        out.push(self.attention.w.as_mut_slice());
        out
    }
}
