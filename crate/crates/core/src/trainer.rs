//! Adam, the pretrain/finetune schedule and checkpoint files.

use std::path::Path;

use crate::datasets::DataSet;
use crate::error::{Error, Result};
use crate::model::{
    autoencoder_backward, autoencoder_forward, backward, forward, AttentionFusion, AutoEncoderParams, ForwardCache,
    Hyperparams, Layer, LossTerms, ModelState, SelfExpressiveLayer,
};
use crate::numerics::Matrix;

/// Adam moments for a fixed list of parameter slices.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    t: u64,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamState {
    /// Zeroed moments for parameters of the given lengths.
    pub fn new(lengths: &[usize], lr: f64, beta1: f64, beta2: f64, eps: f64) -> Result<Self> {
        if !(lr >= 0.0) || !lr.is_finite() {
            return Err(Error::config("lr", format!("must be finite and >= 0, got {lr}")));
        }
        for (name, b) in [("beta1", beta1), ("beta2", beta2)] {
            if !(0.0..1.0).contains(&b) {
                return Err(Error::config(name, format!("must lie in [0, 1), got {b}")));
            }
        }
        if !(eps > 0.0) {
            return Err(Error::config("eps", format!("must be > 0, got {eps}")));
        }
        Ok(Self {
            m: lengths.iter().map(|&l| vec![0.0; l]).collect(),
            v: lengths.iter().map(|&l| vec![0.0; l]).collect(),
            t: 0,
            lr,
            beta1,
            beta2,
            eps,
        })
    }

    pub fn step_count(&self) -> u64 {
        self.t
    }

    pub fn step(&mut self, params: &mut [&mut [f64]], grads: &[&[f64]]) -> Result<()> {
        adam_step(self, params, grads)
    }
}

/// One Adam update: `θ ← θ − lr·m̂/(√v̂ + ε)` with bias-corrected moments.
pub fn adam_step(s: &mut AdamState, params: &mut [&mut [f64]], grads: &[&[f64]]) -> Result<()> {
    if params.len() != s.m.len() || grads.len() != s.m.len() {
        return Err(Error::shape(
            "adam tensors",
            (params.len(), grads.len()),
            (s.m.len(), s.m.len()),
        ));
    }
    for (i, (p, g)) in params.iter().zip(grads).enumerate() {
        if p.len() != s.m[i].len() || g.len() != s.m[i].len() {
            return Err(Error::shape(
                "adam tensor",
                (p.len(), g.len()),
                (s.m[i].len(), s.m[i].len()),
            ));
        }
    }
    s.t += 1;
    let t = s.t as i32;
    let c1 = 1.0 - s.beta1.powi(t);
    let c2 = 1.0 - s.beta2.powi(t);
    for ((p, g), (m, v)) in params.iter_mut().zip(grads).zip(s.m.iter_mut().zip(s.v.iter_mut())) {
        for j in 0..p.len() {
            m[j] = s.beta1 * m[j] + (1.0 - s.beta1) * g[j];
            v[j] = s.beta2 * v[j] + (1.0 - s.beta2) * g[j] * g[j];
            let m_hat = m[j] / c1;
            let v_hat = v[j] / c2;
            p[j] -= s.lr * m_hat / (v_hat.sqrt() + s.eps);
        }
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub pretrain_epochs: usize,
    pub finetune_epochs: usize,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub seed: u64,
    pub hyperparams: Hyperparams,
    /// Log every this many epochs; 0 disables progress logging.
    pub log_every: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            pretrain_epochs: 500,
            finetune_epochs: 1000,
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            seed: 0,
            hyperparams: Hyperparams::default(),
            log_every: 100,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0) || !self.lr.is_finite() {
            return Err(Error::config("lr", format!("must be finite and > 0, got {}", self.lr)));
        }
        self.hyperparams.validate()?;
        AdamState::new(&[], self.lr, self.beta1, self.beta2, self.eps).map(|_| ())
    }

    fn adam(&self, lengths: &[usize]) -> Result<AdamState> {
        AdamState::new(lengths, self.lr, self.beta1, self.beta2, self.eps)
    }

    fn should_log(&self, epoch: usize, total: usize) -> bool {
        self.log_every > 0 && (epoch.is_multiple_of(self.log_every) || epoch + 1 == total)
    }
}

/// One fine-tuning epoch, measured before that epoch's update.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FinetuneRecord {
    pub terms: LossTerms,
    pub total: f64,
    /// `‖∂L/∂C_S‖_F`
    pub c_s_grad_norm: f64,
}

fn divergence(stage: &'static str, epoch: usize, value: f64) -> Error {
    Error::Divergence { stage, epoch, value }
}

/// Trains the auto-encoder on `½‖X − X̂‖²_F` only. Returns the loss of
/// every epoch, measured before its update.
pub fn pretrain(state: &mut ModelState, data: &DataSet, cfg: &TrainConfig) -> Result<Vec<f64>> {
    cfg.validate()?;
    state.check_input(&data.features)?;
    let x = &data.features;
    let lengths: Vec<usize> = state.ae.param_slices_mut().iter().map(|s| s.len()).collect();
    let mut adam = cfg.adam(&lengths)?;
    let mut history = Vec::with_capacity(cfg.pretrain_epochs);
    for epoch in 0..cfg.pretrain_epochs {
        let cache = autoencoder_forward(&state.ae, x)?;
        if !cache.loss.is_finite() {
            return Err(divergence("pretrain", epoch, cache.loss));
        }
        history.push(cache.loss);
        if cfg.should_log(epoch, cfg.pretrain_epochs) {
            log::info!("pretrain epoch {epoch}: loss {:.6e}", cache.loss);
        }
        let grads = autoencoder_backward(&state.ae, &cache, x)?;
        adam.step(&mut state.ae.param_slices_mut(), &grads.slices())?;
    }
    Ok(history)
}

/// Full-batch Adam on every parameter against the joint objective.
///
/// Usually runs on a pretrained state; a freshly initialized one works
/// too (cold start).
pub fn finetune(state: &mut ModelState, data: &DataSet, cfg: &TrainConfig) -> Result<Vec<FinetuneRecord>> {
    finetune_observed(state, data, cfg, |_, _| {})
}

/// [`finetune`], handing every epoch's forward pass to `observe` before the
/// update is applied.
pub fn finetune_observed(
    state: &mut ModelState,
    data: &DataSet,
    cfg: &TrainConfig,
    mut observe: impl FnMut(usize, &ForwardCache),
) -> Result<Vec<FinetuneRecord>> {
    cfg.validate()?;
    state.check_input(&data.features)?;
    let x = &data.features;
    let hp = &cfg.hyperparams;
    let lengths: Vec<usize> = state.param_slices_mut().iter().map(|s| s.len()).collect();
    let mut adam = cfg.adam(&lengths)?;
    let mut history = Vec::with_capacity(cfg.finetune_epochs);
    for epoch in 0..cfg.finetune_epochs {
        let cache = forward(state, x, hp)?;
        if !cache.total.is_finite() {
            return Err(divergence("finetune", epoch, cache.total));
        }
        observe(epoch, &cache);
        let grads = backward(state, &cache, x, hp)?;
        let c_s_grad_norm = crate::numerics::frobenius_norm(&grads.c_s);
        history.push(FinetuneRecord {
            terms: cache.loss_terms,
            total: cache.total,
            c_s_grad_norm,
        });
        if cfg.should_log(epoch, cfg.finetune_epochs) {
            let t = cache.loss_terms;
            log::info!(
                "finetune epoch {epoch}: total {:.6e} (ae {:.3e}, se_a {:.3e}, se_s {:.3e})",
                cache.total,
                t.ae,
                t.se_a,
                t.se_s
            );
        }
        adam.step(&mut state.param_slices_mut(), &grads.slices())?;
    }
    Ok(history)
}

/// Leading bytes of every checkpoint file.
pub const CHECKPOINT_MAGIC: &[u8; 8] = b"DUALSECK";
pub const CHECKPOINT_VERSION: u32 = 1;

struct Tensor {
    name: String,
    dims: Vec<usize>,
    data: Vec<f64>,
}

fn tensors_of(state: &ModelState) -> Vec<Tensor> {
    let mut out = Vec::new();
    let layer = |out: &mut Vec<Tensor>, prefix: &str, i: usize, l: &Layer| {
        out.push(Tensor {
            name: format!("{prefix}.{i}.weight"),
            dims: vec![l.weight.rows(), l.weight.cols()],
            data: l.weight.as_slice().to_vec(),
        });
        out.push(Tensor {
            name: format!("{prefix}.{i}.bias"),
            dims: vec![l.bias.len()],
            data: l.bias.clone(),
        });
    };
    for (i, l) in state.ae.encoder.iter().enumerate() {
        layer(&mut out, "encoder", i, l);
    }
    for (i, l) in state.ae.decoder.iter().enumerate() {
        layer(&mut out, "decoder", i, l);
    }
    for (name, m) in [
        ("c_a", &state.c_a.coeff),
        ("c_s", &state.c_s.coeff),
        ("attention", &state.attention.w),
    ] {
        out.push(Tensor {
            name: name.into(),
            dims: vec![m.rows(), m.cols()],
            data: m.as_slice().to_vec(),
        });
    }
    out
}

/// Serializes every parameter bit-exactly.
pub fn encode_checkpoint(state: &ModelState) -> Vec<u8> {
    let mut buf = Vec::new();
    buf.extend_from_slice(CHECKPOINT_MAGIC);
    buf.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    let tensors = tensors_of(state);
    buf.extend_from_slice(&(tensors.len() as u32).to_le_bytes());
    for t in &tensors {
        buf.extend_from_slice(&(t.name.len() as u32).to_le_bytes());
        buf.extend_from_slice(t.name.as_bytes());
        buf.extend_from_slice(&(t.dims.len() as u32).to_le_bytes());
        for &d in &t.dims {
            buf.extend_from_slice(&(d as u64).to_le_bytes());
        }
        for &v in &t.data {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    let crc = crc32fast::hash(&buf);
    buf.extend_from_slice(&crc.to_le_bytes());
    buf
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| Error::Format(format!("checkpoint ends inside a record at byte {}", self.pos)))?;
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
}

/// Inverse of [`encode_checkpoint`].
pub fn decode_checkpoint(bytes: &[u8]) -> Result<ModelState> {
    if bytes.len() < CHECKPOINT_MAGIC.len() + 12 {
        return Err(Error::Checksum(format!(
            "checkpoint truncated to {} bytes",
            bytes.len()
        )));
    }
    let (body, tail) = bytes.split_at(bytes.len() - 4);
    let stored = u32::from_le_bytes(tail.try_into().expect("4 bytes"));
    let actual = crc32fast::hash(body);
    if stored != actual {
        return Err(Error::Checksum(format!(
            "stored crc {stored:08x}, computed {actual:08x}"
        )));
    }
    let mut r = Reader { bytes: body, pos: 0 };
    if r.take(CHECKPOINT_MAGIC.len())? != CHECKPOINT_MAGIC {
        return Err(Error::Format("not a checkpoint file (bad magic)".into()));
    }
    let version = r.u32()?;
    if version != CHECKPOINT_VERSION {
        return Err(Error::Version {
            found: version,
            expected: CHECKPOINT_VERSION,
        });
    }
    let count = r.u32()? as usize;
    let mut tensors = Vec::new();
    for _ in 0..count {
        let len = r.u32()? as usize;
        let name =
            String::from_utf8(r.take(len)?.to_vec()).map_err(|_| Error::Format("tensor name is not UTF-8".into()))?;
        let ndims = r.u32()? as usize;
        let mut dims = Vec::with_capacity(ndims);
        for _ in 0..ndims {
            dims.push(r.u64()? as usize);
        }
        let size = dims
            .iter()
            .try_fold(1usize, |a, &d| a.checked_mul(d))
            .filter(|&s| s.checked_mul(8).is_some_and(|b| b <= body.len()))
            .ok_or_else(|| Error::Format(format!("tensor `{name}` has impossible dims {dims:?}")))?;
        let raw = r.take(size * 8)?;
        let data = raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        tensors.push(Tensor { name, dims, data });
    }
    if r.pos != body.len() {
        return Err(Error::Format(format!(
            "{} trailing bytes after tensors",
            body.len() - r.pos
        )));
    }
    rebuild(tensors)
}

fn rebuild(tensors: Vec<Tensor>) -> Result<ModelState> {
    let mut encoder = Vec::new();
    let mut decoder = Vec::new();
    let mut mats: [Option<Matrix>; 3] = [None, None, None];
    let mut iter = tensors.into_iter().peekable();
    let matrix = |t: Tensor| -> Result<Matrix> {
        match t.dims[..] {
            [r, c] => Matrix::new(r, c, t.data),
            _ => Err(Error::Format(format!(
                "tensor `{}` should be 2-D, has dims {:?}",
                t.name, t.dims
            ))),
        }
    };
    while let Some(t) = iter.next() {
        let stack = if t.name.starts_with("encoder.") {
            Some(("encoder", &mut encoder))
        } else if t.name.starts_with("decoder.") {
            Some(("decoder", &mut decoder))
        } else {
            None
        };
        if let Some((prefix, stack)) = stack {
            let i = stack.len();
            if t.name != format!("{prefix}.{i}.weight") {
                return Err(Error::Format(format!("unexpected tensor `{}`", t.name)));
            }
            let weight = matrix(t)?;
            let bias_name = format!("{prefix}.{i}.bias");
            let bias = iter
                .next()
                .filter(|b| b.name == bias_name && b.dims == [weight.rows()])
                .ok_or_else(|| Error::Format(format!("missing `{bias_name}`")))?;
            stack.push(Layer::new(weight, bias.data)?);
            continue;
        }
        let slot = match t.name.as_str() {
            "c_a" => 0,
            "c_s" => 1,
            "attention" => 2,
            other => return Err(Error::Format(format!("unknown tensor `{other}`"))),
        };
        mats[slot] = Some(matrix(t)?);
    }
    let [c_a, c_s, w] = mats;
    let missing = || Error::Format("checkpoint lacks a coefficient tensor".into());
    let ae =
        AutoEncoderParams::new(encoder, decoder).map_err(|e| Error::Format(format!("inconsistent layers: {e}")))?;
    ModelState::new(
        ae,
        SelfExpressiveLayer::new(c_a.ok_or_else(missing)?)?,
        SelfExpressiveLayer::new(c_s.ok_or_else(missing)?)?,
        AttentionFusion::new(w.ok_or_else(missing)?)?,
    )
}

pub fn save_checkpoint(state: &ModelState, path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, encode_checkpoint(state))?;
    Ok(())
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<ModelState> {
    decode_checkpoint(&std::fs::read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_step_moves_by_lr_against_gradient_sign() {
        let mut s = AdamState::new(&[3], 0.01, 0.9, 0.999, 1e-8).unwrap();
        let mut p = vec![1.0, 1.0, 1.0];
        s.step(&mut [&mut p], &[&[2.0, -0.5, 0.0]]).unwrap();
        assert!((p[0] - 0.99).abs() < 1e-9);
        assert!((p[1] - 1.01).abs() < 1e-9);
        assert_eq!(p[2], 1.0);
        assert_eq!(s.step_count(), 1);
    }

    #[test]
    fn scalar_quadratic_matches_hand_steps() {
        let (lr, b1, b2, eps) = (0.1, 0.9, 0.999, 1e-8);
        let mut s = AdamState::new(&[1], lr, b1, b2, eps).unwrap();
        let mut theta = vec![1.0];
        let (mut m, mut v, mut expect) = (0.0f64, 0.0f64, 1.0f64);
        for t in 1..=3 {
            let g = 2.0 * expect;
            m = b1 * m + (1.0 - b1) * g;
            v = b2 * v + (1.0 - b2) * g * g;
            let mh = m / (1.0 - b1.powi(t));
            let vh = v / (1.0 - b2.powi(t));
            expect -= lr * mh / (vh.sqrt() + eps);
            let grad = [2.0 * theta[0]];
            s.step(&mut [&mut theta], &[&grad]).unwrap();
            assert_eq!(theta[0], expect);
        }
    }

    #[test]
    fn adam_shape_mismatch() {
        let mut s = AdamState::new(&[2], 0.1, 0.9, 0.999, 1e-8).unwrap();
        let mut p = vec![0.0; 3];
        assert!(matches!(s.step(&mut [&mut p], &[&[0.0; 3]]), Err(Error::Shape { .. })));
    }

    #[test]
    fn adam_rejects_bad_betas() {
        assert!(AdamState::new(&[1], 0.1, 1.0, 0.999, 1e-8).is_err());
        assert!(AdamState::new(&[1], 0.1, 0.9, -0.1, 1e-8).is_err());
    }

    #[test]
    fn checkpoint_round_trip_and_corruption() {
        let state = ModelState::init(&[6, 4, 2], 5, 11).unwrap();
        let bytes = encode_checkpoint(&state);
        assert_eq!(decode_checkpoint(&bytes).unwrap(), state);
        assert!(matches!(
            decode_checkpoint(&bytes[..bytes.len() - 9]),
            Err(Error::Checksum(_))
        ));
        let mut flipped = bytes.clone();
        flipped[40] ^= 1;
        assert!(matches!(decode_checkpoint(&flipped), Err(Error::Checksum(_))));
    }

    #[test]
    fn checkpoint_version_is_checked() {
        let state = ModelState::init(&[3, 2], 2, 0).unwrap();
        let mut bytes = encode_checkpoint(&state);
        bytes.truncate(bytes.len() - 4);
        bytes[8..12].copy_from_slice(&999u32.to_le_bytes());
        let crc = crc32fast::hash(&bytes);
        bytes.extend_from_slice(&crc.to_le_bytes());
        assert!(matches!(
            decode_checkpoint(&bytes),
            Err(Error::Version { found: 999, .. })
        ));
    }
}
