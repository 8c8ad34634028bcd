//! The encoder–predictor classifier: an MLP feature extractor followed by a linear head.
//!
//! Weights are stored `in x out`, so a layer maps a batch as `X·W + b`.

use std::fs;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{contract, Result};
use crate::io::{Reader, Writer};
use crate::linalg::Matrix;

pub const CHECKPOINT_MAGIC: [u8; 4] = *b"UFCK";
pub const CHECKPOINT_VERSION: u32 = 1;

/// Hidden widths of the default encoder.
pub const DEFAULT_HIDDEN: [usize; 3] = [64, 64, 32];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Relu = 0,
    Identity = 1,
}

impl Activation {
    fn from_u8(v: u8) -> Option<Self> {
        match v {
            0 => Some(Self::Relu),
            1 => Some(Self::Identity),
            _ => None,
        }
    }

    #[inline]
    fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Relu => x.max(0.0),
            Activation::Identity => x,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    /// `in x out`.
    pub weight: Matrix,
    pub bias: Vec<f64>,
    pub activation: Activation,
}

impl Dense {
    pub fn in_dim(&self) -> usize {
        self.weight.rows()
    }

    pub fn out_dim(&self) -> usize {
        self.weight.cols()
    }

    /// He-scaled Gaussian weights, zero bias.
    fn he(rng: &mut ChaCha8Rng, fan_in: usize, fan_out: usize, activation: Activation) -> Self {
        let std = (2.0 / fan_in as f64).sqrt();
        let data = (0..fan_in * fan_out)
            .map(|_| {
                let z: f64 = StandardNormal.sample(rng);
                z * std
            })
            .collect();
        Self {
            weight: Matrix::from_raw(fan_in, fan_out, data),
            bias: vec![0.0; fan_out],
            activation,
        }
    }

    pub fn pre_activation(&self, x: &Matrix) -> Matrix {
        let mut z = x.matmul(&self.weight);
        z.add_row_vector(&self.bias);
        z
    }

    pub fn num_params(&self) -> usize {
        self.weight.as_slice().len() + self.bias.len()
    }

    /// Bit patterns of every parameter, for exact-equality checks.
    pub fn param_bits(&self) -> Vec<u64> {
        self.weight
            .as_slice()
            .iter()
            .chain(&self.bias)
            .map(|v| v.to_bits())
            .collect()
    }
}

/// Encoder layers plus a linear head. The head is always the last layer.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelCheckpoint {
    pub encoder: Vec<Dense>,
    pub head: Dense,
    pub seed: u64,
}

/// Everything the backward pass needs from a forward pass.
#[derive(Debug, Clone)]
pub struct ForwardTrace {
    pub inputs: Matrix,
    /// Pre-activation of every layer, head last.
    pub pre: Vec<Matrix>,
    /// Post-activation of every encoder layer; the last one is the feature batch.
    pub acts: Vec<Matrix>,
    pub logits: Matrix,
}

impl ForwardTrace {
    pub fn features(&self) -> &Matrix {
        self.acts.last().expect("encoder has at least one layer")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerGrad {
    pub weight: Matrix,
    pub bias: Vec<f64>,
}

/// Parameter gradients (encoder layers then head) and input gradients.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub layers: Vec<LayerGrad>,
    pub inputs: Matrix,
}

impl Gradients {
    pub fn zeros_like(ckpt: &ModelCheckpoint, n: usize) -> Self {
        Self {
            layers: ckpt
                .layers()
                .map(|l| LayerGrad {
                    weight: Matrix::zeros(l.in_dim(), l.out_dim()),
                    bias: vec![0.0; l.out_dim()],
                })
                .collect(),
            inputs: Matrix::zeros(n, ckpt.input_dim()),
        }
    }

    /// All parameter gradients concatenated layer by layer (weights then bias).
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for l in &self.layers {
            out.extend_from_slice(l.weight.as_slice());
            out.extend_from_slice(&l.bias);
        }
        out
    }

    /// `self += scale · other` over parameters (input gradients untouched).
    pub fn add_scaled(&mut self, other: &Gradients, scale: f64) {
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            for (x, y) in a.weight.as_mut_slice().iter_mut().zip(b.weight.as_slice()) {
                *x += scale * y;
            }
            for (x, y) in a.bias.iter_mut().zip(&b.bias) {
                *x += scale * y;
            }
        }
    }

    pub fn is_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.weight.is_finite() && l.bias.iter().all(|v| v.is_finite()))
    }
}

impl ModelCheckpoint {
    /// He-initialized MLP. `layer_sizes` is `[input, hidden…, feature]`; every
    /// encoder layer uses ReLU and the head maps `feature → num_classes`.
    pub fn init(layer_sizes: &[usize], num_classes: usize, seed: u64) -> Result<Self> {
        if layer_sizes.len() < 2 {
            return Err(contract("architecture needs an input size and at least one hidden layer"));
        }
        if layer_sizes.contains(&0) || num_classes == 0 {
            return Err(contract("layer sizes must be positive"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let encoder = layer_sizes
            .windows(2)
            .map(|w| Dense::he(&mut rng, w[0], w[1], Activation::Relu))
            .collect();
        let p = *layer_sizes.last().unwrap();
        let head = Dense::he(&mut rng, p, num_classes, Activation::Identity);
        Ok(Self { encoder, head, seed })
    }

    /// Re-draws layer `index` (head = last) with fresh He weights from `seed`.
    pub fn reinit_layer(&mut self, index: usize, seed: u64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let l = self.layer(index);
        let fresh = Dense::he(&mut rng, l.in_dim(), l.out_dim(), l.activation);
        *self.layer_mut(index) = fresh;
    }

    pub fn input_dim(&self) -> usize {
        self.encoder[0].in_dim()
    }

    pub fn feature_dim(&self) -> usize {
        self.head.in_dim()
    }

    pub fn num_classes(&self) -> usize {
        self.head.out_dim()
    }

    /// Encoder layers plus head.
    pub fn num_layers(&self) -> usize {
        self.encoder.len() + 1
    }

    pub fn layers(&self) -> impl Iterator<Item = &Dense> {
        self.encoder.iter().chain(std::iter::once(&self.head))
    }

    pub fn layer(&self, i: usize) -> &Dense {
        if i < self.encoder.len() {
            &self.encoder[i]
        } else {
            assert_eq!(i, self.encoder.len(), "layer index out of range");
            &self.head
        }
    }

    pub fn layer_mut(&mut self, i: usize) -> &mut Dense {
        if i < self.encoder.len() {
            &mut self.encoder[i]
        } else {
            assert_eq!(i, self.encoder.len(), "layer index out of range");
            &mut self.head
        }
    }

    pub fn num_params(&self) -> usize {
        self.layers().map(Dense::num_params).sum()
    }

    pub fn forward(&self, x: &Matrix) -> Result<ForwardTrace> {
        if x.cols() != self.input_dim() {
            return Err(contract(format!(
                "input has {} columns, model expects {}",
                x.cols(),
                self.input_dim()
            )));
        }
        let mut pre = Vec::with_capacity(self.num_layers());
        let mut acts: Vec<Matrix> = Vec::with_capacity(self.encoder.len());
        for layer in &self.encoder {
            let input = acts.last().unwrap_or(x);
            let z = layer.pre_activation(input);
            let a = z.map(|v| layer.activation.apply(v));
            pre.push(z);
            acts.push(a);
        }
        let logits = self.head.pre_activation(acts.last().unwrap());
        pre.push(logits.clone());
        Ok(ForwardTrace {
            inputs: x.clone(),
            pre,
            acts,
            logits,
        })
    }

    pub fn features(&self, x: &Matrix) -> Result<Matrix> {
        let mut trace = self.forward(x)?;
        Ok(trace.acts.pop().unwrap())
    }

    pub fn logits(&self, x: &Matrix) -> Result<Matrix> {
        Ok(self.forward(x)?.logits)
    }

    /// Applies only the linear head to a feature batch.
    pub fn head_logits(&self, features: &Matrix) -> Result<Matrix> {
        if features.cols() != self.feature_dim() {
            return Err(contract(format!(
                "features have {} columns, head expects {}",
                features.cols(),
                self.feature_dim()
            )));
        }
        Ok(self.head.pre_activation(features))
    }

    /// Reverse-mode gradients of `Σ ⟨dlogits, logits⟩` w.r.t. every parameter and the inputs.
    pub fn backward(&self, trace: &ForwardTrace, dlogits: &Matrix) -> Gradients {
        self.backward_with_features(trace, dlogits, None)
    }

    /// Like [`backward`](Self::backward), with an extra upstream gradient injected
    /// directly at the feature batch.
    pub fn backward_with_features(
        &self,
        trace: &ForwardTrace,
        dlogits: &Matrix,
        dfeatures: Option<&Matrix>,
    ) -> Gradients {
        assert_eq!(dlogits.shape(), trace.logits.shape(), "dlogits shape");
        let mut layers = Vec::with_capacity(self.num_layers());
        let mut delta = dlogits.clone();
        for i in (0..self.num_layers()).rev() {
            let layer = self.layer(i);
            if i + 1 == self.encoder.len() {
                if let Some(df) = dfeatures {
                    assert_eq!(df.shape(), delta.shape(), "dfeatures shape");
                    for (d, &e) in delta.as_mut_slice().iter_mut().zip(df.as_slice()) {
                        *d += e;
                    }
                }
            }
            if i < self.encoder.len() && layer.activation == Activation::Relu {
                for (d, &z) in delta.as_mut_slice().iter_mut().zip(trace.pre[i].as_slice()) {
                    if z <= 0.0 {
                        *d = 0.0;
                    }
                }
            }
            let input = if i == 0 { &trace.inputs } else { &trace.acts[i - 1] };
            let weight = input.t_matmul(&delta);
            let bias = delta.column_sums();
            let upstream = delta.matmul_t(&layer.weight);
            layers.push(LayerGrad { weight, bias });
            delta = upstream;
        }
        layers.reverse();
        Gradients {
            layers,
            inputs: delta,
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer::new();
        w.bytes(&CHECKPOINT_MAGIC);
        w.u32(CHECKPOINT_VERSION);
        w.u64(self.seed);
        w.u32(self.num_layers() as u32);
        for l in self.layers() {
            w.u32(l.in_dim() as u32);
            w.u32(l.out_dim() as u32);
            w.u8(l.activation as u8);
            w.f64s(l.weight.as_slice());
            w.f64s(&l.bias);
        }
        w.finish()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::new("checkpoint", bytes);
        r.header(CHECKPOINT_MAGIC, CHECKPOINT_VERSION)?;
        let seed = r.u64("seed")?;
        let count = r.u32("layer count")? as usize;
        if count < 2 {
            return Err(r.malformed(format!("{count} layers; need an encoder layer and a head")));
        }
        let mut layers: Vec<Dense> = Vec::with_capacity(count.min(1024));
        for i in 0..count {
            let at = r.pos();
            let in_dim = r.u32("layer input dim")? as usize;
            let out_dim = r.u32("layer output dim")? as usize;
            if in_dim == 0 || out_dim == 0 {
                return Err(r.malformed_at(at, format!("layer {i} has a zero dimension")));
            }
            if let Some(prev) = layers.last() {
                if prev.out_dim() != in_dim {
                    return Err(r.malformed_at(
                        at,
                        format!(
                            "shape chain broken: layer {} outputs {}, layer {i} expects {in_dim}",
                            i - 1,
                            prev.out_dim()
                        ),
                    ));
                }
            }
            let tag_at = r.pos();
            let tag = r.u8("activation tag")?;
            let activation = Activation::from_u8(tag)
                .ok_or_else(|| r.malformed_at(tag_at, format!("unknown activation tag {tag}")))?;
            if i + 1 == count && activation != Activation::Identity {
                return Err(r.malformed_at(tag_at, "head layer must be linear"));
            }
            let size = in_dim
                .checked_mul(out_dim)
                .ok_or_else(|| r.malformed_at(at, "layer size overflow"))?;
            let weight = Matrix::from_raw(in_dim, out_dim, r.f64s(size, "layer weights")?);
            let bias = r.f64s(out_dim, "layer bias")?;
            layers.push(Dense {
                weight,
                bias,
                activation,
            });
        }
        r.expect_end()?;
        let head = layers.pop().unwrap();
        Ok(Self {
            encoder: layers,
            head,
            seed,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_bytes(&fs::read(path)?)
    }
}
