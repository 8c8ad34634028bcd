use serde::Serialize;

use crate::error::{contract, Error, Result};

/// A probability vector: non-negative entries summing to one.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProbVector(Vec<f64>);

impl ProbVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if let Some(index) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { index });
        }
        if values.iter().any(|&v| !(0.0..=1.0).contains(&v)) {
            return Err(contract("probability entry outside [0,1]"));
        }
        let s: f64 = values.iter().sum();
        if (s - 1.0).abs() > 1e-12 {
            return Err(contract(format!("probabilities sum to {s}")));
        }
        Ok(Self(values))
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn entropy(&self) -> f64 {
        entropy(self.values())
    }
}

/// Numerically stable softmax of finite logits.
pub fn softmax(h: &[f64]) -> ProbVector {
    let mut out = vec![0.0; h.len()];
    softmax_into(h, &mut out);
    ProbVector(out)
}

/// Softmax written into `out`; the max entry is subtracted before exponentiating.
pub fn softmax_into(h: &[f64], out: &mut [f64]) {
    let m = h.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut s = 0.0;
    for (o, &x) in out.iter_mut().zip(h) {
        *o = (x - m).exp();
        s += *o;
    }
    for o in out.iter_mut() {
        *o /= s;
    }
}

/// `log Σ exp(hᵢ)`.
pub fn log_sum_exp(h: &[f64]) -> f64 {
    let m = h.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    m + h.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// Shannon entropy in nats, with `0·log 0 = 0`.
pub fn entropy(p: &[f64]) -> f64 {
    let h: f64 = p
        .iter()
        .filter(|&&x| x > 0.0)
        .map(|&x| -x * x.ln())
        .sum();
    h.max(0.0)
}

/// Entropy of `softmax(h)` computed from logits.
pub fn softmax_entropy(h: &[f64]) -> f64 {
    entropy(softmax(h).values())
}
