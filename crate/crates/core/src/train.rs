//! Mini-batch SGD with momentum and weight decay, driven by a plan of weighted loss terms.
//!
//! The first term of a [`LossPlan`] is the primary stream: one epoch is one
//! pass over its rows. Every further term is sampled alongside it, one batch per
//! step, from its own seeded and independently shuffled cyclic stream.

use std::io::Write;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::data::{DatasetBundle, Split};
use crate::error::{contract, Result};
use crate::linalg::{log_sum_exp, norm2, softmax_into, Matrix};
use crate::model::{Gradients, ModelCheckpoint};

/// Below this ℓ₂ norm a row's norm-loss subgradient is zero.
pub const NORM_EPS: f64 = 1e-12;

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    pub batch_size: usize,
    pub seed: u64,
    pub shuffle: bool,
    /// Evaluate retain/forget/val loss and accuracy after every epoch.
    pub track_splits: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 30,
            learning_rate: 0.05,
            momentum: 0.9,
            weight_decay: 1e-5,
            batch_size: 256,
            seed: 0,
            shuffle: true,
            track_splits: true,
        }
    }
}

impl TrainConfig {
    /// Settings used for pretraining and retraining from scratch.
    pub fn pretrain_default() -> Self {
        Self {
            epochs: 40,
            learning_rate: 0.05,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(contract("learning_rate must be > 0"));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(contract("momentum must lie in [0,1)"));
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return Err(contract("weight_decay must be >= 0"));
        }
        if self.batch_size == 0 {
            return Err(contract("batch_size must be >= 1"));
        }
        Ok(())
    }
}

/// Scalar batch loss plus its gradient w.r.t. the matrix it was computed on.
#[derive(Debug, Clone)]
pub struct LossBatchResult {
    pub loss: f64,
    pub dlogits: Matrix,
}

/// Mean cross-entropy (nats); gradient `(softmax − onehot)/n`.
pub fn ce_loss(logits: &Matrix, labels: &[usize]) -> LossBatchResult {
    let (n, c) = logits.shape();
    assert_eq!(labels.len(), n, "one label per row");
    let mut d = Matrix::zeros(n, c);
    let mut total = 0.0;
    let inv_n = 1.0 / n.max(1) as f64;
    for i in 0..n {
        let row = logits.row(i);
        let y = labels[i];
        assert!(y < c, "label {y} out of range 0..{c}");
        total += log_sum_exp(row) - row[y];
        let drow = d.row_mut(i);
        softmax_into(row, drow);
        drow[y] -= 1.0;
        drow.iter_mut().for_each(|v| *v *= inv_n);
    }
    LossBatchResult {
        loss: total * inv_n,
        dlogits: d,
    }
}

/// Per-row cross-entropy losses.
pub fn per_sample_ce(logits: &Matrix, labels: &[usize]) -> Vec<f64> {
    (0..logits.rows())
        .map(|i| {
            let row = logits.row(i);
            log_sum_exp(row) - row[labels[i]]
        })
        .collect()
}

/// Mean ℓ₂ norm of the rows; gradient `hᵢ/(n‖hᵢ‖)`, zero at the origin.
pub fn logit_norm_loss(logits: &Matrix) -> LossBatchResult {
    let (n, c) = logits.shape();
    let mut d = Matrix::zeros(n, c);
    let mut total = 0.0;
    let inv_n = 1.0 / n.max(1) as f64;
    for i in 0..n {
        let row = logits.row(i);
        let norm = norm2(row);
        total += norm;
        if norm > NORM_EPS {
            let s = inv_n / norm;
            for (o, &h) in d.row_mut(i).iter_mut().zip(row) {
                *o = h * s;
            }
        }
    }
    LossBatchResult {
        loss: total * inv_n,
        dlogits: d,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    CrossEntropy,
    /// Mean ℓ₂ norm of the logits.
    LogitNorm,
    /// Mean ℓ₂ norm of the encoder features.
    FeatureNorm,
}

/// One weighted loss over a fixed set of rows with (possibly overridden) labels.
#[derive(Debug, Clone)]
pub struct LossTerm {
    pub rows: Vec<usize>,
    pub labels: Vec<usize>,
    pub kind: LossKind,
    pub weight: f64,
}

impl LossTerm {
    /// Term over a bundle split with the bundle's own labels.
    pub fn on_split(bundle: &DatasetBundle, split: Split, kind: LossKind, weight: f64) -> Self {
        let rows = bundle.rows(split);
        let labels = bundle.labels_of(&rows);
        Self {
            rows,
            labels,
            kind,
            weight,
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct LossPlan {
    pub terms: Vec<LossTerm>,
}

impl LossPlan {
    pub fn single(term: LossTerm) -> Self {
        Self { terms: vec![term] }
    }

    pub fn then(mut self, term: LossTerm) -> Self {
        self.terms.push(term);
        self
    }
}

/// Restrictions on how gradients turn into parameter updates.
#[derive(Debug, Clone, Default)]
pub struct UpdatePolicy {
    /// Per layer (head last); `None` trains everything.
    pub trainable: Option<Vec<bool>>,
    /// Per layer, flattened weights then bias; 0 freezes an entry, 1 leaves it free.
    pub mask: Option<Vec<Vec<f64>>>,
    /// Standard deviation of Gaussian noise added to every gradient entry.
    pub noise_std: f64,
    /// Coefficient of an ℓ₁ penalty on all trainable parameters.
    pub l1: f64,
    pub noise_seed: u64,
}

/// One row of training history; `accuracy` is NaN on the objective row.
///
/// Equality compares floats bitwise so identical runs compare equal.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub split: String,
    pub loss: f64,
    pub accuracy: f64,
}

impl PartialEq for EpochMetrics {
    fn eq(&self, other: &Self) -> bool {
        self.epoch == other.epoch
            && self.split == other.split
            && self.loss.to_bits() == other.loss.to_bits()
            && self.accuracy.to_bits() == other.accuracy.to_bits()
    }
}

#[derive(Debug, Clone)]
pub struct FitOutcome {
    pub model: ModelCheckpoint,
    pub history: Vec<EpochMetrics>,
}

/// Cyclic shuffled stream over a term's positions.
struct Stream {
    order: Vec<usize>,
    cursor: usize,
    rng: ChaCha8Rng,
    shuffle: bool,
}

impl Stream {
    fn new(len: usize, seed: u64, shuffle: bool) -> Self {
        Self {
            order: (0..len).collect(),
            cursor: len,
            rng: ChaCha8Rng::seed_from_u64(seed),
            shuffle,
        }
    }

    fn next_batch(&mut self, size: usize) -> Vec<usize> {
        let mut out = Vec::with_capacity(size);
        while out.len() < size.min(self.order.len()) {
            if self.cursor == self.order.len() {
                if self.shuffle {
                    self.order.shuffle(&mut self.rng);
                }
                self.cursor = 0;
            }
            out.push(self.order[self.cursor]);
            self.cursor += 1;
        }
        out
    }
}

fn stream_seed(base: u64, term: usize) -> u64 {
    base ^ (term as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15)
}

/// Loss and parameter gradients of one term on a set of its positions.
fn term_gradients(
    model: &ModelCheckpoint,
    bundle: &DatasetBundle,
    term: &LossTerm,
    positions: &[usize],
) -> Result<(f64, Gradients)> {
    let rows: Vec<usize> = positions.iter().map(|&p| term.rows[p]).collect();
    let x = bundle.inputs_of(&rows);
    let trace = model.forward(&x)?;
    let grads = match term.kind {
        LossKind::CrossEntropy => {
            let labels: Vec<usize> = positions.iter().map(|&p| term.labels[p]).collect();
            let r = ce_loss(&trace.logits, &labels);
            (r.loss, model.backward(&trace, &r.dlogits))
        }
        LossKind::LogitNorm => {
            let r = logit_norm_loss(&trace.logits);
            (r.loss, model.backward(&trace, &r.dlogits))
        }
        LossKind::FeatureNorm => {
            let r = logit_norm_loss(trace.features());
            let zero = Matrix::zeros(trace.logits.rows(), trace.logits.cols());
            (r.loss, model.backward_with_features(&trace, &zero, Some(&r.dlogits)))
        }
    };
    Ok(grads)
}

/// Mean cross-entropy and accuracy (percent) of `model` on `rows`.
pub fn evaluate_rows(
    model: &ModelCheckpoint,
    bundle: &DatasetBundle,
    rows: &[usize],
) -> Result<(f64, f64)> {
    if rows.is_empty() {
        return Err(contract("cannot evaluate an empty split"));
    }
    let logits = model.logits(&bundle.inputs_of(rows))?;
    let labels = bundle.labels_of(rows);
    let loss = ce_loss(&logits, &labels).loss;
    let correct = logits
        .row_argmax()
        .iter()
        .zip(&labels)
        .filter(|(p, y)| p == y)
        .count();
    Ok((loss, 100.0 * correct as f64 / rows.len() as f64))
}

/// Trains `ckpt` on the loss plan with plain SGD-momentum and no update restrictions.
pub fn fit(
    ckpt: &ModelCheckpoint,
    bundle: &DatasetBundle,
    plan: &LossPlan,
    cfg: &TrainConfig,
) -> Result<FitOutcome> {
    fit_with_policy(ckpt, bundle, plan, &UpdatePolicy::default(), cfg)
}

pub fn fit_with_policy(
    ckpt: &ModelCheckpoint,
    bundle: &DatasetBundle,
    plan: &LossPlan,
    policy: &UpdatePolicy,
    cfg: &TrainConfig,
) -> Result<FitOutcome> {
    cfg.validate()?;
    let Some(primary) = plan.terms.first() else {
        return Err(contract("loss plan has no terms"));
    };
    for (i, t) in plan.terms.iter().enumerate() {
        if t.rows.is_empty() {
            return Err(contract(format!("loss term {i} selects no rows")));
        }
        if t.kind == LossKind::CrossEntropy && t.labels.len() != t.rows.len() {
            return Err(contract(format!("loss term {i} needs one label per row")));
        }
        if !t.weight.is_finite() {
            return Err(contract(format!("loss term {i} has a non-finite weight")));
        }
    }
    let n_layers = ckpt.num_layers();
    if let Some(t) = &policy.trainable {
        if t.len() != n_layers {
            return Err(contract("trainable mask must have one entry per layer"));
        }
    }
    if let Some(m) = &policy.mask {
        if m.len() != n_layers || m.iter().zip(ckpt.layers()).any(|(v, l)| v.len() != l.num_params()) {
            return Err(contract("update mask shape does not match the model"));
        }
    }

    let mut model = ckpt.clone();
    let mut history = Vec::new();
    let mut velocity: Vec<Vec<f64>> = ckpt.layers().map(|l| vec![0.0; l.num_params()]).collect();
    let mut primary_stream = Stream::new(primary.rows.len(), cfg.seed, cfg.shuffle);
    let mut side_streams: Vec<Stream> = (1..plan.terms.len())
        .map(|t| Stream::new(plan.terms[t].rows.len(), stream_seed(cfg.seed, t), cfg.shuffle))
        .collect();
    let mut noise_rng = ChaCha8Rng::seed_from_u64(policy.noise_seed);
    let noise = if policy.noise_std > 0.0 {
        Some(Normal::new(0.0, policy.noise_std).map_err(|e| contract(e.to_string()))?)
    } else {
        None
    };

    let steps_per_epoch = primary.rows.len().div_ceil(cfg.batch_size);
    for epoch in 0..cfg.epochs {
        let mut epoch_loss = 0.0;
        for step in 0..steps_per_epoch {
            // The last batch of an epoch may be short.
            let remaining = primary.rows.len() - step * cfg.batch_size;
            let positions = primary_stream.next_batch(cfg.batch_size.min(remaining));
            let mut total: Option<Gradients> = None;
            let mut step_loss = 0.0;
            if primary.weight != 0.0 {
                let (loss, g) = term_gradients(&model, bundle, primary, &positions)?;
                step_loss += primary.weight * loss;
                total = Some(scaled(g, primary.weight));
            }
            for (t, stream) in side_streams.iter_mut().enumerate() {
                let term = &plan.terms[t + 1];
                let positions = stream.next_batch(cfg.batch_size);
                if term.weight == 0.0 {
                    continue;
                }
                let (loss, g) = term_gradients(&model, bundle, term, &positions)?;
                step_loss += term.weight * loss;
                match &mut total {
                    Some(acc) => acc.add_scaled(&g, term.weight),
                    None => total = Some(scaled(g, term.weight)),
                }
            }
            epoch_loss += step_loss;
            let grads = total.unwrap_or_else(|| Gradients::zeros_like(&model, 0));
            apply_update(&mut model, &grads, &mut velocity, policy, cfg, noise.as_ref(), &mut noise_rng);
        }
        history.push(EpochMetrics {
            epoch,
            split: "objective".into(),
            loss: epoch_loss / steps_per_epoch as f64,
            accuracy: f64::NAN,
        });
        if cfg.track_splits {
            for split in [Split::Retain, Split::Forget, Split::Val] {
                let rows = bundle.rows(split);
                if rows.is_empty() {
                    continue;
                }
                let (loss, accuracy) = evaluate_rows(&model, bundle, &rows)?;
                history.push(EpochMetrics {
                    epoch,
                    split: split.name().into(),
                    loss,
                    accuracy,
                });
            }
        }
    }
    Ok(FitOutcome { model, history })
}

fn scaled(mut g: Gradients, w: f64) -> Gradients {
    if w != 1.0 {
        for l in g.layers.iter_mut() {
            l.weight.as_mut_slice().iter_mut().for_each(|v| *v *= w);
            l.bias.iter_mut().for_each(|v| *v *= w);
        }
    }
    g
}

/// `d = g (+ noise) (+ l1·sign θ) + wd·θ`, masked; `v = μv + d`; `θ -= lr·v`.
fn apply_update(
    model: &mut ModelCheckpoint,
    grads: &Gradients,
    velocity: &mut [Vec<f64>],
    policy: &UpdatePolicy,
    cfg: &TrainConfig,
    noise: Option<&Normal<f64>>,
    rng: &mut ChaCha8Rng,
) {
    for (li, vel) in velocity.iter_mut().enumerate() {
        if let Some(t) = &policy.trainable {
            if !t[li] {
                continue;
            }
        }
        let layer = model.layer_mut(li);
        let g = grads.layers.get(li);
        let n_w = layer.weight.as_slice().len();
        let mask = policy.mask.as_ref().map(|m| &m[li]);
        let params = layer
            .weight
            .as_mut_slice()
            .iter_mut()
            .chain(layer.bias.iter_mut());
        for (k, (theta, v)) in params.zip(vel.iter_mut()).enumerate() {
            let mut d = match g {
                Some(g) if k < n_w => g.weight.as_slice()[k],
                Some(g) => g.bias[k - n_w],
                None => 0.0,
            };
            if let Some(dist) = noise {
                d += dist.sample(rng);
            }
            if policy.l1 != 0.0 && *theta != 0.0 {
                d += policy.l1 * theta.signum();
            }
            d += cfg.weight_decay * *theta;
            if let Some(m) = mask {
                d *= m[k];
            }
            *v = cfg.momentum * *v + d;
            *theta -= cfg.learning_rate * *v;
        }
    }
}

/// Fresh model trained with cross-entropy on `split`.
pub fn train_from_scratch(
    bundle: &DatasetBundle,
    hidden: &[usize],
    split: Split,
    cfg: &TrainConfig,
    init_seed: u64,
) -> Result<FitOutcome> {
    let mut sizes = vec![bundle.input_dim()];
    sizes.extend_from_slice(hidden);
    let init = ModelCheckpoint::init(&sizes, bundle.num_classes, init_seed)?;
    let plan = LossPlan::single(LossTerm::on_split(bundle, split, LossKind::CrossEntropy, 1.0));
    fit(&init, bundle, &plan, cfg)
}

/// Pretraining on every train row.
pub fn pretrain(
    bundle: &DatasetBundle,
    hidden: &[usize],
    cfg: &TrainConfig,
    init_seed: u64,
) -> Result<FitOutcome> {
    train_from_scratch(bundle, hidden, Split::Train, cfg, init_seed)
}

/// Gold-standard retraining on the retain set only.
pub fn retrain(
    bundle: &DatasetBundle,
    hidden: &[usize],
    cfg: &TrainConfig,
    init_seed: u64,
) -> Result<FitOutcome> {
    train_from_scratch(bundle, hidden, Split::Retain, cfg, init_seed)
}

/// Writes metrics as CSV rows `epoch,split,loss,accuracy`, with a header.
pub fn write_metrics_csv(mut out: impl Write, metrics: &[EpochMetrics]) -> std::io::Result<()> {
    writeln!(out, "epoch,split,loss,accuracy")?;
    for m in metrics {
        writeln!(out, "{},{},{:.16e},{:.16e}", m.epoch, m.split, m.loss, m.accuracy)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{apply_scenario, generate, GenConfig, Scenario};

    fn central_diff(f: impl Fn(&Matrix) -> f64, at: &Matrix, eps: f64) -> Matrix {
        let mut g = Matrix::zeros(at.rows(), at.cols());
        for k in 0..at.as_slice().len() {
            let mut p = at.clone();
            p.as_mut_slice()[k] += eps;
            let mut m = at.clone();
            m.as_mut_slice()[k] -= eps;
            g.as_mut_slice()[k] = (f(&p) - f(&m)) / (2.0 * eps);
        }
        g
    }

    #[test]
    fn ce_of_uniform_logits_is_log_c() {
        let r = ce_loss(&Matrix::zeros(4, 10), &[0, 3, 9, 2]);
        assert!((r.loss - 10f64.ln()).abs() < 1e-14);
    }

    #[test]
    fn ce_of_confident_correct_logits_vanishes() {
        let mut l = Matrix::zeros(2, 3);
        l[(0, 1)] = 60.0;
        l[(1, 2)] = 60.0;
        let r = ce_loss(&l, &[1, 2]);
        assert!(r.loss < 1e-20);
    }

    #[test]
    fn ce_gradient_matches_finite_differences() {
        let l = Matrix::from_rows(&[[0.3, -1.0, 2.0], [1.5, 0.2, -0.7]]).unwrap();
        let labels = [2, 0];
        let fd = central_diff(|m| ce_loss(m, &labels).loss, &l, 1e-6);
        let g = ce_loss(&l, &labels).dlogits;
        for (a, b) in g.as_slice().iter().zip(fd.as_slice()) {
            assert!((a - b).abs() <= 1e-6 * a.abs().max(1e-3), "{a} vs {b}");
        }
    }

    #[test]
    fn norm_loss_origin_and_3_4_5() {
        let r = logit_norm_loss(&Matrix::zeros(3, 4));
        assert_eq!(r.loss, 0.0);
        assert_eq!(r.dlogits.max_abs(), 0.0);
        let r = logit_norm_loss(&Matrix::from_rows(&[[3.0, 4.0]]).unwrap());
        assert_eq!(r.loss, 5.0);
        assert!((r.dlogits[(0, 0)] - 0.6).abs() < 1e-15);
        assert!((r.dlogits[(0, 1)] - 0.8).abs() < 1e-15);
    }

    #[test]
    fn norm_loss_gradient_matches_finite_differences() {
        let l = Matrix::from_rows(&[[0.3, -1.0, 2.0], [1.5, 0.2, -0.7]]).unwrap();
        let fd = central_diff(|m| logit_norm_loss(m).loss, &l, 1e-6);
        let g = logit_norm_loss(&l).dlogits;
        assert!(g.sub(&fd).max_abs() < 1e-8);
    }

    fn tiny_bundle() -> DatasetBundle {
        let cfg = GenConfig {
            num_classes: 3,
            input_dim: 4,
            samples_per_class: 60,
            cluster_spread: 0.3,
            ..GenConfig::default()
        };
        apply_scenario(&generate(&cfg).unwrap(), &Scenario::Class { classes: vec![0] }).unwrap()
    }

    #[test]
    fn zero_epochs_leave_checkpoint_untouched() {
        let b = tiny_bundle();
        let m = ModelCheckpoint::init(&[4, 8], 3, 1).unwrap();
        let plan = LossPlan::single(LossTerm::on_split(&b, Split::Train, LossKind::CrossEntropy, 1.0));
        let cfg = TrainConfig {
            epochs: 0,
            ..TrainConfig::default()
        };
        let out = fit(&m, &b, &plan, &cfg).unwrap();
        assert_eq!(out.model.to_bytes(), m.to_bytes());
        assert!(out.history.is_empty());
    }

    #[test]
    fn fit_is_reproducible() {
        let b = tiny_bundle();
        let cfg = TrainConfig {
            epochs: 3,
            batch_size: 16,
            ..TrainConfig::default()
        };
        let a = pretrain(&b, &[8, 6], &cfg, 2).unwrap();
        let c = pretrain(&b, &[8, 6], &cfg, 2).unwrap();
        assert_eq!(a.model.to_bytes(), c.model.to_bytes());
        assert_eq!(a.history, c.history.clone());
    }

    #[test]
    fn empty_selection_is_rejected() {
        let b = apply_scenario(&tiny_bundle(), &Scenario::None).unwrap();
        let m = ModelCheckpoint::init(&[4, 8], 3, 1).unwrap();
        let plan = LossPlan::single(LossTerm::on_split(&b, Split::Forget, LossKind::CrossEntropy, 1.0));
        assert!(fit(&m, &b, &plan, &TrainConfig::default()).is_err());
    }

    #[test]
    fn weight_decay_alone_shrinks_by_exact_factor() {
        let b = tiny_bundle();
        let m = ModelCheckpoint::init(&[4, 8], 3, 1).unwrap();
        // Zero-weight primary term: no loss gradient, only decay.
        let plan = LossPlan::single(LossTerm::on_split(&b, Split::Train, LossKind::CrossEntropy, 0.0));
        let cfg = TrainConfig {
            epochs: 1,
            learning_rate: 0.1,
            weight_decay: 0.01,
            batch_size: 10_000,
            track_splits: false,
            ..TrainConfig::default()
        };
        let out = fit(&m, &b, &plan, &cfg).unwrap();
        let factor = 1.0 - 0.1 * 0.01;
        for (a, b) in out.model.layers().zip(m.layers()) {
            for (x, y) in a.weight.as_slice().iter().zip(b.weight.as_slice()) {
                assert!((x - y * factor).abs() <= 1e-15 * y.abs().max(1.0));
            }
        }
    }

    #[test]
    fn frozen_layers_and_masks_hold_parameters() {
        let b = tiny_bundle();
        let m = ModelCheckpoint::init(&[4, 8, 5], 3, 1).unwrap();
        let plan = LossPlan::single(LossTerm::on_split(&b, Split::Train, LossKind::CrossEntropy, 1.0));
        let mut mask: Vec<Vec<f64>> = m.layers().map(|l| vec![1.0; l.num_params()]).collect();
        mask[2][0] = 0.0;
        let policy = UpdatePolicy {
            trainable: Some(vec![false, true, true]),
            mask: Some(mask),
            ..UpdatePolicy::default()
        };
        let cfg = TrainConfig {
            epochs: 2,
            batch_size: 32,
            ..TrainConfig::default()
        };
        let out = fit_with_policy(&m, &b, &plan, &policy, &cfg).unwrap();
        assert_eq!(out.model.encoder[0].param_bits(), m.encoder[0].param_bits());
        assert_eq!(out.model.head.weight[(0, 0)].to_bits(), m.head.weight[(0, 0)].to_bits());
        assert_ne!(out.model.encoder[1].param_bits(), m.encoder[1].param_bits());
    }

    #[test]
    fn metrics_csv_has_header_and_rows() {
        let mut buf = Vec::new();
        write_metrics_csv(
            &mut buf,
            &[EpochMetrics {
                epoch: 0,
                split: "retain".into(),
                loss: 0.5,
                accuracy: 99.0,
            }],
        )
        .unwrap();
        let s = String::from_utf8(buf).unwrap();
        assert!(s.starts_with("epoch,split,loss,accuracy\n0,retain,"));
    }
}
