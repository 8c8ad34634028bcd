//! Helpers shared by several integration test targets.
#![allow(dead_code)]

use deepforget::data::{apply_scenario, generate, DatasetBundle, GenConfig, Scenario};
use deepforget::linalg::Matrix;
use deepforget::model::ModelCheckpoint;
use deepforget::train::{ce_loss, logit_norm_loss};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

pub fn gaussian(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

/// A small class-scenario bundle that trains in well under a second.
pub fn small_bundle(seed: u64, scenario: &Scenario) -> DatasetBundle {
    let cfg = GenConfig {
        samples_per_class: 80,
        seed,
        ..GenConfig::default()
    };
    apply_scenario(&generate(&cfg).unwrap(), scenario).unwrap()
}

pub type Loss = fn(&Matrix, &[usize]) -> (f64, Matrix);

pub fn ce(logits: &Matrix, labels: &[usize]) -> (f64, Matrix) {
    let r = ce_loss(logits, labels);
    (r.loss, r.dlogits)
}

pub fn norm_loss(logits: &Matrix, _: &[usize]) -> (f64, Matrix) {
    let r = logit_norm_loss(logits);
    (r.loss, r.dlogits)
}

fn relu_pattern(m: &ModelCheckpoint, x: &Matrix) -> Vec<bool> {
    let tr = m.forward(x).unwrap();
    tr.pre[..m.encoder.len()]
        .iter()
        .flat_map(|z| z.as_slice().iter().map(|&v| v > 0.0))
        .collect()
}

/// Five-point central difference of `f` around 0 with step `h`, or `None`
/// when a ReLU changes state inside the stencil.
fn stencil(f: impl Fn(f64) -> (f64, Vec<bool>), h: f64) -> Option<f64> {
    let (_, base) = f(0.0);
    let mut vals = [0.0; 4];
    for (k, s) in [2.0, 1.0, -1.0, -2.0].into_iter().enumerate() {
        let (v, pat) = f(s * h);
        if pat != base {
            return None;
        }
        vals[k] = v;
    }
    Some((-vals[0] + 8.0 * vals[1] - 8.0 * vals[2] + vals[3]) / (12.0 * h))
}

pub struct GradCheck {
    pub max_rel: f64,
    pub checked: usize,
    pub skipped: usize,
}

/// Relative error with a 1e-6 floor on the denominator, so entries that are
/// zero analytically (dead units) are compared absolutely.
pub fn rel_err(a: f64, n: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(1e-6)
}

/// Compares every parameter and input gradient of `loss` at a random batch
/// against finite differences.
pub fn check_gradients(arch: &[usize], classes: usize, batch: usize, seed: u64, loss: Loss) -> GradCheck {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut model = ModelCheckpoint::init(arch, classes, seed).unwrap();
    for i in 0..model.num_layers() {
        for b in model.layer_mut(i).bias.iter_mut() {
            *b = 0.1 * gaussian(&mut rng);
        }
    }
    let x = Matrix::from_vec(batch, arch[0], (0..batch * arch[0]).map(|_| gaussian(&mut rng)).collect()).unwrap();
    let labels: Vec<usize> = (0..batch).map(|_| rng.random_range(0..classes)).collect();
    let trace = model.forward(&x).unwrap();
    let (_, dlogits) = loss(&trace.logits, &labels);
    let grads = model.backward(&trace, &dlogits);

    let eval = |m: &ModelCheckpoint, x: &Matrix| -> (f64, Vec<bool>) {
        (loss(&m.logits(x).unwrap(), &labels).0, relu_pattern(m, x))
    };
    let h = 1e-4;
    let mut out = GradCheck {
        max_rel: 0.0,
        checked: 0,
        skipped: 0,
    };
    let mut record = |analytic: f64, numeric: Option<f64>| match numeric {
        Some(n) => {
            out.max_rel = out.max_rel.max(rel_err(analytic, n));
            out.checked += 1;
        }
        None => out.skipped += 1,
    };
    for li in 0..model.num_layers() {
        for k in 0..model.layer(li).weight.as_slice().len() {
            let numeric = stencil(
                |d| {
                    let mut m = model.clone();
                    m.layer_mut(li).weight.as_mut_slice()[k] += d;
                    eval(&m, &x)
                },
                h,
            );
            record(grads.layers[li].weight.as_slice()[k], numeric);
        }
        for k in 0..model.layer(li).bias.len() {
            let numeric = stencil(
                |d| {
                    let mut m = model.clone();
                    m.layer_mut(li).bias[k] += d;
                    eval(&m, &x)
                },
                h,
            );
            record(grads.layers[li].bias[k], numeric);
        }
    }
    for k in 0..x.as_slice().len() {
        let numeric = stencil(
            |d| {
                let mut xp = x.clone();
                xp.as_mut_slice()[k] += d;
                eval(&model, &xp)
            },
            h,
        );
        record(grads.inputs.as_slice()[k], numeric);
    }
    out
}
