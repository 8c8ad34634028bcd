//! Recovery attacks on unlearned models: least-squares feature-map alignment,
//! least-squares head refitting, and gradient-matching input inversion.

use std::io::Write;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{DatasetBundle, Split};
use crate::error::{contract, Error, Result};
use crate::evalsuite::{accuracy_of_logits, mia_scores_with, report_splits, SplitAccuracy};
use crate::linalg::{dot, least_squares, norm2, Matrix};
use crate::model::ModelCheckpoint;
use crate::train::{ce_loss, per_sample_ce};

/// Rows with a smaller ℓ₂ norm are mapped to zero instead of being normalized.
pub const NORMALIZE_EPS: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum AttackKind {
    #[serde(rename = "FM")]
    FeatureMap,
    #[serde(rename = "HR")]
    HeadRecovery,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecoveryResult {
    pub kind: AttackKind,
    /// Fitted map; its last row is the bias.
    pub weights: Matrix,
    pub rank: usize,
    pub rank_deficient: bool,
    pub accuracies: Vec<SplitAccuracy>,
    pub ua: Option<f64>,
    pub mia_e: Option<f64>,
}

impl RecoveryResult {
    pub fn accuracy(&self, split: Split) -> Option<f64> {
        self.accuracies.iter().find(|a| a.split == split.name()).map(|a| a.accuracy)
    }
}

/// Scales each row to unit ℓ₂ norm; rows below [`NORMALIZE_EPS`] become zero.
pub fn normalize_rows(m: &Matrix) -> Matrix {
    let mut out = m.clone();
    for i in 0..out.rows() {
        let row = out.row_mut(i);
        let n = norm2(row);
        if n < NORMALIZE_EPS {
            row.iter_mut().for_each(|v| *v = 0.0);
        } else {
            row.iter_mut().for_each(|v| *v /= n);
        }
    }
    out
}

fn val_rows(bundle: &DatasetBundle) -> Result<Vec<usize>> {
    let val = bundle.rows(Split::Val);
    if val.is_empty() {
        return Err(contract("recovery attacks fit on the validation split, which is empty"));
    }
    Ok(val)
}

/// Scores a recovered predictor on every report split plus membership inference.
fn score(
    kind: AttackKind,
    bundle: &DatasetBundle,
    ls: crate::linalg::LeastSquares,
    logits_of: impl Fn(&[usize]) -> Result<Matrix>,
) -> Result<RecoveryResult> {
    let mut accuracies = Vec::new();
    for s in report_splits(&bundle.scenario) {
        let rows = bundle.rows(s);
        if rows.is_empty() {
            continue;
        }
        accuracies.push(SplitAccuracy {
            split: s.name().to_string(),
            count: rows.len(),
            accuracy: accuracy_of_logits(&logits_of(&rows)?, &bundle.labels_of(&rows)),
        });
    }
    let ua = accuracies
        .iter()
        .find(|a| a.split == Split::Forget.name())
        .map(|a| 100.0 - a.accuracy);
    let mia_e = if bundle.rows(Split::Forget).is_empty() {
        None
    } else {
        let m = mia_scores_with(bundle, |rows| {
            Ok(per_sample_ce(&logits_of(rows)?, &bundle.labels_of(rows)))
        })?;
        Some(m.mia_e)
    };
    Ok(RecoveryResult {
        kind,
        weights: ls.solution,
        rank: ls.rank,
        rank_deficient: ls.rank_deficient,
        accuracies,
        ua,
        mia_e,
    })
}

/// Maps unlearned features onto pretrained features by least squares on the
/// validation split, then classifies with the pretrained head.
pub fn feature_map_attack(
    pre: &ModelCheckpoint,
    un: &ModelCheckpoint,
    bundle: &DatasetBundle,
) -> Result<RecoveryResult> {
    if pre.input_dim() != un.input_dim() || pre.input_dim() != bundle.input_dim() {
        return Err(contract("models and bundle disagree on input dimension"));
    }
    let val = val_rows(bundle)?;
    let x = bundle.inputs_of(&val);
    let phi = un.features(&x)?.with_ones_column();
    let target = pre.features(&x)?;
    let ls = least_squares(&phi, &target).map_err(|e| rank_context(e, &phi))?;
    let w = ls.solution.clone();
    score(AttackKind::FeatureMap, bundle, ls, |rows| {
        let f = un.features(&bundle.inputs_of(rows))?.with_ones_column();
        pre.head_logits(&f.matmul(&w))
    })
}

/// Fits a fresh affine head on (optionally normalized) unlearned features
/// against one-hot labels of the validation split.
pub fn head_recovery_attack(
    un: &ModelCheckpoint,
    bundle: &DatasetBundle,
    normalize: bool,
) -> Result<RecoveryResult> {
    if un.input_dim() != bundle.input_dim() {
        return Err(contract("model and bundle disagree on input dimension"));
    }
    let val = val_rows(bundle)?;
    let design = |rows: &[usize]| -> Result<Matrix> {
        let f = un.features(&bundle.inputs_of(rows))?;
        let f = if normalize { normalize_rows(&f) } else { f };
        Ok(f.with_ones_column())
    };
    let phi = design(&val)?;
    let mut onehot = Matrix::zeros(val.len(), un.num_classes());
    for (i, &r) in val.iter().enumerate() {
        onehot[(i, bundle.labels[r])] = 1.0;
    }
    let ls = least_squares(&phi, &onehot).map_err(|e| rank_context(e, &phi))?;
    let w = ls.solution.clone();
    score(AttackKind::HeadRecovery, bundle, ls, |rows| Ok(design(rows)?.matmul(&w)))
}

fn rank_context(e: Error, phi: &Matrix) -> Error {
    match e {
        Error::Contract(m) => Error::Contract(format!(
            "least squares on {}x{} design failed: {m}",
            phi.rows(),
            phi.cols()
        )),
        other => other,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct InversionConfig {
    pub iters: usize,
    /// Adam step size in input units.
    pub step: f64,
    /// Central-difference half width.
    pub fd_eps: f64,
    /// Standard deviation of the Gaussian starting point.
    pub init_std: f64,
    pub seed: u64,
}

impl Default for InversionConfig {
    fn default() -> Self {
        Self {
            iters: 300,
            step: 0.05,
            fd_eps: 1e-4,
            init_std: 1.0,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeResult {
    pub row: usize,
    pub label: usize,
    pub truth: Vec<f64>,
    pub reconstruction: Vec<f64>,
    pub mse: f64,
    pub cosine: f64,
    /// Final gradient-matching distance.
    pub objective: f64,
    pub control_reconstruction: Vec<f64>,
    pub control_mse: f64,
    /// Non-finite objective somewhere along the way.
    pub failed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InversionResult {
    pub probes: Vec<ProbeResult>,
    pub median_mse: f64,
    pub median_control_mse: f64,
    /// `median_mse / median_control_mse`.
    pub ratio: f64,
}

/// Flattened parameter gradient of cross-entropy at a single labelled input.
pub fn sample_gradient(model: &ModelCheckpoint, x: &[f64], y: usize) -> Result<Vec<f64>> {
    let xm = Matrix::from_vec(1, x.len(), x.to_vec())?;
    let trace = model.forward(&xm)?;
    let r = ce_loss(&trace.logits, &[y]);
    Ok(model.backward(&trace, &r.dlogits).flatten())
}

fn distance(model: &ModelCheckpoint, x: &[f64], y: usize, target: &[f64]) -> f64 {
    if x.iter().any(|v| !v.is_finite()) {
        return f64::NAN;
    }
    match sample_gradient(model, x, y) {
        Ok(g) => g.iter().zip(target).map(|(a, b)| (a - b) * (a - b)).sum(),
        Err(_) => f64::NAN,
    }
}

/// Minimizes the gradient-matching distance over the input with Adam on
/// central-difference gradients, keeping the best point seen.
///
/// Returns the best input, its objective, and whether a non-finite value appeared.
pub fn reconstruct(
    model: &ModelCheckpoint,
    y: usize,
    target: &[f64],
    init: &[f64],
    cfg: &InversionConfig,
) -> (Vec<f64>, f64, bool) {
    let d = init.len();
    let mut x = init.to_vec();
    let mut best = (x.clone(), distance(model, &x, y, target));
    if !best.1.is_finite() {
        return (best.0, best.1, true);
    }
    let (b1, b2, eps) = (0.9f64, 0.999f64, 1e-8);
    let mut m = vec![0.0; d];
    let mut v = vec![0.0; d];
    let mut grad = vec![0.0; d];
    for t in 1..=cfg.iters {
        if best.1 == 0.0 {
            break;
        }
        for j in 0..d {
            let orig = x[j];
            x[j] = orig + cfg.fd_eps;
            let up = distance(model, &x, y, target);
            x[j] = orig - cfg.fd_eps;
            let down = distance(model, &x, y, target);
            x[j] = orig;
            grad[j] = (up - down) / (2.0 * cfg.fd_eps);
        }
        if grad.iter().any(|g| !g.is_finite()) {
            return (best.0, best.1, true);
        }
        let (c1, c2) = (1.0 - b1.powi(t as i32), 1.0 - b2.powi(t as i32));
        for j in 0..d {
            m[j] = b1 * m[j] + (1.0 - b1) * grad[j];
            v[j] = b2 * v[j] + (1.0 - b2) * grad[j] * grad[j];
            x[j] -= cfg.step * (m[j] / c1) / ((v[j] / c2).sqrt() + eps);
        }
        let f = distance(model, &x, y, target);
        if !f.is_finite() {
            return (best.0, best.1, true);
        }
        if f < best.1 {
            best = (x.clone(), f);
        }
    }
    (best.0, best.1, false)
}

fn mse(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>() / a.len() as f64
}

fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let n = norm2(a) * norm2(b);
    if n == 0.0 {
        0.0
    } else {
        dot(a, b) / n
    }
}

fn median(v: &mut [f64]) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Seeded choice of `n` distinct forget rows, in ascending order.
pub fn select_probes(bundle: &DatasetBundle, n: usize, seed: u64) -> Result<Vec<usize>> {
    let forget = bundle.rows(Split::Forget);
    if n == 0 || n > forget.len() {
        return Err(contract(format!("need 1..={} probes, got {n}", forget.len())));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut idx: Vec<usize> = sample(&mut rng, forget.len(), n).into_iter().map(|i| forget[i]).collect();
    idx.sort_unstable();
    Ok(idx)
}

/// Gradient-matching inversion of each probe against the oracle gradient at
/// `un`, plus a control run against a random gradient of equal norm.
///
/// `inits` overrides the random starting points when given.
pub fn inversion_attack(
    un: &ModelCheckpoint,
    bundle: &DatasetBundle,
    probes: &[usize],
    inits: Option<&[Vec<f64>]>,
    cfg: &InversionConfig,
) -> Result<InversionResult> {
    if probes.is_empty() {
        return Err(contract("inversion needs at least one probe"));
    }
    if let Some(i) = inits {
        if i.len() != probes.len() || i.iter().any(|v| v.len() != bundle.input_dim()) {
            return Err(contract("one full-length starting point per probe required"));
        }
    }
    if !(cfg.init_std > 0.0 && cfg.step > 0.0 && cfg.fd_eps > 0.0) {
        return Err(contract("inversion step, fd_eps and init_std must be positive"));
    }
    let init_noise = Normal::new(0.0, cfg.init_std).map_err(|e| contract(e.to_string()))?;
    let results: Vec<Result<ProbeResult>> = probes
        .par_iter()
        .enumerate()
        .map(|(k, &row)| {
            if row >= bundle.len() {
                return Err(contract(format!("probe row {row} out of range")));
            }
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ (row as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15));
            let truth = bundle.inputs.row(row).to_vec();
            let y = bundle.labels[row];
            let init: Vec<f64> = match inits {
                Some(i) => i[k].clone(),
                None => (0..truth.len()).map(|_| init_noise.sample(&mut rng)).collect(),
            };
            let oracle = sample_gradient(un, &truth, y)?;
            let scale = norm2(&oracle);
            let mut control: Vec<f64> = (0..oracle.len()).map(|_| StandardNormal.sample(&mut rng)).collect();
            let cn = norm2(&control);
            control.iter_mut().for_each(|v| *v *= scale / cn);

            let (rec, objective, f1) = reconstruct(un, y, &oracle, &init, cfg);
            let (crec, _, f2) = reconstruct(un, y, &control, &init, cfg);
            Ok(ProbeResult {
                row,
                label: y,
                mse: mse(&rec, &truth),
                cosine: cosine(&rec, &truth),
                objective,
                control_mse: mse(&crec, &truth),
                truth,
                reconstruction: rec,
                control_reconstruction: crec,
                failed: f1 || f2,
            })
        })
        .collect();
    let probes: Vec<ProbeResult> = results.into_iter().collect::<Result<_>>()?;
    let mut a: Vec<f64> = probes.iter().map(|p| p.mse).collect();
    let mut b: Vec<f64> = probes.iter().map(|p| p.control_mse).collect();
    let (median_mse, median_control_mse) = (median(&mut a), median(&mut b));
    Ok(InversionResult {
        probes,
        median_mse,
        median_control_mse,
        ratio: median_mse / median_control_mse,
    })
}

/// Per-probe CSV: `row,label,mse,cosine,objective,control_mse,failed`.
pub fn write_probe_csv(mut out: impl Write, r: &InversionResult) -> std::io::Result<()> {
    writeln!(out, "row,label,mse,cosine,objective,control_mse,failed")?;
    for p in &r.probes {
        writeln!(
            out,
            "{},{},{:.16e},{:.16e},{:.16e},{:.16e},{}",
            p.row, p.label, p.mse, p.cosine, p.objective, p.control_mse, p.failed
        )?;
    }
    Ok(())
}
