//! Evaluation metrics: split accuracies, unlearned accuracy, loss-threshold
//! membership inference, linear CKA and feature-norm / entropy statistics.

use std::io::Write;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::bounds;
use crate::data::{DatasetBundle, Scenario, Split};
use crate::error::{contract, Error, Result};
use crate::linalg::{norm2, softmax_entropy, Matrix};
use crate::model::ModelCheckpoint;
use crate::train::per_sample_ce;

/// Argmax accuracy in percent; ties go to the lowest class index.
pub fn accuracy(ckpt: &ModelCheckpoint, bundle: &DatasetBundle, split: Split) -> Result<f64> {
    accuracy_rows(ckpt, bundle, &bundle.rows(split))
        .map_err(|_| contract(format!("split {} is empty", split.name())))
}

pub fn accuracy_rows(ckpt: &ModelCheckpoint, bundle: &DatasetBundle, rows: &[usize]) -> Result<f64> {
    if rows.is_empty() {
        return Err(contract("cannot score an empty row set"));
    }
    let logits = ckpt.logits(&bundle.inputs_of(rows))?;
    Ok(accuracy_of_logits(&logits, &bundle.labels_of(rows)))
}

pub fn accuracy_of_logits(logits: &Matrix, labels: &[usize]) -> f64 {
    let correct = logits
        .row_argmax()
        .iter()
        .zip(labels)
        .filter(|(p, y)| p == y)
        .count();
    100.0 * correct as f64 / labels.len() as f64
}

/// Splits a report shows, by scenario.
pub fn report_splits(scenario: &Scenario) -> Vec<Split> {
    match scenario {
        Scenario::Class { .. } => vec![Split::Forget, Split::Retain, Split::TestForget, Split::TestRetain],
        Scenario::Random { .. } => vec![Split::Forget, Split::Retain, Split::Test],
        Scenario::None => vec![Split::Train, Split::Test],
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitAccuracy {
    pub split: String,
    pub count: usize,
    pub accuracy: f64,
}

/// Split accuracies in report order; splits that are empty in this bundle are skipped.
pub fn split_accuracies(ckpt: &ModelCheckpoint, bundle: &DatasetBundle) -> Result<Vec<SplitAccuracy>> {
    let mut out = Vec::new();
    for s in report_splits(&bundle.scenario) {
        let rows = bundle.rows(s);
        if rows.is_empty() {
            continue;
        }
        out.push(SplitAccuracy {
            split: s.name().to_string(),
            count: rows.len(),
            accuracy: accuracy_rows(ckpt, bundle, &rows)?,
        });
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MiaScores {
    /// Fraction of forget rows the attacker calls non-members.
    pub mia_e: f64,
    /// Balanced accuracy separating forget rows (members) from test rows.
    pub mia_p: f64,
    /// Loss threshold; a row is called a member when its loss is at most this.
    pub threshold: Option<f64>,
    /// All losses were equal, so no threshold exists and both scores are 0.5.
    pub degenerate: bool,
    pub members_fit: usize,
}

const MIA_SALT: u64 = 0x6d69_615f_6669_7400;
/// Fraction of the retain set used to fit the attacker.
pub const MIA_FIT_FRACTION: f64 = 0.8;

/// Loss threshold maximizing balanced accuracy, members predicted by `loss ≤ τ`.
///
/// Returns `None` when every loss is identical.
pub fn fit_threshold(members: &[f64], nonmembers: &[f64]) -> Option<f64> {
    let mut all: Vec<(f64, bool)> = members
        .iter()
        .map(|&l| (l, true))
        .chain(nonmembers.iter().map(|&l| (l, false)))
        .collect();
    all.sort_by(|a, b| a.0.total_cmp(&b.0));
    if all.is_empty() || all[0].0.total_cmp(&all[all.len() - 1].0).is_eq() {
        return None;
    }
    let (nm, nn) = (members.len() as f64, nonmembers.len() as f64);
    // τ below every loss: nothing is a member.
    let mut best_tau = all[0].0 - 1.0;
    let mut best = 0.5;
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut i = 0;
    while i < all.len() {
        let v = all[i].0;
        while i < all.len() && all[i].0.total_cmp(&v).is_eq() {
            if all[i].1 {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        let tpr = if nm > 0.0 { tp as f64 / nm } else { 0.0 };
        let tnr = if nn > 0.0 { 1.0 - fp as f64 / nn } else { 0.0 };
        let bal = 0.5 * (tpr + tnr);
        if bal > best {
            best = bal;
            best_tau = v;
        }
    }
    Some(best_tau)
}

/// Balanced accuracy of `loss ≤ τ` as the member rule.
pub fn balanced_accuracy(members: &[f64], nonmembers: &[f64], tau: f64) -> f64 {
    let tpr = members.iter().filter(|&&l| l <= tau).count() as f64 / members.len() as f64;
    let tnr = nonmembers.iter().filter(|&&l| l > tau).count() as f64 / nonmembers.len() as f64;
    0.5 * (tpr + tnr)
}

/// Membership scores from per-sample losses.
pub fn mia_from_losses(fit_members: &[f64], test: &[f64], forget: &[f64]) -> Result<MiaScores> {
    if fit_members.is_empty() || test.is_empty() || forget.is_empty() {
        return Err(contract("membership inference needs retain, test and forget losses"));
    }
    let Some(tau) = fit_threshold(fit_members, test) else {
        return Ok(MiaScores {
            mia_e: 0.5,
            mia_p: 0.5,
            threshold: None,
            degenerate: true,
            members_fit: fit_members.len(),
        });
    };
    let above = forget.iter().filter(|&&l| l > tau).count();
    Ok(MiaScores {
        mia_e: above as f64 / forget.len() as f64,
        mia_p: balanced_accuracy(forget, test, tau),
        threshold: Some(tau),
        degenerate: false,
        members_fit: fit_members.len(),
    })
}

fn losses(ckpt: &ModelCheckpoint, bundle: &DatasetBundle, rows: &[usize]) -> Result<Vec<f64>> {
    let logits = ckpt.logits(&bundle.inputs_of(rows))?;
    Ok(per_sample_ce(&logits, &bundle.labels_of(rows)))
}

/// Loss-threshold attack fitted on a seeded 80% of the retain set against the test set.
pub fn mia_scores(ckpt: &ModelCheckpoint, bundle: &DatasetBundle) -> Result<MiaScores> {
    mia_scores_with(bundle, |rows| losses(ckpt, bundle, rows))
}

/// Same attack with per-sample losses supplied by `loss_of`.
pub fn mia_scores_with(
    bundle: &DatasetBundle,
    mut loss_of: impl FnMut(&[usize]) -> Result<Vec<f64>>,
) -> Result<MiaScores> {
    let mut retain = bundle.rows(Split::Retain);
    let test = bundle.rows(Split::Test);
    let forget = bundle.rows(Split::Forget);
    if retain.is_empty() || test.is_empty() || forget.is_empty() {
        return Err(contract("membership inference needs nonempty retain, forget and test splits"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(bundle.seed ^ MIA_SALT);
    retain.shuffle(&mut rng);
    let fit = ((retain.len() as f64 * MIA_FIT_FRACTION).round() as usize).clamp(1, retain.len());
    retain.truncate(fit);
    retain.sort_unstable();
    mia_from_losses(&loss_of(&retain)?, &loss_of(&test)?, &loss_of(&forget)?)
}

/// Linear CKA between two representations of the same rows.
pub fn linear_cka(f1: &Matrix, f2: &Matrix) -> Result<f64> {
    if f1.rows() != f2.rows() {
        return Err(contract(format!("CKA row mismatch: {} vs {}", f1.rows(), f2.rows())));
    }
    if f1.rows() < 3 {
        return Err(contract("CKA needs at least 3 rows"));
    }
    let a = f1.centered();
    let b = f2.centered();
    let aa = a.t_matmul(&a).frobenius();
    let bb = b.t_matmul(&b).frobenius();
    if aa == 0.0 || bb == 0.0 {
        return Err(Error::ZeroVariance);
    }
    let ab = a.t_matmul(&b).frobenius();
    Ok(ab * ab / (aa * bb))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CKAResult {
    pub cka_feature: f64,
    pub cka_logit: f64,
    pub split: String,
    pub model_a: String,
    pub model_b: String,
}

pub fn cka_between(
    a: (&str, &ModelCheckpoint),
    b: (&str, &ModelCheckpoint),
    bundle: &DatasetBundle,
    split: Split,
) -> Result<CKAResult> {
    let x = bundle.inputs_of(&bundle.rows(split));
    let ta = a.1.forward(&x)?;
    let tb = b.1.forward(&x)?;
    Ok(CKAResult {
        cka_feature: linear_cka(ta.features(), tb.features())?,
        cka_logit: linear_cka(&ta.logits, &tb.logits)?,
        split: split.name().to_string(),
        model_a: a.0.to_string(),
        model_b: b.0.to_string(),
    })
}

/// Per-sample feature norm, logit norm and predictive entropy.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleStats {
    pub feature_norm: Vec<f64>,
    pub logit_norm: Vec<f64>,
    pub entropy: Vec<f64>,
}

pub fn sample_stats(ckpt: &ModelCheckpoint, x: &Matrix) -> Result<SampleStats> {
    let t = ckpt.forward(x)?;
    let n = x.rows();
    Ok(SampleStats {
        feature_norm: (0..n).map(|i| norm2(t.features().row(i))).collect(),
        logit_norm: (0..n).map(|i| norm2(t.logits.row(i))).collect(),
        entropy: (0..n).map(|i| softmax_entropy(t.logits.row(i))).collect(),
    })
}

/// Largest shortfall of entropy below the closed-form bound at the sample's logit norm.
pub fn entropy_bound_violation(stats: &SampleStats, num_classes: usize) -> f64 {
    stats
        .logit_norm
        .iter()
        .zip(&stats.entropy)
        .map(|(&r, &h)| bounds::lower_bound(r, num_classes) - h)
        .fold(f64::NEG_INFINITY, f64::max)
}

pub const HIST_BINS: usize = 30;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub split: String,
    pub quantity: String,
    pub edges: Vec<f64>,
    pub counts: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitSummary {
    pub split: String,
    pub count: usize,
    pub mean_feature_norm: f64,
    pub mean_logit_norm: f64,
    pub mean_entropy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormEntropyStats {
    pub summaries: Vec<SplitSummary>,
    pub histograms: Vec<Histogram>,
}

impl NormEntropyStats {
    pub fn summary(&self, split: Split) -> Option<&SplitSummary> {
        self.summaries.iter().find(|s| s.split == split.name())
    }
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn histogram(values: &[f64], lo: f64, hi: f64) -> (Vec<f64>, Vec<usize>) {
    let (lo, hi) = if hi > lo { (lo, hi) } else { (lo - 0.5, hi + 0.5) };
    let w = (hi - lo) / HIST_BINS as f64;
    let edges = (0..=HIST_BINS).map(|i| lo + w * i as f64).collect();
    let mut counts = vec![0; HIST_BINS];
    for &v in values {
        let b = (((v - lo) / w) as usize).min(HIST_BINS - 1);
        counts[b] += 1;
    }
    (edges, counts)
}

/// Feature-norm and entropy means plus 30-bin histograms over the range pooled across splits.
pub fn norm_entropy_stats(ckpt: &ModelCheckpoint, bundle: &DatasetBundle) -> Result<NormEntropyStats> {
    let mut per_split = Vec::new();
    for s in report_splits(&bundle.scenario) {
        let rows = bundle.rows(s);
        if rows.is_empty() {
            continue;
        }
        per_split.push((s, sample_stats(ckpt, &bundle.inputs_of(&rows))?));
    }
    if per_split.is_empty() {
        return Err(contract("no nonempty splits to summarize"));
    }
    let summaries = per_split
        .iter()
        .map(|(s, st)| SplitSummary {
            split: s.name().to_string(),
            count: st.entropy.len(),
            mean_feature_norm: mean(&st.feature_norm),
            mean_logit_norm: mean(&st.logit_norm),
            mean_entropy: mean(&st.entropy),
        })
        .collect();
    let mut histograms = Vec::new();
    for (quantity, pick) in [
        ("feature_norm", (|s: &SampleStats| &s.feature_norm) as fn(&SampleStats) -> &Vec<f64>),
        ("entropy", |s: &SampleStats| &s.entropy),
    ] {
        let (lo, hi) = per_split
            .iter()
            .flat_map(|(_, st)| pick(st).iter().copied())
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
        for (s, st) in &per_split {
            let (edges, counts) = histogram(pick(st), lo, hi);
            histograms.push(Histogram {
                split: s.name().to_string(),
                quantity: quantity.to_string(),
                edges,
                counts,
            });
        }
    }
    Ok(NormEntropyStats { summaries, histograms })
}

/// CSV with columns `bin_lo,bin_hi,count,split,quantity`.
pub fn write_histogram_csv(mut out: impl Write, hists: &[Histogram]) -> std::io::Result<()> {
    writeln!(out, "bin_lo,bin_hi,count,split,quantity")?;
    for h in hists {
        for (i, c) in h.counts.iter().enumerate() {
            writeln!(out, "{:.16e},{:.16e},{},{},{}", h.edges[i], h.edges[i + 1], c, h.split, h.quantity)?;
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub scenario: String,
    pub accuracies: Vec<SplitAccuracy>,
    /// `100 − accuracy(forget)`; absent without a forget set.
    pub ua: Option<f64>,
    pub mia_e: Option<f64>,
    /// Reported in the random scenario only.
    pub mia_p: Option<f64>,
    pub mia_threshold: Option<f64>,
    pub mia_degenerate: bool,
    pub stats: NormEntropyStats,
}

impl EvalReport {
    pub fn accuracy(&self, split: Split) -> Option<f64> {
        self.accuracies.iter().find(|a| a.split == split.name()).map(|a| a.accuracy)
    }
}

pub fn evaluate(ckpt: &ModelCheckpoint, bundle: &DatasetBundle) -> Result<EvalReport> {
    let accuracies = split_accuracies(ckpt, bundle)?;
    let ua = accuracies
        .iter()
        .find(|a| a.split == Split::Forget.name())
        .map(|a| 100.0 - a.accuracy);
    let mia = if bundle.rows(Split::Forget).is_empty() {
        None
    } else {
        Some(mia_scores(ckpt, bundle)?)
    };
    let random = matches!(bundle.scenario, Scenario::Random { .. });
    Ok(EvalReport {
        scenario: bundle.scenario.name(),
        accuracies,
        ua,
        mia_e: mia.as_ref().map(|m| m.mia_e),
        mia_p: mia.as_ref().filter(|_| random).map(|m| m.mia_p),
        mia_threshold: mia.as_ref().and_then(|m| m.threshold),
        mia_degenerate: mia.as_ref().is_some_and(|m| m.degenerate),
        stats: norm_entropy_stats(ckpt, bundle)?,
    })
}
