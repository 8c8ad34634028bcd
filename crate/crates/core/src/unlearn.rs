//! Unlearning methods: one-point contraction, gradient-based baselines and
//! training-free head replacement.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{DatasetBundle, Split};
use crate::error::{contract, Error, Result};
use crate::linalg::{least_squares, LeastSquares, Matrix};
use crate::model::ModelCheckpoint;
use crate::train::{
    ce_loss, fit_with_policy, EpochMetrics, LossKind, LossPlan, LossTerm, TrainConfig,
    UpdatePolicy,
};

/// Serialized by display name, e.g. `"NegGrad+"`; parsing also accepts loose spellings.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum Method {
    Opc,
    Ga,
    Rl,
    Ft,
    Ngd,
    NegGradPlus,
    EuK,
    CfK,
    SalUn,
    L1Sparse,
    TrainFreeOpc,
    TrainFreeRl,
}

impl Method {
    pub const ALL: [Method; 12] = [
        Method::Opc,
        Method::Ga,
        Method::Rl,
        Method::Ft,
        Method::Ngd,
        Method::NegGradPlus,
        Method::EuK,
        Method::CfK,
        Method::SalUn,
        Method::L1Sparse,
        Method::TrainFreeOpc,
        Method::TrainFreeRl,
    ];

    /// The nine gradient-based baselines.
    pub const BASELINES: [Method; 9] = [
        Method::Ga,
        Method::Rl,
        Method::Ft,
        Method::Ngd,
        Method::NegGradPlus,
        Method::EuK,
        Method::CfK,
        Method::SalUn,
        Method::L1Sparse,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::Opc => "OPC",
            Method::Ga => "GA",
            Method::Rl => "RL",
            Method::Ft => "FT",
            Method::Ngd => "NGD",
            Method::NegGradPlus => "NegGrad+",
            Method::EuK => "EUk",
            Method::CfK => "CFk",
            Method::SalUn => "SalUn",
            Method::L1Sparse => "l1-sparse",
            Method::TrainFreeOpc => "OPC-TF",
            Method::TrainFreeRl => "RL-TF",
        }
    }

    pub fn is_train_free(self) -> bool {
        matches!(self, Method::TrainFreeOpc | Method::TrainFreeRl)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let key: String = s
            .chars()
            .filter(|c| c.is_ascii_alphanumeric() || *c == '+')
            .collect::<String>()
            .to_ascii_lowercase();
        Ok(match key.as_str() {
            "opc" => Method::Opc,
            "ga" => Method::Ga,
            "rl" => Method::Rl,
            "ft" => Method::Ft,
            "ngd" => Method::Ngd,
            "neggrad+" | "neggradplus" => Method::NegGradPlus,
            "euk" => Method::EuK,
            "cfk" => Method::CfK,
            "salun" => Method::SalUn,
            "l1sparse" => Method::L1Sparse,
            "opctf" | "trainfreeopc" => Method::TrainFreeOpc,
            "rltf" | "trainfreerl" => Method::TrainFreeRl,
            _ => return Err(contract(format!("unknown unlearning method {s:?}"))),
        })
    }
}

impl TryFrom<String> for Method {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<Method> for String {
    fn from(m: Method) -> String {
        m.name().to_string()
    }
}

/// A method plus every hyperparameter any method reads; each method ignores the rest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct UnlearnSpec {
    pub method: Method,
    pub train: TrainConfig,
    /// Weight of retain cross-entropy (OPC).
    pub coeff_ce: f64,
    /// Weight of the forget norm term (OPC).
    pub coeff_un: f64,
    /// Contract encoder features instead of logits (OPC).
    pub contract_features: bool,
    /// Retain weight in the NegGrad+ mix; forget gets `1 − alpha`.
    pub alpha: f64,
    /// Gradient noise standard deviation (NGD).
    pub sigma: f64,
    /// Number of trailing layers trained by EUk/CFk; the head counts as one.
    pub k: usize,
    /// Fraction of weights SalUn leaves free.
    pub pt: f64,
    pub l1_alpha: f64,
    /// Seed for random relabeling, layer re-initialization and gradient noise.
    pub rl_seed: u64,
}

impl Default for UnlearnSpec {
    fn default() -> Self {
        Self {
            method: Method::Opc,
            train: TrainConfig {
                epochs: 30,
                learning_rate: 0.01,
                ..TrainConfig::default()
            },
            coeff_ce: 1.0,
            coeff_un: 0.7,
            contract_features: false,
            alpha: 0.999,
            sigma: 1e-7,
            k: 3,
            pt: 0.5,
            l1_alpha: 1e-4,
            rl_seed: 0,
        }
    }
}

impl UnlearnSpec {
    /// Desk-scale defaults for `method` in the class (`true`) or random scenario.
    pub fn defaults(method: Method, class_scenario: bool) -> Self {
        let base = Self {
            method,
            ..Self::default()
        };
        let train = |epochs: usize, learning_rate: f64| TrainConfig {
            epochs,
            learning_rate,
            ..TrainConfig::default()
        };
        match method {
            Method::Opc if class_scenario => Self {
                train: train(30, 0.01),
                coeff_ce: 1.0,
                coeff_un: 0.7,
                ..base
            },
            Method::Opc => Self {
                train: train(30, 0.01),
                coeff_ce: 0.95,
                coeff_un: 0.05,
                ..base
            },
            Method::Ga => Self {
                train: train(5, 0.004),
                ..base
            },
            Method::Rl | Method::SalUn => Self {
                train: train(10, 0.01),
                ..base
            },
            Method::NegGradPlus => Self {
                train: train(6, 0.2),
                ..base
            },
            Method::Ft
            | Method::Ngd
            | Method::L1Sparse
            | Method::EuK
            | Method::CfK => Self {
                train: train(15, 0.2),
                ..base
            },
            Method::TrainFreeOpc | Method::TrainFreeRl => base,
        }
    }

    pub fn validate(&self, model: &ModelCheckpoint) -> Result<()> {
        for (name, v) in [
            ("coeff_ce", self.coeff_ce),
            ("coeff_un", self.coeff_un),
            ("alpha", self.alpha),
            ("sigma", self.sigma),
            ("l1_alpha", self.l1_alpha),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(contract(format!("{name} must be finite and >= 0")));
            }
        }
        if self.method == Method::NegGradPlus && self.alpha > 1.0 {
            return Err(contract("NegGrad+ alpha must lie in [0,1]"));
        }
        if !(self.pt > 0.0 && self.pt <= 1.0) {
            return Err(contract("pt must lie in (0,1]"));
        }
        if matches!(self.method, Method::EuK | Method::CfK)
            && (self.k == 0 || self.k > model.num_layers())
        {
            return Err(contract(format!(
                "k = {} outside 1..={} trainable layers",
                self.k,
                model.num_layers()
            )));
        }
        if !self.method.is_train_free() {
            self.train.validate()?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct UnlearnOutcome {
    pub model: ModelCheckpoint,
    pub history: Vec<EpochMetrics>,
}

/// Runs the method named in `spec` from the pretrained checkpoint.
pub fn unlearn(
    ckpt: &ModelCheckpoint,
    bundle: &DatasetBundle,
    spec: &UnlearnSpec,
) -> Result<UnlearnOutcome> {
    match spec.method {
        Method::Opc => unlearn_opc(ckpt, bundle, spec),
        Method::TrainFreeOpc => Ok(UnlearnOutcome {
            model: train_free_head(ckpt, bundle, TargetPolicy::ZeroForget, spec.rl_seed)?,
            history: Vec::new(),
        }),
        Method::TrainFreeRl => Ok(UnlearnOutcome {
            model: train_free_head(ckpt, bundle, TargetPolicy::RandomLabelForget, spec.rl_seed)?,
            history: Vec::new(),
        }),
        _ => unlearn_baseline(ckpt, bundle, spec),
    }
}

/// One-point contraction: retain cross-entropy plus the mean ℓ₂ norm of forget
/// logits (or features), one retain batch and one forget batch per step.
pub fn unlearn_opc(
    ckpt: &ModelCheckpoint,
    bundle: &DatasetBundle,
    spec: &UnlearnSpec,
) -> Result<UnlearnOutcome> {
    if spec.method != Method::Opc {
        return Err(contract(format!("unlearn_opc called with method {}", spec.method)));
    }
    spec.validate(ckpt)?;
    if bundle.rows(Split::Forget).is_empty() {
        return Err(contract("OPC needs a nonempty forget set"));
    }
    if bundle.rows(Split::Retain).is_empty() {
        return Err(contract("OPC needs a nonempty retain set"));
    }
    let norm = if spec.contract_features {
        LossKind::FeatureNorm
    } else {
        LossKind::LogitNorm
    };
    let plan = LossPlan::single(LossTerm::on_split(
        bundle,
        Split::Retain,
        LossKind::CrossEntropy,
        spec.coeff_ce,
    ))
    .then(LossTerm::on_split(bundle, Split::Forget, norm, spec.coeff_un));
    let out = fit_with_policy(ckpt, bundle, &plan, &UpdatePolicy::default(), &spec.train)?;
    Ok(UnlearnOutcome {
        model: out.model,
        history: out.history,
    })
}

/// Seeded relabeling of the forget rows: each label is uniform over the other classes.
pub fn random_relabel(bundle: &DatasetBundle, rows: &[usize], seed: u64) -> Vec<usize> {
    let c = bundle.num_classes;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rows.iter()
        .map(|&i| {
            let y = bundle.labels[i];
            let r = rng.random_range(0..c - 1);
            if r >= y {
                r + 1
            } else {
                r
            }
        })
        .collect()
}

/// Retain rows with true labels followed by forget rows with random wrong labels.
fn relabeled_term(bundle: &DatasetBundle, seed: u64) -> LossTerm {
    let mut term = LossTerm::on_split(bundle, Split::Retain, LossKind::CrossEntropy, 1.0);
    let forget = bundle.rows(Split::Forget);
    term.labels.extend(random_relabel(bundle, &forget, seed));
    term.rows.extend(forget);
    term
}

/// Keeps the `pt` fraction of parameters with the largest forget-loss gradient magnitude.
pub fn saliency_mask(
    ckpt: &ModelCheckpoint,
    bundle: &DatasetBundle,
    pt: f64,
) -> Result<Vec<Vec<f64>>> {
    let forget = bundle.rows(Split::Forget);
    if forget.is_empty() {
        return Err(contract("saliency needs a nonempty forget set"));
    }
    let trace = ckpt.forward(&bundle.inputs_of(&forget))?;
    let r = ce_loss(&trace.logits, &bundle.labels_of(&forget));
    let flat = ckpt.backward(&trace, &r.dlogits).flatten();
    let total = flat.len();
    let keep = ((pt * total as f64).ceil() as usize).min(total);
    let mut order: Vec<usize> = (0..total).collect();
    order.sort_by(|&a, &b| flat[b].abs().total_cmp(&flat[a].abs()).then(a.cmp(&b)));
    let mut mask_flat = vec![0.0; total];
    for &i in &order[..keep] {
        mask_flat[i] = 1.0;
    }
    let mut out = Vec::with_capacity(ckpt.num_layers());
    let mut offset = 0;
    for l in ckpt.layers() {
        out.push(mask_flat[offset..offset + l.num_params()].to_vec());
        offset += l.num_params();
    }
    Ok(out)
}

fn last_k(ckpt: &ModelCheckpoint, k: usize) -> Vec<bool> {
    let n = ckpt.num_layers();
    (0..n).map(|i| i + k >= n).collect()
}

/// The gradient-based baselines.
pub fn unlearn_baseline(
    ckpt: &ModelCheckpoint,
    bundle: &DatasetBundle,
    spec: &UnlearnSpec,
) -> Result<UnlearnOutcome> {
    spec.validate(ckpt)?;
    let retain_ce = || LossTerm::on_split(bundle, Split::Retain, LossKind::CrossEntropy, 1.0);
    let forget_ce = |w| LossTerm::on_split(bundle, Split::Forget, LossKind::CrossEntropy, w);
    let noise_seed = spec.rl_seed ^ 0x6e6f_6973_6500_0000;
    let mut start = ckpt.clone();
    let (plan, policy) = match spec.method {
        Method::Ga => (LossPlan::single(forget_ce(-1.0)), UpdatePolicy::default()),
        Method::Rl => (
            LossPlan::single(relabeled_term(bundle, spec.rl_seed)),
            UpdatePolicy::default(),
        ),
        Method::Ft => (LossPlan::single(retain_ce()), UpdatePolicy::default()),
        Method::Ngd => (
            LossPlan::single(retain_ce()),
            UpdatePolicy {
                noise_std: spec.sigma,
                noise_seed,
                ..UpdatePolicy::default()
            },
        ),
        Method::NegGradPlus => {
            let mut r = retain_ce();
            r.weight = spec.alpha;
            (
                LossPlan::single(r).then(forget_ce(-(1.0 - spec.alpha))),
                UpdatePolicy::default(),
            )
        }
        Method::EuK => {
            let n = ckpt.num_layers();
            for i in n - spec.k..n {
                start.reinit_layer(i, spec.rl_seed.wrapping_add(i as u64));
            }
            (
                LossPlan::single(retain_ce()),
                UpdatePolicy {
                    trainable: Some(last_k(ckpt, spec.k)),
                    ..UpdatePolicy::default()
                },
            )
        }
        Method::CfK => (
            LossPlan::single(retain_ce()),
            UpdatePolicy {
                trainable: Some(last_k(ckpt, spec.k)),
                ..UpdatePolicy::default()
            },
        ),
        Method::SalUn => (
            LossPlan::single(relabeled_term(bundle, spec.rl_seed)),
            UpdatePolicy {
                mask: Some(saliency_mask(ckpt, bundle, spec.pt)?),
                ..UpdatePolicy::default()
            },
        ),
        Method::L1Sparse => (
            LossPlan::single(retain_ce()),
            UpdatePolicy {
                l1: spec.l1_alpha,
                ..UpdatePolicy::default()
            },
        ),
        Method::Opc | Method::TrainFreeOpc | Method::TrainFreeRl => {
            return Err(contract(format!("{} is not a gradient baseline", spec.method)))
        }
    };
    let out = fit_with_policy(&start, bundle, &plan, &policy, &spec.train)?;
    Ok(UnlearnOutcome {
        model: out.model,
        history: out.history,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TargetPolicy {
    /// Forget rows regress onto the zero vector.
    ZeroForget,
    /// Forget rows regress onto a seeded one-hot label drawn uniformly from all classes.
    RandomLabelForget,
}

/// Least-squares head fitted on frozen pretrained features.
///
/// Retain rows target their one-hot label; forget rows target zero or a random
/// wrong label. Features get a constant-1 column, which becomes the new bias.
pub fn train_free_head(
    ckpt: &ModelCheckpoint,
    bundle: &DatasetBundle,
    policy: TargetPolicy,
    seed: u64,
) -> Result<ModelCheckpoint> {
    let (out, _) = train_free_head_with_report(ckpt, bundle, policy, seed)?;
    Ok(out)
}

pub fn train_free_head_with_report(
    ckpt: &ModelCheckpoint,
    bundle: &DatasetBundle,
    policy: TargetPolicy,
    seed: u64,
) -> Result<(ModelCheckpoint, LeastSquares)> {
    let retain = bundle.rows(Split::Retain);
    let forget = bundle.rows(Split::Forget);
    let rows: Vec<usize> = retain.iter().chain(&forget).copied().collect();
    if rows.is_empty() {
        return Err(contract("train-free head needs train rows"));
    }
    let c = ckpt.num_classes();
    let phi = ckpt.features(&bundle.inputs_of(&rows))?.with_ones_column();
    let mut targets = Matrix::zeros(rows.len(), c);
    for (i, &r) in retain.iter().enumerate() {
        targets[(i, bundle.labels[r])] = 1.0;
    }
    if policy == TargetPolicy::RandomLabelForget {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for j in 0..forget.len() {
            targets[(retain.len() + j, rng.random_range(0..c))] = 1.0;
        }
    }
    let ls = least_squares(&phi, &targets)?;
    let p = ckpt.feature_dim();
    let mut out = ckpt.clone();
    out.head.weight = ls.solution.select_rows(&(0..p).collect::<Vec<_>>());
    out.head.bias = ls.solution.row(p).to_vec();
    Ok((out, ls))
}
