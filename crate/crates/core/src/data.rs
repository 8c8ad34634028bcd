//! Synthetic Gaussian-mixture datasets and the retain/forget/val/test partition.

use std::collections::BTreeSet;
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{contract, Result};
use crate::io::{Reader, Writer};
use crate::linalg::{norm2, Matrix};

pub const BUNDLE_MAGIC: [u8; 4] = *b"UFDB";
pub const BUNDLE_VERSION: u32 = 1;

/// Salt mixed into the bundle seed for the random-forget draw, so the draw is
/// independent of the generation stream.
const RANDOM_SCENARIO_SALT: u64 = 0x5eed_f0a6_e7a1_0001;

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default)]
pub struct GenConfig {
    pub num_classes: usize,
    pub input_dim: usize,
    pub samples_per_class: usize,
    /// Standard deviation of the isotropic per-class noise.
    pub cluster_spread: f64,
    /// Radius of the sphere the class means are drawn on.
    pub mean_radius: f64,
    pub val_frac: f64,
    pub test_frac: f64,
    pub seed: u64,
}

impl Default for GenConfig {
    fn default() -> Self {
        Self {
            num_classes: 10,
            input_dim: 16,
            samples_per_class: 600,
            cluster_spread: 1.0,
            mean_radius: 4.0,
            val_frac: 0.10,
            test_frac: 0.15,
            seed: 7,
        }
    }
}

impl GenConfig {
    pub fn validate(&self) -> Result<()> {
        if self.num_classes < 2 {
            return Err(contract("num_classes must be >= 2"));
        }
        if self.input_dim < 2 {
            return Err(contract("input_dim must be >= 2"));
        }
        if self.samples_per_class == 0 {
            return Err(contract("samples_per_class must be >= 1"));
        }
        if !(self.cluster_spread >= 0.0 && self.cluster_spread.is_finite()) {
            return Err(contract("cluster_spread must be finite and >= 0"));
        }
        if !(self.mean_radius > 0.0 && self.mean_radius.is_finite()) {
            return Err(contract("mean_radius must be finite and > 0"));
        }
        let in_unit = |f: f64| f > 0.0 && f < 1.0;
        if !in_unit(self.val_frac) || !in_unit(self.test_frac) || self.val_frac + self.test_frac >= 1.0
        {
            return Err(contract("val_frac/test_frac must lie in (0,1) with sum < 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitTag {
    Retain = 0,
    Forget = 1,
    Val = 2,
    Test = 3,
}

impl SplitTag {
    fn from_u8(v: u8) -> Option<Self> {
        Some(match v {
            0 => Self::Retain,
            1 => Self::Forget,
            2 => Self::Val,
            3 => Self::Test,
            _ => return None,
        })
    }
}

/// Which rows of a bundle an operation looks at.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Retain,
    Forget,
    /// Retain ∪ forget.
    Train,
    Val,
    Test,
    /// Test rows whose label is a forgotten class (class scenario).
    TestForget,
    /// Test rows whose label is a retained class (class scenario).
    TestRetain,
}

impl Split {
    pub fn name(self) -> &'static str {
        match self {
            Split::Retain => "retain",
            Split::Forget => "forget",
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
            Split::TestForget => "test_forget",
            Split::TestRetain => "test_retain",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Scenario {
    /// No forget set; every train row is retained.
    None,
    /// Forget every train row whose label is in `classes`.
    Class { classes: Vec<usize> },
    /// Forget a seeded uniform `fraction` of the train rows.
    Random { fraction: f64 },
}

impl Scenario {
    /// Classes 0, 1 and 2: 30% of a ten-class problem.
    pub fn class_default() -> Self {
        Scenario::Class {
            classes: vec![0, 1, 2],
        }
    }

    pub fn random_default() -> Self {
        Scenario::Random { fraction: 0.1 }
    }

    pub fn is_class(&self) -> bool {
        matches!(self, Scenario::Class { .. })
    }

    pub fn name(&self) -> String {
        match self {
            Scenario::None => "none".into(),
            Scenario::Class { classes } => {
                let c: Vec<String> = classes.iter().map(|c| c.to_string()).collect();
                format!("class[{}]", c.join(","))
            }
            Scenario::Random { fraction } => format!("random[{fraction}]"),
        }
    }
}

/// Labeled inputs with one split tag per row.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetBundle {
    pub inputs: Matrix,
    pub labels: Vec<usize>,
    pub tags: Vec<SplitTag>,
    pub scenario: Scenario,
    pub num_classes: usize,
    pub seed: u64,
}

/// Draws a Gaussian-mixture dataset and assigns stratified val/test splits.
///
/// Class means are uniform on a sphere of radius `mean_radius`; each sample is
/// its class mean plus isotropic noise with standard deviation `cluster_spread`.
/// All train rows start out tagged retain.
pub fn generate(cfg: &GenConfig) -> Result<DatasetBundle> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let (c, d, per) = (cfg.num_classes, cfg.input_dim, cfg.samples_per_class);

    let mut means = Vec::with_capacity(c);
    for _ in 0..c {
        let mut v: Vec<f64> = (0..d).map(|_| StandardNormal.sample(&mut rng)).collect();
        // A zero draw has probability zero; retry keeps the radius exact regardless.
        while norm2(&v) < 1e-12 {
            v = (0..d).map(|_| StandardNormal.sample(&mut rng)).collect();
        }
        let s = cfg.mean_radius / norm2(&v);
        v.iter_mut().for_each(|x| *x *= s);
        means.push(v);
    }

    let n = c * per;
    let mut data = Vec::with_capacity(n * d);
    let mut labels = Vec::with_capacity(n);
    for (class, mean) in means.iter().enumerate() {
        for _ in 0..per {
            for &m in mean {
                let z: f64 = StandardNormal.sample(&mut rng);
                data.push(m + cfg.cluster_spread * z);
            }
            labels.push(class);
        }
    }

    let n_val = (cfg.val_frac * per as f64).round() as usize;
    let n_test = (cfg.test_frac * per as f64).round() as usize;
    let mut tags = vec![SplitTag::Retain; n];
    for class in 0..c {
        let mut idx: Vec<usize> = (class * per..(class + 1) * per).collect();
        idx.shuffle(&mut rng);
        for &i in &idx[..n_val] {
            tags[i] = SplitTag::Val;
        }
        for &i in &idx[n_val..(n_val + n_test).min(per)] {
            tags[i] = SplitTag::Test;
        }
    }

    Ok(DatasetBundle {
        inputs: Matrix::from_vec(n, d, data)?,
        labels,
        tags,
        scenario: Scenario::None,
        num_classes: c,
        seed: cfg.seed,
    })
}

/// Re-tags the train rows according to `scenario`.
pub fn apply_scenario(bundle: &DatasetBundle, scenario: &Scenario) -> Result<DatasetBundle> {
    let mut out = bundle.clone();
    for t in out.tags.iter_mut() {
        if *t == SplitTag::Forget {
            *t = SplitTag::Retain;
        }
    }
    match scenario {
        Scenario::None => {}
        Scenario::Class { classes } => {
            if let Some(bad) = classes.iter().find(|&&k| k >= bundle.num_classes) {
                return Err(contract(format!(
                    "forget class {bad} outside label range 0..{}",
                    bundle.num_classes
                )));
            }
            let set: BTreeSet<usize> = classes.iter().copied().collect();
            for (t, y) in out.tags.iter_mut().zip(&out.labels) {
                if *t == SplitTag::Retain && set.contains(y) {
                    *t = SplitTag::Forget;
                }
            }
        }
        Scenario::Random { fraction } => {
            if !(0.0..=1.0).contains(fraction) {
                return Err(contract(format!("random forget fraction {fraction} outside [0,1]")));
            }
            let mut train = out.rows(Split::Train);
            let k = (fraction * train.len() as f64).round() as usize;
            let mut rng = ChaCha8Rng::seed_from_u64(bundle.seed ^ RANDOM_SCENARIO_SALT);
            train.shuffle(&mut rng);
            for &i in &train[..k] {
                out.tags[i] = SplitTag::Forget;
            }
        }
    }
    out.scenario = scenario.clone();
    Ok(out)
}

impl DatasetBundle {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn input_dim(&self) -> usize {
        self.inputs.cols()
    }

    /// Forgotten classes in the class scenario, empty otherwise.
    pub fn forget_classes(&self) -> BTreeSet<usize> {
        match &self.scenario {
            Scenario::Class { classes } => classes.iter().copied().collect(),
            _ => BTreeSet::new(),
        }
    }

    /// Row indices of a split, ascending.
    pub fn rows(&self, split: Split) -> Vec<usize> {
        let forget_classes = self.forget_classes();
        (0..self.len())
            .filter(|&i| {
                let t = self.tags[i];
                match split {
                    Split::Retain => t == SplitTag::Retain,
                    Split::Forget => t == SplitTag::Forget,
                    Split::Train => matches!(t, SplitTag::Retain | SplitTag::Forget),
                    Split::Val => t == SplitTag::Val,
                    Split::Test => t == SplitTag::Test,
                    Split::TestForget => {
                        t == SplitTag::Test && forget_classes.contains(&self.labels[i])
                    }
                    Split::TestRetain => {
                        t == SplitTag::Test && !forget_classes.contains(&self.labels[i])
                    }
                }
            })
            .collect()
    }

    pub fn inputs_of(&self, rows: &[usize]) -> Matrix {
        self.inputs.select_rows(rows)
    }

    pub fn labels_of(&self, rows: &[usize]) -> Vec<usize> {
        rows.iter().map(|&i| self.labels[i]).collect()
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer::new();
        w.bytes(&BUNDLE_MAGIC);
        w.u32(BUNDLE_VERSION);
        w.u64(self.len() as u64);
        w.u32(self.input_dim() as u32);
        w.u32(self.num_classes as u32);
        w.u64(self.seed);
        match &self.scenario {
            Scenario::None => w.u8(0),
            Scenario::Class { classes } => {
                w.u8(1);
                w.u32(classes.len() as u32);
                for &c in classes {
                    w.u32(c as u32);
                }
            }
            Scenario::Random { fraction } => {
                w.u8(2);
                w.f64(*fraction);
            }
        }
        w.f64s(self.inputs.as_slice());
        for &y in &self.labels {
            w.u32(y as u32);
        }
        for &t in &self.tags {
            w.u8(t as u8);
        }
        w.finish()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::new("bundle", bytes);
        r.header(BUNDLE_MAGIC, BUNDLE_VERSION)?;
        let n = r.u64("row count")? as usize;
        let d = r.u32("input dim")? as usize;
        let num_classes = r.u32("class count")? as usize;
        let seed = r.u64("seed")?;
        let scenario = match r.u8("scenario tag")? {
            0 => Scenario::None,
            1 => {
                let k = r.u32("class set size")? as usize;
                let classes = (0..k)
                    .map(|_| r.u32("forget class").map(|c| c as usize))
                    .collect::<Result<Vec<_>>>()?;
                Scenario::Class { classes }
            }
            2 => Scenario::Random {
                fraction: r.f64("forget fraction")?,
            },
            other => return Err(r.malformed(format!("unknown scenario tag {other}"))),
        };
        let size = n
            .checked_mul(d)
            .ok_or_else(|| r.malformed("row count overflow"))?;
        let data = r.f64s(size, "inputs")?;
        let mut labels = Vec::with_capacity(n.min(1 << 24));
        for _ in 0..n {
            let at = r.pos();
            let y = r.u32("label")? as usize;
            if y >= num_classes {
                return Err(r.malformed_at(at, format!("label {y} >= class count {num_classes}")));
            }
            labels.push(y);
        }
        let mut tags = Vec::with_capacity(n.min(1 << 24));
        for _ in 0..n {
            let at = r.pos();
            let v = r.u8("split tag")?;
            tags.push(
                SplitTag::from_u8(v)
                    .ok_or_else(|| r.malformed_at(at, format!("unknown split tag {v}")))?,
            );
        }
        r.expect_end()?;
        Ok(Self {
            inputs: Matrix::from_vec(n, d, data)?,
            labels,
            tags,
            scenario,
            num_classes,
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
