//! Config-driven experiment runs: pretrain, retrain, unlearn, evaluate and
//! attack for every (scenario, method) cell, plus report rendering from the
//! resulting artifact tree.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::attacks::{
    feature_map_attack, head_recovery_attack, inversion_attack, select_probes, write_probe_csv,
    InversionConfig, InversionResult, RecoveryResult,
};
use crate::data::{apply_scenario, generate, DatasetBundle, GenConfig, Scenario, Split};
use crate::error::{contract, Error, Result};
use crate::evalsuite::{cka_between, evaluate, write_histogram_csv, CKAResult, EvalReport};
use crate::model::{ModelCheckpoint, DEFAULT_HIDDEN};
use crate::train::{pretrain, retrain, write_metrics_csv, TrainConfig};
use crate::unlearn::{unlearn, Method, UnlearnSpec};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const MANIFEST_VERSION: u32 = 1;
pub const REPORT_DIR: &str = "report";

pub const PRETRAINED: &str = "pretrained";
pub const RETRAINED: &str = "retrained";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodEntry {
    /// Label used in file names and tables; defaults to the method name.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    pub method: Method,
    /// Full settings. When absent the scenario-dependent defaults are used,
    /// seeded from the run seed.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub spec: Option<UnlearnSpec>,
}

impl MethodEntry {
    pub fn new(method: Method) -> Self {
        Self {
            name: None,
            method,
            spec: None,
        }
    }

    pub fn label(&self) -> String {
        self.name.clone().unwrap_or_else(|| self.method.name().to_string())
    }

    fn resolve(&self, class_scenario: bool, seed: u64) -> UnlearnSpec {
        match &self.spec {
            Some(s) => s.clone(),
            None => {
                let mut s = UnlearnSpec::defaults(self.method, class_scenario);
                s.train.seed = seed;
                s.rl_seed = seed;
                s
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalToggles {
    pub enabled: bool,
    /// CKA of every model against the pretrained one on forget and retain rows.
    pub cka: bool,
}

impl Default for EvalToggles {
    fn default() -> Self {
        Self {
            enabled: true,
            cka: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AttackToggles {
    pub feature_map: bool,
    pub head_recovery: bool,
    /// Row-normalize features before head recovery.
    pub normalize: bool,
    pub inversion: bool,
    pub probes: usize,
    pub inversion_config: InversionConfig,
}

impl Default for AttackToggles {
    fn default() -> Self {
        Self {
            feature_map: true,
            head_recovery: true,
            normalize: false,
            inversion: true,
            probes: 20,
            inversion_config: InversionConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub data: GenConfig,
    pub scenarios: Vec<Scenario>,
    pub hidden: Vec<usize>,
    pub pretrain: TrainConfig,
    /// Load this checkpoint instead of pretraining.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pretrained_checkpoint: Option<PathBuf>,
    pub retrain: bool,
    pub methods: Vec<MethodEntry>,
    pub eval: EvalToggles,
    pub attacks: AttackToggles,
    /// Not recorded in the artifact tree, so trees can be compared across locations.
    pub output_dir: PathBuf,
    /// Overrides the data, pretraining and init seeds and seeds every defaulted method.
    pub seed: u64,
    /// Run the method cells of a scenario in parallel.
    pub parallel: bool,
}

impl Default for RunConfig {
    /// OPC plus the nine baselines and retraining, on both default scenarios.
    fn default() -> Self {
        let mut methods = vec![MethodEntry::new(Method::Opc)];
        methods.extend(Method::BASELINES.iter().map(|&m| MethodEntry::new(m)));
        Self {
            data: GenConfig::default(),
            scenarios: vec![Scenario::class_default(), Scenario::random_default()],
            hidden: DEFAULT_HIDDEN.to_vec(),
            pretrain: TrainConfig::pretrain_default(),
            pretrained_checkpoint: None,
            retrain: true,
            methods,
            eval: EvalToggles::default(),
            attacks: AttackToggles::default(),
            output_dir: PathBuf::from("runs/default"),
            seed: 0,
            parallel: true,
        }
    }
}

fn valid_label(s: &str) -> bool {
    !s.is_empty()
        && s.chars().all(|c| c.is_ascii_alphanumeric() || "+-_.".contains(c))
        && !s.starts_with('.')
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        self.data.validate()?;
        self.pretrain.validate()?;
        if self.hidden.is_empty() || self.hidden.contains(&0) {
            return Err(contract("hidden widths must be non-empty and positive"));
        }
        if self.scenarios.is_empty() {
            return Err(contract("config lists no scenarios"));
        }
        let mut slugs = BTreeMap::new();
        for s in &self.scenarios {
            if slugs.insert(scenario_slug(s), ()).is_some() {
                return Err(contract(format!("scenario {} listed twice", s.name())));
            }
        }
        let mut names = BTreeMap::new();
        for m in &self.methods {
            let label = m.label();
            if !valid_label(&label) {
                return Err(contract(format!(
                    "method label {label:?} must use only letters, digits and +-_."
                )));
            }
            if label == PRETRAINED || label == RETRAINED {
                return Err(contract(format!("method label {label:?} is reserved")));
            }
            if names.insert(label.clone(), ()).is_some() {
                return Err(contract(format!("method label {label:?} is not unique")));
            }
            if let Some(spec) = &m.spec {
                if spec.method != m.method {
                    return Err(contract(format!(
                        "entry {label:?}: spec method {} differs from {}",
                        spec.method, m.method
                    )));
                }
            }
        }
        if self.attacks.inversion && self.attacks.probes == 0 {
            return Err(contract("inversion needs at least one probe"));
        }
        if let Some(p) = &self.pretrained_checkpoint {
            if !p.is_file() {
                return Err(contract(format!("pretrained checkpoint {} not found", p.display())));
            }
        }
        Ok(())
    }

    /// The config as recorded in the tree: seeds applied, output location dropped.
    fn recorded(&self) -> Self {
        let mut c = self.clone();
        c.output_dir = PathBuf::new();
        c.data.seed = self.seed;
        c.pretrain.seed = self.seed;
        c
    }
}

/// Directory-safe scenario label, e.g. `class-0-1-2` or `random-0.1`.
pub fn scenario_slug(s: &Scenario) -> String {
    match s {
        Scenario::None => "none".into(),
        Scenario::Class { classes } => {
            let mut out = String::from("class");
            for c in classes {
                let _ = write!(out, "-{c}");
            }
            out
        }
        Scenario::Random { fraction } => format!("random-{fraction}"),
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Artifact {
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestRun {
    pub scenario: String,
    pub slug: String,
    /// Model labels in config order.
    pub models: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub format_version: u32,
    pub complete: bool,
    pub error: Option<String>,
    pub config_sha256: String,
    pub runs: Vec<ManifestRun>,
    /// Sorted by path.
    pub artifacts: Vec<Artifact>,
}

impl Manifest {
    pub fn load(dir: impl AsRef<Path>) -> Result<Self> {
        let text = fs::read_to_string(dir.as_ref().join(MANIFEST_FILE))?;
        let m: Manifest = serde_json::from_str(&text)?;
        if m.format_version != MANIFEST_VERSION {
            return Err(Error::UnsupportedVersion {
                kind: "manifest",
                found: m.format_version,
                supported: MANIFEST_VERSION,
            });
        }
        Ok(m)
    }
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn json_bytes<T: Serialize>(v: &T) -> Result<Vec<u8>> {
    let mut b = serde_json::to_vec_pretty(v)?;
    b.push(b'\n');
    Ok(b)
}

fn csv_bytes(f: impl FnOnce(&mut Vec<u8>) -> std::io::Result<()>) -> Result<Vec<u8>> {
    let mut b = Vec::new();
    f(&mut b)?;
    Ok(b)
}

/// Writes files under the output root and remembers their hashes.
struct Sink {
    root: PathBuf,
    written: Mutex<BTreeMap<String, Artifact>>,
}

impl Sink {
    fn write(&self, rel: &str, bytes: &[u8]) -> Result<()> {
        let path = self.root.join(rel);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent)?;
        }
        fs::write(&path, bytes)?;
        let a = Artifact {
            path: rel.to_string(),
            sha256: sha256_hex(bytes),
            bytes: bytes.len() as u64,
        };
        self.written.lock().expect("sink lock").insert(rel.to_string(), a);
        Ok(())
    }

    fn write_json<T: Serialize>(&self, rel: &str, v: &T) -> Result<()> {
        self.write(rel, &json_bytes(v)?)
    }
}

struct ScenarioCtx<'a> {
    cfg: &'a RunConfig,
    sink: &'a Sink,
    slug: String,
    bundle: DatasetBundle,
    pre: ModelCheckpoint,
    probes: Vec<usize>,
}

impl ScenarioCtx<'_> {
    fn has_forget(&self) -> bool {
        !self.bundle.rows(Split::Forget).is_empty()
    }

    /// Evaluation, attacks and CKA for one finished model.
    fn analyze(&self, label: &str, model: &ModelCheckpoint, attack: bool) -> Result<Vec<CKAResult>> {
        let base = format!("reports/{}/{label}", self.slug);
        let cfg = self.cfg;
        if cfg.eval.enabled {
            let rep = evaluate(model, &self.bundle)?;
            self.sink.write_json(&format!("{base}.eval.json"), &rep)?;
            let hist = csv_bytes(|b| write_histogram_csv(b, &rep.stats.histograms))?;
            self.sink.write(&format!("{base}.hist.csv"), &hist)?;
        }
        if attack && self.has_forget() {
            if cfg.attacks.feature_map {
                let r = feature_map_attack(&self.pre, model, &self.bundle)?;
                self.sink.write_json(&format!("{base}.fm.json"), &r)?;
            }
            if cfg.attacks.head_recovery {
                let r = head_recovery_attack(model, &self.bundle, cfg.attacks.normalize)?;
                self.sink.write_json(&format!("{base}.hr.json"), &r)?;
            }
            if cfg.attacks.inversion {
                let icfg = InversionConfig {
                    seed: cfg.seed,
                    ..cfg.attacks.inversion_config
                };
                let r = inversion_attack(model, &self.bundle, &self.probes, None, &icfg)?;
                self.sink.write_json(&format!("{base}.inv.json"), &r)?;
                let rows = csv_bytes(|b| write_probe_csv(b, &r))?;
                self.sink.write(&format!("{base}.inv.csv"), &rows)?;
            }
        }
        let mut cka = Vec::new();
        if cfg.eval.cka && label != PRETRAINED {
            let splits: &[Split] = if self.has_forget() {
                &[Split::Forget, Split::Retain]
            } else {
                &[Split::Retain]
            };
            for &split in splits {
                match cka_between((PRETRAINED, &self.pre), (label, model), &self.bundle, split) {
                    Ok(r) => cka.push(r),
                    // A collapsed representation has no CKA; the report lists it as missing.
                    Err(Error::ZeroVariance) => {}
                    Err(e) => return Err(e),
                }
            }
        }
        Ok(cka)
    }

    fn write_trained(&self, label: &str, model: &ModelCheckpoint, history: &[crate::train::EpochMetrics]) -> Result<()> {
        self.sink
            .write(&format!("checkpoints/{}/{label}.ufck", self.slug), &model.to_bytes())?;
        if !history.is_empty() {
            let csv = csv_bytes(|b| write_metrics_csv(b, history))?;
            self.sink
                .write(&format!("reports/{}/{label}.metrics.csv", self.slug), &csv)?;
        }
        Ok(())
    }

    fn method_cell(&self, entry: &MethodEntry) -> Result<Vec<CKAResult>> {
        let label = entry.label();
        let spec = entry.resolve(self.bundle.scenario.is_class(), self.cfg.seed);
        let out = unlearn(&self.pre, &self.bundle, &spec)
            .map_err(|e| contract(format!("{} / {label}: {e}", self.slug)))?;
        self.write_trained(&label, &out.model, &out.history)?;
        self.analyze(&label, &out.model, true)
    }
}

fn run_scenario(cfg: &RunConfig, sink: &Sink, base: &DatasetBundle, scenario: &Scenario) -> Result<ManifestRun> {
    let slug = scenario_slug(scenario);
    let bundle = apply_scenario(base, scenario)?;
    sink.write(&format!("data/{slug}.ufdb"), &bundle.to_bytes())?;

    let (pre, history) = match &cfg.pretrained_checkpoint {
        Some(p) => (ModelCheckpoint::load(p)?, Vec::new()),
        None => {
            let tc = TrainConfig {
                seed: cfg.seed,
                ..cfg.pretrain.clone()
            };
            let out = pretrain(&bundle, &cfg.hidden, &tc, cfg.seed)?;
            (out.model, out.history)
        }
    };
    let probes = if cfg.attacks.inversion && !bundle.rows(Split::Forget).is_empty() {
        select_probes(&bundle, cfg.attacks.probes, cfg.seed)?
    } else {
        Vec::new()
    };
    let ctx = ScenarioCtx {
        cfg,
        sink,
        slug: slug.clone(),
        bundle,
        pre,
        probes,
    };
    ctx.write_trained(PRETRAINED, &ctx.pre, &history)?;

    let mut models = vec![PRETRAINED.to_string()];
    let mut cka = ctx.analyze(PRETRAINED, &ctx.pre, false)?;

    if cfg.retrain {
        let tc = TrainConfig {
            seed: cfg.seed,
            ..cfg.pretrain.clone()
        };
        let out = retrain(&ctx.bundle, &cfg.hidden, &tc, cfg.seed)?;
        ctx.write_trained(RETRAINED, &out.model, &out.history)?;
        cka.extend(ctx.analyze(RETRAINED, &out.model, true)?);
        models.push(RETRAINED.to_string());
    }

    let cells: Vec<Result<Vec<CKAResult>>> = if cfg.parallel {
        cfg.methods.par_iter().map(|m| ctx.method_cell(m)).collect()
    } else {
        cfg.methods.iter().map(|m| ctx.method_cell(m)).collect()
    };
    for (entry, cell) in cfg.methods.iter().zip(cells) {
        cka.extend(cell?);
        models.push(entry.label());
    }
    if cfg.eval.cka {
        sink.write_json(&format!("reports/{slug}/cka.json"), &cka)?;
    }
    Ok(ManifestRun {
        scenario: scenario.name(),
        slug,
        models,
    })
}

/// Runs every configured stage and writes `manifest.json` under the output
/// directory. On failure the manifest is still written, marked incomplete,
/// and the stage error is returned.
pub fn run_pipeline(cfg: &RunConfig) -> Result<Manifest> {
    cfg.validate()?;
    fs::create_dir_all(&cfg.output_dir)?;
    let sink = Sink {
        root: cfg.output_dir.clone(),
        written: Mutex::new(BTreeMap::new()),
    };
    let recorded = cfg.recorded();
    let config_bytes = json_bytes(&recorded)?;
    sink.write("config.json", &config_bytes)?;

    let mut runs = Vec::new();
    let outcome = (|| -> Result<()> {
        let base = generate(&recorded.data)?;
        for s in &cfg.scenarios {
            runs.push(run_scenario(cfg, &sink, &base, s)?);
        }
        Ok(())
    })();

    let manifest = Manifest {
        format_version: MANIFEST_VERSION,
        complete: outcome.is_ok(),
        error: outcome.as_ref().err().map(|e| e.to_string()),
        config_sha256: sha256_hex(&config_bytes),
        runs,
        artifacts: sink.written.into_inner().expect("sink lock").into_values().collect(),
    };
    fs::write(cfg.output_dir.join(MANIFEST_FILE), json_bytes(&manifest)?)?;
    outcome.map(|_| manifest)
}

/// What [`report`] wrote, relative to the artifact directory.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReportSummary {
    pub files: Vec<String>,
    pub warnings: Vec<String>,
    /// Method rows over all summary tables.
    pub rows: usize,
}

/// 17 significant digits, scientific form.
fn num(v: f64) -> String {
    format!("{v:.16e}")
}

fn opt_num(v: Option<f64>) -> String {
    v.map(num).unwrap_or_default()
}

fn dat_num(v: Option<f64>) -> String {
    v.map(num).unwrap_or_else(|| "NaN".into())
}

struct Table {
    header: Vec<String>,
    rows: Vec<(String, Vec<Option<f64>>)>,
}

impl Table {
    fn csv(&self) -> String {
        let mut s = self.header.join(",");
        s.push('\n');
        for (name, vals) in &self.rows {
            s.push_str(name);
            for v in vals {
                s.push(',');
                s.push_str(&opt_num(*v));
            }
            s.push('\n');
        }
        s
    }

    /// Whitespace-separated with a `#` header and a leading row index.
    fn dat(&self) -> String {
        let mut s = format!("# index {}\n", self.header.join(" "));
        for (i, (name, vals)) in self.rows.iter().enumerate() {
            let _ = write!(s, "{i} \"{name}\"");
            for v in vals {
                s.push(' ');
                s.push_str(&dat_num(*v));
            }
            s.push('\n');
        }
        s
    }
}

fn read_json<T: for<'de> Deserialize<'de>>(dir: &Path, rel: &str, warnings: &mut Vec<String>) -> Option<T> {
    let path = dir.join(rel);
    match fs::read_to_string(&path) {
        Ok(text) => match serde_json::from_str(&text) {
            Ok(v) => Some(v),
            Err(e) => {
                warnings.push(format!("{rel}: unreadable ({e})"));
                None
            }
        },
        Err(_) => {
            warnings.push(format!("{rel}: missing"));
            None
        }
    }
}

fn accuracy_table(dir: &Path, run: &ManifestRun, warnings: &mut Vec<String>) -> Table {
    let mut splits: Vec<String> = Vec::new();
    let mut loaded: Vec<(String, EvalReport)> = Vec::new();
    for m in &run.models {
        let rel = format!("reports/{}/{m}.eval.json", run.slug);
        if let Some(rep) = read_json::<EvalReport>(dir, &rel, warnings) {
            if splits.is_empty() {
                splits = rep.accuracies.iter().map(|a| a.split.clone()).collect();
            }
            loaded.push((m.clone(), rep));
        }
    }
    let mut header = vec!["method".to_string()];
    header.extend(splits.iter().map(|s| format!("acc_{s}")));
    header.extend(["ua", "mia_e", "mia_p"].map(String::from));
    let rows = loaded
        .into_iter()
        .map(|(m, rep)| {
            let mut vals: Vec<Option<f64>> = splits
                .iter()
                .map(|s| rep.accuracies.iter().find(|a| &a.split == s).map(|a| a.accuracy))
                .collect();
            vals.extend([rep.ua, rep.mia_e, rep.mia_p]);
            (m, vals)
        })
        .collect();
    Table { header, rows }
}

fn recovery_table(dir: &Path, run: &ManifestRun, warnings: &mut Vec<String>) -> Table {
    let header = ["method", "unlearned_UA", "FM_UA", "HR_UA"].map(String::from).to_vec();
    let mut rows = Vec::new();
    for m in run.models.iter().filter(|m| *m != PRETRAINED) {
        let base = format!("reports/{}/{m}", run.slug);
        let fm_path = format!("{base}.fm.json");
        let hr_path = format!("{base}.hr.json");
        if !dir.join(&fm_path).exists() && !dir.join(&hr_path).exists() {
            continue;
        }
        let ua = read_json::<EvalReport>(dir, &format!("{base}.eval.json"), warnings).and_then(|r| r.ua);
        let fm = read_json::<RecoveryResult>(dir, &fm_path, warnings).and_then(|r| r.ua);
        let hr = read_json::<RecoveryResult>(dir, &hr_path, warnings).and_then(|r| r.ua);
        rows.push((m.clone(), vec![ua, fm, hr]));
    }
    Table { header, rows }
}

fn inversion_table(dir: &Path, run: &ManifestRun, warnings: &mut Vec<String>) -> Table {
    let header = ["method", "median_mse", "median_control_mse", "ratio"].map(String::from).to_vec();
    let mut rows = Vec::new();
    for m in &run.models {
        let rel = format!("reports/{}/{m}.inv.json", run.slug);
        if !dir.join(&rel).exists() {
            continue;
        }
        if let Some(r) = read_json::<InversionResult>(dir, &rel, warnings) {
            rows.push((m.clone(), vec![Some(r.median_mse), Some(r.median_control_mse), Some(r.ratio)]));
        }
    }
    Table { header, rows }
}

fn cka_csv(results: &[CKAResult]) -> (String, String) {
    let mut csv = String::from("model_a,model_b,split,cka_feature,cka_logit\n");
    let mut dat = String::from("# index model_b split cka_feature cka_logit\n");
    for (i, r) in results.iter().enumerate() {
        let _ = writeln!(
            csv,
            "{},{},{},{},{}",
            r.model_a,
            r.model_b,
            r.split,
            num(r.cka_feature),
            num(r.cka_logit)
        );
        let _ = writeln!(
            dat,
            "{i} \"{}\" \"{}\" {} {}",
            r.model_b,
            r.split,
            num(r.cka_feature),
            num(r.cka_logit)
        );
    }
    (csv, dat)
}

/// Renders summary tables and plot data from an artifact tree into `report/`.
///
/// Missing or unreadable artifacts become warnings; whatever can be read is
/// still tabulated. Rows follow the model order recorded in the manifest.
pub fn report(dir: impl AsRef<Path>) -> Result<ReportSummary> {
    let dir = dir.as_ref();
    let mut summary = ReportSummary::default();
    let manifest = match Manifest::load(dir) {
        Ok(m) => Some(m),
        Err(e) => {
            summary.warnings.push(format!("{MANIFEST_FILE}: {e}"));
            None
        }
    };
    let out_dir = dir.join(REPORT_DIR);
    fs::create_dir_all(&out_dir)?;
    let mut files: Vec<(String, String)> = Vec::new();
    if let Some(m) = &manifest {
        if !m.complete {
            summary.warnings.push(format!(
                "run incomplete: {}",
                m.error.as_deref().unwrap_or("unknown error")
            ));
        }
        for run in &m.runs {
            let w = &mut summary.warnings;
            let acc = accuracy_table(dir, run, w);
            summary.rows += acc.rows.len();
            files.push((format!("table_{}.csv", run.slug), acc.csv()));
            files.push((format!("table_{}.dat", run.slug), acc.dat()));
            let rec = recovery_table(dir, run, w);
            files.push((format!("recovered_ua_{}.csv", run.slug), rec.csv()));
            files.push((format!("recovered_ua_{}.dat", run.slug), rec.dat()));
            let inv = inversion_table(dir, run, w);
            if !inv.rows.is_empty() {
                files.push((format!("inversion_{}.csv", run.slug), inv.csv()));
                files.push((format!("inversion_{}.dat", run.slug), inv.dat()));
            }
            let cka_rel = format!("reports/{}/cka.json", run.slug);
            if dir.join(&cka_rel).exists() {
                let results: Vec<CKAResult> = read_json(dir, &cka_rel, w).unwrap_or_default();
                for model in run.models.iter().filter(|m| *m != PRETRAINED) {
                    if !results.iter().any(|r| &r.model_b == model) {
                        w.push(format!("{cka_rel}: no CKA for {model}"));
                    }
                }
                let (csv, dat) = cka_csv(&results);
                files.push((format!("cka_{}.csv", run.slug), csv));
                files.push((format!("cka_{}.dat", run.slug), dat));
            }
        }
    }
    let mut warn_text = summary.warnings.join("\n");
    if !warn_text.is_empty() {
        warn_text.push('\n');
    }
    files.push(("warnings.txt".into(), warn_text));
    for (name, text) in files {
        fs::write(out_dir.join(&name), text)?;
        summary.files.push(format!("{REPORT_DIR}/{name}"));
    }
    Ok(summary)
}
