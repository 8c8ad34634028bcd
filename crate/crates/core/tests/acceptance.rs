//! End-to-end acceptance checks. Each test prints one `PASS`/`FAIL` line
//! (visible with `--nocapture`) and then asserts it.

use std::collections::BTreeSet;
use std::fs;
use std::path::Path;
use std::sync::OnceLock;
use std::time::Instant;

use deepforget::attacks::{
    feature_map_attack, head_recovery_attack, inversion_attack, select_probes, InversionConfig,
};
use deepforget::bounds::{
    bound_grid, exact_hstar, stationary_candidates, BoundResult, OracleConfig, GRID_C,
    GRID_R,
};
use deepforget::data::{apply_scenario, generate, DatasetBundle, GenConfig, Scenario, Split};
use deepforget::evalsuite::{evaluate, linear_cka, EvalReport};
use deepforget::linalg::{dot, norm2, softmax_entropy, Matrix};
use deepforget::model::{ModelCheckpoint, DEFAULT_HIDDEN};
use deepforget::pipeline::{run_pipeline, AttackToggles, Manifest, MethodEntry, RunConfig, MANIFEST_FILE};
use deepforget::train::{pretrain, retrain, TrainConfig};
use deepforget::unlearn::{unlearn, Method, UnlearnSpec};
use deepforget::Error;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

mod common;

use common::{ce, check_gradients, gaussian, norm_loss, Loss};

const SEEDS: [u64; 3] = [1, 2, 3];

fn verdict(id: u32, title: &str, checks: &[(bool, String)]) {
    let pass = checks.iter().all(|c| c.0);
    let detail: Vec<String> = checks
        .iter()
        .map(|(ok, msg)| if *ok { msg.clone() } else { format!("FAILED {msg}") })
        .collect();
    println!(
        "criterion {id:>2} {}: {title} | {}",
        if pass { "PASS" } else { "FAIL" },
        detail.join("; ")
    );
    assert!(pass, "criterion {id} failed: {}", detail.join("; "));
}

fn mean(v: impl IntoIterator<Item = f64>) -> f64 {
    let v: Vec<f64> = v.into_iter().collect();
    v.iter().sum::<f64>() / v.len() as f64
}

// ---------------------------------------------------------------- fixtures

struct ClassRun {
    seed: u64,
    bundle: DatasetBundle,
    pre: ModelCheckpoint,
    retrained: ModelCheckpoint,
    opc: ModelCheckpoint,
    ft: ModelCheckpoint,
    rl: ModelCheckpoint,
    opc_tf: ModelCheckpoint,
    rl_tf: ModelCheckpoint,
    pre_eval: EvalReport,
    opc_eval: EvalReport,
    /// Pretraining, OPC unlearning and evaluation.
    opc_pipeline_secs: f64,
}

struct RandomRun {
    seed: u64,
    retrained_eval: EvalReport,
    opc_eval: EvalReport,
}

fn train_cfg(seed: u64) -> TrainConfig {
    TrainConfig {
        seed,
        track_splits: false,
        ..TrainConfig::pretrain_default()
    }
}

fn run_method(pre: &ModelCheckpoint, bundle: &DatasetBundle, method: Method, seed: u64) -> ModelCheckpoint {
    let mut spec = UnlearnSpec::defaults(method, bundle.scenario.is_class());
    spec.train.seed = seed;
    spec.rl_seed = seed;
    unlearn(pre, bundle, &spec).unwrap().model
}

fn scenario_bundle(seed: u64, scenario: &Scenario) -> DatasetBundle {
    let base = generate(&GenConfig {
        seed,
        ..GenConfig::default()
    })
    .unwrap();
    apply_scenario(&base, scenario).unwrap()
}

fn class_runs() -> &'static [ClassRun] {
    static RUNS: OnceLock<Vec<ClassRun>> = OnceLock::new();
    RUNS.get_or_init(|| {
        SEEDS
            .iter()
            .map(|&seed| {
                let bundle = scenario_bundle(seed, &Scenario::class_default());
                let t = Instant::now();
                let pre = pretrain(&bundle, &DEFAULT_HIDDEN, &train_cfg(seed), seed).unwrap().model;
                let opc = run_method(&pre, &bundle, Method::Opc, seed);
                let pre_eval = evaluate(&pre, &bundle).unwrap();
                let opc_eval = evaluate(&opc, &bundle).unwrap();
                let opc_pipeline_secs = t.elapsed().as_secs_f64();
                ClassRun {
                    seed,
                    retrained: retrain(&bundle, &DEFAULT_HIDDEN, &train_cfg(seed), seed).unwrap().model,
                    ft: run_method(&pre, &bundle, Method::Ft, seed),
                    rl: run_method(&pre, &bundle, Method::Rl, seed),
                    opc_tf: run_method(&pre, &bundle, Method::TrainFreeOpc, seed),
                    rl_tf: run_method(&pre, &bundle, Method::TrainFreeRl, seed),
                    bundle,
                    pre,
                    opc,
                    pre_eval,
                    opc_eval,
                    opc_pipeline_secs,
                }
            })
            .collect()
    })
}

fn random_runs() -> &'static [RandomRun] {
    static RUNS: OnceLock<Vec<RandomRun>> = OnceLock::new();
    RUNS.get_or_init(|| {
        SEEDS
            .iter()
            .map(|&seed| {
                let bundle = scenario_bundle(seed, &Scenario::random_default());
                let pre = pretrain(&bundle, &DEFAULT_HIDDEN, &train_cfg(seed), seed).unwrap().model;
                let retrained = retrain(&bundle, &DEFAULT_HIDDEN, &train_cfg(seed), seed).unwrap().model;
                let opc = run_method(&pre, &bundle, Method::Opc, seed);
                RandomRun {
                    seed,
                    retrained_eval: evaluate(&retrained, &bundle).unwrap(),
                    opc_eval: evaluate(&opc, &bundle).unwrap(),
                }
            })
            .collect()
    })
}

struct BoundGrid {
    grid: Vec<BoundResult>,
    secs: f64,
}

fn bound_grid_fixture() -> &'static BoundGrid {
    static GRID: OnceLock<BoundGrid> = OnceLock::new();
    GRID.get_or_init(|| {
        let t = Instant::now();
        let grid = bound_grid(&GRID_R, &GRID_C, &OracleConfig::default()).unwrap();
        BoundGrid {
            grid,
            secs: t.elapsed().as_secs_f64(),
        }
    })
}

// ---------------------------------------------------------------- 1, 2

#[test]
fn criterion_01_entropy_bound_grid() {
    let t = Instant::now();
    let fx = bound_grid_fixture();
    let mut strict = true;
    let mut worst_oracle = 0f64;
    for b in &fx.grid {
        strict &= b.exact_hstar > b.lower_bound;
        worst_oracle = worst_oracle.max((b.exact_hstar - b.oracle_min.unwrap()).abs());
    }
    let mut worst_zero = 0f64;
    for c in GRID_C {
        worst_zero = worst_zero.max((exact_hstar(0.0, c).unwrap().exact_hstar - (c as f64).ln()).abs());
    }
    // Uniform-in-ball points plus points on the sphere, where the minimum lives.
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut worst_margin = f64::INFINITY;
    for b in &fx.grid {
        for i in 0..10_000 {
            let mut h: Vec<f64> = (0..b.num_classes).map(|_| gaussian(&mut rng)).collect();
            let n = norm2(&h);
            let radius = if i % 2 == 0 {
                b.r
            } else {
                b.r * rng.random::<f64>().powf(1.0 / b.num_classes as f64)
            };
            h.iter_mut().for_each(|v| *v *= radius / n);
            worst_margin = worst_margin.min(softmax_entropy(&h) - b.exact_hstar);
        }
    }
    let secs = fx.secs + t.elapsed().as_secs_f64();
    verdict(
        1,
        "entropy bound on the r x C grid",
        &[
            (strict, "exact > bound at every grid point".into()),
            (worst_oracle <= 1e-4, format!("max |exact - oracle| = {worst_oracle:.2e} (<= 1e-4)")),
            (worst_zero <= 1e-12, format!("max |H(0,C) - log C| = {worst_zero:.1e} (<= 1e-12)")),
            (
                worst_margin >= -1e-9,
                format!("min sampled entropy - exact = {worst_margin:.2e} (>= -1e-9)"),
            ),
            (secs < 60.0, format!("{secs:.2} s (< 60 s)")),
        ],
    );
}

#[test]
fn criterion_02_two_value_minimizer() {
    let fx = bound_grid_fixture();
    let mut max_distinct = 0;
    let mut b1_best = true;
    for b in &fx.grid {
        let mut h = b.oracle_argmin.clone().unwrap();
        h.sort_by(f64::total_cmp);
        let distinct = 1 + h.windows(2).filter(|w| w[1] - w[0] > 1e-3).count();
        max_distinct = max_distinct.max(distinct);
        let cands = stationary_candidates(b.r, b.num_classes).unwrap();
        let min = cands.iter().map(|c| c.entropy).fold(f64::INFINITY, f64::min);
        b1_best &= cands[0].b == 1 && cands[0].entropy <= min;
    }
    verdict(
        2,
        "oracle minimizers take two values and b=1 is optimal",
        &[
            (max_distinct <= 2, format!("max distinct values per argmin = {max_distinct} (<= 2)")),
            (b1_best, "b=1 candidate attains the smallest entropy at every grid point".into()),
        ],
    );
}

// ---------------------------------------------------------------- 3

#[test]
fn criterion_03_gradient_suite() {
    let archs: [(&[usize], usize); 5] = [
        (&[2, 3], 2),
        (&[4, 8], 3),
        (&[6, 10, 7], 4),
        (&[16, 64, 64, 32], 10),
        (&[5, 4, 4, 4, 4], 3),
    ];
    let mut max_rel = 0f64;
    let (mut checked, mut skipped) = (0, 0);
    for (ai, (arch, classes)) in archs.iter().enumerate() {
        for (bi, batch) in [1usize, 7, 32].into_iter().enumerate() {
            for (li, loss) in [ce as Loss, norm_loss as Loss].into_iter().enumerate() {
                let seed = 100 + (ai * 10 + bi * 2 + li) as u64;
                let g = check_gradients(arch, *classes, batch, seed, loss);
                max_rel = max_rel.max(g.max_rel);
                checked += g.checked;
                skipped += g.skipped;
            }
        }
    }
    let skip_frac = skipped as f64 / (checked + skipped) as f64;
    verdict(
        3,
        "parameter and input gradients vs central differences (5 archs x 3 batch sizes, CE and norm loss)",
        &[
            (max_rel <= 1e-5, format!("max relative error {max_rel:.2e} over {checked} entries (<= 1e-5)")),
            (
                skip_frac <= 0.01,
                format!("{skipped} entries skipped for a ReLU crossing inside the stencil ({:.3}%)", 100.0 * skip_frac),
            ),
        ],
    );
}

// ---------------------------------------------------------------- 4

fn random_matrix(rng: &mut ChaCha8Rng, n: usize, p: usize) -> Matrix {
    Matrix::from_vec(n, p, (0..n * p).map(|_| gaussian(rng)).collect()).unwrap()
}

/// Random orthogonal matrix by Gram–Schmidt on Gaussian columns.
fn random_orthogonal(rng: &mut ChaCha8Rng, p: usize) -> Matrix {
    let mut cols: Vec<Vec<f64>> = Vec::with_capacity(p);
    while cols.len() < p {
        let mut v: Vec<f64> = (0..p).map(|_| gaussian(rng)).collect();
        for _ in 0..2 {
            for c in &cols {
                let d = dot(&v, c);
                v.iter_mut().zip(c).for_each(|(a, b)| *a -= d * b);
            }
        }
        let n = norm2(&v);
        v.iter_mut().for_each(|a| *a /= n);
        cols.push(v);
    }
    let mut q = Matrix::zeros(p, p);
    for (j, c) in cols.iter().enumerate() {
        for (i, &v) in c.iter().enumerate() {
            q[(i, j)] = v;
        }
    }
    q
}

#[test]
fn criterion_04_cka_properties() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let x = random_matrix(&mut rng, 1000, 32);
    let y = random_matrix(&mut rng, 1000, 32);
    let q = random_orthogonal(&mut rng, 32);
    let self_err = (linear_cka(&x, &x).unwrap() - 1.0).abs();
    let base = linear_cka(&x, &y).unwrap();
    let scale_err = (linear_cka(&x.scale(3.7), &y).unwrap() - base)
        .abs()
        .max((linear_cka(&x, &y.scale(0.02)).unwrap() - base).abs());
    let orth_err = (linear_cka(&x.matmul(&q), &y).unwrap() - base)
        .abs()
        .max((linear_cka(&x.matmul(&q), &x).unwrap() - 1.0).abs());
    verdict(
        4,
        "linear CKA identities",
        &[
            (self_err <= 1e-9, format!("|CKA(X,X) - 1| = {self_err:.1e} (<= 1e-9)")),
            (scale_err <= 1e-8, format!("scaling changes CKA by {scale_err:.1e} (<= 1e-8)")),
            (orth_err <= 1e-8, format!("rotation changes CKA by {orth_err:.1e} (<= 1e-8)")),
            (base < 0.1, format!("independent features n=1000 p=32: CKA = {base:.4} (< 0.1)")),
        ],
    );
}

// ---------------------------------------------------------------- 5

#[test]
fn criterion_05_opc_deep_forgetting() {
    let runs = class_runs();
    let forget_acc = mean(runs.iter().map(|r| r.opc_eval.accuracy(Split::Forget).unwrap()));
    let retain_drop = mean(runs.iter().map(|r| {
        r.pre_eval.accuracy(Split::Retain).unwrap() - r.opc_eval.accuracy(Split::Retain).unwrap()
    }));
    let norm = |e: &EvalReport| e.stats.summary(Split::Forget).unwrap().mean_logit_norm;
    let norm_ratio = mean(runs.iter().map(|r| norm(&r.opc_eval) / norm(&r.pre_eval)));
    let entropy = mean(runs.iter().map(|r| r.opc_eval.stats.summary(Split::Forget).unwrap().mean_entropy));
    let mia_e = mean(runs.iter().map(|r| r.opc_eval.mia_e.unwrap()));
    let slowest = runs.iter().map(|r| r.opc_pipeline_secs).fold(0.0, f64::max);
    let floor = 0.9 * 10f64.ln();
    verdict(
        5,
        "OPC forgets deeply on the class scenario (mean of seeds 1-3)",
        &[
            (forget_acc <= 2.0, format!("forget accuracy {forget_acc:.2}% (<= 2%)")),
            (retain_drop.abs() <= 3.0, format!("retain change {:+.2} pts (within 3)", -retain_drop)),
            (norm_ratio <= 0.10, format!("forget logit norm at {:.2}% of pretrained (<= 10%)", 100.0 * norm_ratio)),
            (entropy >= floor, format!("forget entropy {entropy:.4} (>= {floor:.4})")),
            (mia_e >= 0.95, format!("mia_e {mia_e:.4} (>= 0.95)")),
            (slowest <= 120.0, format!("slowest seed {slowest:.1} s (<= 120 s)")),
        ],
    );
}

// ---------------------------------------------------------------- 6

#[test]
fn criterion_06_recovery_attacks() {
    let mut checks = Vec::new();
    let mut slowest = 0f64;
    for run in class_runs() {
        let unlearned = |m: &ModelCheckpoint| evaluate(m, &run.bundle).unwrap().accuracy(Split::Forget).unwrap();
        let (ft0, rl0, opc0) = (unlearned(&run.ft), unlearned(&run.rl), run.opc_eval.accuracy(Split::Forget).unwrap());
        for kind in ["FM", "HR"] {
            let attack = |m: &ModelCheckpoint| {
                let t = Instant::now();
                let r = if kind == "FM" {
                    feature_map_attack(&run.pre, m, &run.bundle).unwrap()
                } else {
                    head_recovery_attack(m, &run.bundle, false).unwrap()
                };
                (r.accuracy(Split::Forget).unwrap(), t.elapsed().as_secs_f64())
            };
            let (ft, t1) = attack(&run.ft);
            let (rl, t2) = attack(&run.rl);
            let (opc, t3) = attack(&run.opc);
            slowest = slowest.max(t1).max(t2).max(t3);
            let best = ft.max(rl);
            checks.push((
                ft - ft0 >= 30.0 && rl - rl0 >= 30.0 && best - opc >= 30.0,
                format!(
                    "seed {} {kind}: FT {ft0:.1}->{ft:.1}, RL {rl0:.1}->{rl:.1}, OPC {opc0:.1}->{opc:.1}",
                    run.seed
                ),
            ));
        }
    }
    // Changing every non-validation input must leave both fitted maps unchanged.
    let run = &class_runs()[0];
    let mut poisoned = run.bundle.clone();
    let val: BTreeSet<usize> = run.bundle.rows(Split::Val).into_iter().collect();
    for i in (0..poisoned.len()).filter(|i| !val.contains(i)) {
        poisoned.inputs.row_mut(i).iter_mut().for_each(|v| *v = -3.0 * *v + 1.0);
    }
    let same_fm = feature_map_attack(&run.pre, &run.ft, &run.bundle).unwrap().weights
        == feature_map_attack(&run.pre, &run.ft, &poisoned).unwrap().weights;
    let same_hr = head_recovery_attack(&run.ft, &run.bundle, false).unwrap().weights
        == head_recovery_attack(&run.ft, &poisoned, false).unwrap().weights;
    checks.push((same_fm && same_hr, "fitted maps ignore every non-validation row".into()));
    checks.push((slowest < 10.0, format!("slowest OLS attack {slowest:.2} s (< 10 s)")));
    verdict(6, "feature-map and head recovery revive FT/RL but not OPC", &checks);
}

// ---------------------------------------------------------------- 7

#[test]
fn criterion_07_training_free_heads() {
    let runs = class_runs();
    let acc = |m: &ModelCheckpoint, b: &DatasetBundle, s: Split| evaluate(m, b).unwrap().accuracy(s).unwrap();
    let mut per_seed = Vec::new();
    let (mut zf, mut rlf, mut drop) = (Vec::new(), Vec::new(), Vec::new());
    for r in runs {
        let z = acc(&r.opc_tf, &r.bundle, Split::Forget);
        let l = acc(&r.rl_tf, &r.bundle, Split::Forget);
        let d = r.pre_eval.accuracy(Split::Retain).unwrap() - acc(&r.opc_tf, &r.bundle, Split::Retain);
        per_seed.push(format!("seed {}: zero {z:.2}% vs random-label {l:.2}%", r.seed));
        zf.push(z);
        rlf.push(l);
        drop.push(d);
    }
    let (z, l, d) = (mean(zf), mean(rlf), mean(drop));
    verdict(
        7,
        "least-squares head replacement (mean of seeds 1-3)",
        &[
            (z <= 1.0, format!("zero-target forget accuracy {z:.2}% (<= 1%)")),
            (d.abs() <= 2.0, format!("zero-target retain change {:+.2} pts (within 2)", -d)),
            (l > z, format!("random-label forget accuracy {l:.2}% > {z:.2}% [{}]", per_seed.join(", "))),
        ],
    );
}

// ---------------------------------------------------------------- 8

#[test]
fn criterion_08_mia_ordering() {
    let mut checks = Vec::new();
    for r in class_runs() {
        let pre = r.pre_eval.mia_e.unwrap();
        let re = evaluate(&r.retrained, &r.bundle).unwrap().mia_e.unwrap();
        let opc = r.opc_eval.mia_e.unwrap();
        checks.push((
            pre <= 0.15 && re >= 0.95 && opc >= 0.95,
            format!("class seed {}: mia_e pretrained {pre:.3}, retrained {re:.3}, OPC {opc:.3}", r.seed),
        ));
    }
    for r in random_runs() {
        let re = r.retrained_eval.mia_p.unwrap();
        let opc = r.opc_eval.mia_p.unwrap();
        checks.push((
            (opc - re).abs() <= 0.15,
            format!("random seed {}: mia_p OPC {opc:.3} vs retrained {re:.3}", r.seed),
        ));
    }
    verdict(8, "membership inference ordering", &checks);
}

// ---------------------------------------------------------------- 9

#[test]
fn criterion_09_inversion() {
    let t = Instant::now();
    let mut checks = Vec::new();
    for r in class_runs() {
        let probes = select_probes(&r.bundle, 20, r.seed).unwrap();
        let cfg = InversionConfig {
            seed: r.seed,
            ..InversionConfig::default()
        };
        let ft = inversion_attack(&r.ft, &r.bundle, &probes, None, &cfg).unwrap();
        let opc = inversion_attack(&r.opc, &r.bundle, &probes, None, &cfg).unwrap();
        checks.push((
            ft.ratio <= 0.5 && opc.ratio >= 0.8,
            format!(
                "seed {} ({} probes): median MSE / control FT {:.3}, OPC {:.3}",
                r.seed,
                probes.len(),
                ft.ratio,
                opc.ratio
            ),
        ));
    }
    let secs = t.elapsed().as_secs_f64();
    checks.push((secs <= 300.0, format!("{secs:.1} s (<= 300 s)")));
    verdict(9, "gradient inversion recovers FT inputs but not OPC inputs", &checks);
}

// ---------------------------------------------------------------- 10

fn small_run_config(out: &Path) -> RunConfig {
    let spec = |m: Method| {
        let mut s = UnlearnSpec::defaults(m, true);
        s.train.epochs = 2;
        s
    };
    RunConfig {
        data: GenConfig {
            samples_per_class: 60,
            ..GenConfig::default()
        },
        pretrain: TrainConfig {
            epochs: 4,
            ..TrainConfig::pretrain_default()
        },
        methods: vec![
            MethodEntry {
                name: None,
                method: Method::Opc,
                spec: Some(spec(Method::Opc)),
            },
            MethodEntry::new(Method::Ft),
            MethodEntry::new(Method::TrainFreeOpc),
        ],
        attacks: AttackToggles {
            probes: 3,
            inversion_config: InversionConfig {
                iters: 20,
                ..InversionConfig::default()
            },
            ..AttackToggles::default()
        },
        output_dir: out.to_path_buf(),
        seed: 5,
        ..RunConfig::default()
    }
}

fn files_under(root: &Path, dir: &Path, out: &mut BTreeSet<String>) {
    for e in fs::read_dir(dir).unwrap() {
        let p = e.unwrap().path();
        if p.is_dir() {
            files_under(root, &p, out);
        } else {
            out.insert(p.strip_prefix(root).unwrap().to_string_lossy().into_owned());
        }
    }
}

#[test]
fn criterion_10_determinism_and_formats() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let ma = run_pipeline(&small_run_config(a.path())).unwrap();
    run_pipeline(&small_run_config(b.path())).unwrap();
    let bytes_a = fs::read(a.path().join(MANIFEST_FILE)).unwrap();
    let identical = bytes_a == fs::read(b.path().join(MANIFEST_FILE)).unwrap();

    let mut on_disk = BTreeSet::new();
    files_under(a.path(), a.path(), &mut on_disk);
    on_disk.remove(MANIFEST_FILE);
    let listed: BTreeSet<String> = ma.artifacts.iter().map(|x| x.path.clone()).collect();
    let hashes_ok = ma.artifacts.iter().all(|x| {
        hex::encode(Sha256::digest(fs::read(a.path().join(&x.path)).unwrap())) == x.sha256
    });
    let reloaded = Manifest::load(a.path()).unwrap() == ma;

    let bundle = scenario_bundle(9, &Scenario::class_default());
    let bundle_bytes = bundle.to_bytes();
    let bundle_rt = DatasetBundle::from_bytes(&bundle_bytes).unwrap();
    let bundle_ok = bundle_rt == bundle && bundle_rt.to_bytes() == bundle_bytes;
    let model = ModelCheckpoint::init(&[16, 64, 64, 32], 10, 9).unwrap();
    let model_bytes = model.to_bytes();
    let model_rt = ModelCheckpoint::from_bytes(&model_bytes).unwrap();
    let model_ok = model_rt.to_bytes() == model_bytes
        && model_rt.layers().zip(model.layers()).all(|(x, y)| x.param_bits() == y.param_bits());

    let mut rejections = true;
    for bytes in [&bundle_bytes, &model_bytes] {
        let is_bundle = std::ptr::eq(bytes, &bundle_bytes);
        let parse = |b: &[u8]| -> Result<(), Error> {
            if is_bundle {
                DatasetBundle::from_bytes(b).map(|_| ())
            } else {
                ModelCheckpoint::from_bytes(b).map(|_| ())
            }
        };
        let mut bad_magic = bytes.clone();
        bad_magic[0] ^= 0xff;
        rejections &= matches!(parse(&bad_magic), Err(Error::BadMagic { .. }));
        let mut bad_version = bytes.clone();
        bad_version[4] = bad_version[4].wrapping_add(1);
        rejections &= matches!(parse(&bad_version), Err(Error::UnsupportedVersion { .. }));
        rejections &= matches!(parse(&bytes[..bytes.len() - 3]), Err(Error::Truncated { .. }));
    }
    verdict(
        10,
        "determinism and file formats",
        &[
            (identical, format!("two pipeline runs give byte-identical manifests ({} artifacts)", ma.artifacts.len())),
            (ma.complete, "run marked complete".into()),
            (listed == on_disk && hashes_ok && reloaded, "every written file listed with a matching sha256".into()),
            (bundle_ok, "bundle round-trips bitwise".into()),
            (model_ok, "checkpoint round-trips bitwise".into()),
            (rejections, "bad magic, bad version and truncation rejected with typed errors".into()),
        ],
    );
}
