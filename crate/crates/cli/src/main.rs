use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use deepforget::attacks::{
    feature_map_attack, head_recovery_attack, inversion_attack, select_probes, write_probe_csv,
    InversionConfig,
};
use deepforget::bounds::{bound_grid, bound_with_oracle, exact_hstar, write_grid_csv, OracleConfig, GRID_C, GRID_R};
use deepforget::data::{apply_scenario, generate, DatasetBundle, GenConfig, Scenario};
use deepforget::evalsuite::{evaluate, write_histogram_csv};
use deepforget::model::{ModelCheckpoint, DEFAULT_HIDDEN};
use deepforget::pipeline::{report, run_pipeline, RunConfig};
use deepforget::train::{pretrain, retrain, write_metrics_csv, EpochMetrics, TrainConfig};
use deepforget::unlearn::{unlearn, Method, UnlearnSpec};
use serde::Serialize;

#[derive(Parser)]
#[command(name = "deepforget", version, about = "Deep feature forgetting lab")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Clone, Copy, ValueEnum)]
enum ScenarioArg {
    None,
    Class,
    Random,
}

#[derive(Clone, Copy, ValueEnum)]
enum AttackArg {
    Fm,
    Hr,
    Inv,
}

#[derive(clap::Args)]
struct TrainArgs {
    /// Dataset bundle (.ufdb).
    #[arg(long)]
    data: PathBuf,
    /// Output checkpoint (.ufck).
    #[arg(long)]
    out: PathBuf,
    #[arg(long, value_delimiter = ',', default_values_t = DEFAULT_HIDDEN.to_vec())]
    hidden: Vec<usize>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Per-epoch metrics CSV.
    #[arg(long)]
    metrics: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate a synthetic dataset bundle and tag a forget set.
    GenData {
        #[arg(long)]
        out: PathBuf,
        /// JSON generator settings; flags below override it.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        classes: Option<usize>,
        #[arg(long)]
        dim: Option<usize>,
        #[arg(long)]
        per_class: Option<usize>,
        #[arg(long)]
        spread: Option<f64>,
        #[arg(long, value_enum, default_value = "class")]
        scenario: ScenarioArg,
        #[arg(long, value_delimiter = ',', default_values_t = vec![0usize, 1, 2])]
        forget_classes: Vec<usize>,
        #[arg(long, default_value_t = 0.1)]
        fraction: f64,
    },
    /// Train a fresh model on every train row.
    Pretrain(TrainArgs),
    /// Train a fresh model on the retain rows only.
    Retrain(TrainArgs),
    /// Unlearn the forget set from a pretrained checkpoint.
    Unlearn {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        method: Method,
        #[arg(long)]
        out: PathBuf,
        /// JSON method settings; replaces the scenario defaults.
        #[arg(long)]
        spec: Option<PathBuf>,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        lr: Option<f64>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        metrics: Option<PathBuf>,
    },
    /// Accuracy, MIA and norm/entropy statistics as JSON.
    Eval {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        model: PathBuf,
        /// Report path; stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Histogram CSV.
        #[arg(long)]
        hist: Option<PathBuf>,
    },
    /// Feature-map, head-recovery or inversion attack on an unlearned model.
    Attack {
        #[arg(long, value_enum)]
        kind: AttackArg,
        #[arg(long)]
        data: PathBuf,
        /// Pretrained checkpoint (feature-map attack only).
        #[arg(long)]
        pre: Option<PathBuf>,
        #[arg(long)]
        un: PathBuf,
        /// Row-normalize features before head recovery.
        #[arg(long)]
        normalize: bool,
        #[arg(long, default_value_t = 20)]
        probes: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Per-probe CSV (inversion only).
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Minimum entropy in a logit ball, as JSON.
    Bound {
        #[arg(long)]
        r: f64,
        #[arg(long = "C")]
        c: usize,
        /// Also run the projected-gradient oracle.
        #[arg(long)]
        oracle: bool,
    },
    /// Exact value, bound and oracle over a grid, as CSV.
    BoundGrid {
        #[arg(long, value_delimiter = ',', default_values_t = GRID_R.to_vec())]
        r: Vec<f64>,
        #[arg(long = "C", value_delimiter = ',', default_values_t = GRID_C.to_vec())]
        c: Vec<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the full pipeline from a JSON config.
    Run {
        #[arg(long)]
        config: Option<PathBuf>,
        /// Output root; overrides the config.
        #[arg(long, env = "DEEPFORGET_OUT")]
        out: Option<PathBuf>,
    },
    /// Summary tables and plot data from a run directory.
    Report {
        #[arg(long)]
        dir: PathBuf,
    },
}

fn write_json<T: Serialize>(out: Option<&Path>, v: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(v)? + "\n";
    match out {
        Some(p) => fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => {
            std::io::stdout().write_all(text.as_bytes())?;
            Ok(())
        }
    }
}

fn load_bundle(p: &Path) -> Result<DatasetBundle> {
    DatasetBundle::load(p).with_context(|| format!("loading bundle {}", p.display()))
}

fn load_model(p: &Path) -> Result<ModelCheckpoint> {
    ModelCheckpoint::load(p).with_context(|| format!("loading checkpoint {}", p.display()))
}

fn save_metrics(path: Option<&Path>, history: &[EpochMetrics]) -> Result<()> {
    if let Some(p) = path {
        let f = fs::File::create(p).with_context(|| format!("creating {}", p.display()))?;
        write_metrics_csv(std::io::BufWriter::new(f), history)?;
    }
    Ok(())
}

fn train_cmd(a: TrainArgs, retain_only: bool) -> Result<()> {
    let bundle = load_bundle(&a.data)?;
    let mut tc = TrainConfig::pretrain_default();
    tc.seed = a.seed;
    if let Some(e) = a.epochs {
        tc.epochs = e;
    }
    if let Some(lr) = a.lr {
        tc.learning_rate = lr;
    }
    let out = if retain_only {
        retrain(&bundle, &a.hidden, &tc, a.seed)?
    } else {
        pretrain(&bundle, &a.hidden, &tc, a.seed)?
    };
    out.model.save(&a.out)?;
    save_metrics(a.metrics.as_deref(), &out.history)
}

fn main() -> Result<()> {
    match Cli::parse().cmd {
        Cmd::GenData {
            out,
            config,
            seed,
            classes,
            dim,
            per_class,
            spread,
            scenario,
            forget_classes,
            fraction,
        } => {
            let mut cfg = match config {
                Some(p) => serde_json::from_str(&fs::read_to_string(&p)?)
                    .with_context(|| format!("parsing {}", p.display()))?,
                None => GenConfig::default(),
            };
            cfg.seed = seed.unwrap_or(cfg.seed);
            cfg.num_classes = classes.unwrap_or(cfg.num_classes);
            cfg.input_dim = dim.unwrap_or(cfg.input_dim);
            cfg.samples_per_class = per_class.unwrap_or(cfg.samples_per_class);
            cfg.cluster_spread = spread.unwrap_or(cfg.cluster_spread);
            let sc = match scenario {
                ScenarioArg::None => Scenario::None,
                ScenarioArg::Class => Scenario::Class { classes: forget_classes },
                ScenarioArg::Random => Scenario::Random { fraction },
            };
            let bundle = apply_scenario(&generate(&cfg)?, &sc)?;
            bundle.save(&out)?;
        }
        Cmd::Pretrain(a) => train_cmd(a, false)?,
        Cmd::Retrain(a) => train_cmd(a, true)?,
        Cmd::Unlearn {
            data,
            model,
            method,
            out,
            spec,
            epochs,
            lr,
            seed,
            metrics,
        } => {
            let bundle = load_bundle(&data)?;
            let pre = load_model(&model)?;
            let mut s = match spec {
                Some(p) => {
                    let s: UnlearnSpec = serde_json::from_str(&fs::read_to_string(&p)?)
                        .with_context(|| format!("parsing {}", p.display()))?;
                    if s.method != method {
                        bail!("spec file names {} but --method is {}", s.method, method);
                    }
                    s
                }
                None => {
                    let mut s = UnlearnSpec::defaults(method, bundle.scenario.is_class());
                    s.train.seed = seed;
                    s.rl_seed = seed;
                    s
                }
            };
            if let Some(e) = epochs {
                s.train.epochs = e;
            }
            if let Some(lr) = lr {
                s.train.learning_rate = lr;
            }
            s.validate(&pre)?;
            let res = unlearn(&pre, &bundle, &s)?;
            res.model.save(&out)?;
            save_metrics(metrics.as_deref(), &res.history)?;
        }
        Cmd::Eval { data, model, out, hist } => {
            let bundle = load_bundle(&data)?;
            let rep = evaluate(&load_model(&model)?, &bundle)?;
            if let Some(h) = hist {
                write_histogram_csv(fs::File::create(&h)?, &rep.stats.histograms)?;
            }
            write_json(out.as_deref(), &rep)?;
        }
        Cmd::Attack {
            kind,
            data,
            pre,
            un,
            normalize,
            probes,
            seed,
            out,
            csv,
        } => {
            let bundle = load_bundle(&data)?;
            let un = load_model(&un)?;
            match kind {
                AttackArg::Fm => {
                    let Some(pre) = pre else {
                        bail!("--pre is required for the feature-map attack");
                    };
                    let r = feature_map_attack(&load_model(&pre)?, &un, &bundle)?;
                    write_json(out.as_deref(), &r)?;
                }
                AttackArg::Hr => {
                    let r = head_recovery_attack(&un, &bundle, normalize)?;
                    write_json(out.as_deref(), &r)?;
                }
                AttackArg::Inv => {
                    let rows = select_probes(&bundle, probes, seed)?;
                    let cfg = InversionConfig {
                        seed,
                        ..InversionConfig::default()
                    };
                    let r = inversion_attack(&un, &bundle, &rows, None, &cfg)?;
                    if let Some(c) = csv {
                        write_probe_csv(fs::File::create(&c)?, &r)?;
                    }
                    write_json(out.as_deref(), &r)?;
                }
            }
        }
        Cmd::Bound { r, c, oracle } => {
            let b = if oracle {
                bound_with_oracle(r, c, &OracleConfig::default())?
            } else {
                exact_hstar(r, c)?
            };
            write_json(None, &b)?;
        }
        Cmd::BoundGrid { r, c, out } => {
            let grid = bound_grid(&r, &c, &OracleConfig::default())?;
            match out {
                Some(p) => write_grid_csv(fs::File::create(&p)?, &grid)?,
                None => write_grid_csv(std::io::stdout().lock(), &grid)?,
            }
        }
        Cmd::Run { config, out } => {
            let mut cfg = match config {
                Some(p) => RunConfig::load(&p).with_context(|| format!("reading config {}", p.display()))?,
                None => RunConfig::default(),
            };
            if let Some(o) = out {
                cfg.output_dir = o;
            }
            let m = run_pipeline(&cfg)
                .with_context(|| format!("run into {} failed", cfg.output_dir.display()))?;
            eprintln!(
                "wrote {} artifacts to {}",
                m.artifacts.len(),
                cfg.output_dir.display()
            );
        }
        Cmd::Report { dir } => {
            let s = report(&dir)?;
            for w in &s.warnings {
                eprintln!("warning: {w}");
            }
            for f in &s.files {
                println!("{}", dir.join(f).display());
            }
        }
    }
    Ok(())
}
