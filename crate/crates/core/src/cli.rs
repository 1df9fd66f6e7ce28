//! The `attacknet` command line.
//!
//! Run configuration files hold one `key=value` per line with `#` comments.
//! Besides every model key they accept:
//!
//! | key           | meaning                                            |
//! |---------------|----------------------------------------------------|
//! | `dataset`     | dataset root for `train`                           |
//! | `datasets`    | comma-separated roots for `cross-eval` and `fused` |
//! | `out_dir`     | output directory (overridden by `--out`)           |
//! | `split_ratio` | training share when a root has no `split.csv`      |
//!
//! The effective configuration is written to `config.txt` in every output
//! directory. All artifacts are written to `<name>.partial` first and
//! renamed once complete.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};

use crate::bench::bench;
use crate::data::{
    decode_image, load_dataset, resize_tensor, DatasetManifest, Label, LoadedDataset, Split,
    SplitOptions, DEFAULT_TRAIN_RATIO,
};
use crate::error::{Error, Result};
use crate::gradcam::{grad_cam, write_overlay};
use crate::io::write_atomic;
use crate::metrics::roc;
use crate::model::{
    build_model, load_checkpoint, param_count, parse_key_values, save_checkpoint, FlopBreakdown,
    Model, ModelConfig,
};
use crate::protocol::{
    evaluate_report, run_cross_eval, run_fused, train_run, write_cross_eval_artifacts,
    write_fused_artifacts, ExperimentOptions,
};
use crate::rng::Prng;
use crate::trainer::predict_set;

/// Model configuration plus dataset and output locations.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub model: ModelConfig,
    pub dataset: Option<PathBuf>,
    pub datasets: Vec<PathBuf>,
    pub out_dir: Option<PathBuf>,
    pub split_ratio: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            model: ModelConfig::default(),
            dataset: None,
            datasets: Vec::new(),
            out_dir: None,
            split_ratio: DEFAULT_TRAIN_RATIO,
        }
    }
}

impl RunConfig {
    /// Parses a configuration document; unknown keys are rejected and
    /// missing keys keep their defaults.
    pub fn parse(text: &str) -> Result<Self> {
        let mut run = Self::default();
        let mut model_text = String::new();
        for (k, v) in parse_key_values(text)? {
            match k.as_str() {
                "dataset" => run.dataset = non_empty(&v).map(PathBuf::from),
                "datasets" => {
                    run.datasets = v
                        .split(',')
                        .map(str::trim)
                        .filter(|s| !s.is_empty())
                        .map(PathBuf::from)
                        .collect()
                }
                "out_dir" => run.out_dir = non_empty(&v).map(PathBuf::from),
                "split_ratio" => {
                    run.split_ratio = v.parse().map_err(|_| {
                        Error::Config(format!("invalid value {v:?} for key split_ratio"))
                    })?
                }
                _ => {
                    let _ = writeln!(model_text, "{k}={v}");
                }
            }
        }
        run.model = ModelConfig::from_key_values(&model_text)?;
        run.validate()?;
        Ok(run)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.split_ratio > 0.0 && self.split_ratio < 1.0) {
            return Err(Error::Config(format!(
                "split_ratio must lie in (0,1), got {}",
                self.split_ratio
            )));
        }
        self.model.validate()
    }

    /// Canonical rendering; parses back to an equal configuration.
    pub fn to_key_values(&self) -> String {
        let mut s = self.model.to_key_values();
        let path = |p: &Option<PathBuf>| {
            p.as_ref()
                .map(|p| p.display().to_string())
                .unwrap_or_default()
        };
        let _ = writeln!(s, "dataset={}", path(&self.dataset));
        let list: Vec<String> = self
            .datasets
            .iter()
            .map(|p| p.display().to_string())
            .collect();
        let _ = writeln!(s, "datasets={}", list.join(","));
        let _ = writeln!(s, "out_dir={}", path(&self.out_dir));
        let _ = writeln!(s, "split_ratio={}", self.split_ratio);
        s
    }

    pub fn split_options(&self) -> SplitOptions {
        SplitOptions {
            train_ratio: self.split_ratio,
            seed: self.model.seed,
        }
    }
}

fn non_empty(v: &str) -> Option<&str> {
    Some(v).filter(|s| !s.is_empty())
}

#[derive(Debug, Parser)]
#[command(
    name = "attacknet",
    version,
    about = "Train and evaluate the AttackNet liveness-detection CNN"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, clap::Args)]
pub struct Common {
    /// key=value run configuration
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// overrides the configured seed
    #[arg(long)]
    pub seed: Option<u64>,
    /// output directory (overrides `out_dir`)
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SplitArg {
    Train,
    Val,
    Test,
    All,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum TargetArg {
    Bonafide,
    Attack,
}

impl From<TargetArg> for Label {
    fn from(t: TargetArg) -> Self {
        match t {
            TargetArg::Bonafide => Label::Bonafide,
            TargetArg::Attack => Label::Attack,
        }
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train on one dataset; writes model.atkn, trainlog.csv and report.{csv,txt}
    Train {
        #[command(flatten)]
        common: Common,
        /// dataset root (overrides `dataset`)
        #[arg(long)]
        dataset: Option<PathBuf>,
    },
    /// Evaluate a checkpoint; writes report.csv and roc.csv
    Eval {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long, value_enum, default_value = "val")]
        split: SplitArg,
    },
    /// Train on each dataset and evaluate on all of them
    CrossEval {
        #[command(flatten)]
        common: Common,
        /// dataset roots (default: `datasets`)
        roots: Vec<PathBuf>,
    },
    /// Train once on the union of several datasets, report per source
    Fused {
        #[command(flatten)]
        common: Common,
        roots: Vec<PathBuf>,
    },
    /// Forward-pass FLOP count
    Flops {
        #[command(flatten)]
        common: Common,
    },
    /// Trainable parameter count
    Params {
        #[command(flatten)]
        common: Common,
    },
    /// Single-image inference latency
    Bench {
        #[command(flatten)]
        common: Common,
        /// checkpoint to time (default: a freshly initialized model)
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long, default_value_t = 50_000)]
        iterations: usize,
    },
    /// Grad-CAM overlay for one image
    Gradcam {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        image: PathBuf,
        #[arg(long, value_enum)]
        target: TargetArg,
        /// output PPM path
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0.5)]
        alpha: f32,
        /// write input | overlay side by side
        #[arg(long)]
        composite: bool,
    },
}

fn effective_config(common: &Common) -> Result<RunConfig> {
    let mut run = match &common.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = common.seed {
        run.model.seed = seed;
    }
    if let Some(out) = &common.out {
        run.out_dir = Some(out.clone());
    }
    Ok(run)
}

fn output_dir(run: &RunConfig) -> Result<PathBuf> {
    let dir = run
        .out_dir
        .clone()
        .ok_or_else(|| Error::Config("no output directory (use --out or out_dir)".into()))?;
    fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    write_atomic(&dir.join("config.txt"), run.to_key_values().as_bytes())?;
    Ok(dir)
}

fn dataset_name(root: &Path) -> String {
    root.file_name()
        .map(|n| n.to_string_lossy().to_string())
        .filter(|n| !n.is_empty())
        .unwrap_or_else(|| "dataset".into())
}

fn load_root(root: &Path, run: &RunConfig, name: &str) -> Result<(DatasetManifest, LoadedDataset)> {
    let manifest = load_dataset(root, name, &run.split_options())?;
    let loaded = LoadedDataset::from_manifest(&manifest, run.model.input_h, run.model.input_w)?;
    Ok((manifest, loaded))
}

fn load_roots(roots: &[PathBuf], run: &RunConfig) -> Result<Vec<LoadedDataset>> {
    let mut names: Vec<String> = Vec::new();
    let mut out = Vec::new();
    for root in roots {
        let mut name = dataset_name(root);
        if names.contains(&name) {
            name = format!("{name}_{}", names.len() + 1);
        }
        names.push(name.clone());
        out.push(load_root(root, run, &name)?.1);
    }
    Ok(out)
}

fn cmd_train(common: &Common, dataset: Option<PathBuf>) -> Result<String> {
    let mut run = effective_config(common)?;
    if dataset.is_some() {
        run.dataset = dataset;
    }
    let root = run
        .dataset
        .clone()
        .ok_or_else(|| Error::Config("no dataset (use --dataset or the dataset key)".into()))?;
    let name = dataset_name(&root);
    let (_, data) = load_root(&root, &run, &name)?;
    let dir = output_dir(&run)?;
    let trained = train_run(&name, &data.train, &data.val, &run.model, run.model.seed)?;
    let report = evaluate_report(&trained.model, &data.val)?;
    write_atomic(&dir.join("trainlog.csv"), trained.log.to_csv().as_bytes())?;
    write_atomic(&dir.join("report.csv"), report.to_csv().as_bytes())?;
    write_atomic(&dir.join("report.txt"), report.render_text().as_bytes())?;
    save_checkpoint(&trained.model, &dir.join("model.atkn"))?;
    let log = &trained.log;
    Ok(format!(
        "epochs,{}\nbest_epoch,{}\nstop,{}\n{}",
        log.records.len(),
        log.best_epoch,
        log.stop_reason.name(),
        report.render_text()
    ))
}

fn cmd_eval(common: &Common, checkpoint: &Path, dataset: &Path, split: SplitArg) -> Result<String> {
    let mut run = effective_config(common)?;
    let model = load_checkpoint(checkpoint)?;
    // the split is reproduced from the training seed unless overridden
    run.model = ModelConfig {
        seed: common.seed.unwrap_or(model.config().seed),
        ..model.config().clone()
    };
    let manifest = load_dataset(dataset, &dataset_name(dataset), &run.split_options())?;
    let split = match split {
        SplitArg::Train => Some(Split::Train),
        SplitArg::Val => Some(Split::Val),
        SplitArg::Test => Some(Split::Test),
        SplitArg::All => None,
    };
    let set = manifest.load_images(split, run.model.input_h, run.model.input_w)?;
    if set.is_empty() {
        return Err(Error::Dataset(format!(
            "{} has no samples in the requested split",
            dataset.display()
        )));
    }
    let dir = output_dir(&run)?;
    let report = evaluate_report(&model, &set)?;
    let probs = predict_set(&model, &set)?;
    let scores: Vec<f32> = probs
        .data()
        .chunks(2)
        .map(|r| r[Label::Bonafide.index()])
        .collect();
    let roc_text = match roc(&scores, set.labels()) {
        Ok(curve) => {
            write_atomic(&dir.join("roc.csv"), curve.to_csv().as_bytes())?;
            format!("auc,{:.6}\n", curve.auc)
        }
        Err(Error::Undefined(msg)) => format!("auc,undefined ({msg})\n"),
        Err(e) => return Err(e),
    };
    write_atomic(&dir.join("report.csv"), report.to_csv().as_bytes())?;
    Ok(format!("{}{roc_text}", report.render_text()))
}

fn dataset_roots(run: &RunConfig, roots: Vec<PathBuf>) -> Vec<PathBuf> {
    if roots.is_empty() {
        run.datasets.clone()
    } else {
        roots
    }
}

fn cmd_cross_eval(common: &Common, roots: Vec<PathBuf>) -> Result<String> {
    let mut run = effective_config(common)?;
    run.datasets = dataset_roots(&run, roots);
    if run.datasets.is_empty() {
        return Err(Error::InvalidArgument(
            "cross-eval needs at least one dataset root".into(),
        ));
    }
    let data = load_roots(&run.datasets, &run)?;
    let dir = output_dir(&run)?;
    let opts = ExperimentOptions {
        config: run.model.clone(),
        seed: run.model.seed,
    };
    let (matrix, runs) = run_cross_eval(&data, &opts)?;
    write_cross_eval_artifacts(&dir, &matrix, &runs)?;
    Ok(crate::protocol::render_matrix(&matrix).0)
}

fn cmd_fused(common: &Common, roots: Vec<PathBuf>) -> Result<String> {
    let mut run = effective_config(common)?;
    run.datasets = dataset_roots(&run, roots);
    if run.datasets.len() < 2 {
        return Err(Error::InvalidArgument(format!(
            "fused training needs at least 2 dataset roots, got {}",
            run.datasets.len()
        )));
    }
    let data = load_roots(&run.datasets, &run)?;
    let dir = output_dir(&run)?;
    let opts = ExperimentOptions {
        config: run.model.clone(),
        seed: run.model.seed,
    };
    let outcome = run_fused(&data, &opts)?;
    write_fused_artifacts(&dir, &outcome)?;
    Ok(outcome.render_text())
}

fn cmd_flops(common: &Common) -> Result<String> {
    let run = effective_config(common)?;
    let f = FlopBreakdown::for_config(&run.model);
    Ok(format!(
        "conv_flops,{}\ndense_flops,{}\nflops,{}\nmflops,{:.1}\npointwise_flops,{}\nflops_with_pointwise,{}\n",
        f.conv(),
        f.dense(),
        f.total(),
        f.total() as f64 / 1e6,
        f.pointwise(),
        f.total_with_pointwise()
    ))
}

fn cmd_params(common: &Common) -> Result<String> {
    let run = effective_config(common)?;
    let model = build_model(&run.model, &mut Prng::new(run.model.seed))?;
    let n = param_count(&model);
    Ok(format!("params,{n}\nparams_M,{:.1}\n", n as f64 / 1e6))
}

fn cmd_bench(common: &Common, checkpoint: Option<&Path>, iterations: usize) -> Result<String> {
    let run = effective_config(common)?;
    let model: Model = match checkpoint {
        Some(p) => load_checkpoint(p)?,
        None => build_model(&run.model, &mut Prng::new(run.model.seed))?,
    };
    Ok(bench(&model, iterations, run.model.seed)?.render())
}

fn cmd_gradcam(
    checkpoint: &Path,
    image: &Path,
    target: Label,
    out: &Path,
    alpha: f32,
    composite: bool,
) -> Result<String> {
    let model = load_checkpoint(checkpoint)?;
    let cfg = model.config();
    let img = decode_image(image)?;
    let x = resize_tensor(&img.pixels, cfg.input_h, cfg.input_w)?;
    let cam = grad_cam(&model, &x, target)?;
    write_overlay(out, &cam, &x, alpha, composite)?;
    let (r, c) = cam.raw_argmax();
    Ok(format!(
        "target,{target}\nraw_argmax_row,{r}\nraw_argmax_col,{c}\n"
    ))
}

/// Executes one parsed command and returns its standard output.
pub fn execute(cli: Cli) -> Result<String> {
    match cli.command {
        Command::Train { common, dataset } => cmd_train(&common, dataset),
        Command::Eval {
            common,
            checkpoint,
            dataset,
            split,
        } => cmd_eval(&common, &checkpoint, &dataset, split),
        Command::CrossEval { common, roots } => cmd_cross_eval(&common, roots),
        Command::Fused { common, roots } => cmd_fused(&common, roots),
        Command::Flops { common } => cmd_flops(&common),
        Command::Params { common } => cmd_params(&common),
        Command::Bench {
            common,
            checkpoint,
            iterations,
        } => cmd_bench(&common, checkpoint.as_deref(), iterations),
        Command::Gradcam {
            checkpoint,
            image,
            target,
            out,
            alpha,
            composite,
        } => cmd_gradcam(&checkpoint, &image, target.into(), &out, alpha, composite),
    }
}
