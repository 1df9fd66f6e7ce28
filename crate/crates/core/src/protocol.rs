//! Cross-dataset experiments: the train-on-one, evaluate-on-all matrix and
//! fused training over several sources.
//!
//! Every evaluation uses the target dataset's validation split. Run `i`
//! draws its randomness from `derive_seed(seed, i)`, so appending a dataset
//! leaves earlier runs unchanged.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::data::{ImageSet, Label, LoadedDataset};
use crate::error::{Error, Result};
use crate::io::write_atomic;
use crate::metrics::EvalReport;
use crate::model::{build_model, save_checkpoint, Model, ModelConfig};
use crate::rng::{derive_seed, Prng};
use crate::trainer::{argmax_rows, fit, predict_set, TrainLog};

/// Stream index used for the fused run's seed.
const FUSED_STREAM: u64 = u64::MAX;

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentOptions {
    pub config: ModelConfig,
    pub seed: u64,
}

/// A fitted model together with its training log.
#[derive(Debug, Clone)]
pub struct TrainedRun {
    pub name: String,
    pub model: Model,
    pub log: TrainLog,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CrossEvalMatrix {
    pub train_names: Vec<String>,
    pub eval_names: Vec<String>,
    /// `cells[i][j]`: model trained on `train_names[i]`, scored on `eval_names[j]`.
    pub cells: Vec<Vec<EvalReport>>,
}

impl CrossEvalMatrix {
    pub fn cell(&self, train: usize, eval: usize) -> &EvalReport {
        &self.cells[train][eval]
    }

    pub fn hter_grid(&self) -> Vec<Vec<f32>> {
        self.cells
            .iter()
            .map(|row| row.iter().map(|r| r.hter).collect())
            .collect()
    }
}

/// Scores `model` on `set` with the argmax decision rule.
pub fn evaluate_report(model: &Model, set: &ImageSet) -> Result<EvalReport> {
    let probs = predict_set(model, set)?;
    let preds: Vec<Label> = argmax_rows(&probs)
        .into_iter()
        .map(|i| Label::from_index(i).expect("two-class output"))
        .collect();
    EvalReport::from_predictions(&preds, set.labels())
}

/// Builds and fits a fresh model whose randomness comes from `seed`.
pub fn train_run(
    name: &str,
    train: &ImageSet,
    val: &ImageSet,
    cfg: &ModelConfig,
    seed: u64,
) -> Result<TrainedRun> {
    let model = build_model(cfg, &mut Prng::new(derive_seed(seed, 0)))?;
    let (model, log) = fit(model, train, val, &mut Prng::new(derive_seed(seed, 1)))?;
    Ok(TrainedRun {
        name: name.to_string(),
        model,
        log,
    })
}

fn check_names<'a>(names: impl Iterator<Item = &'a str>) -> Result<()> {
    let mut seen: Vec<&str> = Vec::new();
    for n in names {
        if seen.contains(&n) {
            return Err(Error::InvalidArgument(format!(
                "dataset name {n} used twice"
            )));
        }
        seen.push(n);
    }
    Ok(())
}

/// Trains on each of `train_sets` and evaluates on every one of `eval_sets`.
pub fn run_cross_eval_grid(
    train_sets: &[LoadedDataset],
    eval_sets: &[LoadedDataset],
    opts: &ExperimentOptions,
) -> Result<(CrossEvalMatrix, Vec<TrainedRun>)> {
    if train_sets.is_empty() || eval_sets.is_empty() {
        return Err(Error::InvalidArgument(
            "cross evaluation needs at least one dataset".into(),
        ));
    }
    check_names(train_sets.iter().map(|d| d.name.as_str()))?;
    check_names(eval_sets.iter().map(|d| d.name.as_str()))?;
    let mut runs = Vec::new();
    let mut cells = Vec::new();
    for (i, d) in train_sets.iter().enumerate() {
        let run = train_run(
            &d.name,
            &d.train,
            &d.val,
            &opts.config,
            derive_seed(opts.seed, i as u64),
        )?;
        let row = eval_sets
            .iter()
            .map(|e| evaluate_report(&run.model, &e.val))
            .collect::<Result<Vec<_>>>()?;
        cells.push(row);
        runs.push(run);
    }
    let matrix = CrossEvalMatrix {
        train_names: train_sets.iter().map(|d| d.name.clone()).collect(),
        eval_names: eval_sets.iter().map(|d| d.name.clone()).collect(),
        cells,
    };
    Ok((matrix, runs))
}

/// The square matrix: every dataset trains one model and is evaluated by all.
pub fn run_cross_eval(
    datasets: &[LoadedDataset],
    opts: &ExperimentOptions,
) -> Result<(CrossEvalMatrix, Vec<TrainedRun>)> {
    run_cross_eval_grid(datasets, datasets, opts)
}

/// Per-class rows for one report: the attack row reads the counts with
/// attack as the positive class, which swaps FAR and FRR.
fn class_rows(r: &EvalReport) -> [(Label, f32, f32, f32, f32, f32); 2] {
    [
        (
            Label::Bonafide,
            r.bonafide.precision.value,
            r.bonafide.recall.value,
            r.bonafide.f1.value,
            r.far,
            r.frr,
        ),
        (
            Label::Attack,
            r.attack.precision.value,
            r.attack.recall.value,
            r.attack.f1.value,
            r.frr,
            r.far,
        ),
    ]
}

/// Text blocks (one per cell plus an HTER grid) and the flat CSV form.
pub fn render_matrix(m: &CrossEvalMatrix) -> (String, String) {
    let mut text = String::new();
    let mut csv = String::from("train,eval,class,precision,recall,f1,far,frr,hter\n");
    for (i, train) in m.train_names.iter().enumerate() {
        for (j, eval) in m.eval_names.iter().enumerate() {
            let r = m.cell(i, j);
            let _ = writeln!(text, "== train {train} / eval {eval} ==");
            let _ = writeln!(
                text,
                "{:<10} {:>10} {:>10} {:>10} {:>10} {:>10}",
                "class", "precision", "recall", "f1", "far", "frr"
            );
            for (class, p, rc, f, far, frr) in class_rows(r) {
                let _ = writeln!(
                    text,
                    "{:<10} {p:>10.6} {rc:>10.6} {f:>10.6} {far:>10.6} {frr:>10.6}",
                    class.name()
                );
                let _ = writeln!(
                    csv,
                    "{train},{eval},{class},{p:.6},{rc:.6},{f:.6},{far:.6},{frr:.6},{:.6}",
                    r.hter
                );
            }
            let _ = writeln!(text, "hter,{:.6}\n", r.hter);
        }
    }
    let _ = writeln!(text, "== HTER (rows train, columns eval) ==");
    let width = m
        .eval_names
        .iter()
        .map(|n| n.len())
        .max()
        .unwrap_or(0)
        .max(8);
    let label_width = m
        .train_names
        .iter()
        .map(|n| n.len())
        .max()
        .unwrap_or(0)
        .max(5);
    let _ = write!(text, "{:<label_width$}", "train");
    for e in &m.eval_names {
        let _ = write!(text, " {e:>width$}");
    }
    text.push('\n');
    for (i, t) in m.train_names.iter().enumerate() {
        let _ = write!(text, "{t:<label_width$}");
        for r in &m.cells[i] {
            let _ = write!(text, " {:>width$.6}", r.hter);
        }
        text.push('\n');
    }
    (text, csv)
}

#[derive(Debug, Clone)]
pub struct FusedOutcome {
    /// One report per source, in input order.
    pub reports: Vec<(String, EvalReport)>,
    pub run: TrainedRun,
}

impl FusedOutcome {
    pub fn log(&self) -> &TrainLog {
        &self.run.log
    }

    /// `source,class,precision,recall,f1,far,frr,hter` rows.
    pub fn to_csv(&self) -> String {
        let mut csv = String::from("source,class,precision,recall,f1,far,frr,hter\n");
        for (source, r) in &self.reports {
            for (class, p, rc, f, far, frr) in class_rows(r) {
                let _ = writeln!(
                    csv,
                    "{source},{class},{p:.6},{rc:.6},{f:.6},{far:.6},{frr:.6},{:.6}",
                    r.hter
                );
            }
        }
        csv
    }

    pub fn render_text(&self) -> String {
        let mut text = String::new();
        for (source, r) in &self.reports {
            let _ = writeln!(text, "== fused model / eval {source} ==");
            text.push_str(&r.render_text());
            text.push('\n');
        }
        text
    }
}

/// Trains one model on the union of all training splits (validation
/// splits pooled for early stopping) and reports per source.
pub fn run_fused(datasets: &[LoadedDataset], opts: &ExperimentOptions) -> Result<FusedOutcome> {
    if datasets.len() < 2 {
        return Err(Error::InvalidArgument(format!(
            "fused training needs at least 2 datasets, got {}",
            datasets.len()
        )));
    }
    check_names(datasets.iter().map(|d| d.name.as_str()))?;
    let trains: Vec<ImageSet> = datasets
        .iter()
        .map(|d| d.train.with_source(&d.name))
        .collect();
    let vals: Vec<ImageSet> = datasets
        .iter()
        .map(|d| d.val.with_source(&d.name))
        .collect();
    let train = ImageSet::concat(&trains.iter().collect::<Vec<_>>())?;
    let val = ImageSet::concat(&vals.iter().collect::<Vec<_>>())?;
    let name = datasets
        .iter()
        .map(|d| d.name.as_str())
        .collect::<Vec<_>>()
        .join("+");
    let run = train_run(
        &name,
        &train,
        &val,
        &opts.config,
        derive_seed(opts.seed, FUSED_STREAM),
    )?;
    let reports = datasets
        .iter()
        .map(|d| {
            Ok((
                d.name.clone(),
                evaluate_report(&run.model, &val.filter_source(&d.name))?,
            ))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(FusedOutcome { reports, run })
}

/// Replaces characters that are awkward in file names with `_`.
pub fn file_stem(name: &str) -> String {
    name.chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.' | '+') {
                c
            } else {
                '_'
            }
        })
        .collect()
}

fn write_run(dir: &Path, run: &TrainedRun) -> Result<()> {
    let stem = file_stem(&run.name);
    write_atomic(
        &dir.join(format!("trainlog_{stem}.csv")),
        run.log.to_csv().as_bytes(),
    )?;
    save_checkpoint(&run.model, &dir.join(format!("model_{stem}.atkn")))
}

/// Writes `matrix.txt`, `matrix.csv`, and a log and checkpoint per run.
pub fn write_cross_eval_artifacts(
    dir: &Path,
    matrix: &CrossEvalMatrix,
    runs: &[TrainedRun],
) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    for run in runs {
        write_run(dir, run)?;
    }
    let (text, csv) = render_matrix(matrix);
    write_atomic(&dir.join("matrix.csv"), csv.as_bytes())?;
    write_atomic(&dir.join("matrix.txt"), text.as_bytes())
}

/// Writes `fused_report.txt`, `fused_report.csv`, the fused run's log and checkpoint.
pub fn write_fused_artifacts(dir: &Path, outcome: &FusedOutcome) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write_run(dir, &outcome.run)?;
    write_atomic(&dir.join("fused_report.csv"), outcome.to_csv().as_bytes())?;
    write_atomic(
        &dir.join("fused_report.txt"),
        outcome.render_text().as_bytes(),
    )
}
