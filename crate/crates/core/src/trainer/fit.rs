use std::ops::ControlFlow;

use super::augment::augment;
use crate::data::{ImageSet, Label};
use crate::error::{Error, Result};
use crate::layers::{cross_entropy_loss, Mode};
use crate::model::Model;
use crate::rng::Prng;
use crate::tensor::Tensor;

/// Batch size used for inference-only passes.
pub const EVAL_CHUNK: usize = 64;

/// Metrics recorded after one epoch. `epoch` is 1-based.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub train_acc: f64,
    pub val_loss: f64,
    pub val_acc: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    MaxEpochs,
    EarlyStop,
    /// An epoch observer asked to stop.
    Halted,
}

impl StopReason {
    pub fn name(self) -> &'static str {
        match self {
            StopReason::MaxEpochs => "max-epochs",
            StopReason::EarlyStop => "early-stop",
            StopReason::Halted => "halted",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainLog {
    pub records: Vec<EpochRecord>,
    pub stop_reason: StopReason,
    /// 1-based epoch with the lowest validation loss.
    pub best_epoch: usize,
}

impl TrainLog {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("epoch,train_loss,train_acc,val_loss,val_acc\n");
        for r in &self.records {
            out.push_str(&format!(
                "{},{:.6},{:.6},{:.6},{:.6}\n",
                r.epoch, r.train_loss, r.train_acc, r.val_loss, r.val_acc
            ));
        }
        out
    }
}

/// Patience rule over validation loss; any strict decrease counts as an
/// improvement and NaN never does.
#[derive(Debug, Clone, PartialEq)]
pub struct EarlyStopping {
    patience: usize,
    best_loss: f64,
    best_epoch: usize,
    since_best: usize,
}

impl EarlyStopping {
    pub fn new(patience: usize) -> Self {
        Self {
            patience,
            best_loss: f64::INFINITY,
            best_epoch: 0,
            since_best: 0,
        }
    }

    /// Records epoch `epoch`'s loss; returns true when it is a new best.
    pub fn observe(&mut self, epoch: usize, loss: f64) -> bool {
        if loss < self.best_loss {
            self.best_loss = loss;
            self.best_epoch = epoch;
            self.since_best = 0;
            true
        } else {
            self.since_best += 1;
            false
        }
    }

    pub fn should_stop(&self) -> bool {
        self.since_best >= self.patience
    }

    /// 0 until some loss has been observed.
    pub fn best_epoch(&self) -> usize {
        self.best_epoch
    }

    pub fn best_loss(&self) -> f64 {
        self.best_loss
    }
}

/// Drives `epoch_fn` for up to `max_epochs` epochs under the patience rule
/// and returns a copy of the model taken right after its best epoch.
///
/// `epoch_fn(model, epoch)` trains one epoch and reports its metrics;
/// `observer` sees every record after the stopping bookkeeping.
pub fn run_epochs(
    model: &mut Model,
    max_epochs: usize,
    patience: usize,
    mut epoch_fn: impl FnMut(&mut Model, usize) -> Result<EpochRecord>,
    mut observer: impl FnMut(&Model, &EpochRecord) -> ControlFlow<()>,
) -> Result<(Model, TrainLog)> {
    if max_epochs == 0 || patience == 0 {
        return Err(Error::Config(
            "max_epochs and patience must be positive".into(),
        ));
    }
    let mut stopper = EarlyStopping::new(patience);
    let mut best: Option<Model> = None;
    let mut records = Vec::new();
    let mut stop_reason = StopReason::MaxEpochs;
    for epoch in 1..=max_epochs {
        let mut record = epoch_fn(model, epoch)?;
        record.epoch = epoch;
        if stopper.observe(epoch, record.val_loss) {
            best = Some(model.clone());
        }
        records.push(record);
        if observer(model, &record).is_break() {
            stop_reason = StopReason::Halted;
            break;
        }
        if stopper.should_stop() {
            stop_reason = StopReason::EarlyStop;
            break;
        }
    }
    let best = best.ok_or_else(|| Error::Undefined("validation loss was never finite".into()))?;
    Ok((
        best,
        TrainLog {
            records,
            stop_reason,
            best_epoch: stopper.best_epoch(),
        },
    ))
}

fn check_sets(model: &Model, train: &ImageSet, val: &ImageSet) -> Result<()> {
    if train.is_empty() || val.is_empty() {
        return Err(Error::Dataset(format!(
            "training needs non-empty splits (train {}, val {})",
            train.len(),
            val.len()
        )));
    }
    if Label::ALL.iter().any(|&l| train.count(l) == 0) {
        return Err(Error::Dataset(
            "training split must contain both classes".into(),
        ));
    }
    let cfg = model.config();
    let want = [cfg.input_channels, cfg.input_h, cfg.input_w];
    for set in [train, val] {
        if set.image_shape() != Some(&want[..]) {
            return Err(Error::Shape(format!(
                "images are {:?}, model expects {want:?}",
                set.image_shape().unwrap_or(&[])
            )));
        }
    }
    Ok(())
}

/// One optimizer step on a batch: training-mode forward, cross-entropy,
/// running-statistics update, backward, Adam. Returns the batch loss.
pub fn train_step(model: &mut Model, x: &Tensor, labels: &[usize], rng: &mut Prng) -> Result<f32> {
    let trace = model.forward(x, Mode::Train, Some(rng))?;
    let (loss, dlogits) = cross_entropy_loss(&trace.probs, labels)?;
    model.commit_batch_stats(&trace);
    let grads = model.backward(trace, &dlogits)?;
    model.apply_gradients(&grads)?;
    Ok(loss)
}

/// Trains one epoch over `train` in a freshly shuffled order.
pub fn train_epoch(model: &mut Model, train: &ImageSet, rng: &mut Prng) -> Result<()> {
    let batch_size = model.config().batch_size;
    let augment_spec = model.config().augment.clone();
    let labels = train.label_indices();
    let mut order: Vec<usize> = (0..train.len()).collect();
    rng.shuffle(&mut order);
    for chunk in order.chunks(batch_size) {
        let x = match &augment_spec {
            None => train.batch(chunk)?,
            Some(spec) => {
                let mut data = Vec::new();
                let mut shape = vec![chunk.len()];
                for &i in chunk {
                    let img = augment(&train.images()[i], spec, rng)?;
                    if shape.len() == 1 {
                        shape.extend_from_slice(img.shape());
                    }
                    data.extend_from_slice(img.data());
                }
                Tensor::new(&shape, data)?
            }
        };
        let y: Vec<usize> = chunk.iter().map(|&i| labels[i]).collect();
        train_step(model, &x, &y, rng)?;
    }
    Ok(())
}

/// Inference-mode class probabilities `[N, 2]` for every image of `set`.
pub fn predict_set(model: &Model, set: &ImageSet) -> Result<Tensor> {
    if set.is_empty() {
        return Err(Error::Dataset("cannot evaluate an empty set".into()));
    }
    let idx: Vec<usize> = (0..set.len()).collect();
    let mut data = Vec::with_capacity(set.len() * 2);
    let mut classes = 0;
    for chunk in idx.chunks(EVAL_CHUNK) {
        let probs = model.predict(&set.batch(chunk)?)?;
        classes = probs.shape()[1];
        data.extend_from_slice(probs.data());
    }
    Tensor::new(&[set.len(), classes], data)
}

/// Predicted class per row of `[N, K]` probabilities; ties go to the lower index.
pub fn argmax_rows(probs: &Tensor) -> Vec<usize> {
    let k = probs.shape()[1];
    probs
        .data()
        .chunks(k)
        .map(|row| {
            let mut best = 0;
            for (j, &p) in row.iter().enumerate() {
                if p > row[best] {
                    best = j;
                }
            }
            best
        })
        .collect()
}

/// Mean cross-entropy and accuracy of the inference-mode model on `set`.
pub fn evaluate_loss_acc(model: &Model, set: &ImageSet) -> Result<(f64, f64)> {
    let probs = predict_set(model, set)?;
    Ok(loss_acc_from_probs(&probs, &set.label_indices()))
}

pub(crate) fn loss_acc_from_probs(probs: &Tensor, labels: &[usize]) -> (f64, f64) {
    let k = probs.shape()[1];
    let preds = argmax_rows(probs);
    let mut loss = 0.0f64;
    let mut correct = 0usize;
    for ((row, &y), &p) in probs.data().chunks(k).zip(labels).zip(&preds) {
        loss -= (row[y] as f64).max(crate::layers::PROB_FLOOR).ln();
        correct += usize::from(p == y);
    }
    let n = labels.len() as f64;
    (loss / n, correct as f64 / n)
}

/// Trains `model` on `train` with early stopping on `val` and returns the
/// best-epoch model with its log.
pub fn fit(
    model: Model,
    train: &ImageSet,
    val: &ImageSet,
    rng: &mut Prng,
) -> Result<(Model, TrainLog)> {
    fit_with_observer(model, train, val, rng, |_, _| ControlFlow::Continue(()))
}

/// [`fit`] with a per-epoch observer that may halt training early.
pub fn fit_with_observer(
    mut model: Model,
    train: &ImageSet,
    val: &ImageSet,
    rng: &mut Prng,
    observer: impl FnMut(&Model, &EpochRecord) -> ControlFlow<()>,
) -> Result<(Model, TrainLog)> {
    check_sets(&model, train, val)?;
    let (max_epochs, patience) = (model.config().max_epochs, model.config().patience);
    run_epochs(
        &mut model,
        max_epochs,
        patience,
        |m, epoch| {
            train_epoch(m, train, rng)?;
            let (train_loss, train_acc) = evaluate_loss_acc(m, train)?;
            let (val_loss, val_acc) = evaluate_loss_acc(m, val)?;
            Ok(EpochRecord {
                epoch,
                train_loss,
                train_acc,
                val_loss,
                val_acc,
            })
        },
        observer,
    )
}
