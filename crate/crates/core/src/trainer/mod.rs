//! Optimization: Adam, augmentation, and the early-stopping training loop.

mod adam;
mod augment;
mod fit;

pub use adam::{adam_step, AdamConfig};
pub use augment::{apply_affine, augment, AffineParams, AugmentSpec};
pub use fit::{
    argmax_rows, evaluate_loss_acc, fit, fit_with_observer, predict_set, run_epochs, train_epoch,
    train_step, EarlyStopping, EpochRecord, StopReason, TrainLog, EVAL_CHUNK,
};
