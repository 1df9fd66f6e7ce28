//! AttackNet: a compact residual CNN for face liveness detection, with the
//! tensor and layer kernels, training loop, metric suite, Grad-CAM and the
//! cross-dataset experiment driver needed to train and evaluate it.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bench;
pub mod cli;
pub mod data;
pub mod error;
pub mod gradcam;
pub mod io;
pub mod layers;
pub mod metrics;
pub mod model;
pub mod protocol;
pub mod rng;
pub mod synthetic;
pub mod tensor;
pub mod trainer;

pub use error::{CheckpointError, DecodeError, Error, Result};
pub use rng::Prng;
pub use tensor::{Scalar, Tensor};
