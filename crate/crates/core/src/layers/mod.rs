//! Forward and reverse-mode backward passes for every layer kind in the
//! network. Each forward returns a cache that its backward consumes, so a
//! cache can be used exactly once.

mod activation;
mod batchnorm;
mod conv;
mod dense;
mod dropout;
mod pool;

pub use activation::{
    cross_entropy_loss, leaky_relu_backward, leaky_relu_forward, residual_add,
    residual_add_backward, softmax, tanh_backward, tanh_forward, LeakyReluCache, TanhCache,
    PROB_FLOOR,
};
pub use batchnorm::{
    batchnorm_backward, batchnorm_forward, batchnorm_forward_infer, batchnorm_forward_train,
    BatchNormCache, BatchNormGrads, BatchNormState, BatchStats, DEFAULT_EPSILON, DEFAULT_MOMENTUM,
};
pub use conv::{conv2d_backward, conv2d_forward, Conv2dCache, Conv2dGrads, KERNEL};
pub use dense::{dense_backward, dense_forward, DenseCache, DenseGrads};
pub use dropout::{dropout_backward, dropout_forward, DropoutCache};
pub use pool::{maxpool2x2_backward, maxpool2x2_forward, MaxPoolCache};

pub(crate) use activation::check_alpha;
pub(crate) use dropout::check_rate;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Mode {
    /// Batch statistics and active dropout.
    Train,
    /// Running statistics, dropout disabled.
    Infer,
}
