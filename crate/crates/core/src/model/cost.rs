//! Parameter and FLOP accounting.
//!
//! FLOP convention (one image, inference):
//!
//! | layer            | FLOPs                                   |
//! |------------------|-----------------------------------------|
//! | conv 3×3         | `2·9·Cin·Cout·H·W` + `Cout·H·W` (bias)  |
//! | dense            | `2·D·M` + `M` (bias)                    |
//! | batchnorm        | 2 per element (folded scale and shift)  |
//! | activation       | 1 per element (LeakyReLU, tanh)         |
//! | residual add     | 1 per element                           |
//! | 2×2 max pool     | 3 per output element                    |
//! | softmax          | 4 per class                             |
//!
//! The headline figure ([`FlopBreakdown::total`]) counts the weight-bearing
//! layers only (convolutions and dense layers, bias adds included). The
//! pointwise terms are reported separately in
//! [`FlopBreakdown::pointwise`].

use super::{Model, ModelConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct FlopBreakdown {
    pub conv_mul_add: u64,
    pub conv_bias: u64,
    pub dense_mul_add: u64,
    pub dense_bias: u64,
    pub batchnorm: u64,
    pub activation: u64,
    pub residual: u64,
    pub pool: u64,
    pub softmax: u64,
}

impl FlopBreakdown {
    pub fn for_config(cfg: &ModelConfig) -> Self {
        let mut b = Self::default();
        let (f1, f2) = (cfg.phase1_filters as u64, cfg.phase2_filters as u64);
        let hw1 = (cfg.input_h * cfg.input_w) as u64;
        let hw2 = hw1 / 4;
        let convs = [
            (cfg.input_channels as u64, f1, hw1),
            (f1, f1, hw1),
            (f1, f1, hw1),
            (f1, f2, hw2),
            (f2, f2, hw2),
            (f2, f2, hw2),
        ];
        for (cin, cout, hw) in convs {
            b.conv_mul_add += 2 * 9 * cin * cout * hw;
            b.conv_bias += cout * hw;
            b.batchnorm += 2 * cout * hw;
        }
        let (a1, a2) = (f1 * hw1, f2 * hw2);
        // two in-block activations plus the post-add one, per phase
        b.activation += 3 * a1 + 3 * a2;
        b.residual += a1 + a2;
        b.pool += 3 * (a1 / 4) + 3 * (a2 / 4);

        let flat = cfg.flatten_dim() as u64;
        let width = cfg.dense_width as u64;
        let classes = cfg.num_classes as u64;
        b.dense_mul_add += 2 * flat * width + 2 * width * classes;
        b.dense_bias += width + classes;
        b.activation += width;
        b.softmax += 4 * classes;
        b
    }

    pub fn conv(&self) -> u64 {
        self.conv_mul_add + self.conv_bias
    }

    pub fn dense(&self) -> u64 {
        self.dense_mul_add + self.dense_bias
    }

    pub fn pointwise(&self) -> u64 {
        self.batchnorm + self.activation + self.residual + self.pool + self.softmax
    }

    /// Headline FLOP count: convolutions plus dense layers.
    pub fn total(&self) -> u64 {
        self.conv() + self.dense()
    }

    pub fn total_with_pointwise(&self) -> u64 {
        self.total() + self.pointwise()
    }
}

/// Trainable scalars: conv/dense weights and biases plus BN gamma and beta.
pub fn param_count(model: &Model) -> usize {
    model.params().iter().map(|t| t.len()).sum()
}

pub fn flop_count(model: &Model) -> u64 {
    FlopBreakdown::for_config(model.config()).total()
}
