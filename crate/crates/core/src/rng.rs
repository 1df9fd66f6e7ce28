//! Seeded pseudo-random source shared by initialization, shuffling,
//! augmentation and dropout.
//!
//! The bit stream is ChaCha8 (`rand_chacha::ChaCha8Rng`) seeded with
//! `seed_from_u64`, which is portable across platforms. Derived values:
//!
//! * `uniform_f32`: top 24 bits of one `u32` word times 2⁻²⁴, in `[0, 1)`.
//! * `uniform_f64`: top 53 bits of one `u64` word times 2⁻⁵³, in `[0, 1)`.
//! * `normal`: Box–Muller on two `uniform_f64` draws, `sqrt(-2 ln(1-u1)) · cos(2π u2)`.
//! * `below(n)`: rejection sampling on `u64` words (no modulo bias).

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::tensor::{Scalar, Tensor};

#[derive(Debug, Clone)]
pub struct Prng {
    inner: ChaCha8Rng,
}

/// Mixes a base seed with a stream index (SplitMix64 finalizer).
///
/// Used to give each independent run its own seed without sharing a stream.
pub fn derive_seed(seed: u64, stream: u64) -> u64 {
    let mut z = seed.wrapping_add(stream.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

impl Prng {
    pub fn new(seed: u64) -> Self {
        Self {
            inner: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn next_u32(&mut self) -> u32 {
        self.inner.next_u32()
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    pub fn uniform_f32(&mut self) -> f32 {
        (self.next_u32() >> 8) as f32 * (1.0 / (1u32 << 24) as f32)
    }

    pub fn uniform_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform in `[lo, hi)`; errors unless `lo < hi`.
    pub fn uniform_range(&mut self, lo: f64, hi: f64) -> Result<f64> {
        if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "uniform range requires lo < hi, got [{lo}, {hi})"
            )));
        }
        let v = lo + (hi - lo) * self.uniform_f64();
        Ok(if v >= hi { lo.max(hi.next_down()) } else { v })
    }

    pub fn normal(&mut self) -> f64 {
        let u1 = self.uniform_f64();
        let u2 = self.uniform_f64();
        (-2.0 * (1.0 - u1).ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
    }

    /// Uniform integer in `0..n`. Panics when `n == 0`.
    pub fn below(&mut self, n: usize) -> usize {
        assert!(n > 0, "below(0)");
        let n = n as u64;
        let zone = u64::MAX - (u64::MAX % n);
        loop {
            let v = self.next_u64();
            if v < zone {
                return (v % n) as usize;
            }
        }
    }

    /// Fisher–Yates shuffle.
    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.below(i + 1);
            items.swap(i, j);
        }
    }

    /// Tensor of samples uniform in `[lo, hi)`.
    pub fn uniform_tensor<T: Scalar>(
        &mut self,
        shape: &[usize],
        lo: T,
        hi: T,
    ) -> Result<Tensor<T>> {
        let (lo64, hi64) = (lo.to_f64_lossy(), hi.to_f64_lossy());
        if !(lo < hi) {
            return Err(Error::InvalidArgument(format!(
                "uniform range requires lo < hi, got [{lo}, {hi})"
            )));
        }
        let mut t = Tensor::zeros(shape)?;
        for v in t.data_mut() {
            let mut s = T::from_f64_lossy(lo64 + (hi64 - lo64) * self.uniform_f64());
            // rounding to a narrower type can land on `hi`
            if s >= hi {
                s = lo;
            }
            *v = s;
        }
        Ok(t)
    }
}
