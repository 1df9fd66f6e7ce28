//! Single-image inference latency measurement.

use std::fmt::Write as _;
use std::time::Instant;

use crate::error::{Error, Result};
use crate::model::Model;
use crate::rng::Prng;

#[derive(Debug, Clone, PartialEq)]
pub struct BenchReport {
    pub iterations: usize,
    pub mean_ms: f64,
    pub median_ms: f64,
    pub p95_ms: f64,
    pub fps: f64,
}

impl BenchReport {
    /// Summarizes per-run latencies in milliseconds.
    pub fn from_samples(samples_ms: &[f64]) -> Result<Self> {
        if samples_ms.is_empty() {
            return Err(Error::InvalidArgument("no latency samples".into()));
        }
        let mut sorted = samples_ms.to_vec();
        sorted.sort_by(f64::total_cmp);
        let n = sorted.len();
        let mean_ms = sorted.iter().sum::<f64>() / n as f64;
        let median_ms = if n % 2 == 1 {
            sorted[n / 2]
        } else {
            (sorted[n / 2 - 1] + sorted[n / 2]) / 2.0
        };
        // nearest-rank percentile
        let rank = ((0.95 * n as f64).ceil() as usize).clamp(1, n);
        Ok(Self {
            iterations: n,
            mean_ms,
            median_ms,
            p95_ms: sorted[rank - 1],
            fps: 1000.0 / mean_ms,
        })
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "iterations,{}", self.iterations);
        let _ = writeln!(out, "mean_ms,{:.6}", self.mean_ms);
        let _ = writeln!(out, "median_ms,{:.6}", self.median_ms);
        let _ = writeln!(out, "p95_ms,{:.6}", self.p95_ms);
        let _ = writeln!(out, "fps,{:.6}", self.fps);
        out
    }
}

/// Times `iterations` inference-mode forwards of single random images.
/// Input generation is excluded from the timings.
pub fn bench(model: &Model, iterations: usize, seed: u64) -> Result<BenchReport> {
    if iterations == 0 {
        return Err(Error::InvalidArgument("iterations must be positive".into()));
    }
    let cfg = model.config();
    let shape = [1, cfg.input_channels, cfg.input_h, cfg.input_w];
    let mut rng = Prng::new(seed);
    let mut samples = Vec::with_capacity(iterations);
    for _ in 0..iterations {
        let x = rng.uniform_tensor(&shape, 0.0f32, 1.0)?;
        let start = Instant::now();
        let probs = model.predict(&x)?;
        samples.push(start.elapsed().as_secs_f64() * 1000.0);
        std::hint::black_box(probs);
    }
    BenchReport::from_samples(&samples)
}
