use crate::error::{Error, Result};
use crate::model::{ModelConfig, Moments};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub lr: f32,
    pub beta1: f32,
    pub beta2: f32,
    pub eps: f32,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 0.001,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

impl AdamConfig {
    pub fn from_model_config(cfg: &ModelConfig) -> Self {
        Self {
            lr: cfg.lr,
            beta1: cfg.adam_beta1,
            beta2: cfg.adam_beta2,
            eps: cfg.adam_eps,
        }
    }
}

/// One bias-corrected Adam update at step `t` (1-based):
///
/// ```text
/// m ← β₁m + (1−β₁)g        v ← β₂v + (1−β₂)g²
/// θ ← θ − lr · m̂ / (√v̂ + ε),  m̂ = m/(1−β₁ᵗ), v̂ = v/(1−β₂ᵗ)
/// ```
pub fn adam_step(
    params: &mut [&mut Tensor],
    grads: &[Tensor],
    moments: &mut [Moments],
    t: u64,
    cfg: &AdamConfig,
) -> Result<()> {
    if t == 0 {
        return Err(Error::InvalidArgument("adam step index starts at 1".into()));
    }
    if params.len() != grads.len() || params.len() != moments.len() {
        return Err(Error::Shape(format!(
            "{} parameters, {} gradients, {} moment pairs",
            params.len(),
            grads.len(),
            moments.len()
        )));
    }
    for ((p, g), m) in params.iter().zip(grads).zip(moments.iter()) {
        g.ensure_shape(p.shape(), "gradient")?;
        m.m.ensure_shape(p.shape(), "adam first moment")?;
        m.v.ensure_shape(p.shape(), "adam second moment")?;
    }
    let exp = t.min(i32::MAX as u64) as i32;
    let c1 = 1.0 - (cfg.beta1 as f64).powi(exp);
    let c2 = 1.0 - (cfg.beta2 as f64).powi(exp);
    let (b1, b2) = (cfg.beta1, cfg.beta2);
    let (lr, eps) = (cfg.lr as f64, cfg.eps as f64);
    for ((p, g), mom) in params.iter_mut().zip(grads).zip(moments.iter_mut()) {
        let m = mom.m.data_mut();
        let v = mom.v.data_mut();
        for (((theta, &gi), mi), vi) in p
            .data_mut()
            .iter_mut()
            .zip(g.data())
            .zip(m.iter_mut())
            .zip(v.iter_mut())
        {
            *mi = b1 * *mi + (1.0 - b1) * gi;
            *vi = b2 * *vi + (1.0 - b2) * gi * gi;
            let m_hat = *mi as f64 / c1;
            let v_hat = *vi as f64 / c2;
            *theta = (*theta as f64 - lr * m_hat / (v_hat.sqrt() + eps)) as f32;
        }
    }
    Ok(())
}
