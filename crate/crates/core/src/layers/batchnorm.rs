//! Per-channel batch normalization over `[N,C,H,W]` activations.

use super::Mode;
use crate::error::{Error, Result};
use crate::tensor::{Scalar, Tensor};

pub const DEFAULT_MOMENTUM: f64 = 0.1;
pub const DEFAULT_EPSILON: f64 = 1e-5;

#[derive(Debug, Clone, PartialEq)]
pub struct BatchNormState<T = f32> {
    pub gamma: Tensor<T>,
    pub beta: Tensor<T>,
    pub running_mean: Tensor<T>,
    pub running_var: Tensor<T>,
    pub momentum: T,
    pub epsilon: T,
}

impl<T: Scalar> BatchNormState<T> {
    /// gamma = 1, beta = 0, running mean 0 and variance 1.
    pub fn new(channels: usize, momentum: T, epsilon: T) -> Result<Self> {
        if !(momentum > T::zero() && momentum < T::one()) {
            return Err(Error::Config(format!(
                "batchnorm momentum must lie in (0,1), got {momentum}"
            )));
        }
        if !(epsilon > T::zero()) {
            return Err(Error::Config(format!(
                "batchnorm epsilon must be positive, got {epsilon}"
            )));
        }
        Ok(Self {
            gamma: Tensor::full(&[channels], T::one())?,
            beta: Tensor::zeros(&[channels])?,
            running_mean: Tensor::zeros(&[channels])?,
            running_var: Tensor::full(&[channels], T::one())?,
            momentum,
            epsilon,
        })
    }

    pub fn channels(&self) -> usize {
        self.gamma.len()
    }

    /// `running ← (1 − momentum)·running + momentum·batch`.
    ///
    /// The variance fed in is the unbiased batch estimate.
    pub fn update_running(&mut self, stats: &BatchStats<T>) {
        let m = self.momentum;
        let keep = T::one() - m;
        for (r, &b) in self.running_mean.data_mut().iter_mut().zip(&stats.mean) {
            *r = keep * *r + m * b;
        }
        for (r, &b) in self
            .running_var
            .data_mut()
            .iter_mut()
            .zip(&stats.unbiased_var)
        {
            *r = keep * *r + m * b;
        }
    }
}

/// Per-channel statistics of one training batch.
#[derive(Debug, Clone)]
pub struct BatchStats<T = f32> {
    pub mean: Vec<T>,
    pub unbiased_var: Vec<T>,
}

#[derive(Debug)]
pub struct BatchNormCache<T = f32> {
    normalized: Tensor<T>,
    inv_std: Vec<T>,
    gamma: Vec<T>,
    mode: Mode,
}

#[derive(Debug, Clone)]
pub struct BatchNormGrads<T = f32> {
    pub dx: Tensor<T>,
    pub dgamma: Tensor<T>,
    pub dbeta: Tensor<T>,
}

fn dims<T: Scalar>(x: &Tensor<T>, state: &BatchNormState<T>) -> Result<(usize, usize, usize)> {
    if x.rank() != 4 || x.shape()[1] != state.channels() {
        return Err(Error::Shape(format!(
            "batchnorm over {} channels got input {:?}",
            state.channels(),
            x.shape()
        )));
    }
    Ok((x.shape()[0], x.shape()[1], x.shape()[2] * x.shape()[3]))
}

fn normalize<T: Scalar>(
    x: &Tensor<T>,
    state: &BatchNormState<T>,
    mean: &[T],
    inv_std: Vec<T>,
    mode: Mode,
) -> (Tensor<T>, BatchNormCache<T>) {
    let (n, c, hw) = (x.shape()[0], x.shape()[1], x.shape()[2] * x.shape()[3]);
    let mut xhat = x.clone();
    let mut y = x.clone();
    for s in 0..n {
        for ch in 0..c {
            let off = (s * c + ch) * hw;
            let (g, b) = (state.gamma.data()[ch], state.beta.data()[ch]);
            for (xh, yv) in xhat.data_mut()[off..off + hw]
                .iter_mut()
                .zip(&mut y.data_mut()[off..off + hw])
            {
                *xh = (*xh - mean[ch]) * inv_std[ch];
                *yv = g * *xh + b;
            }
        }
    }
    (
        y,
        BatchNormCache {
            normalized: xhat,
            inv_std,
            gamma: state.gamma.data().to_vec(),
            mode,
        },
    )
}

/// Training-mode forward: normalizes with batch statistics and returns them
/// so the caller can fold them into the running averages.
pub fn batchnorm_forward_train<T: Scalar>(
    x: &Tensor<T>,
    state: &BatchNormState<T>,
) -> Result<(Tensor<T>, BatchNormCache<T>, BatchStats<T>)> {
    let (n, c, hw) = dims(x, state)?;
    let count = n * hw;
    if count < 2 {
        return Err(Error::InvalidArgument(format!(
            "batchnorm training needs at least 2 values per channel, got {count}"
        )));
    }
    let cnt = T::from_usize(count).unwrap_or_else(T::one);
    let mut mean = vec![T::zero(); c];
    let mut var = vec![T::zero(); c];
    for ch in 0..c {
        let mut sum = T::zero();
        for s in 0..n {
            let off = (s * c + ch) * hw;
            sum = sum + x.data()[off..off + hw].iter().copied().sum::<T>();
        }
        let mu = sum / cnt;
        let mut sq = T::zero();
        for s in 0..n {
            let off = (s * c + ch) * hw;
            for &v in &x.data()[off..off + hw] {
                sq = sq + (v - mu) * (v - mu);
            }
        }
        mean[ch] = mu;
        var[ch] = sq / cnt;
    }
    let inv_std = var
        .iter()
        .map(|&v| T::one() / (v + state.epsilon).sqrt())
        .collect();
    let (y, cache) = normalize(x, state, &mean, inv_std, Mode::Train);
    let bessel = cnt / (cnt - T::one());
    let stats = BatchStats {
        mean,
        unbiased_var: var.iter().map(|&v| v * bessel).collect(),
    };
    Ok((y, cache, stats))
}

/// Inference-mode forward using the running statistics.
pub fn batchnorm_forward_infer<T: Scalar>(
    x: &Tensor<T>,
    state: &BatchNormState<T>,
) -> Result<(Tensor<T>, BatchNormCache<T>)> {
    dims(x, state)?;
    let inv_std = state
        .running_var
        .data()
        .iter()
        .map(|&v| T::one() / (v + state.epsilon).sqrt())
        .collect();
    Ok(normalize(
        x,
        state,
        state.running_mean.data(),
        inv_std,
        Mode::Infer,
    ))
}

/// Forward in either mode; training mode also updates the running statistics.
pub fn batchnorm_forward<T: Scalar>(
    x: &Tensor<T>,
    state: &mut BatchNormState<T>,
    mode: Mode,
) -> Result<(Tensor<T>, BatchNormCache<T>)> {
    match mode {
        Mode::Train => {
            let (y, cache, stats) = batchnorm_forward_train(x, state)?;
            state.update_running(&stats);
            Ok((y, cache))
        }
        Mode::Infer => batchnorm_forward_infer(x, state),
    }
}

pub fn batchnorm_backward<T: Scalar>(
    cache: BatchNormCache<T>,
    dy: &Tensor<T>,
) -> Result<BatchNormGrads<T>> {
    let BatchNormCache {
        normalized: xhat,
        inv_std,
        gamma,
        mode,
    } = cache;
    dy.ensure_shape(xhat.shape(), "batchnorm upstream gradient")?;
    let (n, c, hw) = (
        xhat.shape()[0],
        xhat.shape()[1],
        xhat.shape()[2] * xhat.shape()[3],
    );
    let mut dgamma = vec![T::zero(); c];
    let mut dbeta = vec![T::zero(); c];
    for s in 0..n {
        for ch in 0..c {
            let off = (s * c + ch) * hw;
            for (&g, &xh) in dy.data()[off..off + hw]
                .iter()
                .zip(&xhat.data()[off..off + hw])
            {
                dbeta[ch] = dbeta[ch] + g;
                dgamma[ch] = dgamma[ch] + g * xh;
            }
        }
    }
    let mut dx = xhat;
    let cnt = T::from_usize(n * hw).unwrap_or_else(T::one);
    for s in 0..n {
        for ch in 0..c {
            let off = (s * c + ch) * hw;
            let scale = gamma[ch] * inv_std[ch];
            let (mean_dy, mean_dy_xhat) = (dbeta[ch] / cnt, dgamma[ch] / cnt);
            for (d, &g) in dx.data_mut()[off..off + hw]
                .iter_mut()
                .zip(&dy.data()[off..off + hw])
            {
                *d = match mode {
                    Mode::Train => scale * (g - mean_dy - *d * mean_dy_xhat),
                    Mode::Infer => scale * g,
                };
            }
        }
    }
    Ok(BatchNormGrads {
        dx,
        dgamma: Tensor::new(&[c], dgamma)?,
        dbeta: Tensor::new(&[c], dbeta)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Prng;

    fn state(c: usize) -> BatchNormState<f64> {
        BatchNormState::new(c, DEFAULT_MOMENTUM, DEFAULT_EPSILON).unwrap()
    }

    fn channel_moments(y: &Tensor<f64>, ch: usize) -> (f64, f64) {
        let (n, c, hw) = (y.shape()[0], y.shape()[1], y.shape()[2] * y.shape()[3]);
        let vals: Vec<f64> = (0..n)
            .flat_map(|s| y.data()[(s * c + ch) * hw..(s * c + ch + 1) * hw].to_vec())
            .collect();
        let m = vals.iter().sum::<f64>() / vals.len() as f64;
        let v = vals.iter().map(|x| (x - m).powi(2)).sum::<f64>() / vals.len() as f64;
        (m, v)
    }

    #[test]
    fn train_output_is_standardized() {
        let mut p = Prng::new(1);
        let x = p.uniform_tensor::<f64>(&[4, 3, 4, 4], -3.0, 5.0).unwrap();
        let mut s = state(3);
        s.gamma = Tensor::new(&[3], vec![1.0, 2.0, 0.5]).unwrap();
        s.beta = Tensor::new(&[3], vec![0.0, -1.0, 3.0]).unwrap();
        let (y, _) = batchnorm_forward(&x, &mut s, Mode::Train).unwrap();
        for ch in 0..3 {
            let (m, v) = channel_moments(&y, ch);
            let (g, b) = (s.gamma.data()[ch], s.beta.data()[ch]);
            assert!((m - b).abs() < 1e-5);
            assert!((v - g * g).abs() < 1e-3);
        }
    }

    #[test]
    fn running_stats_update() {
        let x = Tensor::new(&[2, 1, 1, 1], vec![1.0, 3.0]).unwrap();
        let mut s = state(1);
        batchnorm_forward(&x, &mut s, Mode::Train).unwrap();
        // batch mean 2, unbiased var 2
        assert!((s.running_mean.data()[0] - 0.2).abs() < 1e-12);
        assert!((s.running_var.data()[0] - (0.9 + 0.2)).abs() < 1e-12);
        assert!(s.running_var.data().iter().all(|&v| v >= 0.0));
    }

    #[test]
    fn infer_identity_stats() {
        let mut p = Prng::new(2);
        let x = p.uniform_tensor::<f64>(&[2, 2, 3, 3], -1.0, 1.0).unwrap();
        let mut s = state(2);
        let (y, _) = batchnorm_forward(&x, &mut s, Mode::Infer).unwrap();
        let k = 1.0 / (1.0 + DEFAULT_EPSILON).sqrt();
        for (&a, &b) in y.data().iter().zip(x.data()) {
            assert!((a - b * k).abs() < 1e-12);
        }
    }

    #[test]
    fn too_few_values_in_train_mode() {
        let x = Tensor::new(&[1, 2, 1, 1], vec![1.0, 2.0]).unwrap();
        let mut s = state(2);
        assert!(batchnorm_forward(&x, &mut s, Mode::Train).is_err());
        assert!(batchnorm_forward(&x, &mut s, Mode::Infer).is_ok());
    }

    #[test]
    fn bad_hyperparameters() {
        assert!(BatchNormState::<f32>::new(2, 1.0, 1e-5).is_err());
        assert!(BatchNormState::<f32>::new(2, 0.1, 0.0).is_err());
    }
}
