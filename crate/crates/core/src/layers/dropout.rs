use super::Mode;
use crate::error::{Error, Result};
use crate::rng::Prng;
use crate::tensor::{Scalar, Tensor};

/// Per-element multiplier: 0 for dropped units, `1/(1−rate)` for survivors.
/// `None` when the forward pass was the identity.
#[derive(Debug)]
pub struct DropoutCache<T = f32> {
    mask: Option<Vec<T>>,
}

pub(crate) fn check_rate(rate: f64) -> Result<()> {
    if !(0.0..1.0).contains(&rate) {
        return Err(Error::Config(format!(
            "dropout rate must lie in [0,1), got {rate}"
        )));
    }
    Ok(())
}

/// Inverted dropout. Inference mode (or a zero rate) is the identity and
/// draws nothing from `rng`.
pub fn dropout_forward<T: Scalar>(
    x: &Tensor<T>,
    rate: f64,
    mode: Mode,
    rng: &mut Prng,
) -> Result<(Tensor<T>, DropoutCache<T>)> {
    check_rate(rate)?;
    if mode == Mode::Infer || rate == 0.0 {
        return Ok((x.clone(), DropoutCache { mask: None }));
    }
    let keep = T::from_f64_lossy(1.0 / (1.0 - rate));
    let mask: Vec<T> = (0..x.len())
        .map(|_| {
            if (rng.uniform_f32() as f64) < rate {
                T::zero()
            } else {
                keep
            }
        })
        .collect();
    let mut y = x.clone();
    for (v, &m) in y.data_mut().iter_mut().zip(&mask) {
        *v = *v * m;
    }
    Ok((y, DropoutCache { mask: Some(mask) }))
}

pub fn dropout_backward<T: Scalar>(cache: DropoutCache<T>, dy: &Tensor<T>) -> Result<Tensor<T>> {
    match cache.mask {
        None => Ok(dy.clone()),
        Some(mask) => {
            if mask.len() != dy.len() {
                return Err(Error::Shape(format!(
                    "dropout upstream gradient has {} elements, mask {}",
                    dy.len(),
                    mask.len()
                )));
            }
            let mut dx = dy.clone();
            for (v, &m) in dx.data_mut().iter_mut().zip(&mask) {
                *v = *v * m;
            }
            Ok(dx)
        }
    }
}
