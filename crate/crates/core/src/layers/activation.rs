use crate::error::{Error, Result};
use crate::tensor::{Scalar, Tensor};

#[derive(Debug)]
pub struct LeakyReluCache<T = f32> {
    input: Tensor<T>,
    alpha: T,
}

pub(crate) fn check_alpha<T: Scalar>(alpha: T) -> Result<()> {
    if !(alpha >= T::zero() && alpha < T::one()) {
        return Err(Error::Config(format!(
            "leaky alpha must lie in [0,1), got {alpha}"
        )));
    }
    Ok(())
}

/// `max(x, αx)` elementwise.
pub fn leaky_relu_forward<T: Scalar>(
    x: &Tensor<T>,
    alpha: T,
) -> Result<(Tensor<T>, LeakyReluCache<T>)> {
    check_alpha(alpha)?;
    let y = x.map(|v| if v > T::zero() { v } else { alpha * v });
    Ok((
        y,
        LeakyReluCache {
            input: x.clone(),
            alpha,
        },
    ))
}

/// Derivative is 1 for `x > 0` and `α` for `x ≤ 0`.
pub fn leaky_relu_backward<T: Scalar>(
    cache: LeakyReluCache<T>,
    dy: &Tensor<T>,
) -> Result<Tensor<T>> {
    let LeakyReluCache { input, alpha } = cache;
    dy.ensure_shape(input.shape(), "leaky relu upstream gradient")?;
    let mut dx = input;
    for (d, &g) in dx.data_mut().iter_mut().zip(dy.data()) {
        *d = if *d > T::zero() { g } else { alpha * g };
    }
    Ok(dx)
}

#[derive(Debug)]
pub struct TanhCache<T = f32> {
    output: Tensor<T>,
}

/// `tanh`, clamped to the largest representable magnitude below 1 so the
/// output stays strictly inside (−1, 1) even where `tanh` rounds to ±1.
pub fn tanh_forward<T: Scalar>(x: &Tensor<T>) -> (Tensor<T>, TanhCache<T>) {
    let bound = T::one() - T::epsilon() / (T::one() + T::one());
    let y = x.map(|v| v.tanh().max(-bound).min(bound));
    (y.clone(), TanhCache { output: y })
}

pub fn tanh_backward<T: Scalar>(cache: TanhCache<T>, dy: &Tensor<T>) -> Result<Tensor<T>> {
    let mut dx = cache.output;
    dy.ensure_shape(dx.shape(), "tanh upstream gradient")?;
    for (d, &g) in dx.data_mut().iter_mut().zip(dy.data()) {
        *d = g * (T::one() - *d * *d);
    }
    Ok(dx)
}

/// Identity-shortcut addition; both branches must already agree in shape.
pub fn residual_add<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
    a.add(b)
}

/// The sum rule: the upstream gradient flows unchanged into both branches.
pub fn residual_add_backward<T: Scalar>(dy: &Tensor<T>) -> (Tensor<T>, Tensor<T>) {
    (dy.clone(), dy.clone())
}

/// Row-wise softmax over `[N,C]` logits with max subtraction.
pub fn softmax<T: Scalar>(z: &Tensor<T>) -> Result<Tensor<T>> {
    if z.rank() != 2 || z.shape()[1] < 2 {
        return Err(Error::Shape(format!(
            "softmax expects [N,C] with C ≥ 2, got {:?}",
            z.shape()
        )));
    }
    let c = z.shape()[1];
    let mut out = z.clone();
    for row in out.data_mut().chunks_exact_mut(c) {
        let max = row.iter().copied().fold(T::neg_infinity(), T::max);
        let mut total = T::zero();
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            total = total + *v;
        }
        for v in row.iter_mut() {
            *v = *v / total;
        }
    }
    Ok(out)
}

/// Floor applied to probabilities before taking the log.
pub const PROB_FLOOR: f64 = 1e-12;

/// Mean categorical cross-entropy and its gradient with respect to the
/// pre-softmax logits, `(probs − onehot) / N`.
pub fn cross_entropy_loss<T: Scalar>(
    probs: &Tensor<T>,
    labels: &[usize],
) -> Result<(T, Tensor<T>)> {
    if probs.rank() != 2 {
        return Err(Error::Shape(format!(
            "cross entropy expects [N,C], got {:?}",
            probs.shape()
        )));
    }
    let (n, c) = (probs.shape()[0], probs.shape()[1]);
    if labels.len() != n {
        return Err(Error::Shape(format!(
            "{} labels for {n} rows",
            labels.len()
        )));
    }
    if let Some(&bad) = labels.iter().find(|&&l| l >= c) {
        return Err(Error::InvalidArgument(format!(
            "label {bad} out of range for {c} classes"
        )));
    }
    let floor = T::from_f64_lossy(PROB_FLOOR);
    let inv_n = T::one() / T::from_usize(n).unwrap_or_else(T::one);
    let mut loss = T::zero();
    let mut grad = probs.clone();
    for (row, &label) in grad.data_mut().chunks_exact_mut(c).zip(labels) {
        loss = loss - row[label].max(floor).ln();
        row[label] = row[label] - T::one();
        for v in row.iter_mut() {
            *v = *v * inv_n;
        }
    }
    Ok((loss * inv_n, grad))
}
