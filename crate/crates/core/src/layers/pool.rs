use crate::error::{Error, Result};
use crate::tensor::{Scalar, Tensor};

/// Flat input index of each output's window maximum.
#[derive(Debug)]
pub struct MaxPoolCache {
    input_shape: Vec<usize>,
    argmax: Vec<usize>,
}

/// Non-overlapping 2×2 max pooling. Ties go to the first element in
/// row-major window order.
pub fn maxpool2x2_forward<T: Scalar>(x: &Tensor<T>) -> Result<(Tensor<T>, MaxPoolCache)> {
    if x.rank() != 4 {
        return Err(Error::Shape(format!(
            "maxpool input must be [N,C,H,W], got {:?}",
            x.shape()
        )));
    }
    let (n, c, h, w) = (x.shape()[0], x.shape()[1], x.shape()[2], x.shape()[3]);
    if h % 2 != 0 || w % 2 != 0 {
        return Err(Error::Shape(format!(
            "maxpool needs even spatial extents, got {h}×{w}"
        )));
    }
    let (oh, ow) = (h / 2, w / 2);
    let mut out = Vec::with_capacity(n * c * oh * ow);
    let mut argmax = Vec::with_capacity(n * c * oh * ow);
    let data = x.data();
    for plane in 0..n * c {
        let base = plane * h * w;
        for i in 0..oh {
            for j in 0..ow {
                let top = base + 2 * i * w + 2 * j;
                let mut best = top;
                for idx in [top + 1, top + w, top + w + 1] {
                    if data[idx] > data[best] {
                        best = idx;
                    }
                }
                out.push(data[best]);
                argmax.push(best);
            }
        }
    }
    Ok((
        Tensor::new(&[n, c, oh, ow], out)?,
        MaxPoolCache {
            input_shape: x.shape().to_vec(),
            argmax,
        },
    ))
}

pub fn maxpool2x2_backward<T: Scalar>(cache: MaxPoolCache, dy: &Tensor<T>) -> Result<Tensor<T>> {
    if dy.len() != cache.argmax.len() {
        return Err(Error::Shape(format!(
            "maxpool upstream gradient has {} elements, expected {}",
            dy.len(),
            cache.argmax.len()
        )));
    }
    let mut dx = Tensor::zeros(&cache.input_shape)?;
    let buf = dx.data_mut();
    for (&idx, &g) in cache.argmax.iter().zip(dy.data()) {
        buf[idx] = buf[idx] + g;
    }
    Ok(dx)
}
