//! 3×3 convolution, stride 1, one pixel of zero padding on every side.
//!
//! Implemented per sample as im2col followed by a GEMM:
//! `y[f, hw] = w[f, c·9] · cols[c·9, hw] + b[f]`.

use crate::error::{Error, Result};
use crate::tensor::{gemm, Scalar, Tensor};

pub const KERNEL: usize = 3;
const TAPS: usize = KERNEL * KERNEL;

#[derive(Debug)]
pub struct Conv2dCache<T = f32> {
    input: Tensor<T>,
    weight: Tensor<T>,
}

#[derive(Debug, Clone)]
pub struct Conv2dGrads<T = f32> {
    pub dx: Tensor<T>,
    pub dw: Tensor<T>,
    pub db: Tensor<T>,
}

fn check_shapes<T: Scalar>(x: &Tensor<T>, w: &Tensor<T>, b: &Tensor<T>) -> Result<[usize; 5]> {
    if x.rank() != 4 {
        return Err(Error::Shape(format!(
            "conv2d input must be [N,C,H,W], got {:?}",
            x.shape()
        )));
    }
    if w.rank() != 4 || w.shape()[2] != KERNEL || w.shape()[3] != KERNEL {
        return Err(Error::Shape(format!(
            "conv2d weight must be [F,C,3,3], got {:?}",
            w.shape()
        )));
    }
    let (n, c, h, wd) = (x.shape()[0], x.shape()[1], x.shape()[2], x.shape()[3]);
    let f = w.shape()[0];
    if w.shape()[1] != c {
        return Err(Error::Shape(format!(
            "conv2d channel mismatch: input has {c}, weight expects {}",
            w.shape()[1]
        )));
    }
    b.ensure_shape(&[f], "conv2d bias")?;
    Ok([n, c, h, wd, f])
}

/// Unfolds one `[C,H,W]` image into `[C·9, H·W]` patch columns.
fn im2col<T: Scalar>(img: &[T], c: usize, h: usize, w: usize, cols: &mut [T]) {
    let hw = h * w;
    for ch in 0..c {
        let plane = &img[ch * hw..(ch + 1) * hw];
        for u in 0..KERNEL {
            for v in 0..KERNEL {
                let row = &mut cols[(ch * TAPS + u * KERNEL + v) * hw..][..hw];
                for i in 0..h {
                    let si = i as isize + u as isize - 1;
                    let out = &mut row[i * w..(i + 1) * w];
                    if si < 0 || si >= h as isize {
                        out.fill(T::zero());
                        continue;
                    }
                    let src = &plane[si as usize * w..(si as usize + 1) * w];
                    match v {
                        0 => {
                            out[0] = T::zero();
                            out[1..].copy_from_slice(&src[..w - 1]);
                        }
                        1 => out.copy_from_slice(src),
                        _ => {
                            out[..w - 1].copy_from_slice(&src[1..]);
                            out[w - 1] = T::zero();
                        }
                    }
                }
            }
        }
    }
}

/// Folds patch-column gradients back onto a `[C,H,W]` image (accumulating).
fn col2im<T: Scalar>(cols: &[T], c: usize, h: usize, w: usize, img: &mut [T]) {
    let hw = h * w;
    for ch in 0..c {
        let plane = &mut img[ch * hw..(ch + 1) * hw];
        for u in 0..KERNEL {
            for v in 0..KERNEL {
                let row = &cols[(ch * TAPS + u * KERNEL + v) * hw..][..hw];
                for i in 0..h {
                    let si = i as isize + u as isize - 1;
                    if si < 0 || si >= h as isize {
                        continue;
                    }
                    let src = &row[i * w..(i + 1) * w];
                    let dst = &mut plane[si as usize * w..(si as usize + 1) * w];
                    match v {
                        0 => dst[..w - 1]
                            .iter_mut()
                            .zip(&src[1..])
                            .for_each(|(d, &s)| *d = *d + s),
                        1 => dst.iter_mut().zip(src).for_each(|(d, &s)| *d = *d + s),
                        _ => dst[1..]
                            .iter_mut()
                            .zip(&src[..w - 1])
                            .for_each(|(d, &s)| *d = *d + s),
                    }
                }
            }
        }
    }
}

pub fn conv2d_forward<T: Scalar>(
    x: &Tensor<T>,
    w: &Tensor<T>,
    b: &Tensor<T>,
) -> Result<(Tensor<T>, Conv2dCache<T>)> {
    let [n, c, h, wd, f] = check_shapes(x, w, b)?;
    let hw = h * wd;
    let k = c * TAPS;
    let mut out = vec![T::zero(); n * f * hw];
    let mut cols = vec![T::zero(); k * hw];
    for s in 0..n {
        im2col(&x.data()[s * c * hw..(s + 1) * c * hw], c, h, wd, &mut cols);
        let y = &mut out[s * f * hw..(s + 1) * f * hw];
        for (fi, plane) in y.chunks_exact_mut(hw).enumerate() {
            plane.fill(b.data()[fi]);
        }
        gemm(f, k, hw, w.data(), false, &cols, false, y, true);
    }
    let y = Tensor::new(&[n, f, h, wd], out)?;
    Ok((
        y,
        Conv2dCache {
            input: x.clone(),
            weight: w.clone(),
        },
    ))
}

pub fn conv2d_backward<T: Scalar>(cache: Conv2dCache<T>, dy: &Tensor<T>) -> Result<Conv2dGrads<T>> {
    let x = &cache.input;
    let w = &cache.weight;
    let (n, c, h, wd) = (x.shape()[0], x.shape()[1], x.shape()[2], x.shape()[3]);
    let f = w.shape()[0];
    dy.ensure_shape(&[n, f, h, wd], "conv2d upstream gradient")?;
    let hw = h * wd;
    let k = c * TAPS;
    let mut dx = vec![T::zero(); x.len()];
    let mut dw = vec![T::zero(); w.len()];
    let mut db = vec![T::zero(); f];
    let mut cols = vec![T::zero(); k * hw];
    let mut dcols = vec![T::zero(); k * hw];
    for s in 0..n {
        let g = &dy.data()[s * f * hw..(s + 1) * f * hw];
        for (fi, plane) in g.chunks_exact(hw).enumerate() {
            db[fi] = db[fi] + plane.iter().copied().sum::<T>();
        }
        im2col(&x.data()[s * c * hw..(s + 1) * c * hw], c, h, wd, &mut cols);
        // dw[f,k] += g[f,hw] · cols[k,hw]ᵀ
        gemm(f, hw, k, g, false, &cols, true, &mut dw, true);
        // dcols[k,hw] = w[f,k]ᵀ · g[f,hw]
        gemm(k, f, hw, w.data(), true, g, false, &mut dcols, false);
        col2im(&dcols, c, h, wd, &mut dx[s * c * hw..(s + 1) * c * hw]);
    }
    Ok(Conv2dGrads {
        dx: Tensor::new(x.shape(), dx)?,
        dw: Tensor::new(w.shape(), dw)?,
        db: Tensor::new(&[f], db)?,
    })
}
