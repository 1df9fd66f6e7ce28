use super::ImageRecord;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Bilinear resampling of a `[C,H,W]` tensor with half-pixel centers:
/// output pixel `i` samples source coordinate `(i + 0.5)·in/out − 0.5`,
/// clamped to the image.
pub fn resize_tensor(img: &Tensor, out_h: usize, out_w: usize) -> Result<Tensor> {
    let s = img.shape();
    if s.len() != 3 {
        return Err(Error::Shape(format!("resize expects [C,H,W], got {s:?}")));
    }
    if out_h == 0 || out_w == 0 {
        return Err(Error::InvalidArgument(format!(
            "resize target {out_h}×{out_w} is empty"
        )));
    }
    let (c, h, w) = (s[0], s[1], s[2]);
    if (h, w) == (out_h, out_w) {
        return Ok(img.clone());
    }
    let axis = |n_out: usize, n_in: usize| -> Vec<(usize, usize, f32)> {
        (0..n_out)
            .map(|i| {
                let src = ((i as f64 + 0.5) * n_in as f64 / n_out as f64 - 0.5)
                    .clamp(0.0, (n_in - 1) as f64);
                let lo = src.floor() as usize;
                let hi = (lo + 1).min(n_in - 1);
                (lo, hi, (src - lo as f64) as f32)
            })
            .collect()
    };
    let rows = axis(out_h, h);
    let cols = axis(out_w, w);
    let mut out = Vec::with_capacity(c * out_h * out_w);
    let d = img.data();
    for ch in 0..c {
        let plane = &d[ch * h * w..(ch + 1) * h * w];
        for &(r0, r1, fy) in &rows {
            for &(c0, c1, fx) in &cols {
                let top = plane[r0 * w + c0] * (1.0 - fx) + plane[r0 * w + c1] * fx;
                let bottom = plane[r1 * w + c0] * (1.0 - fx) + plane[r1 * w + c1] * fx;
                out.push((top * (1.0 - fy) + bottom * fy).clamp(0.0, 1.0));
            }
        }
    }
    Tensor::new(&[c, out_h, out_w], out)
}

pub fn resize_bilinear(img: &ImageRecord, out_h: usize, out_w: usize) -> Result<ImageRecord> {
    Ok(ImageRecord {
        pixels: resize_tensor(&img.pixels, out_h, out_w)?,
        original_size: img.original_size,
    })
}
