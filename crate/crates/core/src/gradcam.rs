//! Grad-CAM heatmaps over the phase-2 feature map (the last convolutional
//! block, taken after its residual activation and before pooling).

use std::path::Path;

use crate::data::{encode_ppm, resize_tensor, Label};
use crate::error::{Error, Result};
use crate::layers::Mode;
use crate::model::Model;
use crate::tensor::Tensor;

#[derive(Debug, Clone, PartialEq)]
pub struct GradCamMap {
    /// `ReLU(Σ_k w_k·A_k)` before normalization, `[h, w]`.
    pub weighted: Tensor,
    /// Normalized map at feature-map resolution, `[h, w]`, values in [0,1].
    pub raw: Tensor,
    /// Normalized map at input resolution, `[H, W]`, values in [0,1].
    pub upsampled: Tensor,
    pub target: Label,
}

impl GradCamMap {
    /// `(row, col)` of the largest raw value; the first one wins ties.
    pub fn raw_argmax(&self) -> (usize, usize) {
        let w = self.raw.shape()[1];
        let i = self.raw.argmax();
        (i / w, i % w)
    }

    pub fn upsampled_argmax(&self) -> (usize, usize) {
        let w = self.upsampled.shape()[1];
        let i = self.upsampled.argmax();
        (i / w, i % w)
    }
}

/// Min-max scaling to [0,1]. A map with no positive value becomes all zero
/// and a constant positive map all one.
pub fn normalize_map(map: &Tensor) -> Tensor {
    let d = map.data();
    let max = d.iter().cloned().fold(f32::NEG_INFINITY, f32::max);
    let min = d.iter().cloned().fold(f32::INFINITY, f32::min);
    if !(max > 0.0) {
        return Tensor::zeros_like(map);
    }
    let range = max - min;
    if range <= 0.0 {
        return map.map(|_| 1.0);
    }
    map.map(|v| ((v - min) / range).clamp(0.0, 1.0))
}

/// `ReLU(Σ_k w_k·A_k)` with `w_k` the spatial mean of `grads[k]`, for
/// `[C, h, w]` activations and gradients.
pub fn weighted_activation_map(activations: &Tensor, grads: &Tensor) -> Result<Tensor> {
    let s = activations.shape();
    if s.len() != 3 {
        return Err(Error::Shape(format!(
            "activations must be [C,h,w], got {s:?}"
        )));
    }
    grads.ensure_shape(s, "Grad-CAM gradients")?;
    let (c, h, w) = (s[0], s[1], s[2]);
    let plane = h * w;
    let mut acc = vec![0.0f64; plane];
    for k in 0..c {
        let g = &grads.data()[k * plane..(k + 1) * plane];
        let weight = g.iter().map(|&v| v as f64).sum::<f64>() / plane as f64;
        if weight == 0.0 {
            continue;
        }
        let a = &activations.data()[k * plane..(k + 1) * plane];
        for (o, &v) in acc.iter_mut().zip(a) {
            *o += weight * v as f64;
        }
    }
    Tensor::new(
        &[h, w],
        acc.into_iter().map(|v| v.max(0.0) as f32).collect(),
    )
}

/// Grad-CAM of the `target` logit for one `[3,H,W]` (or `[1,3,H,W]`) image.
pub fn grad_cam(model: &Model, x: &Tensor, target: Label) -> Result<GradCamMap> {
    let x = match x.rank() {
        3 => {
            let mut shape = vec![1];
            shape.extend_from_slice(x.shape());
            x.clone().reshape(&shape)?
        }
        4 if x.shape()[0] == 1 => x.clone(),
        _ => {
            return Err(Error::Shape(format!(
                "Grad-CAM takes one image, got {:?}",
                x.shape()
            )))
        }
    };
    let (in_h, in_w) = (x.shape()[2], x.shape()[3]);
    let trace = model.forward(&x, Mode::Infer, None)?;
    let classes = trace.logits.shape()[1];
    let mut onehot = vec![0.0f32; classes];
    onehot[target.index()] = 1.0;
    let dlogits = Tensor::new(&[1, classes], onehot)?;
    let activations = trace.feature_map.clone();
    let grads = model.backward_head(trace.head, &dlogits)?.d_feature_map;
    let fs = activations.shape()[1..].to_vec();
    let weighted = weighted_activation_map(&activations.reshape(&fs)?, &grads.reshape(&fs)?)?;
    let raw = normalize_map(&weighted);
    let (h, w) = (fs[1], fs[2]);
    let up = resize_tensor(&raw.clone().reshape(&[1, h, w])?, in_h, in_w)?;
    let upsampled = normalize_map(&up.reshape(&[in_h, in_w])?);
    Ok(GradCamMap {
        weighted,
        raw,
        upsampled,
        target,
    })
}

/// Piecewise-linear blue → cyan → green → yellow → red ramp over [0,1].
pub fn color_ramp(v: f32) -> [f32; 3] {
    const STOPS: [[f32; 3]; 5] = [
        [0.0, 0.0, 1.0],
        [0.0, 1.0, 1.0],
        [0.0, 1.0, 0.0],
        [1.0, 1.0, 0.0],
        [1.0, 0.0, 0.0],
    ];
    let v = if v.is_nan() { 0.0 } else { v.clamp(0.0, 1.0) };
    let pos = v * 4.0;
    let i = (pos.floor() as usize).min(3);
    let t = pos - i as f32;
    let (a, b) = (STOPS[i], STOPS[i + 1]);
    [0, 1, 2].map(|k| a[k] + (b[k] - a[k]) * t)
}

/// Alpha-blends the colored upsampled map over a `[3,H,W]` base image.
pub fn render_heatmap(map: &GradCamMap, base: &Tensor, alpha: f32) -> Result<Tensor> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::InvalidArgument(format!(
            "alpha must lie in [0,1], got {alpha}"
        )));
    }
    let s = base.shape();
    if s.len() != 3 || s[0] != 3 || map.upsampled.shape() != &s[1..] {
        return Err(Error::Shape(format!(
            "base {:?} does not match map {:?}",
            s,
            map.upsampled.shape()
        )));
    }
    let plane = s[1] * s[2];
    let mut out = base.data().to_vec();
    for (p, &v) in map.upsampled.data().iter().enumerate() {
        let color = color_ramp(v);
        for k in 0..3 {
            let b = out[k * plane + p];
            out[k * plane + p] = ((1.0 - alpha) * b + alpha * color[k]).clamp(0.0, 1.0);
        }
    }
    Tensor::new(s, out)
}

/// Places two `[3,H,W]` images side by side.
pub fn side_by_side(left: &Tensor, right: &Tensor) -> Result<Tensor> {
    let s = left.shape();
    if s.len() != 3 || right.shape() != s {
        return Err(Error::Shape(format!(
            "cannot join {:?} and {:?}",
            s,
            right.shape()
        )));
    }
    let (c, h, w) = (s[0], s[1], s[2]);
    let mut out = Vec::with_capacity(2 * left.len());
    for k in 0..c {
        for r in 0..h {
            let row = (k * h + r) * w;
            out.extend_from_slice(&left.data()[row..row + w]);
            out.extend_from_slice(&right.data()[row..row + w]);
        }
    }
    Tensor::new(&[c, h, 2 * w], out)
}

/// Writes an overlay (or, with `composite`, input | overlay) as a P6 file.
pub fn write_overlay(
    path: &Path,
    map: &GradCamMap,
    base: &Tensor,
    alpha: f32,
    composite: bool,
) -> Result<()> {
    let overlay = render_heatmap(map, base, alpha)?;
    let image = if composite {
        side_by_side(base, &overlay)?
    } else {
        overlay
    };
    crate::io::write_atomic(path, &encode_ppm(&image)?)
}
