//! Random affine augmentation.
//!
//! One transform is sampled per image and applied about the image center
//! `c = ((W−1)/2, (H−1)/2)` in `(x, y) = (column, row)` coordinates:
//!
//! ```text
//! p_out = c + t + R(θ)·Shear(φ)·Zoom(z)·(p_in − c)
//! ```
//!
//! Output pixels are filled by inverse mapping with bilinear sampling;
//! samples falling outside the source read as zero.

use crate::error::{Error, Result};
use crate::rng::Prng;
use crate::tensor::Tensor;

#[derive(Debug, Clone, PartialEq)]
pub struct AugmentSpec {
    /// Rotation drawn from `±rotation_deg`.
    pub rotation_deg: f32,
    /// Horizontal and vertical shifts drawn from `±shift_frac` of the extent.
    pub shift_frac: f32,
    /// Shear angle drawn from `±shear_deg`.
    pub shear_deg: f32,
    pub zoom_min: f32,
    pub zoom_max: f32,
}

impl Default for AugmentSpec {
    fn default() -> Self {
        Self {
            rotation_deg: 15.0,
            shift_frac: 0.1,
            shear_deg: 10.0,
            zoom_min: 0.9,
            zoom_max: 1.1,
        }
    }
}

impl AugmentSpec {
    /// Every range collapsed to the identity transform.
    pub fn identity() -> Self {
        Self {
            rotation_deg: 0.0,
            shift_frac: 0.0,
            shear_deg: 0.0,
            zoom_min: 1.0,
            zoom_max: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [
            self.rotation_deg,
            self.shift_frac,
            self.shear_deg,
            self.zoom_min,
            self.zoom_max,
        ]
        .iter()
        .all(|v| v.is_finite());
        if !finite {
            return Err(Error::Config("augmentation ranges must be finite".into()));
        }
        if self.rotation_deg < 0.0 || self.shear_deg < 0.0 || self.shift_frac < 0.0 {
            return Err(Error::Config(
                "rotation, shift and shear ranges must be non-negative".into(),
            ));
        }
        if self.shear_deg >= 90.0 || self.shift_frac >= 1.0 {
            return Err(Error::Config(
                "shear must stay below 90° and shift below 1".into(),
            ));
        }
        if !(self.zoom_min > 0.0 && self.zoom_min <= 1.0 && self.zoom_max >= 1.0) {
            return Err(Error::Config(format!(
                "zoom interval [{}, {}] must be positive and contain 1",
                self.zoom_min, self.zoom_max
            )));
        }
        Ok(())
    }

    /// Draws rotation, shear, zoom, x shift, y shift in that order.
    pub fn sample(&self, height: usize, width: usize, rng: &mut Prng) -> AffineParams {
        let mut draw = |lo: f64, hi: f64| lo + (hi - lo) * rng.uniform_f64();
        let rot = self.rotation_deg as f64;
        let shear = self.shear_deg as f64;
        let shift = self.shift_frac as f64;
        AffineParams {
            rotation_deg: draw(-rot, rot),
            shear_deg: draw(-shear, shear),
            zoom: draw(self.zoom_min as f64, self.zoom_max as f64),
            shift_x: draw(-shift, shift) * width as f64,
            shift_y: draw(-shift, shift) * height as f64,
        }
    }
}

/// One concrete transform; shifts are in pixels.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AffineParams {
    pub rotation_deg: f64,
    pub shear_deg: f64,
    pub zoom: f64,
    pub shift_x: f64,
    pub shift_y: f64,
}

impl AffineParams {
    pub fn identity() -> Self {
        Self {
            rotation_deg: 0.0,
            shear_deg: 0.0,
            zoom: 1.0,
            shift_x: 0.0,
            shift_y: 0.0,
        }
    }

    /// The linear part `R·Shear·Zoom` as `[[a, b], [c, d]]`.
    pub fn matrix(&self) -> [[f64; 2]; 2] {
        let (s, c) = self.rotation_deg.to_radians().sin_cos();
        let k = self.shear_deg.to_radians().tan();
        let z = self.zoom;
        // R·[[1,k],[0,1]]·zI
        [[c * z, (c * k - s) * z], [s * z, (s * k + c) * z]]
    }
}

/// Applies `params` to a `[C,H,W]` image; the result is clamped to [0,1].
pub fn apply_affine(x: &Tensor, params: &AffineParams) -> Result<Tensor> {
    let s = x.shape();
    if s.len() != 3 {
        return Err(Error::Shape(format!(
            "augmentation expects [C,H,W], got {s:?}"
        )));
    }
    let (ch, h, w) = (s[0], s[1], s[2]);
    let [[a, b], [c, d]] = params.matrix();
    let det = a * d - b * c;
    if det.abs() < 1e-12 || !det.is_finite() {
        return Err(Error::InvalidArgument(
            "affine transform is singular".into(),
        ));
    }
    let inv = [[d / det, -b / det], [-c / det, a / det]];
    let cx = (w as f64 - 1.0) / 2.0;
    let cy = (h as f64 - 1.0) / 2.0;

    let mut taps = Vec::with_capacity(h * w);
    for row in 0..h {
        for col in 0..w {
            let dx = col as f64 - cx - params.shift_x;
            let dy = row as f64 - cy - params.shift_y;
            let sx = cx + inv[0][0] * dx + inv[0][1] * dy;
            let sy = cy + inv[1][0] * dx + inv[1][1] * dy;
            taps.push(bilinear_taps(sx, sy, h, w));
        }
    }

    let src = x.data();
    let mut out = vec![0.0f32; x.len()];
    for k in 0..ch {
        let plane = &src[k * h * w..(k + 1) * h * w];
        for (o, t) in out[k * h * w..(k + 1) * h * w].iter_mut().zip(&taps) {
            let v: f32 = t.iter().map(|&(idx, wt)| plane[idx] * wt).sum();
            *o = v.clamp(0.0, 1.0);
        }
    }
    Tensor::new(s, out)
}

/// In-bounds neighbor indices and weights for sampling at `(sx, sy)`.
fn bilinear_taps(sx: f64, sy: f64, h: usize, w: usize) -> Vec<(usize, f32)> {
    let x0 = sx.floor();
    let y0 = sy.floor();
    let fx = sx - x0;
    let fy = sy - y0;
    let mut out = Vec::with_capacity(4);
    for (oy, wy) in [(0.0, 1.0 - fy), (1.0, fy)] {
        for (ox, wx) in [(0.0, 1.0 - fx), (1.0, fx)] {
            let (yy, xx) = (y0 + oy, x0 + ox);
            let wt = wx * wy;
            if wt > 0.0 && yy >= 0.0 && xx >= 0.0 && yy < h as f64 && xx < w as f64 {
                out.push((yy as usize * w + xx as usize, wt as f32));
            }
        }
    }
    out
}

/// Samples one transform from `spec` and applies it.
pub fn augment(x: &Tensor, spec: &AugmentSpec, rng: &mut Prng) -> Result<Tensor> {
    let s = x.shape();
    if s.len() != 3 {
        return Err(Error::Shape(format!(
            "augmentation expects [C,H,W], got {s:?}"
        )));
    }
    let params = spec.sample(s[1], s[2], rng);
    apply_affine(x, &params)
}
