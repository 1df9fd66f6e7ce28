//! Synthetic two-class images: a colored disk on a noisy gray background.
//! Bonafide disks are red dominant and attack disks blue dominant, so the
//! classes are separable by color alone.

use std::fs;
use std::path::Path;

use crate::data::{encode_ppm, ImageSet, Label};
use crate::error::{Error, Result};
use crate::rng::Prng;
use crate::tensor::Tensor;

fn range(rng: &mut Prng, lo: f32, hi: f32) -> f32 {
    lo + (hi - lo) * rng.uniform_f32()
}

/// One `[3,h,w]` blob image of class `label`.
pub fn blob_image(label: Label, h: usize, w: usize, rng: &mut Prng) -> Tensor {
    let background = [
        range(rng, 0.3, 0.6),
        range(rng, 0.3, 0.6),
        range(rng, 0.3, 0.6),
    ];
    let (hot, cold1, cold2) = (
        range(rng, 0.8, 1.0),
        range(rng, 0.1, 0.3),
        range(rng, 0.1, 0.3),
    );
    let color = match label {
        Label::Bonafide => [hot, cold1, cold2],
        Label::Attack => [cold1, cold2, hot],
    };
    let side = h.min(w) as f32;
    let radius = range(rng, 0.2, 0.35) * side;
    let cy = range(rng, radius, h as f32 - radius);
    let cx = range(rng, radius, w as f32 - radius);
    let mut data = vec![0.0f32; 3 * h * w];
    for r in 0..h {
        for c in 0..w {
            let dy = r as f32 + 0.5 - cy;
            let dx = c as f32 + 0.5 - cx;
            let inside = dx * dx + dy * dy <= radius * radius;
            for k in 0..3 {
                let base = if inside { color[k] } else { background[k] };
                let v = base + range(rng, -0.05, 0.05);
                data[k * h * w + r * w + c] = v.clamp(0.0, 1.0);
            }
        }
    }
    Tensor::new(&[3, h, w], data).expect("shape matches data")
}

/// `n` blob images with alternating labels, starting with bonafide.
pub fn blob_set(n: usize, h: usize, w: usize, seed: u64, source: &str) -> ImageSet {
    let mut rng = Prng::new(seed);
    let labels: Vec<Label> = (0..n).map(|i| Label::ALL[i % 2]).collect();
    let images = labels
        .iter()
        .map(|&l| blob_image(l, h, w, &mut rng))
        .collect();
    ImageSet::new(images, labels, source).expect("uniform shapes")
}

/// Writes a dataset root with `per_class` PPM images in each class directory.
pub fn write_blob_dataset(
    root: &Path,
    per_class: usize,
    h: usize,
    w: usize,
    seed: u64,
) -> Result<()> {
    let mut rng = Prng::new(seed);
    for label in Label::ALL {
        let dir = root.join(label.name());
        fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        for i in 0..per_class {
            let img = blob_image(label, h, w, &mut rng);
            let path = dir.join(format!("{i:04}.ppm"));
            fs::write(&path, encode_ppm(&img)?).map_err(|e| Error::io(&path, e))?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn classes_differ_in_dominant_channel() {
        let set = blob_set(20, 16, 16, 1, "s");
        for (img, &label) in set.images().iter().zip(set.labels()) {
            let plane = 16 * 16;
            let red_max = img.data()[..plane].iter().cloned().fold(0.0, f32::max);
            let blue_max = img.data()[2 * plane..].iter().cloned().fold(0.0, f32::max);
            match label {
                Label::Bonafide => assert!(red_max > 0.7),
                Label::Attack => assert!(blue_max > 0.7),
            }
            assert!(img.data().iter().all(|v| (0.0..=1.0).contains(v)));
        }
        assert_eq!(set, blob_set(20, 16, 16, 1, "s"));
    }

    #[test]
    fn writes_loadable_dataset() {
        let dir = tempfile::tempdir().unwrap();
        write_blob_dataset(dir.path(), 3, 8, 8, 0).unwrap();
        let m = crate::data::load_dataset(dir.path(), "blobs", &Default::default()).unwrap();
        assert_eq!(m.len(), 6);
    }
}
