//! Image ingestion, labeled in-memory image sets, and dataset manifests.

mod dataset;
mod ppm;
mod resize;

pub use dataset::{
    fuse, load_dataset, DatasetManifest, LoadedDataset, Sample, SplitOptions, DEFAULT_TRAIN_RATIO,
};
pub use ppm::{decode_image, decode_ppm, encode_ppm};
pub use resize::{resize_bilinear, resize_tensor};

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Task classes. Bonafide is the positive class and has index 0.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Label {
    Bonafide,
    Attack,
}

impl Label {
    pub const ALL: [Label; 2] = [Label::Bonafide, Label::Attack];

    pub fn index(self) -> usize {
        match self {
            Label::Bonafide => 0,
            Label::Attack => 1,
        }
    }

    pub fn from_index(i: usize) -> Option<Self> {
        match i {
            0 => Some(Label::Bonafide),
            1 => Some(Label::Attack),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Label::Bonafide => "bonafide",
            Label::Attack => "attack",
        }
    }

    pub fn other(self) -> Self {
        match self {
            Label::Bonafide => Label::Attack,
            Label::Attack => Label::Bonafide,
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Label {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "bonafide" | "genuine" | "b" => Ok(Label::Bonafide),
            "attack" | "attacker" | "a" => Ok(Label::Attack),
            _ => Err(Error::InvalidArgument(format!(
                "unknown class {s:?} (expected bonafide or attack)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }
}

impl FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "train" => Ok(Split::Train),
            "val" => Ok(Split::Val),
            "test" => Ok(Split::Test),
            other => Err(Error::Dataset(format!("unknown split {other:?}"))),
        }
    }
}

/// A decoded RGB image, channels first, values in [0,1].
#[derive(Debug, Clone, PartialEq)]
pub struct ImageRecord {
    pub pixels: Tensor,
    /// `(height, width)` as stored on disk.
    pub original_size: (usize, usize),
}

/// Labeled images of one common `[3,H,W]` shape, each tagged with the
/// dataset it came from.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ImageSet {
    images: Vec<Tensor>,
    labels: Vec<Label>,
    sources: Vec<Arc<str>>,
}

impl ImageSet {
    pub fn new(images: Vec<Tensor>, labels: Vec<Label>, source: &str) -> Result<Self> {
        let tag: Arc<str> = Arc::from(source);
        let sources = vec![tag; images.len()];
        Self::with_sources(images, labels, sources)
    }

    pub fn with_sources(
        images: Vec<Tensor>,
        labels: Vec<Label>,
        sources: Vec<Arc<str>>,
    ) -> Result<Self> {
        if images.len() != labels.len() || images.len() != sources.len() {
            return Err(Error::Dataset(format!(
                "{} images, {} labels, {} source tags",
                images.len(),
                labels.len(),
                sources.len()
            )));
        }
        if let Some(first) = images.first() {
            if first.rank() != 3 {
                return Err(Error::Shape(format!(
                    "images must be [C,H,W], got {:?}",
                    first.shape()
                )));
            }
            if let Some(bad) = images.iter().find(|t| t.shape() != first.shape()) {
                return Err(Error::Shape(format!(
                    "mixed image shapes {:?} and {:?}",
                    first.shape(),
                    bad.shape()
                )));
            }
        }
        Ok(Self {
            images,
            labels,
            sources,
        })
    }

    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }

    pub fn images(&self) -> &[Tensor] {
        &self.images
    }

    pub fn labels(&self) -> &[Label] {
        &self.labels
    }

    pub fn label_indices(&self) -> Vec<usize> {
        self.labels.iter().map(|l| l.index()).collect()
    }

    pub fn sources(&self) -> &[Arc<str>] {
        &self.sources
    }

    /// Distinct source tags in first-appearance order.
    pub fn source_names(&self) -> Vec<String> {
        let mut out: Vec<String> = Vec::new();
        for s in &self.sources {
            if !out.iter().any(|o| o.as_str() == &**s) {
                out.push(s.to_string());
            }
        }
        out
    }

    pub fn image_shape(&self) -> Option<&[usize]> {
        self.images.first().map(|t| t.shape())
    }

    pub fn count(&self, label: Label) -> usize {
        self.labels.iter().filter(|&&l| l == label).count()
    }

    /// Stacks the selected images into `[N,C,H,W]`.
    pub fn batch(&self, indices: &[usize]) -> Result<Tensor> {
        let first = indices
            .first()
            .ok_or_else(|| Error::InvalidArgument("empty batch".into()))?;
        let shape = self.images[*first].shape().to_vec();
        let mut data = Vec::with_capacity(indices.len() * self.images[*first].len());
        for &i in indices {
            data.extend_from_slice(self.images[i].data());
        }
        let mut full = vec![indices.len()];
        full.extend(shape);
        Tensor::new(&full, data)
    }

    pub fn subset(&self, indices: &[usize]) -> Self {
        Self {
            images: indices.iter().map(|&i| self.images[i].clone()).collect(),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            sources: indices.iter().map(|&i| self.sources[i].clone()).collect(),
        }
    }

    pub fn filter_source(&self, source: &str) -> Self {
        let idx: Vec<usize> = (0..self.len())
            .filter(|&i| &*self.sources[i] == source)
            .collect();
        self.subset(&idx)
    }

    pub fn with_labels(&self, labels: Vec<Label>) -> Result<Self> {
        Self::with_sources(self.images.clone(), labels, self.sources.clone())
    }

    pub fn with_source(&self, source: &str) -> Self {
        let tag: Arc<str> = Arc::from(source);
        Self {
            images: self.images.clone(),
            labels: self.labels.clone(),
            sources: vec![tag; self.images.len()],
        }
    }

    /// Concatenates sets in order, keeping each sample's source tag.
    pub fn concat(sets: &[&ImageSet]) -> Result<Self> {
        let mut images = Vec::new();
        let mut labels = Vec::new();
        let mut sources = Vec::new();
        for s in sets {
            images.extend(s.images.iter().cloned());
            labels.extend(s.labels.iter().copied());
            sources.extend(s.sources.iter().cloned());
        }
        Self::with_sources(images, labels, sources)
    }
}
