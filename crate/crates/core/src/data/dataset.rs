//! On-disk dataset layout:
//!
//! ```text
//! <root>/bonafide/*.ppm
//! <root>/attack/*.ppm
//! <root>/split.csv        optional, header `filename,split`, split ∈ {train,val,test}
//! ```
//!
//! `filename` in `split.csv` is either the path relative to the root
//! (`bonafide/0001.ppm`) or the bare file name when that is unambiguous.

use std::collections::{HashMap, HashSet};
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use super::{decode_image, resize_bilinear, ImageSet, Label, Split};
use crate::error::{Error, Result};
use crate::rng::Prng;

/// Training share of each class when no `split.csv` is present.
pub const DEFAULT_TRAIN_RATIO: f64 = 0.48;

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub path: PathBuf,
    pub label: Label,
    pub source: String,
    pub split: Split,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetManifest {
    pub name: String,
    pub samples: Vec<Sample>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitOptions {
    pub train_ratio: f64,
    pub seed: u64,
}

impl Default for SplitOptions {
    fn default() -> Self {
        Self {
            train_ratio: DEFAULT_TRAIN_RATIO,
            seed: 0,
        }
    }
}

fn list_class_dir(root: &Path, label: Label) -> Result<Vec<PathBuf>> {
    let dir = root.join(label.name());
    if !dir.is_dir() {
        return Err(Error::Dataset(format!(
            "missing class directory {}",
            dir.display()
        )));
    }
    let mut files = Vec::new();
    for entry in fs::read_dir(&dir).map_err(|e| Error::io(&dir, e))? {
        let path = entry.map_err(|e| Error::io(&dir, e))?.path();
        let is_ppm = path
            .extension()
            .and_then(|e| e.to_str())
            .is_some_and(|e| e.eq_ignore_ascii_case("ppm"));
        if is_ppm && path.is_file() {
            files.push(path);
        }
    }
    if files.is_empty() {
        return Err(Error::Dataset(format!(
            "class directory {} has no .ppm images",
            dir.display()
        )));
    }
    files.sort();
    Ok(files)
}

fn read_split_csv(path: &Path) -> Result<HashMap<String, Split>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut lines = text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty());
    match lines.next() {
        Some((_, header)) if header.trim() == "filename,split" => {}
        _ => {
            return Err(Error::Dataset(format!(
                "{}: expected header `filename,split`",
                path.display()
            )))
        }
    }
    let mut out = HashMap::new();
    for (lineno, line) in lines {
        let (name, split) = line.split_once(',').ok_or_else(|| {
            Error::Dataset(format!(
                "{}:{}: expected two columns",
                path.display(),
                lineno + 1
            ))
        })?;
        let name = name.trim().to_string();
        if out.insert(name.clone(), split.parse::<Split>()?).is_some() {
            return Err(Error::Dataset(format!(
                "{}: {name} listed twice",
                path.display()
            )));
        }
    }
    Ok(out)
}

fn relative_key(root: &Path, path: &Path) -> String {
    path.strip_prefix(root)
        .unwrap_or(path)
        .components()
        .map(|c| c.as_os_str().to_string_lossy())
        .collect::<Vec<_>>()
        .join("/")
}

/// Enumerates a dataset root in sorted-path order and assigns splits,
/// either from `split.csv` or by a seeded per-class stratified draw.
pub fn load_dataset(root: &Path, name: &str, opts: &SplitOptions) -> Result<DatasetManifest> {
    if !root.is_dir() {
        return Err(Error::Dataset(format!(
            "dataset root {} does not exist",
            root.display()
        )));
    }
    if !(opts.train_ratio > 0.0 && opts.train_ratio < 1.0) {
        return Err(Error::Config(format!(
            "train ratio must lie in (0,1), got {}",
            opts.train_ratio
        )));
    }
    let mut by_class = Vec::new();
    for label in Label::ALL {
        by_class.push((label, list_class_dir(root, label)?));
    }

    let csv_path = root.join("split.csv");
    let mut samples = Vec::new();
    if csv_path.is_file() {
        let mut table = read_split_csv(&csv_path)?;
        let mut name_counts: HashMap<String, usize> = HashMap::new();
        for (_, files) in &by_class {
            for f in files {
                let base = f
                    .file_name()
                    .unwrap_or_default()
                    .to_string_lossy()
                    .to_string();
                *name_counts.entry(base).or_default() += 1;
            }
        }
        for (label, files) in &by_class {
            for f in files {
                let rel = relative_key(root, f);
                let base = f
                    .file_name()
                    .unwrap_or_default()
                    .to_string_lossy()
                    .to_string();
                let split = match table.remove(&rel) {
                    Some(s) => s,
                    None if name_counts[&base] == 1 => table.remove(&base).ok_or_else(|| {
                        Error::Dataset(format!("{rel} has no entry in {}", csv_path.display()))
                    })?,
                    None => {
                        return Err(Error::Dataset(format!(
                            "{rel} has no entry in {} (bare name {base} is ambiguous)",
                            csv_path.display()
                        )))
                    }
                };
                samples.push(Sample {
                    path: f.clone(),
                    label: *label,
                    source: name.to_string(),
                    split,
                });
            }
        }
        if let Some(orphan) = table.keys().next() {
            return Err(Error::Dataset(format!(
                "{} lists {orphan}, which is not an image of the dataset",
                csv_path.display()
            )));
        }
    } else {
        let mut rng = Prng::new(opts.seed);
        for (label, files) in &by_class {
            let mut order: Vec<usize> = (0..files.len()).collect();
            rng.shuffle(&mut order);
            let n_train = (opts.train_ratio * files.len() as f64).round() as usize;
            let mut splits = vec![Split::Val; files.len()];
            for &i in &order[..n_train] {
                splits[i] = Split::Train;
            }
            for (f, split) in files.iter().zip(splits) {
                samples.push(Sample {
                    path: f.clone(),
                    label: *label,
                    source: name.to_string(),
                    split,
                });
            }
        }
    }
    samples.sort_by(|a, b| a.path.cmp(&b.path));
    Ok(DatasetManifest {
        name: name.to_string(),
        samples,
    })
}

/// Concatenates manifests, keeping source tags and split assignments, then
/// shuffles the relative order of the training samples with `seed`.
pub fn fuse(datasets: &[DatasetManifest], seed: u64) -> Result<DatasetManifest> {
    if datasets.len() < 2 {
        return Err(Error::InvalidArgument(format!(
            "fusion needs at least 2 datasets, got {}",
            datasets.len()
        )));
    }
    let mut seen = HashSet::new();
    let mut samples = Vec::new();
    for d in datasets {
        for s in &d.samples {
            if !seen.insert(s.path.clone()) {
                return Err(Error::Dataset(format!(
                    "{} appears in more than one dataset",
                    s.path.display()
                )));
            }
            samples.push(s.clone());
        }
    }
    let slots: Vec<usize> = (0..samples.len())
        .filter(|&i| samples[i].split == Split::Train)
        .collect();
    let mut order = slots.clone();
    Prng::new(seed).shuffle(&mut order);
    let originals: Vec<Sample> = order.iter().map(|&i| samples[i].clone()).collect();
    for (slot, s) in slots.into_iter().zip(originals) {
        samples[slot] = s;
    }
    Ok(DatasetManifest {
        name: datasets
            .iter()
            .map(|d| d.name.as_str())
            .collect::<Vec<_>>()
            .join("+"),
        samples,
    })
}

impl DatasetManifest {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn split(&self, split: Split) -> impl Iterator<Item = &Sample> {
        self.samples.iter().filter(move |s| s.split == split)
    }

    pub fn count(&self, split: Split, label: Label) -> usize {
        self.split(split).filter(|s| s.label == label).count()
    }

    pub fn sources(&self) -> Vec<String> {
        let mut out: Vec<String> = Vec::new();
        for s in &self.samples {
            if !out.contains(&s.source) {
                out.push(s.source.clone());
            }
        }
        out
    }

    /// Decodes the samples of `split` (all samples when `None`) resized to
    /// `h × w`, in manifest order.
    pub fn load_images(&self, split: Option<Split>, h: usize, w: usize) -> Result<ImageSet> {
        let mut images = Vec::new();
        let mut labels = Vec::new();
        let mut sources = Vec::new();
        let mut tags: HashMap<&str, Arc<str>> = HashMap::new();
        for s in self
            .samples
            .iter()
            .filter(|s| split.is_none_or(|sp| s.split == sp))
        {
            let img = decode_image(&s.path).map_err(|e| match e {
                Error::Decode(d) => Error::Dataset(format!("{}: {d}", s.path.display())),
                other => other,
            })?;
            images.push(resize_bilinear(&img, h, w)?.pixels);
            labels.push(s.label);
            sources.push(
                tags.entry(&s.source)
                    .or_insert_with(|| Arc::from(s.source.as_str()))
                    .clone(),
            );
        }
        ImageSet::with_sources(images, labels, sources)
    }

    /// `path,label,source,split` rows.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("path,label,source,split\n");
        for s in &self.samples {
            out.push_str(&format!(
                "{},{},{},{}\n",
                s.path.display(),
                s.label,
                s.source,
                s.split.name()
            ));
        }
        out
    }
}

/// Train and validation images of one dataset, ready for the protocols.
#[derive(Debug, Clone)]
pub struct LoadedDataset {
    pub name: String,
    pub train: ImageSet,
    pub val: ImageSet,
}

impl LoadedDataset {
    pub fn from_manifest(manifest: &DatasetManifest, h: usize, w: usize) -> Result<Self> {
        Ok(Self {
            name: manifest.name.clone(),
            train: manifest.load_images(Some(Split::Train), h, w)?,
            val: manifest.load_images(Some(Split::Val), h, w)?,
        })
    }
}
