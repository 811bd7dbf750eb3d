//! Labelled image datasets: MNIST IDX files, class filters, per-class
//! subsampling, and a synthetic separable generator.
//!
//! IDX files may be stored raw or gzip-compressed; compression is detected
//! from the gzip magic bytes, not the file name.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use flate2::read::GzDecoder;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use sla_core::Image;

use crate::error::{LabError, Result};

pub const IMAGES_MAGIC: u32 = 0x0000_0803;
pub const LABELS_MAGIC: u32 = 0x0000_0801;

/// Environment variable naming the directory that holds the MNIST files.
pub const DATA_DIR_ENV: &str = "SLA_DATA_DIR";
pub const DEFAULT_DATA_DIR: &str = "data/mnist";

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub name: String,
    pub images: Vec<Image>,
    pub labels: Vec<usize>,
    pub n_classes: usize,
}

impl Dataset {
    pub fn new(name: impl Into<String>, images: Vec<Image>, labels: Vec<usize>, n_classes: usize) -> Result<Self> {
        if images.len() != labels.len() {
            return Err(LabError::Consistency(format!(
                "{} images but {} labels",
                images.len(),
                labels.len()
            )));
        }
        if let Some((i, y)) = labels.iter().enumerate().find(|(_, &y)| y >= n_classes) {
            return Err(LabError::Consistency(format!(
                "label {y} at example {i} is outside [0, {n_classes})"
            )));
        }
        Ok(Self {
            name: name.into(),
            images,
            labels,
            n_classes,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.n_classes];
        for &y in &self.labels {
            counts[y] += 1;
        }
        counts
    }

    pub fn pairs(&self) -> impl Iterator<Item = (&Image, usize)> {
        self.images.iter().zip(self.labels.iter().copied())
    }
}

/// The default data directory: `$SLA_DATA_DIR`, else `data/mnist`.
pub fn data_dir() -> PathBuf {
    std::env::var_os(DATA_DIR_ENV)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(DEFAULT_DATA_DIR))
}

/// Image and label paths for the train or test split inside `dir`,
/// preferring gzip files when both forms exist.
pub fn mnist_paths(dir: &Path, train: bool) -> (PathBuf, PathBuf) {
    let prefix = if train { "train" } else { "t10k" };
    let pick = |stem: String| {
        let gz = dir.join(format!("{stem}.gz"));
        if gz.exists() {
            gz
        } else {
            dir.join(stem)
        }
    };
    (
        pick(format!("{prefix}-images-idx3-ubyte")),
        pick(format!("{prefix}-labels-idx1-ubyte")),
    )
}

/// Reads a file, inflating it when it starts with the gzip magic.
pub fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    let raw = std::fs::read(path).map_err(|e| LabError::io(path, e))?;
    if raw.starts_with(&[0x1f, 0x8b]) {
        let mut out = Vec::new();
        GzDecoder::new(raw.as_slice())
            .read_to_end(&mut out)
            .map_err(|e| LabError::Format(format!("{}: bad gzip stream: {e}", path.display())))?;
        Ok(out)
    } else {
        Ok(raw)
    }
}

fn be_u32(bytes: &[u8], at: usize, what: &str) -> Result<u32> {
    bytes
        .get(at..at + 4)
        .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
        .ok_or_else(|| LabError::Format(format!("truncated {what} header")))
}

fn check_magic(bytes: &[u8], expected: u32, what: &str) -> Result<()> {
    let magic = be_u32(bytes, 0, what)?;
    if magic != expected {
        return Err(LabError::Format(format!(
            "{what}: magic {:02x?}, expected {:02x?}",
            magic.to_be_bytes(),
            expected.to_be_bytes()
        )));
    }
    Ok(())
}

/// Parses an IDX3 image file; pixels are scaled by 1/255.
pub fn parse_idx_images(bytes: &[u8]) -> Result<Vec<Image>> {
    check_magic(bytes, IMAGES_MAGIC, "image file")?;
    let count = be_u32(bytes, 4, "image file")? as usize;
    let rows = be_u32(bytes, 8, "image file")? as usize;
    let cols = be_u32(bytes, 12, "image file")? as usize;
    let size = rows * cols;
    if size == 0 && count > 0 {
        return Err(LabError::Format(format!("image file declares {rows}x{cols} images")));
    }
    let body = &bytes[16..];
    if body.len() != count * size {
        return Err(LabError::Format(format!(
            "image file declares {count} images of {rows}x{cols} ({} bytes) but holds {} bytes",
            count * size,
            body.len()
        )));
    }
    body.chunks_exact(size.max(1))
        .take(count)
        .map(|px| {
            let pixels = px.iter().map(|&p| f64::from(p) / 255.0).collect();
            Ok(Image::new(rows, cols, 1, pixels)?)
        })
        .collect()
}

pub fn parse_idx_labels(bytes: &[u8]) -> Result<Vec<usize>> {
    check_magic(bytes, LABELS_MAGIC, "label file")?;
    let count = be_u32(bytes, 4, "label file")? as usize;
    let body = &bytes[8..];
    if body.len() != count {
        return Err(LabError::Format(format!(
            "label file declares {count} labels but holds {} bytes",
            body.len()
        )));
    }
    Ok(body.iter().map(|&b| b as usize).collect())
}

/// Loads an IDX image/label pair as a 10-class dataset.
pub fn load_mnist_idx(images_path: &Path, labels_path: &Path) -> Result<Dataset> {
    let images = parse_idx_images(&read_bytes(images_path)?)
        .map_err(|e| annotate(e, images_path))?;
    let labels = parse_idx_labels(&read_bytes(labels_path)?)
        .map_err(|e| annotate(e, labels_path))?;
    if images.len() != labels.len() {
        return Err(LabError::Consistency(format!(
            "{} holds {} images but {} holds {} labels",
            images_path.display(),
            images.len(),
            labels_path.display(),
            labels.len()
        )));
    }
    Dataset::new("mnist", images, labels, 10)
}

fn annotate(e: LabError, path: &Path) -> LabError {
    match e {
        LabError::Format(msg) => LabError::Format(format!("{}: {msg}", path.display())),
        other => other,
    }
}

/// Loads the train or test split from `dir`.
pub fn load_mnist_split(dir: &Path, train: bool) -> Result<Dataset> {
    let (images, labels) = mnist_paths(dir, train);
    let mut ds = load_mnist_idx(&images, &labels)?;
    ds.name = format!("mnist-{}", if train { "train" } else { "test" });
    Ok(ds)
}

/// Encodes single-channel images as an IDX3 file, pixels as `round(255·p)`.
pub fn idx_image_bytes(images: &[Image]) -> Result<Vec<u8>> {
    let (rows, cols) = match images.first() {
        Some(img) => {
            let [r, c, ch] = img.dims();
            if ch != 1 {
                return Err(LabError::Format(format!("IDX images need one channel, got {ch}")));
            }
            (r, c)
        }
        None => (0, 0),
    };
    let mut out = Vec::with_capacity(16 + images.len() * rows * cols);
    for v in [IMAGES_MAGIC, images.len() as u32, rows as u32, cols as u32] {
        out.extend_from_slice(&v.to_be_bytes());
    }
    for img in images {
        if img.dims() != [rows, cols, 1] {
            return Err(LabError::Consistency(format!(
                "mixed image sizes: {:?} and {:?}",
                [rows, cols, 1],
                img.dims()
            )));
        }
        out.extend(img.pixels().iter().map(|p| (p * 255.0).round().clamp(0.0, 255.0) as u8));
    }
    Ok(out)
}

pub fn idx_label_bytes(labels: &[usize]) -> Result<Vec<u8>> {
    let mut out = Vec::with_capacity(8 + labels.len());
    out.extend_from_slice(&LABELS_MAGIC.to_be_bytes());
    out.extend_from_slice(&(labels.len() as u32).to_be_bytes());
    for &y in labels {
        let b = u8::try_from(y).map_err(|_| LabError::Format(format!("label {y} does not fit in a byte")))?;
        out.push(b);
    }
    Ok(out)
}

/// Writes both IDX files of a dataset.
pub fn write_mnist_idx(ds: &Dataset, images_path: &Path, labels_path: &Path) -> Result<()> {
    std::fs::write(images_path, idx_image_bytes(&ds.images)?).map_err(|e| LabError::io(images_path, e))?;
    std::fs::write(labels_path, idx_label_bytes(&ds.labels)?).map_err(|e| LabError::io(labels_path, e))
}

/// Keeps only the listed classes, relabelled `classes[k] → k`, in the
/// original example order.
pub fn select_classes(ds: &Dataset, classes: &[usize]) -> Result<Dataset> {
    if classes.is_empty() {
        return Err(LabError::Config("class filter is empty".into()));
    }
    let mut map = BTreeMap::new();
    for (k, &c) in classes.iter().enumerate() {
        if c >= ds.n_classes {
            return Err(LabError::Config(format!(
                "class {c} does not exist in {} ({} classes)",
                ds.name, ds.n_classes
            )));
        }
        if map.insert(c, k).is_some() {
            return Err(LabError::Config(format!("class {c} listed twice")));
        }
    }
    let (images, labels): (Vec<_>, Vec<_>) = ds
        .pairs()
        .filter_map(|(x, y)| map.get(&y).map(|&k| (x.clone(), k)))
        .unzip();
    if images.is_empty() {
        return Err(LabError::Consistency(format!(
            "{} has no examples of classes {classes:?}",
            ds.name
        )));
    }
    Dataset::new(ds.name.clone(), images, labels, classes.len())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SubsampleSpec {
    pub per_class: usize,
    pub seed: u64,
}

/// Exactly `per_class` examples of every class, chosen by a seeded shuffle
/// and kept in their original relative order.
pub fn subsample_per_class(ds: &Dataset, spec: SubsampleSpec) -> Result<Dataset> {
    if spec.per_class == 0 {
        return Err(LabError::Config("per-class sample count must be positive".into()));
    }
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); ds.n_classes];
    for (i, &y) in ds.labels.iter().enumerate() {
        by_class[y].push(i);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut keep = Vec::with_capacity(spec.per_class * ds.n_classes);
    for (class, mut idx) in by_class.into_iter().enumerate() {
        if idx.len() < spec.per_class {
            return Err(LabError::Config(format!(
                "class {class} has {} examples, fewer than the {} requested",
                idx.len(),
                spec.per_class
            )));
        }
        idx.shuffle(&mut rng);
        keep.extend_from_slice(&idx[..spec.per_class]);
    }
    keep.sort_unstable();
    Dataset::new(
        ds.name.clone(),
        keep.iter().map(|&i| ds.images[i].clone()).collect(),
        keep.iter().map(|&i| ds.labels[i]).collect(),
        ds.n_classes,
    )
}

/// Two unit-variance Gaussian clusters on either side of a random hyperplane
/// through the origin, each point at least `margin / 2` from it. Images are
/// `1×d×1`; labels alternate 0, 1.
pub fn synthetic_two_class(d: usize, margin: f64, count: usize, seed: u64) -> Result<Dataset> {
    if !(margin > 0.0 && margin.is_finite()) {
        return Err(LabError::Config(format!("margin must be positive, got {margin}")));
    }
    if d == 0 {
        return Err(LabError::Config("dimension must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut normal: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
    let norm = normal.iter().map(|v| v * v).sum::<f64>().sqrt();
    normal.iter_mut().for_each(|v| *v /= norm);

    let mut images = Vec::with_capacity(count);
    let mut labels = Vec::with_capacity(count);
    for i in 0..count {
        let y = i % 2;
        let mut x: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
        let along: f64 = x.iter().zip(&normal).map(|(a, b)| a * b).sum();
        let g: f64 = rng.sample(StandardNormal);
        let target = (margin / 2.0 + g.abs()) * if y == 0 { -1.0 } else { 1.0 };
        for (xv, nv) in x.iter_mut().zip(&normal) {
            *xv += (target - along) * nv;
        }
        images.push(Image::new(1, d, 1, x)?);
        labels.push(y);
    }
    Dataset::new("synthetic", images, labels, 2)
}

/// Writes `index,label` rows.
pub fn export_csv(ds: &Dataset, mut out: impl Write) -> std::io::Result<()> {
    writeln!(out, "index,label")?;
    for (i, y) in ds.labels.iter().enumerate() {
        writeln!(out, "{i},{y}")?;
    }
    Ok(())
}
