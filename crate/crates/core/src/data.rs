//! Task generators and dataset loading.
//!
//! The scalar regression task draws `x ~ Normal(μ, σ²)` and sets `y = m x`.
//! MNIST is read from the original big-endian IDX files.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::error::{Error, Result};
use crate::network::Batch;

/// `y = slope · x` with `x ~ Normal(mean, variance)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RegressionTask {
    pub slope: f64,
    pub mean: f64,
    /// Second parameter of the input normal, read as a variance.
    pub variance: f64,
    pub seed: u64,
}

impl Default for RegressionTask {
    fn default() -> Self {
        Self {
            slope: -1.0,
            mean: 1.0,
            variance: 0.1,
            seed: 0,
        }
    }
}

/// Stream reserved for held-out samples so they never overlap training draws.
const TEST_STREAM: u64 = u64::MAX;

impl RegressionTask {
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    /// Deterministic task with a single input value.
    pub fn fixed(x: f64, slope: f64) -> Self {
        Self {
            slope,
            mean: x,
            variance: 0.0,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.variance >= 0.0) || !self.variance.is_finite() {
            return Err(Error::Config("task variance must be nonnegative".into()));
        }
        Ok(())
    }

    /// Draw number `draw` of `n` samples. Each `(seed, draw)` pair maps to its
    /// own ChaCha stream, so any draw can be regenerated on its own.
    pub fn sample_draw(&self, n: usize, draw: u64) -> Result<Batch> {
        self.validate()?;
        if n == 0 {
            return Err(Error::Config("cannot sample an empty batch".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(draw);
        let normal = Normal::new(self.mean, self.variance.sqrt())
            .map_err(|e| Error::Config(e.to_string()))?;
        let xs: Vec<f64> = (0..n).map(|_| normal.sample(&mut rng)).collect();
        let ys: Vec<f64> = xs.iter().map(|x| self.slope * x).collect();
        Batch::scalar_pairs(&xs, &ys)
    }

    /// Held-out set of `n` samples for this seed.
    pub fn test_set(&self, n: usize) -> Result<Batch> {
        self.sample_draw(n, TEST_STREAM)
    }
}

/// First draw of `n` samples from `task`.
pub fn sample_regression(task: &RegressionTask, n: usize) -> Result<Batch> {
    task.sample_draw(n, 0)
}

/// IDX parse failures, each pointing at the offending byte offset.
#[derive(Debug, Error, PartialEq, Eq)]
pub enum IdxError {
    #[error("bad IDX magic number at offset {offset}: expected {expected}, found {found}")]
    BadMagic { offset: usize, expected: u32, found: u32 },

    #[error("truncated IDX data at offset {offset}: needed {needed} bytes, {available} available")]
    Truncated { offset: usize, needed: usize, available: usize },

    #[error("image count {images} does not match label count {labels}")]
    CountMismatch { images: usize, labels: usize },

    #[error("label {value} at offset {offset} is not a digit")]
    LabelOutOfRange { offset: usize, value: u8 },
}

pub const IDX_IMAGES_MAGIC: u32 = 2051;
pub const IDX_LABELS_MAGIC: u32 = 2049;

fn be_u32(bytes: &[u8], offset: usize) -> std::result::Result<u32, IdxError> {
    let chunk = bytes.get(offset..offset + 4).ok_or(IdxError::Truncated {
        offset,
        needed: 4,
        available: bytes.len().saturating_sub(offset),
    })?;
    Ok(u32::from_be_bytes(chunk.try_into().unwrap()))
}

/// Raw images of an IDX3 file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IdxImages {
    pub count: usize,
    pub rows: usize,
    pub cols: usize,
    pub pixels: Vec<u8>,
}

pub fn parse_idx_images(bytes: &[u8]) -> std::result::Result<IdxImages, IdxError> {
    let magic = be_u32(bytes, 0)?;
    if magic != IDX_IMAGES_MAGIC {
        return Err(IdxError::BadMagic { offset: 0, expected: IDX_IMAGES_MAGIC, found: magic });
    }
    let count = be_u32(bytes, 4)? as usize;
    let rows = be_u32(bytes, 8)? as usize;
    let cols = be_u32(bytes, 12)? as usize;
    let needed = count * rows * cols;
    let body = &bytes[16..];
    if body.len() < needed {
        return Err(IdxError::Truncated { offset: 16, needed, available: body.len() });
    }
    Ok(IdxImages { count, rows, cols, pixels: body[..needed].to_vec() })
}

pub fn parse_idx_labels(bytes: &[u8]) -> std::result::Result<Vec<u8>, IdxError> {
    let magic = be_u32(bytes, 0)?;
    if magic != IDX_LABELS_MAGIC {
        return Err(IdxError::BadMagic { offset: 0, expected: IDX_LABELS_MAGIC, found: magic });
    }
    let count = be_u32(bytes, 4)? as usize;
    let body = &bytes[8..];
    if body.len() < count {
        return Err(IdxError::Truncated { offset: 8, needed: count, available: body.len() });
    }
    if let Some(pos) = body[..count].iter().position(|&v| v > 9) {
        return Err(IdxError::LabelOutOfRange { offset: 8 + pos, value: body[pos] });
    }
    Ok(body[..count].to_vec())
}

/// Serialize images in IDX3 layout.
pub fn encode_idx_images(rows: usize, cols: usize, pixels: &[u8]) -> Vec<u8> {
    let count = pixels.len() / (rows * cols);
    let mut out = Vec::with_capacity(16 + pixels.len());
    for v in [IDX_IMAGES_MAGIC, count as u32, rows as u32, cols as u32] {
        out.extend_from_slice(&v.to_be_bytes());
    }
    out.extend_from_slice(pixels);
    out
}

/// Serialize labels in IDX1 layout.
pub fn encode_idx_labels(labels: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 + labels.len());
    out.extend_from_slice(&IDX_LABELS_MAGIC.to_be_bytes());
    out.extend_from_slice(&(labels.len() as u32).to_be_bytes());
    out.extend_from_slice(labels);
    out
}

/// Images and their labels from one pair of IDX files.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabeledImages {
    pub images: IdxImages,
    pub labels: Vec<u8>,
}

impl LabeledImages {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn pixels_per_image(&self) -> usize {
        self.images.rows * self.images.cols
    }
}

/// Read and cross-check an image/label IDX pair.
pub fn load_mnist(image_path: impl AsRef<Path>, label_path: impl AsRef<Path>) -> Result<LabeledImages> {
    let images = parse_idx_images(&fs::read(image_path)?)?;
    let labels = parse_idx_labels(&fs::read(label_path)?)?;
    if images.count != labels.len() {
        return Err(IdxError::CountMismatch { images: images.count, labels: labels.len() }.into());
    }
    Ok(LabeledImages { images, labels })
}

/// How inputs and targets were encoded.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Normalization {
    /// Pixel mean after scaling to `[0, 1]`, over the training inputs.
    pub pixel_mean: f64,
    /// Pixel standard deviation after scaling, over the training inputs.
    pub pixel_std: f64,
    pub scheme: String,
    pub target_encoding: String,
}

/// Training and held-out splits plus the normalization that produced them.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub train: Batch,
    pub test: Batch,
    pub normalization: Normalization,
}

fn one_hot(labels: &[u8]) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(10, labels.len());
    for (j, &k) in labels.iter().enumerate() {
        m[(k as usize, j)] = 1.0;
    }
    m
}

fn scaled_pixels(split: &LabeledImages, limit: usize) -> DMatrix<f64> {
    let d = split.pixels_per_image();
    let n = limit.min(split.len());
    DMatrix::from_iterator(d, n, split.images.pixels[..n * d].iter().map(|&p| p as f64 / 255.0))
}

impl Dataset {
    /// Scale pixels to `[0, 1]`, standardize with the training-pixel mean and
    /// standard deviation, and one-hot encode labels. Only the first
    /// `train_limit` / `test_limit` samples are kept.
    pub fn from_mnist(train: &LabeledImages, test: &LabeledImages, train_limit: usize, test_limit: usize) -> Result<Self> {
        if train.pixels_per_image() != test.pixels_per_image() {
            return Err(Error::Shape("train and test images differ in size".into()));
        }
        let mut x_train = scaled_pixels(train, train_limit);
        let mut x_test = scaled_pixels(test, test_limit);
        let count = x_train.len() as f64;
        let mean = x_train.iter().sum::<f64>() / count;
        let var = x_train.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / count;
        let std = var.sqrt();
        if !(std > 0.0) {
            return Err(Error::Numeric("training pixels have zero variance".into()));
        }
        x_train.apply(|v| *v = (*v - mean) / std);
        x_test.apply(|v| *v = (*v - mean) / std);
        let n_train = x_train.ncols();
        let n_test = x_test.ncols();
        Ok(Self {
            train: Batch::new(x_train, one_hot(&train.labels[..n_train]))?,
            test: Batch::new(x_test, one_hot(&test.labels[..n_test]))?,
            normalization: Normalization {
                pixel_mean: mean,
                pixel_std: std,
                scheme: "scale to [0,1], then standardize by training-pixel mean/std".into(),
                target_encoding: "one-hot over 10 classes".into(),
            },
        })
    }

    /// Load the four standard MNIST files from `dir`.
    pub fn mnist_dir(dir: impl AsRef<Path>, train_limit: usize, test_limit: usize) -> Result<Self> {
        let dir = dir.as_ref();
        let train = load_mnist(dir.join("train-images-idx3-ubyte"), dir.join("train-labels-idx1-ubyte"))?;
        let test = load_mnist(dir.join("t10k-images-idx3-ubyte"), dir.join("t10k-labels-idx1-ubyte"))?;
        Self::from_mnist(&train, &test, train_limit, test_limit)
    }
}

const CACHE_MAGIC: &[u8; 8] = b"TPCDSET\0";
const CACHE_VERSION: u32 = 1;

fn write_matrix<W: Write>(out: &mut W, m: &DMatrix<f64>) -> std::io::Result<()> {
    out.write_all(&(m.nrows() as u64).to_le_bytes())?;
    out.write_all(&(m.ncols() as u64).to_le_bytes())?;
    for v in m.iter() {
        out.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

fn write_str<W: Write>(out: &mut W, s: &str) -> std::io::Result<()> {
    out.write_all(&(s.len() as u64).to_le_bytes())?;
    out.write_all(s.as_bytes())
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let s = self.bytes.get(self.pos..self.pos + n).ok_or_else(|| {
            Error::Numeric(format!("dataset cache truncated at byte {}", self.pos))
        })?;
        self.pos += n;
        Ok(s)
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn string(&mut self) -> Result<String> {
        let n = self.u64()? as usize;
        String::from_utf8(self.take(n)?.to_vec()).map_err(|e| Error::Numeric(e.to_string()))
    }

    fn matrix(&mut self) -> Result<DMatrix<f64>> {
        let r = self.u64()? as usize;
        let c = self.u64()? as usize;
        let mut data = Vec::with_capacity(r * c);
        for _ in 0..r * c {
            data.push(self.f64()?);
        }
        Ok(DMatrix::from_vec(r, c, data))
    }
}

/// Write a dataset as: magic, version, normalization, then length-prefixed
/// little-endian `f64` matrices (train inputs/targets, test inputs/targets).
pub fn write_cache(dataset: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    let mut out = std::io::BufWriter::new(fs::File::create(path)?);
    out.write_all(CACHE_MAGIC)?;
    out.write_all(&CACHE_VERSION.to_le_bytes())?;
    out.write_all(&dataset.normalization.pixel_mean.to_le_bytes())?;
    out.write_all(&dataset.normalization.pixel_std.to_le_bytes())?;
    write_str(&mut out, &dataset.normalization.scheme)?;
    write_str(&mut out, &dataset.normalization.target_encoding)?;
    for m in [dataset.train.inputs(), dataset.train.targets(), dataset.test.inputs(), dataset.test.targets()] {
        write_matrix(&mut out, m)?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_cache(path: impl AsRef<Path>) -> Result<Dataset> {
    let mut bytes = Vec::new();
    fs::File::open(path)?.read_to_end(&mut bytes)?;
    let mut cur = Cursor { bytes: &bytes, pos: 0 };
    if cur.take(8)? != CACHE_MAGIC {
        return Err(Error::Numeric("not a dataset cache file".into()));
    }
    let version = u32::from_le_bytes(cur.take(4)?.try_into().unwrap());
    if version != CACHE_VERSION {
        return Err(Error::Numeric(format!(
            "dataset cache version {version}, expected {CACHE_VERSION}"
        )));
    }
    let normalization = Normalization {
        pixel_mean: cur.f64()?,
        pixel_std: cur.f64()?,
        scheme: cur.string()?,
        target_encoding: cur.string()?,
    };
    let train = Batch::new(cur.matrix()?, cur.matrix()?)?;
    let test = Batch::new(cur.matrix()?, cur.matrix()?)?;
    Ok(Dataset { train, test, normalization })
}
