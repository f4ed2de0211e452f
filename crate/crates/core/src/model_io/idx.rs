//! IDX image/label files (big-endian header, one byte per pixel or label).

use std::path::Path;

use thiserror::Error;

use crate::nn::Tensor;

const IMAGES_MAGIC: u32 = 0x0000_0803;
const LABELS_MAGIC: u32 = 0x0000_0801;

#[derive(Debug, Error)]
pub enum IdxError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("bad magic: expected {expected:#010x}, found {found:#010x}")]
    BadMagic { expected: u32, found: u32 },
    #[error("truncated file: need {needed} bytes, have {have}")]
    Truncated { needed: usize, have: usize },
    #[error("{0} unexpected trailing bytes")]
    TrailingBytes(usize),
    #[error("count mismatch: {images} images but {labels} labels")]
    CountMismatch { images: usize, labels: usize },
}

impl IdxError {
    pub fn code(&self) -> &'static str {
        match self {
            IdxError::Io { .. } => "io",
            IdxError::BadMagic { .. } => "bad_magic",
            IdxError::Truncated { .. } => "truncated",
            IdxError::TrailingBytes(_) => "trailing_bytes",
            IdxError::CountMismatch { .. } => "count_mismatch",
        }
    }
}

pub type Result<T> = std::result::Result<T, IdxError>;

/// Grayscale images with labels; pixels scaled to `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    rows: usize,
    cols: usize,
    pixels: Vec<f32>,
    labels: Vec<u8>,
}

impl Dataset {
    pub fn new(rows: usize, cols: usize, pixels: Vec<f32>, labels: Vec<u8>) -> Result<Self> {
        let per = rows * cols;
        if per == 0 || pixels.len() != per * labels.len() {
            return Err(IdxError::CountMismatch {
                images: if per == 0 { 0 } else { pixels.len() / per },
                labels: labels.len(),
            });
        }
        Ok(Self { rows, cols, pixels, labels })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    /// Image `i` as a `(1, rows, cols)` tensor.
    pub fn image(&self, i: usize) -> Tensor {
        let per = self.rows * self.cols;
        Tensor::new(vec![1, self.rows, self.cols], self.pixels[i * per..(i + 1) * per].to_vec())
            .expect("dataset image has a consistent shape")
    }

    /// The first `n` samples (all of them when `n >= len`).
    pub fn subsample(&self, n: usize) -> Dataset {
        let n = n.min(self.len());
        let per = self.rows * self.cols;
        Dataset {
            rows: self.rows,
            cols: self.cols,
            pixels: self.pixels[..n * per].to_vec(),
            labels: self.labels[..n].to_vec(),
        }
    }
}

fn be_u32(bytes: &[u8], at: usize) -> Result<u32> {
    let b = bytes.get(at..at + 4).ok_or(IdxError::Truncated {
        needed: at + 4,
        have: bytes.len(),
    })?;
    Ok(u32::from_be_bytes(b.try_into().unwrap()))
}

fn check_magic(bytes: &[u8], expected: u32) -> Result<()> {
    let found = be_u32(bytes, 0)?;
    if found != expected {
        return Err(IdxError::BadMagic { expected, found });
    }
    Ok(())
}

fn body(bytes: &[u8], header: usize, len: usize) -> Result<&[u8]> {
    let needed = header + len;
    if bytes.len() < needed {
        return Err(IdxError::Truncated { needed, have: bytes.len() });
    }
    if bytes.len() > needed {
        return Err(IdxError::TrailingBytes(bytes.len() - needed));
    }
    Ok(&bytes[header..])
}

/// Parses an image file into `(count, rows, cols, pixels in [0, 1])`.
pub fn parse_images(bytes: &[u8]) -> Result<(usize, usize, usize, Vec<f32>)> {
    check_magic(bytes, IMAGES_MAGIC)?;
    let count = be_u32(bytes, 4)? as usize;
    let rows = be_u32(bytes, 8)? as usize;
    let cols = be_u32(bytes, 12)? as usize;
    let raw = body(bytes, 16, count * rows * cols)?;
    Ok((count, rows, cols, raw.iter().map(|&p| p as f32 / 255.0).collect()))
}

pub fn parse_labels(bytes: &[u8]) -> Result<Vec<u8>> {
    check_magic(bytes, LABELS_MAGIC)?;
    let count = be_u32(bytes, 4)? as usize;
    Ok(body(bytes, 8, count)?.to_vec())
}

pub fn parse_idx(images: &[u8], labels: &[u8]) -> Result<Dataset> {
    let (count, rows, cols, pixels) = parse_images(images)?;
    let labels = parse_labels(labels)?;
    if labels.len() != count {
        return Err(IdxError::CountMismatch {
            images: count,
            labels: labels.len(),
        });
    }
    Dataset::new(rows, cols, pixels, labels)
}

fn read(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|source| IdxError::Io {
        path: path.display().to_string(),
        source,
    })
}

pub fn load_idx(images: impl AsRef<Path>, labels: impl AsRef<Path>) -> Result<Dataset> {
    parse_idx(&read(images.as_ref())?, &read(labels.as_ref())?)
}
