//! IDX files (the MNIST container format): big-endian header, raw bytes.
//! Gzip-compressed files are detected by their `1f 8b` prefix.

use std::fs;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use flate2::read::GzDecoder;

use super::Dataset;

pub const IMAGES_MAGIC: u32 = 0x0000_0803;
pub const LABELS_MAGIC: u32 = 0x0000_0801;

#[derive(Debug, thiserror::Error)]
pub enum IdxError {
    #[error("{path}: bad magic {found:#010x}, expected {expected:#010x}")]
    BadMagic {
        path: String,
        expected: u32,
        found: u32,
    },
    #[error("{path}: truncated, expected {expected} bytes of payload, found {found}")]
    Truncated {
        path: String,
        expected: usize,
        found: usize,
    },
    #[error("{images} images but {labels} labels")]
    CountMismatch { images: usize, labels: usize },
    #[error("{path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct IdxImages {
    pub count: usize,
    pub rows: usize,
    pub cols: usize,
    /// `count * rows * cols` pixels scaled from bytes to `[0, 1]`.
    pub pixels: Vec<f64>,
}

fn read_bytes(path: &Path) -> Result<Vec<u8>, IdxError> {
    let io = |source| IdxError::Io {
        path: path.display().to_string(),
        source,
    };
    let raw = fs::read(path).map_err(io)?;
    if raw.starts_with(&[0x1f, 0x8b]) {
        let mut out = Vec::new();
        GzDecoder::new(raw.as_slice()).read_to_end(&mut out).map_err(io)?;
        Ok(out)
    } else {
        Ok(raw)
    }
}

fn header(bytes: &[u8], path: &Path, magic: u32, words: usize) -> Result<Vec<u32>, IdxError> {
    let need = 4 * (words + 1);
    if bytes.len() >= 4 {
        let found = u32::from_be_bytes(bytes[..4].try_into().unwrap());
        if found != magic {
            return Err(IdxError::BadMagic {
                path: path.display().to_string(),
                expected: magic,
                found,
            });
        }
    }
    if bytes.len() < need {
        return Err(IdxError::Truncated {
            path: path.display().to_string(),
            expected: need,
            found: bytes.len(),
        });
    }
    let word = |i: usize| u32::from_be_bytes(bytes[4 * i..4 * i + 4].try_into().unwrap());
    Ok((1..=words).map(word).collect())
}

fn payload<'a>(bytes: &'a [u8], path: &Path, offset: usize, len: usize) -> Result<&'a [u8], IdxError> {
    let found = bytes.len() - offset;
    if found < len {
        return Err(IdxError::Truncated {
            path: path.display().to_string(),
            expected: len,
            found,
        });
    }
    Ok(&bytes[offset..offset + len])
}

pub fn read_idx_images(path: impl AsRef<Path>) -> Result<IdxImages, IdxError> {
    let path = path.as_ref();
    let bytes = read_bytes(path)?;
    let dims = header(&bytes, path, IMAGES_MAGIC, 3)?;
    let (count, rows, cols) = (dims[0] as usize, dims[1] as usize, dims[2] as usize);
    let data = payload(&bytes, path, 16, count * rows * cols)?;
    Ok(IdxImages {
        count,
        rows,
        cols,
        pixels: data.iter().map(|&b| b as f64 / 255.0).collect(),
    })
}

pub fn read_idx_labels(path: impl AsRef<Path>) -> Result<Vec<u8>, IdxError> {
    let path = path.as_ref();
    let bytes = read_bytes(path)?;
    let count = header(&bytes, path, LABELS_MAGIC, 1)?[0] as usize;
    Ok(payload(&bytes, path, 8, count)?.to_vec())
}

pub fn write_idx_images(
    path: impl AsRef<Path>,
    count: usize,
    rows: usize,
    cols: usize,
    pixels: &[u8],
) -> std::io::Result<()> {
    assert_eq!(pixels.len(), count * rows * cols);
    let mut f = fs::File::create(path)?;
    for w in [IMAGES_MAGIC, count as u32, rows as u32, cols as u32] {
        f.write_all(&w.to_be_bytes())?;
    }
    f.write_all(pixels)
}

pub fn write_idx_labels(path: impl AsRef<Path>, labels: &[u8]) -> std::io::Result<()> {
    let mut f = fs::File::create(path)?;
    f.write_all(&LABELS_MAGIC.to_be_bytes())?;
    f.write_all(&(labels.len() as u32).to_be_bytes())?;
    f.write_all(labels)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MnistSplit {
    Train,
    Test,
}

fn find(dir: &Path, stem: &str) -> PathBuf {
    let plain = dir.join(stem);
    if plain.exists() {
        plain
    } else {
        dir.join(format!("{stem}.gz"))
    }
}

/// Loads `{train,t10k}-{images-idx3,labels-idx1}-ubyte[.gz]` from `dir`.
pub fn load_mnist(dir: impl AsRef<Path>, split: MnistSplit) -> crate::Result<Dataset> {
    let dir = dir.as_ref();
    let prefix = match split {
        MnistSplit::Train => "train",
        MnistSplit::Test => "t10k",
    };
    let images = read_idx_images(find(dir, &format!("{prefix}-images-idx3-ubyte")))?;
    let labels = read_idx_labels(find(dir, &format!("{prefix}-labels-idx1-ubyte")))?;
    if images.count != labels.len() {
        return Err(IdxError::CountMismatch {
            images: images.count,
            labels: labels.len(),
        }
        .into());
    }
    Dataset::new(
        images.rows * images.cols,
        images.pixels,
        labels.into_iter().map(usize::from).collect(),
    )
}
