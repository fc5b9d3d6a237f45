//! MNIST IDX container: big-endian `u32` magic and extents, then `u8` payload.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

use super::{LabeledDataset, Split};

const IMAGES_MAGIC: u32 = 0x0000_0803;
const LABELS_MAGIC: u32 = 0x0000_0801;

fn be_u32(bytes: &[u8], at: usize, path: &Path) -> Result<u32> {
    bytes
        .get(at..at + 4)
        .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
        .ok_or_else(|| Error::Truncated {
            path: path.to_path_buf(),
            expected: at + 4,
            found: bytes.len(),
        })
}

fn check_magic(bytes: &[u8], expected: u32, path: &Path) -> Result<()> {
    let found = be_u32(bytes, 0, path)?;
    if found != expected {
        return Err(Error::BadMagic {
            path: path.to_path_buf(),
            expected,
            found,
        });
    }
    Ok(())
}

fn check_len(bytes: &[u8], expected: usize, path: &Path) -> Result<()> {
    if bytes.len() < expected {
        return Err(Error::Truncated {
            path: path.to_path_buf(),
            expected,
            found: bytes.len(),
        });
    }
    Ok(())
}

fn read(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

/// Parses an IDX image/label pair. Pixels are scaled to `[0, 1]` and each
/// image becomes a `1 x rows x cols` tensor; classes are named `"0"`..`"9"`.
pub fn load_mnist_idx(images_path: &Path, labels_path: &Path) -> Result<LabeledDataset> {
    let img = read(images_path)?;
    check_magic(&img, IMAGES_MAGIC, images_path)?;
    let count = be_u32(&img, 4, images_path)? as usize;
    let rows = be_u32(&img, 8, images_path)? as usize;
    let cols = be_u32(&img, 12, images_path)? as usize;
    let plane = rows * cols;
    check_len(&img, 16 + count * plane, images_path)?;

    let lab = read(labels_path)?;
    check_magic(&lab, LABELS_MAGIC, labels_path)?;
    let label_count = be_u32(&lab, 4, labels_path)? as usize;
    check_len(&lab, 8 + label_count, labels_path)?;
    if label_count != count {
        return Err(Error::CountMismatch {
            images: count,
            labels: label_count,
        });
    }

    let images = img[16..16 + count * plane]
        .chunks_exact(plane.max(1))
        .map(|px| {
            Tensor::from_vec(
                &[1, rows, cols],
                px.iter().map(|&v| f64::from(v) / 255.0).collect(),
            )
        })
        .collect::<Result<Vec<_>>>()?;
    let labels: Vec<usize> = lab[8..8 + count].iter().map(|&l| l as usize).collect();
    let classes = labels.iter().max().map_or(10, |&m| (m + 1).max(10));
    let names = (0..classes).map(|c| c.to_string()).collect();
    LabeledDataset::new(images, labels, names, Split::Full)
}

/// IDX image file bytes; values are rounded from `[0, 1]` to `u8`.
pub fn encode_idx_images(ds: &LabeledDataset) -> Result<Vec<u8>> {
    let [c, rows, cols] = ds.image_shape().unwrap_or([1, 1, 1]);
    if c != 1 {
        return Err(Error::Shape(format!("IDX images must be single-channel, got {c}")));
    }
    let mut out = Vec::with_capacity(16 + ds.len() * rows * cols);
    for v in [IMAGES_MAGIC, ds.len() as u32, rows as u32, cols as u32] {
        out.extend_from_slice(&v.to_be_bytes());
    }
    for img in &ds.images {
        out.extend(img.data().iter().map(|&v| (v.clamp(0.0, 1.0) * 255.0).round() as u8));
    }
    Ok(out)
}

pub fn encode_idx_labels(ds: &LabeledDataset) -> Result<Vec<u8>> {
    let mut out = Vec::with_capacity(8 + ds.len());
    out.extend_from_slice(&LABELS_MAGIC.to_be_bytes());
    out.extend_from_slice(&(ds.len() as u32).to_be_bytes());
    for &l in &ds.labels {
        let byte = u8::try_from(l)
            .map_err(|_| Error::Data(format!("label {l} does not fit in a byte")))?;
        out.push(byte);
    }
    Ok(out)
}

pub fn write_mnist_idx(ds: &LabeledDataset, images_path: &Path, labels_path: &Path) -> Result<()> {
    fs::write(images_path, encode_idx_images(ds)?).map_err(|e| Error::io(images_path, e))?;
    fs::write(labels_path, encode_idx_labels(ds)?).map_err(|e| Error::io(labels_path, e))
}
