//! IDX file format (the MNIST container): big-endian magic, big-endian u32
//! dimension sizes, then raw unsigned bytes.
//!
//! The byte-slice parsers never trust header sizes: every length is checked
//! against the buffer before anything is allocated.

use std::path::Path;

use super::LabeledDataset;
use crate::error::{Error, Result};

pub const IMAGES_MAGIC: u32 = 0x0000_0803;
pub const LABELS_MAGIC: u32 = 0x0000_0801;

#[derive(Debug, Clone, PartialEq)]
pub struct IdxImages {
    pub count: usize,
    pub rows: usize,
    pub cols: usize,
    /// Pixels scaled to [0, 1], row-major per image.
    pub pixels: Vec<f64>,
}

fn read_u32(bytes: &[u8], offset: usize, field: &'static str) -> Result<u32> {
    bytes
        .get(offset..offset + 4)
        .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
        .ok_or_else(|| Error::Format {
            field,
            detail: format!(
                "truncated header: need {} bytes, have {}",
                offset + 4,
                bytes.len()
            ),
        })
}

pub fn parse_idx_images(bytes: &[u8]) -> Result<IdxImages> {
    let magic = read_u32(bytes, 0, "images magic")?;
    if magic != IMAGES_MAGIC {
        return Err(Error::Format {
            field: "images magic",
            detail: format!("expected 0x{IMAGES_MAGIC:08x}, found 0x{magic:08x}"),
        });
    }
    let count = read_u32(bytes, 4, "images count")? as usize;
    let rows = read_u32(bytes, 8, "images rows")? as usize;
    let cols = read_u32(bytes, 12, "images cols")? as usize;
    let body = &bytes[16..];
    let expected = count
        .checked_mul(rows)
        .and_then(|v| v.checked_mul(cols))
        .ok_or_else(|| Error::Format {
            field: "images dims",
            detail: format!("{count}x{rows}x{cols} overflows"),
        })?;
    if body.len() != expected {
        return Err(Error::Format {
            field: "images data",
            detail: format!("expected {expected} pixel bytes, found {}", body.len()),
        });
    }
    Ok(IdxImages {
        count,
        rows,
        cols,
        pixels: body.iter().map(|&b| f64::from(b) / 255.0).collect(),
    })
}

pub fn parse_idx_labels(bytes: &[u8]) -> Result<Vec<usize>> {
    let magic = read_u32(bytes, 0, "labels magic")?;
    if magic != LABELS_MAGIC {
        return Err(Error::Format {
            field: "labels magic",
            detail: format!("expected 0x{LABELS_MAGIC:08x}, found 0x{magic:08x}"),
        });
    }
    let count = read_u32(bytes, 4, "labels count")? as usize;
    let body = &bytes[8..];
    if body.len() != count {
        return Err(Error::Format {
            field: "labels data",
            detail: format!("expected {count} label bytes, found {}", body.len()),
        });
    }
    Ok(body.iter().map(|&b| usize::from(b)).collect())
}

/// Combines an image file and a label file into a dataset.
/// `num_classes` is one more than the largest label (at least 2).
pub fn dataset_from_idx_bytes(images: &[u8], labels: &[u8]) -> Result<LabeledDataset> {
    let img = parse_idx_images(images)?;
    let lab = parse_idx_labels(labels)?;
    if img.count != lab.len() {
        return Err(Error::Format {
            field: "count mismatch",
            detail: format!("{} images but {} labels", img.count, lab.len()),
        });
    }
    let input_dim = img.rows * img.cols;
    if input_dim == 0 || img.count == 0 {
        return Err(Error::Format {
            field: "images dims",
            detail: "empty image set".into(),
        });
    }
    let num_classes = lab.iter().max().map_or(2, |m| (m + 1).max(2));
    LabeledDataset::new(img.pixels, lab, input_dim, num_classes)
}

pub fn load_idx(images_path: &Path, labels_path: &Path) -> Result<LabeledDataset> {
    let images = std::fs::read(images_path).map_err(|e| Error::io(images_path, e))?;
    let labels = std::fs::read(labels_path).map_err(|e| Error::io(labels_path, e))?;
    dataset_from_idx_bytes(&images, &labels)
}

/// Serializes images in IDX layout. Used by fixtures and fuzz seeds.
pub fn encode_idx_images(rows: usize, cols: usize, pixels: &[u8]) -> Vec<u8> {
    let count = pixels.len().checked_div(rows * cols).unwrap_or(0);
    let mut out = Vec::with_capacity(16 + pixels.len());
    out.extend_from_slice(&IMAGES_MAGIC.to_be_bytes());
    out.extend_from_slice(&(count as u32).to_be_bytes());
    out.extend_from_slice(&(rows as u32).to_be_bytes());
    out.extend_from_slice(&(cols as u32).to_be_bytes());
    out.extend_from_slice(pixels);
    out
}

pub fn encode_idx_labels(labels: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 + labels.len());
    out.extend_from_slice(&LABELS_MAGIC.to_be_bytes());
    out.extend_from_slice(&(labels.len() as u32).to_be_bytes());
    out.extend_from_slice(labels);
    out
}
