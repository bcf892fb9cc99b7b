//! Reader and writer for the big-endian IDX container used by MNIST.
//!
//! Layout: 4-byte magic (`0x00000803` images, `0x00000801` labels), one
//! 32-bit big-endian size per dimension, then raw unsigned bytes. Files may be
//! gzip-compressed; compression is detected from the `1f 8b` prefix.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use flate2::read::GzDecoder;

use super::Dataset;
use crate::error::{Error, IdxError, Result};
use crate::nn::InputShape;

pub const IMAGES_MAGIC: u32 = 0x0000_0803;
pub const LABELS_MAGIC: u32 = 0x0000_0801;

fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    let raw = fs::read(path).map_err(|e| Error::io(path, e))?;
    if raw.starts_with(&[0x1f, 0x8b]) {
        let mut out = Vec::new();
        GzDecoder::new(&raw[..])
            .read_to_end(&mut out)
            .map_err(|e| Error::io(path, e))?;
        Ok(out)
    } else {
        Ok(raw)
    }
}

/// Validate the header and return `(dims, payload)`.
fn parse<'a>(path: &Path, bytes: &'a [u8], magic: u32) -> Result<(Vec<usize>, &'a [u8])> {
    let ndims = (magic & 0xff) as usize;
    let header = 4 + 4 * ndims;
    if bytes.len() < 4 {
        return Err(IdxError::Truncated {
            path: path.into(),
            expected: header as u64,
            actual: bytes.len() as u64,
        }
        .into());
    }
    let found = u32::from_be_bytes(bytes[..4].try_into().unwrap());
    if found != magic {
        return Err(IdxError::BadMagic {
            path: path.into(),
            expected: magic,
            found,
        }
        .into());
    }
    if bytes.len() < header {
        return Err(IdxError::Truncated {
            path: path.into(),
            expected: header as u64,
            actual: bytes.len() as u64,
        }
        .into());
    }
    let dims: Vec<usize> = bytes[4..header]
        .chunks_exact(4)
        .map(|c| u32::from_be_bytes(c.try_into().unwrap()) as usize)
        .collect();
    let body: u64 = dims.iter().map(|&d| d as u64).product();
    let expected = header as u64 + body;
    let actual = bytes.len() as u64;
    if actual < expected {
        return Err(IdxError::Truncated {
            path: path.into(),
            expected,
            actual,
        }
        .into());
    }
    if actual > expected {
        return Err(IdxError::Header {
            path: path.into(),
            reason: format!("{} trailing bytes after the declared {expected}", actual - expected),
        }
        .into());
    }
    if dims.contains(&0) {
        return Err(IdxError::Header {
            path: path.into(),
            reason: format!("zero-sized dimension in {dims:?}"),
        }
        .into());
    }
    Ok((dims, &bytes[header..]))
}

/// Load an image/label IDX pair. Pixels are scaled by 1/255; the class
/// count is one more than the largest label.
pub fn load_idx(images_path: impl AsRef<Path>, labels_path: impl AsRef<Path>) -> Result<Dataset> {
    let (images_path, labels_path) = (images_path.as_ref(), labels_path.as_ref());
    let image_bytes = read_bytes(images_path)?;
    let (dims, pixels) = parse(images_path, &image_bytes, IMAGES_MAGIC)?;
    let label_bytes = read_bytes(labels_path)?;
    let (label_dims, labels) = parse(labels_path, &label_bytes, LABELS_MAGIC)?;
    if dims[0] != label_dims[0] {
        return Err(IdxError::CountMismatch {
            images_path: images_path.into(),
            labels_path: labels_path.into(),
            images: dims[0],
            labels: label_dims[0],
        }
        .into());
    }
    let inputs = pixels.iter().map(|&p| p as f32 / 255.0).collect();
    let labels: Vec<usize> = labels.iter().map(|&l| l as usize).collect();
    let num_classes = labels.iter().max().unwrap() + 1;
    Dataset::new(inputs, labels, InputShape::new(1, dims[1], dims[2]), num_classes)
}

fn write_file(path: &Path, magic: u32, dims: &[usize], payload: &[u8]) -> Result<()> {
    let mut out = Vec::with_capacity(4 + 4 * dims.len() + payload.len());
    out.extend_from_slice(&magic.to_be_bytes());
    for &d in dims {
        out.extend_from_slice(&(d as u32).to_be_bytes());
    }
    out.extend_from_slice(payload);
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&out).map_err(|e| Error::io(path, e))
}

/// Write raw `n x rows x cols` pixels as an uncompressed IDX image file.
pub fn write_idx_images(path: impl AsRef<Path>, pixels: &[u8], rows: usize, cols: usize) -> Result<()> {
    let plane = rows * cols;
    if plane == 0 || pixels.len() % plane != 0 {
        return Err(Error::dimension("IDX image payload", format!("a multiple of {plane}"), pixels.len()));
    }
    write_file(path.as_ref(), IMAGES_MAGIC, &[pixels.len() / plane, rows, cols], pixels)
}

pub fn write_idx_labels(path: impl AsRef<Path>, labels: &[u8]) -> Result<()> {
    write_file(path.as_ref(), LABELS_MAGIC, &[labels.len()], labels)
}

/// Write a single-channel dataset as an IDX pair, quantizing pixels to
/// `round(255 v)`. Datasets produced by [`load_idx`] round-trip exactly.
pub fn write_idx(ds: &Dataset, images_path: impl AsRef<Path>, labels_path: impl AsRef<Path>) -> Result<()> {
    let shape = ds.shape();
    if shape.channels != 1 {
        return Err(Error::Unsupported(format!("IDX images need one channel, dataset has {}", shape.channels)));
    }
    if ds.num_classes() > 256 {
        return Err(Error::Unsupported("IDX labels are single bytes".into()));
    }
    let pixels: Vec<u8> = ds.inputs().iter().map(|&v| (v as f64 * 255.0).round() as u8).collect();
    let labels: Vec<u8> = ds.labels().iter().map(|&l| l as u8).collect();
    write_idx_images(images_path, &pixels, shape.height, shape.width)?;
    write_idx_labels(labels_path, &labels)
}
