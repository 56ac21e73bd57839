//! MNIST IDX reader. Header fields are big-endian 32-bit integers; images
//! use magic 2051 (`0x00000803`) and labels magic 2049 (`0x00000801`).

use std::fs;
use std::path::Path;

use super::{LabeledDataset, Split};
use crate::error::{Error, Result};
use crate::scalar::{cst, Scalar};
use crate::tensor::Tensor;

const IMAGE_MAGIC: u32 = 2051;
const LABEL_MAGIC: u32 = 2049;
const MNIST_CLASSES: usize = 10;

fn be_u32(bytes: &[u8], offset: usize, what: &str) -> Result<u32> {
    bytes
        .get(offset..offset + 4)
        .map(|b| u32::from_be_bytes(b.try_into().expect("4 bytes")))
        .ok_or_else(|| Error::format(offset as u64, format!("truncated header ({what})")))
}

struct ImageHeader {
    count: usize,
    rows: usize,
    cols: usize,
}

fn image_header(bytes: &[u8]) -> Result<ImageHeader> {
    let magic = be_u32(bytes, 0, "magic")?;
    if magic != IMAGE_MAGIC {
        return Err(Error::format(
            0,
            format!("bad image magic {magic}, expected {IMAGE_MAGIC}"),
        ));
    }
    let count = be_u32(bytes, 4, "image count")? as usize;
    let rows = be_u32(bytes, 8, "rows")? as usize;
    let cols = be_u32(bytes, 12, "cols")? as usize;
    let need = 16 + count * rows * cols;
    if bytes.len() < need {
        return Err(Error::format(
            bytes.len() as u64,
            format!("truncated image payload: {count} images of {rows}x{cols} need {need} bytes"),
        ));
    }
    Ok(ImageHeader { count, rows, cols })
}

fn label_count(bytes: &[u8]) -> Result<usize> {
    let magic = be_u32(bytes, 0, "magic")?;
    if magic != LABEL_MAGIC {
        return Err(Error::format(
            0,
            format!("bad label magic {magic}, expected {LABEL_MAGIC}"),
        ));
    }
    let count = be_u32(bytes, 4, "label count")? as usize;
    if bytes.len() < 8 + count {
        return Err(Error::format(
            bytes.len() as u64,
            format!("truncated label payload: {count} labels"),
        ));
    }
    Ok(count)
}

/// Parses an IDX image/label pair already in memory, keeping samples
/// `[offset, offset + limit)`. Pixels are divided by 255.
pub fn parse_idx<T: Scalar>(
    images: &[u8],
    labels: &[u8],
    offset: usize,
    limit: Option<usize>,
) -> Result<LabeledDataset<T>> {
    let header = image_header(images)?;
    let n_labels = label_count(labels)?;
    if n_labels != header.count {
        return Err(Error::format(
            4,
            format!("{} images but {n_labels} labels", header.count),
        ));
    }
    let start = offset.min(header.count);
    let end = limit.map_or(header.count, |l| start.saturating_add(l).min(header.count));
    let pixels = header.rows * header.cols;
    let mut data = Vec::with_capacity((end - start) * pixels);
    for &b in &images[16 + start * pixels..16 + end * pixels] {
        data.push(cst::<T>(f64::from(b) / 255.0));
    }
    let mut out_labels = Vec::with_capacity(end - start);
    for i in start..end {
        let l = labels[8 + i];
        if usize::from(l) >= MNIST_CLASSES {
            return Err(Error::format(
                (8 + i) as u64,
                format!("label {l} outside 0..10"),
            ));
        }
        out_labels.push(u32::from(l));
    }
    let tensor = Tensor::from_vec(vec![end - start, 1, header.rows, header.cols], data)?;
    LabeledDataset::new(tensor, out_labels, MNIST_CLASSES, Split::Train)
}

pub fn read_idx<T: Scalar>(images_path: &Path, labels_path: &Path) -> Result<LabeledDataset<T>> {
    read_idx_range(images_path, labels_path, 0, None)
}

pub fn read_idx_range<T: Scalar>(
    images_path: &Path,
    labels_path: &Path,
    offset: usize,
    limit: Option<usize>,
) -> Result<LabeledDataset<T>> {
    let images = fs::read(images_path)?;
    let labels = fs::read(labels_path)?;
    parse_idx(&images, &labels, offset, limit)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MnistSplit {
    Train,
    Test,
}

/// Reads the standard MNIST file pair from `dir`
/// (`train-images-idx3-ubyte` etc.).
pub fn read_mnist<T: Scalar>(
    dir: &Path,
    which: MnistSplit,
    offset: usize,
    limit: Option<usize>,
) -> Result<LabeledDataset<T>> {
    let (img, lbl, split) = match which {
        MnistSplit::Train => (
            "train-images-idx3-ubyte",
            "train-labels-idx1-ubyte",
            Split::Train,
        ),
        MnistSplit::Test => (
            "t10k-images-idx3-ubyte",
            "t10k-labels-idx1-ubyte",
            Split::Query,
        ),
    };
    Ok(read_idx_range(&dir.join(img), &dir.join(lbl), offset, limit)?.with_split(split))
}
