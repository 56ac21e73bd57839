//! CIFAR-10 binary batches: 3073-byte records, label byte first, then the
//! red, green and blue 32x32 planes.

use std::fs;
use std::path::Path;

use super::{LabeledDataset, Split};
use crate::error::{Error, Result};
use crate::scalar::{cst, Scalar};
use crate::tensor::Tensor;

const RECORD: usize = 3073;
const SIDE: usize = 32;
const CLASSES: usize = 10;

pub fn parse_cifar10<T: Scalar>(files: &[&[u8]]) -> Result<LabeledDataset<T>> {
    let mut data = Vec::new();
    let mut labels = Vec::new();
    for bytes in files {
        if bytes.len() % RECORD != 0 {
            return Err(Error::format(
                (bytes.len() - bytes.len() % RECORD) as u64,
                format!("length {} is not a multiple of {RECORD}", bytes.len()),
            ));
        }
        for (r, rec) in bytes.chunks_exact(RECORD).enumerate() {
            if usize::from(rec[0]) >= CLASSES {
                return Err(Error::format(
                    (r * RECORD) as u64,
                    format!("label {} outside 0..10", rec[0]),
                ));
            }
            labels.push(u32::from(rec[0]));
            data.extend(rec[1..].iter().map(|&b| cst::<T>(f64::from(b) / 255.0)));
        }
    }
    let n = labels.len();
    LabeledDataset::new(
        Tensor::from_vec(vec![n, 3, SIDE, SIDE], data)?,
        labels,
        CLASSES,
        Split::Train,
    )
}

pub fn read_cifar10<T: Scalar>(batch_paths: &[&Path]) -> Result<LabeledDataset<T>> {
    let blobs = batch_paths
        .iter()
        .map(fs::read)
        .collect::<std::io::Result<Vec<_>>>()?;
    let refs: Vec<&[u8]> = blobs.iter().map(Vec::as_slice).collect();
    parse_cifar10(&refs)
}
