use std::path::Path;

use super::idx::read_bytes;
use super::Dataset;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const CIFAR10_MEAN: [f64; 3] = [0.4914, 0.4822, 0.4465];
pub const CIFAR10_STD: [f64; 3] = [0.2470, 0.2435, 0.2616];

const RECORD: usize = 3073;
const PIXELS: usize = 3072;

/// Loads CIFAR-10 binary batches (1 label byte + 3072 R, G, B plane bytes per
/// record) and normalizes each channel with [`CIFAR10_MEAN`] / [`CIFAR10_STD`].
pub fn load_cifar10_binary<P: AsRef<Path>>(batch_paths: &[P]) -> Result<Dataset> {
    if batch_paths.is_empty() {
        return Err(Error::contract("no CIFAR-10 batch files given"));
    }
    let mut labels = Vec::new();
    let mut pixels = Vec::new();
    for p in batch_paths {
        let path = p.as_ref();
        let bytes = read_bytes(path)?;
        if bytes.is_empty() || bytes.len() % RECORD != 0 {
            return Err(Error::format(
                path,
                format!(
                    "length {} is not a positive multiple of the {RECORD}-byte record (last record starts at offset {})",
                    bytes.len(),
                    bytes.len() / RECORD * RECORD
                ),
            ));
        }
        for (r, rec) in bytes.chunks_exact(RECORD).enumerate() {
            if rec[0] > 9 {
                return Err(Error::format(
                    path,
                    format!("label {} at offset {} outside 0..=9", rec[0], r * RECORD),
                ));
            }
            labels.push(rec[0] as usize);
            for (i, &b) in rec[1..].iter().enumerate() {
                let c = i / 1024;
                pixels.push((f64::from(b) / 255.0 - CIFAR10_MEAN[c]) / CIFAR10_STD[c]);
            }
        }
    }
    let n = labels.len();
    debug_assert_eq!(pixels.len(), n * PIXELS);
    let split = batch_paths[0]
        .as_ref()
        .file_name()
        .and_then(|s| s.to_str())
        .map_or("unknown", |s| if s.starts_with("test") { "test" } else { "train" })
        .to_string();
    Dataset::new("cifar10", split, Tensor::new(vec![n, 3, 32, 32], pixels)?, labels, 10)
}
