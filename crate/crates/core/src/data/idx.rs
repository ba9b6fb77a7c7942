use std::io::Read;
use std::path::Path;

use flate2::read::GzDecoder;

use super::Dataset;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

const IMAGES_MAGIC: u32 = 0x0000_0803;
const LABELS_MAGIC: u32 = 0x0000_0801;

/// An unsigned-byte IDX array.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct IdxArray {
    pub magic: u32,
    pub dims: Vec<usize>,
    pub data: Vec<u8>,
}

/// Reads a file, transparently inflating gzip content.
pub(crate) fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    let raw = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    if raw.starts_with(&[0x1f, 0x8b]) {
        let mut out = Vec::new();
        GzDecoder::new(raw.as_slice())
            .read_to_end(&mut out)
            .map_err(|e| Error::format(path, format!("bad gzip stream: {e}")))?;
        Ok(out)
    } else {
        Ok(raw)
    }
}

fn be_u32(bytes: &[u8], offset: usize, path: &Path) -> Result<u32> {
    bytes
        .get(offset..offset + 4)
        .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
        .ok_or_else(|| {
            Error::format(
                path,
                format!("truncated header: need 4 bytes at offset {offset}, file has {}", bytes.len()),
            )
        })
}

/// Parses an IDX file whose magic must equal `expected`.
pub fn read_idx(path: impl AsRef<Path>, expected: u32) -> Result<IdxArray> {
    let path = path.as_ref();
    let bytes = read_bytes(path)?;
    let magic = be_u32(&bytes, 0, path)?;
    if magic != expected {
        return Err(Error::format(
            path,
            format!("bad magic: expected 0x{expected:08x}, found 0x{magic:08x}"),
        ));
    }
    let ndims = (magic & 0xff) as usize;
    let mut dims = Vec::with_capacity(ndims);
    for d in 0..ndims {
        dims.push(be_u32(&bytes, 4 + 4 * d, path)? as usize);
    }
    let start = 4 + 4 * ndims;
    let len: usize = dims.iter().product();
    let end = start + len;
    if bytes.len() < end {
        return Err(Error::format(
            path,
            format!(
                "truncated payload: data runs from offset {start} to {end}, file ends at offset {}",
                bytes.len()
            ),
        ));
    }
    Ok(IdxArray {
        magic,
        dims,
        data: bytes[start..end].to_vec(),
    })
}

/// Loads an MNIST image/label file pair (plain or gzipped) with pixels in `[0, 1]`.
pub fn load_mnist_idx(images_path: impl AsRef<Path>, labels_path: impl AsRef<Path>) -> Result<Dataset> {
    let images_path = images_path.as_ref();
    let images = read_idx(images_path, IMAGES_MAGIC)?;
    let labels = read_idx(labels_path.as_ref(), LABELS_MAGIC)?;
    let (n, h, w) = (images.dims[0], images.dims[1], images.dims[2]);
    if labels.dims[0] != n {
        return Err(Error::format(
            labels_path.as_ref(),
            format!("{} labels for {n} images", labels.dims[0]),
        ));
    }
    if let Some(&bad) = labels.data.iter().find(|&&l| l > 9) {
        return Err(Error::format(labels_path.as_ref(), format!("label {bad} outside 0..=9")));
    }
    let pixels = images.data.iter().map(|&b| f64::from(b) / 255.0).collect();
    let split = images_path
        .file_name()
        .and_then(|s| s.to_str())
        .and_then(|s| s.split('-').next())
        .unwrap_or("unknown")
        .to_string();
    Dataset::new(
        "mnist",
        split,
        Tensor::new(vec![n, 1, h, w], pixels)?,
        labels.data.iter().map(|&l| l as usize).collect(),
        10,
    )
}
