//! Single-file checkpoints.
//!
//! Layout (little-endian): `SPKT`, `u16` version, `u32`-prefixed JSON model
//! config, `u32` parameter count and per-parameter records
//! `{u16 name length, name, u8 kind, u8 dtype, u8 rank, u32 dims.., raw data}`,
//! `u32` mask count and per-mask records `{u16 name length, name, u64 numel,
//! bitset (LSB first)}`, then the SHA-256 of everything before it.

use std::path::Path;

use sha2::{Digest, Sha256};

use crate::autodiff::ParamKind;
use crate::error::{Error, Result};
use crate::models::{build_model, Model, ModelConfig};
use crate::pruning::PruneMask;
use crate::tensor::Tensor;

pub const MAGIC: &[u8; 4] = b"SPKT";
pub const VERSION: u16 = 1;
const DTYPE_F64: u8 = 0;
const DIGEST_LEN: usize = 32;

fn kind_tag(k: ParamKind) -> u8 {
    match k {
        ParamKind::Weight => 0,
        ParamKind::Bias => 1,
        ParamKind::Structured => 2,
    }
}

fn put_name(buf: &mut Vec<u8>, name: &str) {
    buf.extend_from_slice(&(name.len() as u16).to_le_bytes());
    buf.extend_from_slice(name.as_bytes());
}

/// Encodes `model` and a mask (the model's own masks when `None`).
pub fn encode(model: &Model, mask: Option<&PruneMask>) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&VERSION.to_le_bytes());
    let cfg = serde_json::to_vec(&model.config)?;
    buf.extend_from_slice(&(cfg.len() as u32).to_le_bytes());
    buf.extend_from_slice(&cfg);

    let params = model.parameters();
    buf.extend_from_slice(&(params.len() as u32).to_le_bytes());
    for p in &params {
        put_name(&mut buf, &p.name);
        buf.push(kind_tag(p.kind));
        buf.push(DTYPE_F64);
        buf.push(p.value.shape().len() as u8);
        for &d in p.value.shape() {
            buf.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for v in p.value.data() {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }

    let prunable = model.prunable_parameters();
    let masks: Vec<(&str, &Tensor)> = match mask {
        Some(m) => {
            if m.masks.len() != prunable.len() {
                return Err(Error::dim(format!(
                    "mask has {} tensors for {} prunable parameters",
                    m.masks.len(),
                    prunable.len()
                )));
            }
            prunable.iter().map(|p| p.name.as_str()).zip(m.masks.iter()).collect()
        }
        None => prunable
            .iter()
            .filter_map(|p| p.mask().map(|m| (p.name.as_str(), m)))
            .collect(),
    };
    buf.extend_from_slice(&(masks.len() as u32).to_le_bytes());
    for (name, m) in masks {
        put_name(&mut buf, name);
        buf.extend_from_slice(&(m.numel() as u64).to_le_bytes());
        let mut bits = vec![0u8; m.numel().div_ceil(8)];
        for (i, &v) in m.data().iter().enumerate() {
            if v != 0.0 {
                bits[i / 8] |= 1 << (i % 8);
            }
        }
        buf.extend_from_slice(&bits);
    }
    let digest = Sha256::digest(&buf);
    buf.extend_from_slice(&digest);
    Ok(buf)
}

pub fn checkpoint_save(model: &Model, mask: Option<&PruneMask>, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let bytes = encode(model, mask)?;
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
    path: &'a Path,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos + n;
        if end > self.bytes.len() {
            return Err(Error::format(
                self.path,
                format!("record runs past the payload end at offset {}", self.pos),
            ));
        }
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().expect("2 bytes")))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn name(&mut self) -> Result<String> {
        let n = self.u16()? as usize;
        let raw = self.take(n)?;
        String::from_utf8(raw.to_vec()).map_err(|_| Error::format(self.path, "parameter name is not UTF-8"))
    }
}

/// Contents of a decoded checkpoint.
#[derive(Clone, Debug)]
pub struct Checkpoint {
    pub version: u16,
    /// Model with parameters and masks restored.
    pub model: Model,
    /// Names of the parameters that carried a mask record.
    pub masked: Vec<String>,
}

impl Checkpoint {
    pub fn mask_records(&self) -> usize {
        self.masked.len()
    }

    /// Mask over the restored model's prunable parameters.
    pub fn mask(&self) -> PruneMask {
        PruneMask::current(&self.model)
    }
}

pub fn decode(bytes: &[u8], path: &Path) -> Result<Checkpoint> {
    if bytes.len() < MAGIC.len() + 2 + DIGEST_LEN || &bytes[..4] != MAGIC {
        return Err(Error::format(path, "not a checkpoint (missing SPKT header)"));
    }
    let (payload, digest) = bytes.split_at(bytes.len() - DIGEST_LEN);
    if Sha256::digest(payload).as_slice() != digest {
        return Err(Error::Corruption {
            path: path.to_path_buf(),
            msg: "SHA-256 digest does not match the payload".into(),
        });
    }
    let mut c = Cursor {
        bytes: payload,
        pos: 4,
        path,
    };
    let version = c.u16()?;
    if version != VERSION {
        return Err(Error::format(
            path,
            format!("checkpoint version {version}, this build reads version {VERSION}"),
        ));
    }
    let cfg_len = c.u32()? as usize;
    let config: ModelConfig = serde_json::from_slice(c.take(cfg_len)?)?;
    let mut model = build_model(&config)?;

    let count = c.u32()? as usize;
    {
        let mut params = model.parameters_mut();
        if count != params.len() {
            return Err(Error::format(
                path,
                format!("{count} parameter records for a model with {}", params.len()),
            ));
        }
        for p in params.iter_mut() {
            let at = c.pos;
            let name = c.name()?;
            let kind = c.u8()?;
            let dtype = c.u8()?;
            let rank = c.u8()? as usize;
            let shape: Vec<usize> = (0..rank).map(|_| c.u32().map(|d| d as usize)).collect::<Result<_>>()?;
            if name != p.name || kind != kind_tag(p.kind) || shape != p.value.shape() {
                return Err(Error::format(
                    path,
                    format!("record at offset {at} ({name} {shape:?}) does not match {} {:?}", p.name, p.value.shape()),
                ));
            }
            if dtype != DTYPE_F64 {
                return Err(Error::format(path, format!("unsupported dtype tag {dtype} at offset {at}")));
            }
            let raw = c.take(p.numel() * 8)?;
            for (v, b) in p.value.data_mut().iter_mut().zip(raw.chunks_exact(8)) {
                *v = f64::from_le_bytes(b.try_into().expect("8 bytes"));
            }
        }
    }

    let masks = c.u32()? as usize;
    let mut masked = Vec::with_capacity(masks);
    for _ in 0..masks {
        let at = c.pos;
        let name = c.name()?;
        let numel = c.u64()? as usize;
        let bits = c.take(numel.div_ceil(8))?;
        let mut params = model.parameters_mut();
        let p = params
            .iter_mut()
            .find(|p| p.name == name)
            .ok_or_else(|| Error::format(path, format!("mask at offset {at} names unknown parameter {name}")))?;
        if p.numel() != numel {
            return Err(Error::format(path, format!("mask {name} has {numel} bits for {} values", p.numel())));
        }
        let data = (0..numel).map(|i| f64::from((bits[i / 8] >> (i % 8)) & 1)).collect();
        p.set_mask(Tensor::new(p.value.shape().to_vec(), data)?)?;
        masked.push(name);
    }
    if c.pos != payload.len() {
        return Err(Error::format(path, format!("{} trailing bytes after the mask records", payload.len() - c.pos)));
    }
    Ok(Checkpoint {
        version,
        model,
        masked,
    })
}

pub fn checkpoint_load(path: impl AsRef<Path>) -> Result<Checkpoint> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes, path)
}
