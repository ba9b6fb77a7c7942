use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::{LayerKind, Model};
use crate::pruning::PruneMask;
use crate::structured::{structured_flops, StructuredSpec};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LayerFlops {
    pub name: String,
    pub kind: String,
    /// MACs of the unpruned dense layer (the replaced dense layer for structured ones).
    pub dense_macs: u64,
    pub effective_macs: u64,
    /// `effective / dense`.
    pub flops_sparsity: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FlopsReport {
    pub layers: Vec<LayerFlops>,
    pub total_dense: u64,
    pub total_effective: u64,
    pub total_sparsity: f64,
}

fn ratio(a: u64, b: u64) -> f64 {
    if b == 0 {
        1.0
    } else {
        a as f64 / b as f64
    }
}

/// Per-layer and total MACs for one sample of shape `[C, H, W]`.
///
/// Dense linear layers cost `in·out`, dense convolutions `k²·Cin·Cout·H'·W'`;
/// masked layers scale that by their surviving-weight density. Structured
/// layers report their own cost against the dense layer they replace.
/// `mask` overrides whatever mask is attached to the model.
pub fn count_flops(model: &Model, mask: Option<&PruneMask>, input_shape: [usize; 3]) -> Result<FlopsReport> {
    let params = model.parameters();
    let prunable_slots: Vec<usize> = params
        .iter()
        .enumerate()
        .filter(|(_, p)| p.prunable())
        .map(|(i, _)| i)
        .collect();
    if let Some(m) = mask {
        if m.masks.len() != prunable_slots.len() {
            return Err(Error::dim(format!(
                "mask has {} tensors for {} prunable parameters",
                m.masks.len(),
                prunable_slots.len()
            )));
        }
    }
    let mut layers = Vec::new();
    for info in model.weight_layers_for(input_shape)? {
        let out_spatial: u64 = info.output_shape[1..].iter().product::<usize>() as u64;
        let layer_index = info.param_index;
        let weight = params[layer_index];

        let (dense, effective) = match info.kind {
            LayerKind::Dense | LayerKind::Conv2d => {
                let total = weight.numel() as u64;
                let surviving = match mask {
                    Some(m) => {
                        let slot = prunable_slots
                            .iter()
                            .position(|&i| i == layer_index)
                            .expect("weights are prunable");
                        let t = &m.masks[slot];
                        if t.shape() != weight.value.shape() {
                            return Err(Error::dim(format!(
                                "mask {:?} does not match {} {:?}",
                                t.shape(),
                                weight.name,
                                weight.value.shape()
                            )));
                        }
                        t.count_nonzero() as u64
                    }
                    None => weight.surviving() as u64,
                };
                (total * out_spatial, surviving * out_spatial)
            }
            LayerKind::ButterflyLinear | LayerKind::KConv2d => {
                let spec = info.structured.expect("structured layer carries its spec");
                let eff = structured_flops(&spec, &info.input_shape)? as u64;
                let dense = match spec {
                    StructuredSpec::Linear(m) => (m.in_dim * m.out_dim) as u64,
                    StructuredSpec::Conv(k) => {
                        (k.geom.patch_len() * k.geom.out_channels) as u64 * out_spatial
                    }
                };
                (dense, eff)
            }
            _ => continue,
        };
        layers.push(LayerFlops {
            name: info.name,
            kind: format!("{:?}", info.kind),
            dense_macs: dense,
            effective_macs: effective,
            flops_sparsity: ratio(effective, dense),
        });
    }
    let total_dense = layers.iter().map(|l| l.dense_macs).sum();
    let total_effective = layers.iter().map(|l| l.effective_macs).sum();
    Ok(FlopsReport {
        layers,
        total_dense,
        total_effective,
        total_sparsity: ratio(total_effective, total_dense),
    })
}
