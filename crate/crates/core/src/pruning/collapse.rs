use serde::{Deserialize, Serialize};

use super::{apply_mask, PruneMask};
use crate::autodiff::ParamKind;
use crate::error::Result;
use crate::models::Model;
use crate::tensor::Tensor;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LayerSurvival {
    pub name: String,
    pub total: usize,
    pub surviving: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CollapseReport {
    /// One entry per prunable layer, in layer order.
    pub layers: Vec<LayerSurvival>,
    /// Indices into `layers` of layers with no surviving weight.
    pub empty_layers: Vec<usize>,
    /// Whether any input-to-output path of nonzero weights survives.
    pub path_exists: bool,
    pub collapsed: bool,
}

impl CollapseReport {
    pub fn first_empty(&self) -> Option<&LayerSurvival> {
        self.empty_layers.first().map(|&i| &self.layers[i])
    }
}

/// Per-layer survival counts and a structural path check.
///
/// The path check replaces every nonzero weight of `θ ⊙ M` (and every
/// nonzero twiddle) by 1, zeroes biases and pushes an all-ones input through:
/// each output then counts surviving paths, so a zero output means none is left.
/// The model counts as collapsed when a prunable layer is empty or no path survives.
pub fn detect_collapse(model: &Model, mask: &PruneMask) -> Result<CollapseReport> {
    let mut masked = model.clone();
    apply_mask(&mut masked, mask)?;

    let params = masked.parameters();
    let mut layers = Vec::new();
    for info in masked.weight_layers()? {
        if !info.prunable {
            continue;
        }
        let w = params[info.param_index];
        layers.push(LayerSurvival {
            name: info.name,
            total: w.numel(),
            surviving: w.effective_value().count_nonzero(),
        });
    }
    let empty_layers: Vec<usize> = layers
        .iter()
        .enumerate()
        .filter(|(_, l)| l.surviving == 0)
        .map(|(i, _)| i)
        .collect();

    let mut indicator = masked.clone();
    for p in indicator.parameters_mut() {
        let eff = p.effective_value();
        p.clear_mask();
        p.soft_mask = None;
        p.value = match p.kind {
            ParamKind::Bias => Tensor::zeros(eff.shape()),
            _ => eff.map(|v| if v != 0.0 { 1.0 } else { 0.0 }),
        };
    }
    let [c, h, w] = indicator.config.input_shape;
    let out = indicator.predict(&Tensor::ones(&[1, c, h, w]))?;
    let path_exists = out.data().iter().any(|&v| v > 0.0);

    let collapsed = !empty_layers.is_empty() || !path_exists;
    Ok(CollapseReport {
        layers,
        empty_layers,
        path_exists,
        collapsed,
    })
}
