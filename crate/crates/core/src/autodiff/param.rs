use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// What a parameter is, which also decides whether pruning may touch it.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum ParamKind {
    /// Dense or convolution weight; the only prunable kind.
    Weight,
    Bias,
    /// Butterfly / kaleidoscope twiddles.
    Structured,
}

/// A trainable tensor with an optional binary pruning mask.
///
/// Forward passes consume `value ⊙ mask`. While a mask is attached the
/// masked entries of `value` are kept at exactly zero.
#[derive(Clone, Debug, PartialEq)]
pub struct Parameter {
    pub name: String,
    pub value: Tensor,
    pub kind: ParamKind,
    mask: Option<Tensor>,
    /// Continuous mask in `[0, 1]` learned jointly with the weights.
    pub soft_mask: Option<Tensor>,
}

impl Parameter {
    pub fn new(name: impl Into<String>, value: Tensor, kind: ParamKind) -> Self {
        Self {
            name: name.into(),
            value,
            kind,
            mask: None,
            soft_mask: None,
        }
    }

    pub fn prunable(&self) -> bool {
        self.kind == ParamKind::Weight
    }

    pub fn mask(&self) -> Option<&Tensor> {
        self.mask.as_ref()
    }

    pub fn numel(&self) -> usize {
        self.value.numel()
    }

    /// Attaches a binary mask and zeroes the masked entries of the value.
    pub fn set_mask(&mut self, mask: Tensor) -> Result<()> {
        if !self.prunable() {
            return Err(Error::contract(format!(
                "parameter {} ({:?}) is not prunable",
                self.name, self.kind
            )));
        }
        if mask.shape() != self.value.shape() {
            return Err(Error::dim(format!(
                "mask {:?} does not match parameter {} {:?}",
                mask.shape(),
                self.name,
                self.value.shape()
            )));
        }
        if mask.data().iter().any(|&m| m != 0.0 && m != 1.0) {
            return Err(Error::contract(format!(
                "mask for {} has entries outside {{0, 1}}",
                self.name
            )));
        }
        for (v, m) in self.value.data_mut().iter_mut().zip(mask.data()) {
            if *m == 0.0 {
                *v = 0.0;
            }
        }
        self.mask = Some(mask);
        Ok(())
    }

    pub fn clear_mask(&mut self) {
        self.mask = None;
    }

    /// The tensor a forward pass sees: `value ⊙ mask` when masked.
    pub fn effective_value(&self) -> Tensor {
        match &self.mask {
            Some(m) => {
                let mut v = self.value.clone();
                for (x, k) in v.data_mut().iter_mut().zip(m.data()) {
                    *x *= k;
                }
                v
            }
            None => self.value.clone(),
        }
    }

    /// Number of entries a mask keeps (all entries when unmasked).
    pub fn surviving(&self) -> usize {
        self.mask
            .as_ref()
            .map_or(self.numel(), |m| m.data().iter().filter(|&&v| v != 0.0).count())
    }
}
