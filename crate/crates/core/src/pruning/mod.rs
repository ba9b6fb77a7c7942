//! Pruning at initialization: saliency scorers, global mask construction,
//! layer-collapse detection and the learned-mask penalty.

mod collapse;
mod learned;
mod scores;
mod synflow;

pub use collapse::{detect_collapse, CollapseReport, LayerSurvival};
pub use learned::{learned_mask_loss, learned_mask_penalty, LearnedMaskConfig};
pub use scores::{grasp_scores, score_grasp, score_magnitude, score_random, score_snip};
pub use synflow::score_synflow;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::Model;
use crate::tensor::Tensor;

/// Remaining-weight fraction `s ∈ (0, 1]`.
#[derive(Clone, Copy, Debug, PartialEq, PartialOrd, Serialize, Deserialize)]
pub struct SparsityLevel {
    s: f64,
}

impl SparsityLevel {
    pub fn from_fraction(s: f64) -> Result<Self> {
        if !(s > 0.0 && s <= 1.0) {
            return Err(Error::contract(format!(
                "remaining fraction must lie in (0, 1], got {s}"
            )));
        }
        Ok(Self { s })
    }

    /// `s = 10^-k`.
    pub fn from_exponent(k: f64) -> Result<Self> {
        if !(k >= 0.0 && k.is_finite()) {
            return Err(Error::contract(format!("exponent must be >= 0, got {k}")));
        }
        Self::from_fraction(10f64.powf(-k))
    }

    pub fn dense() -> Self {
        Self { s: 1.0 }
    }

    pub fn fraction(self) -> f64 {
        self.s
    }

    /// `-log10(s)`.
    pub fn compression(self) -> f64 {
        -self.s.log10()
    }

    /// `⌈s·n⌉`, ignoring float noise a few ulps above an integer.
    pub fn keep_count(self, n: usize) -> usize {
        let raw = self.s * n as f64;
        let k = (raw - raw * 1e-12).ceil() as usize;
        k.min(n)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PruneMethod {
    None,
    Random,
    Magnitude,
    Snip,
    Grasp,
    Synflow,
}

impl PruneMethod {
    pub const ALL: [PruneMethod; 6] = [
        PruneMethod::None,
        PruneMethod::Random,
        PruneMethod::Magnitude,
        PruneMethod::Snip,
        PruneMethod::Grasp,
        PruneMethod::Synflow,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            PruneMethod::None => "none",
            PruneMethod::Random => "random",
            PruneMethod::Magnitude => "magnitude",
            PruneMethod::Snip => "snip",
            PruneMethod::Grasp => "grasp",
            PruneMethod::Synflow => "synflow",
        }
    }
}

impl fmt::Display for PruneMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PruneMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let lower = s.trim().to_ascii_lowercase();
        let m = match lower.as_str() {
            "none" | "dense" => PruneMethod::None,
            "random" | "rand" => PruneMethod::Random,
            "magnitude" | "mag" => PruneMethod::Magnitude,
            "snip" => PruneMethod::Snip,
            "grasp" => PruneMethod::Grasp,
            "synflow" => PruneMethod::Synflow,
            _ => return Err(Error::Config(format!("unknown pruning method {s:?}"))),
        };
        Ok(m)
    }
}

/// One score tensor per prunable parameter, in model order.
#[derive(Clone, Debug, PartialEq)]
pub struct ScoreMap {
    pub method: PruneMethod,
    pub scores: Vec<Tensor>,
}

impl ScoreMap {
    pub fn total(&self) -> usize {
        self.scores.iter().map(Tensor::numel).sum()
    }

    /// Multiplies every score by `c`.
    pub fn scaled(&self, c: f64) -> ScoreMap {
        ScoreMap {
            method: self.method,
            scores: self.scores.iter().map(|t| t.scale(c)).collect(),
        }
    }
}

/// One binary tensor per prunable parameter, in model order.
#[derive(Clone, Debug, PartialEq)]
pub struct PruneMask {
    pub masks: Vec<Tensor>,
}

impl PruneMask {
    /// All-ones mask shaped like `model`'s prunable parameters.
    pub fn ones(model: &Model) -> Self {
        Self {
            masks: model
                .prunable_parameters()
                .iter()
                .map(|p| Tensor::ones(p.value.shape()))
                .collect(),
        }
    }

    /// Mask currently attached to `model` (all ones where none is set).
    pub fn current(model: &Model) -> Self {
        Self {
            masks: model
                .prunable_parameters()
                .iter()
                .map(|p| p.mask().cloned().unwrap_or_else(|| Tensor::ones(p.value.shape())))
                .collect(),
        }
    }

    pub fn kept(&self) -> usize {
        self.masks.iter().map(Tensor::count_nonzero).sum()
    }

    pub fn total(&self) -> usize {
        self.masks.iter().map(Tensor::numel).sum()
    }

    /// Kept fraction; 1 for a model without prunable parameters.
    pub fn density(&self) -> f64 {
        let total = self.total();
        if total == 0 {
            1.0
        } else {
            self.kept() as f64 / total as f64
        }
    }
}

/// Keeps the `⌈s·N⌉` highest scores across all prunable parameters.
/// Equal scores are resolved in favour of the lower flat index.
pub fn build_mask(scores: &ScoreMap, target: SparsityLevel) -> Result<PruneMask> {
    SparsityLevel::from_fraction(target.fraction())?;
    let mut flat: Vec<(f64, usize)> = Vec::with_capacity(scores.total());
    for t in &scores.scores {
        for &v in t.data() {
            if !v.is_finite() {
                return Err(Error::contract(format!(
                    "{} produced a non-finite score",
                    scores.method
                )));
            }
            flat.push((v, flat.len()));
        }
    }
    let n = flat.len();
    let k = target.keep_count(n);
    let mut keep = vec![0.0; n];
    if k == n {
        keep.fill(1.0);
    } else if k > 0 {
        let order = |a: &(f64, usize), b: &(f64, usize)| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1));
        flat.select_nth_unstable_by(k - 1, order);
        for &(_, i) in &flat[..k] {
            keep[i] = 1.0;
        }
    }
    let mut masks = Vec::with_capacity(scores.scores.len());
    let mut offset = 0;
    for t in &scores.scores {
        let len = t.numel();
        masks.push(Tensor::new(t.shape().to_vec(), keep[offset..offset + len].to_vec())?);
        offset += len;
    }
    Ok(PruneMask { masks })
}

/// Attaches `mask` to the model's prunable parameters, zeroing pruned values.
pub fn apply_mask(model: &mut Model, mask: &PruneMask) -> Result<()> {
    let mut params = model.prunable_parameters_mut();
    if params.len() != mask.masks.len() {
        return Err(Error::dim(format!(
            "mask has {} tensors for {} prunable parameters",
            mask.masks.len(),
            params.len()
        )));
    }
    for (p, m) in params.iter_mut().zip(&mask.masks) {
        p.set_mask(m.clone())?;
    }
    Ok(())
}
