use serde::{Deserialize, Serialize};

use crate::autodiff::{Tape, Var};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Weights of the mask regularizer `λ1 Σ M(1-M) + λ2 Σ M`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LearnedMaskConfig {
    pub lambda1: f64,
    pub lambda2: f64,
    /// Starting value of every mask entry.
    pub init: f64,
}

impl Default for LearnedMaskConfig {
    fn default() -> Self {
        Self {
            lambda1: 0.01,
            lambda2: 0.1,
            init: 0.5,
        }
    }
}

impl LearnedMaskConfig {
    pub fn validate(&self) -> Result<()> {
        if self.lambda1 < 0.0 || self.lambda2 < 0.0 {
            return Err(Error::Config(format!(
                "mask regularization weights must be >= 0 (λ1 = {}, λ2 = {})",
                self.lambda1, self.lambda2
            )));
        }
        if !(0.0..=1.0).contains(&self.init) {
            return Err(Error::Config(format!("mask init {} is outside [0, 1]", self.init)));
        }
        Ok(())
    }
}

/// Value of the regularizer alone.
pub fn learned_mask_penalty(masks: &[Tensor], lambda1: f64, lambda2: f64) -> f64 {
    masks
        .iter()
        .flat_map(|m| m.data())
        .map(|&m| lambda1 * m * (1.0 - m) + lambda2 * m)
        .sum()
}

/// `ℓ + λ1 Σ M_i(1 - M_i) + λ2 Σ M_i` on the tape, differentiable in `M`.
pub fn learned_mask_loss(
    tape: &mut Tape,
    loss: Var,
    masks: &[Var],
    lambda1: f64,
    lambda2: f64,
) -> Result<Var> {
    let mut total = loss;
    for &m in masks {
        let one_minus = tape.affine(m, -1.0, 1.0);
        let prod = tape.mul(m, one_minus)?;
        let binary = tape.sum(prod);
        let mass = tape.sum(m);
        let a = tape.scale(binary, lambda1);
        let b = tape.scale(mass, lambda2);
        total = tape.add(total, a)?;
        total = tape.add(total, b)?;
    }
    Ok(total)
}
