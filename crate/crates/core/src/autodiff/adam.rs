use serde::{Deserialize, Serialize};

use super::param::Parameter;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// L2 penalty folded into the gradient.
    pub weight_decay: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.0,
        }
    }
}

/// Bias-corrected Adam. Masked entries are skipped entirely: neither the
/// value nor the moments move, so pruned weights stay at zero.
#[derive(Clone, Debug)]
pub struct AdamState {
    pub config: AdamConfig,
    step: u64,
    first: Vec<Tensor>,
    second: Vec<Tensor>,
}

impl AdamState {
    /// State for tensors of the given shapes.
    pub fn new(config: AdamConfig, shapes: &[&[usize]]) -> Self {
        Self {
            config,
            step: 0,
            first: shapes.iter().map(|s| Tensor::zeros(s)).collect(),
            second: shapes.iter().map(|s| Tensor::zeros(s)).collect(),
        }
    }

    pub fn for_parameters(config: AdamConfig, params: &[&Parameter]) -> Self {
        let shapes: Vec<&[usize]> = params.iter().map(|p| p.value.shape()).collect();
        Self::new(config, &shapes)
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    pub fn first_moment(&self, i: usize) -> &Tensor {
        &self.first[i]
    }

    /// One update over aligned `values`, `grads` and optional binary `masks`.
    pub fn step(
        &mut self,
        values: &mut [&mut Tensor],
        grads: &[&Tensor],
        masks: &[Option<&Tensor>],
    ) -> Result<()> {
        if values.len() != self.first.len() || grads.len() != values.len() || masks.len() != values.len() {
            return Err(Error::dim(format!(
                "adam tracks {} tensors, got {} values / {} grads / {} masks",
                self.first.len(),
                values.len(),
                grads.len(),
                masks.len()
            )));
        }
        self.step += 1;
        let c = self.config;
        let t = self.step as i32;
        let bc1 = 1.0 - c.beta1.powi(t);
        let bc2 = 1.0 - c.beta2.powi(t);
        for (i, value) in values.iter_mut().enumerate() {
            let grad = grads[i];
            value.expect_same_shape(grad, "adam gradient")?;
            if let Some(m) = masks[i] {
                value.expect_same_shape(m, "adam mask")?;
            }
            let m1 = self.first[i].data_mut();
            let m2 = self.second[i].data_mut();
            let vd = value.data_mut();
            let gd = grad.data();
            let md = masks[i].map(|m| m.data());
            for j in 0..vd.len() {
                if md.is_some_and(|m| m[j] == 0.0) {
                    continue;
                }
                let g = gd[j] + c.weight_decay * vd[j];
                m1[j] = c.beta1 * m1[j] + (1.0 - c.beta1) * g;
                m2[j] = c.beta2 * m2[j] + (1.0 - c.beta2) * g * g;
                let mhat = m1[j] / bc1;
                let vhat = m2[j] / bc2;
                vd[j] -= c.lr * mhat / (vhat.sqrt() + c.eps);
            }
        }
        Ok(())
    }

    /// Updates parameters in place, honouring each parameter's own mask.
    pub fn step_parameters(&mut self, params: &mut [&mut Parameter], grads: &[Tensor]) -> Result<()> {
        let masks: Vec<Option<Tensor>> = params.iter().map(|p| p.mask().cloned()).collect();
        let mask_refs: Vec<Option<&Tensor>> = masks.iter().map(|m| m.as_ref()).collect();
        let grad_refs: Vec<&Tensor> = grads.iter().collect();
        let mut values: Vec<&mut Tensor> = params.iter_mut().map(|p| &mut p.value).collect();
        self.step(&mut values, &grad_refs, &mask_refs)
    }
}
