use log::debug;
use serde::{Deserialize, Serialize};

use super::config::ScheduleConfig;
use crate::autodiff::{AdamConfig, AdamState, Tape};
use crate::data::{batches, one_hot, Dataset};
use crate::error::{Error, Result};
use crate::models::{ForwardCtx, Model};
use crate::pruning::{learned_mask_loss, LearnedMaskConfig};
use crate::tensor::Tensor;

/// `(1 - α)·y + α/K` applied row-wise to one-hot targets.
pub fn label_smooth(y_onehot: &Tensor, alpha: f64, classes: usize) -> Result<Tensor> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::contract(format!("alpha {alpha} outside [0, 1]")));
    }
    if y_onehot.shape().last() != Some(&classes) {
        return Err(Error::dim(format!(
            "targets {:?} do not have {classes} classes",
            y_onehot.shape()
        )));
    }
    let uniform = alpha / classes as f64;
    Ok(y_onehot.map(|y| (1.0 - alpha) * y + uniform))
}

#[derive(Clone, Debug)]
pub struct TrainOptions {
    pub epochs: usize,
    /// Schedule epoch of the first epoch run here.
    pub first_epoch: usize,
    pub batch_size: usize,
    pub adam: AdamConfig,
    pub schedule: ScheduleConfig,
    /// Also learn each prunable weight's soft mask under this penalty.
    pub learned_mask: Option<LearnedMaskConfig>,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub mean_loss: f64,
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
}

fn mix(seed: u64, a: u64, b: u64) -> u64 {
    let mut x = seed ^ a.wrapping_mul(0x9e37_79b9_7f4a_7c15) ^ b.wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x ^= x >> 31;
    x.wrapping_mul(0x94d0_49bb_1331_11eb)
}

/// Adam training on mean cross-entropy with the configured schedules.
pub fn train(model: &mut Model, data: &Dataset, opts: &TrainOptions) -> Result<Vec<EpochStats>> {
    if data.is_empty() {
        return Err(Error::contract("cannot train on an empty dataset"));
    }
    let classes = model.config.classes;
    let mut adam = AdamState::for_parameters(opts.adam, &model.parameters());
    let mask_slots: Vec<usize> = model
        .parameters()
        .iter()
        .enumerate()
        .filter(|(_, p)| p.soft_mask.is_some())
        .map(|(i, _)| i)
        .collect();
    let mask_shapes: Vec<Vec<usize>> = mask_slots
        .iter()
        .map(|&i| model.parameters()[i].value.shape().to_vec())
        .collect();
    let shape_refs: Vec<&[usize]> = mask_shapes.iter().map(Vec::as_slice).collect();
    let mask_adam_cfg = AdamConfig {
        weight_decay: 0.0,
        ..opts.adam
    };
    let mut mask_adam = AdamState::new(mask_adam_cfg, &shape_refs);

    let mut stats = Vec::with_capacity(opts.epochs);
    for e in 0..opts.epochs {
        let epoch = opts.first_epoch + e;
        let sched = opts.schedule.at(epoch);
        let mut total = 0.0;
        let mut seen = 0usize;
        for (bi, batch) in batches(data, opts.batch_size, mix(opts.seed, epoch as u64, 0))?.enumerate() {
            let ctx = ForwardCtx {
                beta: sched.beta,
                gamma: sched.gamma,
                ..ForwardCtx::train(mix(opts.seed, epoch as u64, bi as u64 + 1))
            };
            let targets = label_smooth(&one_hot(&batch.labels, classes)?, sched.alpha, classes)?;
            let mut tape = Tape::new();
            let binding = model.bind(&mut tape, true)?;
            let x = tape.constant(model.batch_input(&batch.images)?);
            let logits = model.forward(&mut tape, &binding, x, &ctx)?;
            let ce = tape.softmax_cross_entropy(logits, &targets)?;
            let loss = match opts.learned_mask {
                Some(lm) if !mask_slots.is_empty() => {
                    let masks: Vec<_> = mask_slots
                        .iter()
                        .map(|&i| binding.soft_masks[i].expect("soft mask bound"))
                        .collect();
                    learned_mask_loss(&mut tape, ce, &masks, lm.lambda1, lm.lambda2)?
                }
                _ => ce,
            };
            let grads = tape.backward(loss)?;
            let pgrads = binding.param_grads(&tape, &grads);
            if !mask_slots.is_empty() {
                let mgrads: Vec<Tensor> = mask_slots
                    .iter()
                    .map(|&i| {
                        let v = binding.soft_masks[i].expect("soft mask bound");
                        grads.get(v).cloned().unwrap_or_else(|| Tensor::zeros(tape.value(v).shape()))
                    })
                    .collect();
                let mut params = model.parameters_mut();
                let mut values: Vec<&mut Tensor> = Vec::with_capacity(mask_slots.len());
                let mut slot_iter = mask_slots.iter().peekable();
                for (i, p) in params.iter_mut().enumerate() {
                    if slot_iter.peek() == Some(&&i) {
                        slot_iter.next();
                        values.push(p.soft_mask.as_mut().expect("slot has a soft mask"));
                    }
                }
                let grad_refs: Vec<&Tensor> = mgrads.iter().collect();
                mask_adam.step(&mut values, &grad_refs, &vec![None; grad_refs.len()])?;
                for v in values {
                    for m in v.data_mut() {
                        *m = m.clamp(0.0, 1.0);
                    }
                }
            }
            adam.step_parameters(&mut model.parameters_mut(), &pgrads)?;
            total += tape.value(ce).item() * batch.labels.len() as f64;
            seen += batch.labels.len();
        }
        let mean_loss = total / seen as f64;
        debug!("epoch {epoch}: loss {mean_loss:.4} α {:.3} β {:.2} γ {:.3}", sched.alpha, sched.beta, sched.gamma);
        stats.push(EpochStats {
            epoch,
            mean_loss,
            alpha: sched.alpha,
            beta: sched.beta,
            gamma: sched.gamma,
        });
    }
    Ok(stats)
}
