use super::{apply_mask, build_mask, PruneMask, PruneMethod, ScoreMap, SparsityLevel};
use crate::autodiff::{ParamKind, Tape};
use crate::error::{Error, Result};
use crate::models::{ForwardCtx, Model};
use crate::tensor::Tensor;

/// Synaptic-flow scores `|θ ⊙ ∂R/∂θ|` on the absolute-value network, where
/// `R` is the summed output for an all-ones input.
fn synflow_scores(linear: &Model) -> Result<ScoreMap> {
    let mut tape = Tape::new();
    let binding = linear.bind(&mut tape, true)?;
    let [c, h, w] = linear.config.input_shape;
    let x = tape.constant(Tensor::ones(&[1, c, h, w]));
    let ctx = ForwardCtx::eval();
    let y = linear.forward(&mut tape, &binding, x, &ctx)?;
    let r = tape.sum(y);
    let grads = tape.backward(r)?;
    let all = binding.param_grads(&tape, &grads);
    let scores = linear
        .parameters()
        .iter()
        .zip(&all)
        .filter(|(p, _)| p.prunable())
        .map(|(p, g)| p.effective_value().zip_map(g, |w, g| (w * g).abs()))
        .collect::<Result<_>>()?;
    Ok(ScoreMap {
        method: PruneMethod::Synflow,
        scores,
    })
}

/// Iterative SynFlow: `iterations` rounds, round `τ` pruning globally to
/// density `s^(τ/N)`. Works on a sign-free, bias-free copy so `model` is
/// untouched and `R` is the plain path sum `1ᵀ Π|W| 1`.
pub fn score_synflow(model: &Model, target: SparsityLevel, iterations: usize) -> Result<PruneMask> {
    if iterations < 1 {
        return Err(Error::contract("SynFlow needs at least one iteration"));
    }
    let mut linear = model.linearized();
    for p in linear.parameters_mut() {
        if p.prunable() {
            p.clear_mask();
        } else if p.kind == ParamKind::Bias {
            p.value = Tensor::zeros(p.value.shape());
        }
    }
    let mut mask = PruneMask::ones(&linear);
    for tau in 1..=iterations {
        let scores = synflow_scores(&linear)?;
        let s = target.fraction().powf(tau as f64 / iterations as f64);
        mask = build_mask(&scores, SparsityLevel::from_fraction(s)?)?;
        apply_mask(&mut linear, &mask)?;
    }
    Ok(mask)
}
