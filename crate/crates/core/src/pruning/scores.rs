use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{PruneMethod, ScoreMap};
use crate::data::one_hot;
use crate::error::{Error, Result};
use crate::models::{ForwardCtx, Model};
use crate::tensor::Tensor;

fn prunable_indices(model: &Model) -> Vec<usize> {
    model
        .parameters()
        .iter()
        .enumerate()
        .filter(|(_, p)| p.prunable())
        .map(|(i, _)| i)
        .collect()
}

/// I.i.d. `U(0, 1)` scores.
pub fn score_random(model: &Model, seed: u64) -> ScoreMap {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let scores = model
        .prunable_parameters()
        .iter()
        .map(|p| {
            let data = (0..p.numel()).map(|_| rng.random::<f64>()).collect();
            Tensor::new(p.value.shape().to_vec(), data).expect("shape matches data")
        })
        .collect();
    ScoreMap {
        method: PruneMethod::Random,
        scores,
    }
}

/// `|θ|` of the (already trained) weights.
pub fn score_magnitude(model: &Model) -> ScoreMap {
    ScoreMap {
        method: PruneMethod::Magnitude,
        scores: model
            .prunable_parameters()
            .iter()
            .map(|p| p.effective_value().abs())
            .collect(),
    }
}

fn check_batch(model: &Model, images: &Tensor, labels: &[usize]) -> Result<Tensor> {
    if labels.is_empty() {
        return Err(Error::contract("scoring batch is empty"));
    }
    let per = model.config.input_features();
    if images.numel() != per * labels.len() {
        return Err(Error::dim(format!(
            "{} labels but {} input values ({} per sample)",
            labels.len(),
            images.numel(),
            per
        )));
    }
    one_hot(labels, model.config.classes)
}

/// `|θ ⊙ ∂L/∂θ|` with `L` the mean cross-entropy on the batch (eval mode).
pub fn score_snip(model: &Model, images: &Tensor, labels: &[usize]) -> Result<ScoreMap> {
    let targets = check_batch(model, images, labels)?;
    let (_, grads) = model.loss_and_grads(images, &targets, &ForwardCtx::eval())?;
    let params = model.parameters();
    let scores = prunable_indices(model)
        .into_iter()
        .map(|i| {
            params[i]
                .effective_value()
                .zip_map(&grads[i], |w, g| (w * g).abs())
        })
        .collect::<Result<_>>()?;
    Ok(ScoreMap {
        method: PruneMethod::Snip,
        scores,
    })
}

/// `-θ ⊙ (H g)` for a loss whose gradient at `θ` is `grad(θ)`.
///
/// `H g` is a central difference of gradients along `g / ‖g‖∞` with step
/// `ε = 1e-4 · (1 + ‖θ‖∞)`, rescaled by `‖g‖∞`. A zero gradient gives zero scores.
pub fn grasp_scores(
    theta: &[f64],
    mut grad: impl FnMut(&[f64]) -> Result<Vec<f64>>,
) -> Result<Vec<f64>> {
    let g = grad(theta)?;
    let g_inf = g.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if g_inf == 0.0 {
        return Ok(vec![0.0; theta.len()]);
    }
    let t_inf = theta.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let eps = 1e-4 * (1.0 + t_inf);
    let shifted = |sign: f64| -> Vec<f64> {
        theta
            .iter()
            .zip(&g)
            .map(|(t, gi)| t + sign * eps * gi / g_inf)
            .collect()
    };
    let gp = grad(&shifted(1.0))?;
    let gm = grad(&shifted(-1.0))?;
    Ok(theta
        .iter()
        .zip(gp.iter().zip(&gm))
        .map(|(t, (a, b))| -t * g_inf * (a - b) / (2.0 * eps))
        .collect())
}

/// GraSP scores over the prunable weights (eval mode, mean cross-entropy).
/// Higher scores are kept.
pub fn score_grasp(model: &Model, images: &Tensor, labels: &[usize]) -> Result<ScoreMap> {
    let targets = check_batch(model, images, labels)?;
    let idx = prunable_indices(model);
    let shapes: Vec<Vec<usize>> = model
        .prunable_parameters()
        .iter()
        .map(|p| p.value.shape().to_vec())
        .collect();
    let theta: Vec<f64> = model
        .prunable_parameters()
        .iter()
        .flat_map(|p| p.effective_value().into_data())
        .collect();
    let mut work = model.clone();
    let ctx = ForwardCtx::eval();
    let grad = |flat: &[f64]| -> Result<Vec<f64>> {
        let mut offset = 0;
        for p in work.prunable_parameters_mut() {
            let n = p.numel();
            p.value.data_mut().copy_from_slice(&flat[offset..offset + n]);
            offset += n;
        }
        let (_, grads) = work.loss_and_grads(images, &targets, &ctx)?;
        Ok(idx.iter().flat_map(|&i| grads[i].data().to_vec()).collect())
    };
    let flat = grasp_scores(&theta, grad)?;
    let mut scores = Vec::with_capacity(shapes.len());
    let mut offset = 0;
    for s in shapes {
        let n: usize = s.iter().product();
        scores.push(Tensor::new(s, flat[offset..offset + n].to_vec())?);
        offset += n;
    }
    Ok(ScoreMap {
        method: PruneMethod::Grasp,
        scores,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic_hvp_is_exact() {
        // L = ½ θᵀAθ, g = Aθ, Hg = A²θ
        let a = [[2.0, 1.0, 0.0], [1.0, 3.0, -1.0], [0.0, -1.0, 1.5]];
        let mv = |x: &[f64]| -> Vec<f64> {
            (0..3).map(|i| (0..3).map(|j| a[i][j] * x[j]).sum()).collect()
        };
        let theta = [0.5, -1.0, 2.0];
        let scores = grasp_scores(&theta, |t| Ok(mv(t))).unwrap();
        let hg = mv(&mv(&theta));
        for i in 0..3 {
            let want = -theta[i] * hg[i];
            assert!((scores[i] - want).abs() < 1e-8 * want.abs().max(1.0), "{i}");
        }
    }

    #[test]
    fn zero_gradient_gives_zero_scores() {
        let scores = grasp_scores(&[1.0, 2.0], |t| Ok(vec![0.0; t.len()])).unwrap();
        assert_eq!(scores, vec![0.0, 0.0]);
    }
}
