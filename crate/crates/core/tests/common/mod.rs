//! Helpers shared by the integration tests.
#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sparsekit::autodiff::{ParamKind, Parameter, Tape, Var};
use sparsekit::data::one_hot;
use sparsekit::models::{
    build_model, ActivationKind, Block, ForwardCtx, Layer, Model, ModelConfig, PlanItem,
};
use sparsekit::pruning::{grasp_scores, score_snip, PruneMask, PruneMethod};
use sparsekit::{Result, Tensor};

pub fn random_tensor(shape: &[usize], seed: u64) -> Tensor {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n: usize = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
}

/// `‖a - b‖ / max(‖a‖, ‖b‖)`, or 0 when both vanish.
pub fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    let diff: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let scale = a.iter().map(|x| x * x).sum::<f64>().sqrt().max(b.iter().map(|x| x * x).sum::<f64>().sqrt());
    if scale == 0.0 {
        0.0
    } else {
        diff / scale
    }
}

/// Worst relative error between tape gradients and central differences of
/// `L = Σ f(inputs) ⊙ probe` over every input tensor.
pub fn gradcheck_op(inputs: &[Tensor], f: impl Fn(&mut Tape, &[Var]) -> Result<Var>) -> f64 {
    let eval = |vals: &[Tensor], want_grads: bool| -> (f64, Vec<Tensor>) {
        let mut t = Tape::new();
        let vars: Vec<Var> = vals.iter().map(|v| t.leaf(v.clone(), want_grads)).collect();
        let out = f(&mut t, &vars).unwrap();
        let probe = random_tensor(t.value(out).shape(), 99);
        let p = t.constant(probe);
        let prod = t.mul(out, p).unwrap();
        let loss = t.sum(prod);
        let value = t.value(loss).item();
        if !want_grads {
            return (value, Vec::new());
        }
        let g = t.backward(loss).unwrap();
        let grads = vars
            .iter()
            .map(|v| g.get(*v).cloned().unwrap_or_else(|| Tensor::zeros(t.value(*v).shape())))
            .collect();
        (value, grads)
    };
    let (_, analytic) = eval(inputs, true);
    let h = 1e-6;
    let mut worst = 0.0f64;
    for (i, input) in inputs.iter().enumerate() {
        let mut numeric = vec![0.0; input.numel()];
        for j in 0..input.numel() {
            let mut plus = inputs.to_vec();
            plus[i].data_mut()[j] += h;
            let mut minus = inputs.to_vec();
            minus[i].data_mut()[j] -= h;
            numeric[j] = (eval(&plus, false).0 - eval(&minus, false).0) / (2.0 * h);
        }
        worst = worst.max(rel_err(analytic[i].data(), &numeric));
    }
    worst
}

fn loss_only(model: &Model, x: &Tensor, y: &Tensor, ctx: &ForwardCtx) -> f64 {
    let mut t = Tape::new();
    let b = model.bind(&mut t, false).unwrap();
    let xv = t.constant(model.batch_input(x).unwrap());
    let out = model.forward(&mut t, &b, xv, ctx).unwrap();
    let l = t.softmax_cross_entropy(out, y).unwrap();
    t.value(l).item()
}

/// Worst per-parameter relative error of `loss_and_grads` against central differences.
pub fn gradcheck_model(model: &Model, batch: usize, ctx: &ForwardCtx) -> f64 {
    let [c, h, w] = model.config.input_shape;
    let x = random_tensor(&[batch, c, h, w], 5);
    let k = model.config.classes;
    let mut y = Tensor::zeros(&[batch, k]);
    for r in 0..batch {
        y.data_mut()[r * k + r % k] = 0.8;
        y.data_mut()[r * k + (r + 1) % k] = 0.2;
    }
    let (_, grads) = model.loss_and_grads(&x, &y, ctx).unwrap();
    let hstep = 1e-6;
    let mut worst = 0.0f64;
    let n_params = model.parameters().len();
    for pi in 0..n_params {
        let len = model.parameters()[pi].numel();
        let mut numeric = vec![0.0; len];
        for j in 0..len {
            let mut plus = model.clone();
            plus.parameters_mut()[pi].value.data_mut()[j] += hstep;
            let mut minus = model.clone();
            minus.parameters_mut()[pi].value.data_mut()[j] -= hstep;
            numeric[j] = (loss_only(&plus, &x, &y, ctx) - loss_only(&minus, &x, &y, ctx)) / (2.0 * hstep);
        }
        let e = rel_err(grads[pi].data(), &numeric);
        worst = worst.max(e);
    }
    worst
}

pub fn fc6_config(width: usize, input: [usize; 3], classes: usize) -> ModelConfig {
    let mut c = ModelConfig::fc6();
    c.hidden_width = width;
    c.input_shape = input;
    c.classes = classes;
    c
}

/// Two 3×3 convolutions with pooling on `[2, 8, 8]` inputs.
pub fn micro_vgg_config() -> ModelConfig {
    let mut c = ModelConfig::vgg16();
    c.input_shape = [2, 8, 8];
    c.classes = 3;
    c.conv_plan = Some(vec![PlanItem::Conv(4), PlanItem::MaxPool, PlanItem::Conv(4), PlanItem::MaxPool]);
    c
}

pub fn build(c: &ModelConfig) -> Model {
    build_model(c).unwrap()
}

pub fn with_pswish(mut c: ModelConfig) -> ModelConfig {
    c.activation = ActivationKind::PSwish;
    c
}

/// `|θ ⊙ M|` of every dense layer in order, as `(out, in, row-major data)`.
pub fn dense_abs_weights(model: &Model, mask: &PruneMask) -> Vec<(usize, usize, Vec<f64>)> {
    model
        .prunable_parameters()
        .iter()
        .zip(&mask.masks)
        .map(|(p, m)| {
            let s = p.value.shape();
            let data = p.value.data().iter().zip(m.data()).map(|(w, k)| (w * k).abs()).collect();
            (s[0], s[1], data)
        })
        .collect()
}

/// Independent signal check for a plain MLP: an all-ones input pushed
/// through `|θ ⊙ M|` with zero biases. Collapsed when any layer is empty
/// or the output is identically zero.
pub fn mlp_collapse_oracle(weights: &[(usize, usize, Vec<f64>)]) -> bool {
    if weights.iter().any(|(_, _, w)| w.iter().all(|&v| v == 0.0)) {
        return true;
    }
    let mut h = vec![1.0; weights[0].1];
    for (out, inp, w) in weights {
        h = (0..*out).map(|r| (0..*inp).map(|c| w[r * inp + c] * h[c]).sum()).collect();
    }
    h.iter().all(|&v| v == 0.0)
}

// Dense oracles for structured matrices.

pub fn naive_matmul(a: &[f64], b: &[f64], n: usize) -> Vec<f64> {
    let mut c = vec![0.0; n * n];
    for i in 0..n {
        for k in 0..n {
            for j in 0..n {
                c[i * n + j] += a[i * n + k] * b[k * n + j];
            }
        }
    }
    c
}

pub fn eye(n: usize) -> Vec<f64> {
    (0..n * n).map(|i| if i / n == i % n { 1.0 } else { 0.0 }).collect()
}

/// Factor for stride `h = 2^level`, built from bit arithmetic on the row index.
pub fn factor(tw: &[f64], n: usize, level: usize) -> Vec<f64> {
    let h = 1 << level;
    let mut f = vec![0.0; n * n];
    for i in (0..n).filter(|i| i & h == 0) {
        let k = i | h;
        let p = ((i >> (level + 1)) << level) | (i & (h - 1));
        let blk = &tw[(level * n / 2 + p) * 4..][..4];
        f[i * n + i] = blk[0];
        f[i * n + k] = blk[1];
        f[k * n + i] = blk[2];
        f[k * n + k] = blk[3];
    }
    f
}

pub fn dense_oracle(b: &sparsekit::structured::ButterflyMatrix) -> Vec<f64> {
    let n = b.size();
    let mut acc = eye(n);
    for level in 0..b.levels() {
        acc = naive_matmul(&factor(b.twiddles(), n, level), &acc, n);
    }
    acc
}

pub fn transpose(a: &[f64], n: usize) -> Vec<f64> {
    (0..n * n).map(|i| a[(i % n) * n + i / n]).collect()
}

pub fn apply(m: &[f64], x: &[f64]) -> Vec<f64> {
    let n = x.len();
    (0..m.len() / n).map(|i| (0..n).map(|j| m[i * n + j] * x[j]).sum()).collect()
}

pub fn random_butterfly(n: usize, seed: u64) -> sparsekit::structured::ButterflyMatrix {
    let levels = n.trailing_zeros() as usize;
    let tw = random_tensor(&[levels * n / 2 * 4], seed);
    sparsekit::structured::ButterflyMatrix::from_twiddles(n, tw.data().to_vec()).unwrap()
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

pub fn norm(a: &[f64]) -> f64 {
    a.iter().map(|v| v * v).sum::<f64>().sqrt()
}

pub fn hadamard_recursive(m: u32) -> Vec<f64> {
    if m == 0 {
        return vec![1.0];
    }
    let prev = hadamard_recursive(m - 1);
    let h = 1usize << (m - 1);
    let n = 2 * h;
    let mut out = vec![0.0; n * n];
    for i in 0..h {
        for j in 0..h {
            let v = prev[i * h + j];
            out[i * n + j] = v;
            out[i * n + j + h] = v;
            out[(i + h) * n + j] = v;
            out[(i + h) * n + j + h] = -v;
        }
    }
    out
}


// Pruning oracles.

pub fn small_fc6(input: usize, width: usize, classes: usize) -> Model {
    let mut c = fc6_config(width, [1, 1, input], classes);
    c.dropout = 0.0;
    build_model(&c).unwrap()
}

pub fn labels_for(n: usize, k: usize) -> Vec<usize> {
    (0..n).map(|i| (i * 7 + 3) % k).collect()
}

pub fn loss_at(model: &Model, x: &Tensor, labels: &[usize]) -> f64 {
    let y = one_hot(labels, model.config.classes).unwrap();
    model.loss_and_grads(x, &y, &ForwardCtx::eval()).unwrap().0
}

/// Central-difference gradient of the batch loss w.r.t. every prunable weight.
pub fn fd_weight_grads(model: &Model, x: &Tensor, labels: &[usize], h: f64) -> Vec<Vec<f64>> {
    let prunable: Vec<usize> = model
        .parameters()
        .iter()
        .enumerate()
        .filter(|(_, p)| p.prunable())
        .map(|(i, _)| i)
        .collect();
    prunable
        .iter()
        .map(|&pi| {
            (0..model.parameters()[pi].numel())
                .map(|j| {
                    let mut plus = model.clone();
                    plus.parameters_mut()[pi].value.data_mut()[j] += h;
                    let mut minus = model.clone();
                    minus.parameters_mut()[pi].value.data_mut()[j] -= h;
                    (loss_at(&plus, x, labels) - loss_at(&minus, x, labels)) / (2.0 * h)
                })
                .collect()
        })
        .collect()
}

/// A two-layer PSwish MLP `2 → 3 → 2` with 12 weights, as a flat function.
pub struct TinyMlp {
    x: Tensor,
    y: Tensor,
}

impl TinyMlp {
    pub fn new() -> Self {
        let x = random_tensor(&[5, 2], 41);
        let mut y = Tensor::zeros(&[5, 2]);
        for r in 0..5 {
            y.data_mut()[r * 2 + r % 2] = 1.0;
        }
        Self { x, y }
    }

    pub fn run(&self, theta: &[f64], grads: bool) -> (f64, Vec<f64>) {
        let mut t = Tape::new();
        let x = t.constant(self.x.clone());
        let w1 = t.leaf(Tensor::new(vec![3, 2], theta[..6].to_vec()).unwrap(), grads);
        let w2 = t.leaf(Tensor::new(vec![2, 3], theta[6..].to_vec()).unwrap(), grads);
        let h = t.linear(x, w1).unwrap();
        let h = t.pswish(h, 1.5);
        let out = t.linear(h, w2).unwrap();
        let loss = t.softmax_cross_entropy(out, &self.y).unwrap();
        let value = t.value(loss).item();
        if !grads {
            return (value, Vec::new());
        }
        let g = t.backward(loss).unwrap();
        let mut flat = g.get(w1).unwrap().data().to_vec();
        flat.extend_from_slice(g.get(w2).unwrap().data());
        (value, flat)
    }
}

/// Brute-force top-`k` by score (descending), lower flat index first on ties.
pub fn sort_oracle(scores: &[f64], k: usize) -> Vec<f64> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    let mut keep = vec![0.0; scores.len()];
    for &i in &order[..k] {
        keep[i] = 1.0;
    }
    keep
}

pub fn flat(mask: &PruneMask) -> Vec<f64> {
    mask.masks.iter().flat_map(|m| m.data().to_vec()).collect()
}

pub fn one_linear_model(weight: Tensor) -> Model {
    let [out, inp] = [weight.shape()[0], weight.shape()[1]];
    let mut config = fc6_config(out, [1, 1, inp], out);
    config.dropout = 0.0;
    Model {
        config,
        blocks: vec![Block {
            layers: vec![
                Layer::Flatten,
                Layer::Dense {
                    weight: Parameter::new("w", weight, ParamKind::Weight),
                    bias: Parameter::new("b", Tensor::zeros(&[out]), ParamKind::Bias),
                },
            ],
            skip: false,
        }],
    }
}

/// SNIP scores on a small FC6 against `|θ| · |g|` with finite-difference `g`.
pub fn snip_fd_error() -> f64 {
    let model = small_fc6(6, 5, 3);
    let x = random_tensor(&[8, 1, 1, 6], 3);
    let labels = labels_for(8, 3);
    let scores = score_snip(&model, &x, &labels).unwrap();
    assert_eq!(scores.method, PruneMethod::Snip);
    let fd = fd_weight_grads(&model, &x, &labels, 1e-6);
    let mut want = Vec::new();
    let mut got = Vec::new();
    for ((p, g), s) in model.prunable_parameters().iter().zip(&fd).zip(&scores.scores) {
        want.extend(p.value.data().iter().zip(g).map(|(w, g)| (w * g).abs()));
        got.extend_from_slice(s.data());
    }
        rel_err(&got, &want)
}

/// GraSP scores on [`TinyMlp`] against `-θ ⊙ (H g)` with `H` from second
/// differences of the loss value.
pub fn grasp_hessian_error() -> f64 {
    let mlp = TinyMlp::new();
    let theta = random_tensor(&[12], 42).into_data();
    let n = theta.len();
    let f = |th: &[f64]| mlp.run(th, false).0;
    // second differences of the loss value alone
    let h = 1e-4;
    let mut hess = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            let at = |di: f64, dj: f64| {
                let mut v = theta.clone();
                v[i] += di;
                v[j] += dj;
                f(&v)
            };
            hess[i * n + j] = (at(h, h) - at(h, -h) - at(-h, h) + at(-h, -h)) / (4.0 * h * h);
        }
    }
    let g = mlp.run(&theta, true).1;
    let hg: Vec<f64> = (0..n).map(|i| (0..n).map(|j| hess[i * n + j] * g[j]).sum()).collect();
    let want: Vec<f64> = theta.iter().zip(&hg).map(|(t, v)| -t * v).collect();
    let got = grasp_scores(&theta, |th| Ok(mlp.run(th, true).1)).unwrap();
        rel_err(&got, &want)
}


pub mod grads;

/// Every gradient check as `(name, relative error)`.
pub fn all_gradchecks() -> Vec<(String, f64)> {
    let mut out = Vec::new();
    grads::elementwise_and_linear_ops(&mut out);
    grads::cross_entropy(&mut out);
    grads::spatial_ops(&mut out);
    grads::structured_ops(&mut out);
    grads::fc6_width8_architectures(&mut out);
    grads::micro_vgg_architectures(&mut out);
    out
}
