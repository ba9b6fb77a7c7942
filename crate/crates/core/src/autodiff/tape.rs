//! Append-only Wengert tape with reverse-mode differentiation.
//!
//! Every operation pushes a node whose inputs already live on the tape, so
//! node ids are a topological order and `backward` is a single reverse sweep.

use rand::Rng;

use super::conv::{col2im_rows_add, im2col_rows, ConvGeom};
use crate::error::{Error, Result};
use crate::structured::{KConvSpec, MapSpec};
use crate::tensor::{gemm, MatRef, Tensor};

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn id(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
enum Op {
    Leaf,
    /// Result of an operation none of whose inputs need gradients.
    Detached,
    MatMul { a: Var, b: Var },
    /// `x · wᵀ` with `w` stored `[out, in]`.
    Linear { x: Var, w: Var },
    Add { a: Var, b: Var },
    Mul { a: Var, b: Var },
    Affine { x: Var, scale: f64 },
    /// Adds `b[(i / stride) % len(b)]` to element `i`.
    BiasAdd { x: Var, b: Var, stride: usize },
    Sum { x: Var },
    Abs { x: Var },
    Relu { x: Var },
    PSwish { x: Var, beta: f64 },
    /// Multiplies by a fixed (already rescaled) keep mask.
    Dropout { x: Var, keep: Vec<f64> },
    Reshape { x: Var },
    SoftmaxCrossEntropy { logits: Var, target: Tensor, probs: Vec<f64> },
    Conv2d { x: Var, w: Var, geom: ConvGeom },
    MaxPool2d { x: Var, argmax: Vec<usize> },
    /// Output element `i` copies input element `src[i]` (`usize::MAX` = zero).
    Gather { x: Var, src: Vec<usize> },
    Structured { x: Var, tws: Vec<Var>, spec: MapSpec, saved: Vec<f64> },
    KConv2d { x: Var, tws: Vec<Var>, spec: KConvSpec },
}

impl Op {
    fn inputs(&self) -> Vec<Var> {
        match self {
            Op::Leaf | Op::Detached => vec![],
            Op::MatMul { a, b } | Op::Add { a, b } | Op::Mul { a, b } => vec![*a, *b],
            Op::Linear { x, w } | Op::Conv2d { x, w, .. } => vec![*x, *w],
            Op::BiasAdd { x, b, .. } => vec![*x, *b],
            Op::Affine { x, .. }
            | Op::Sum { x }
            | Op::Abs { x }
            | Op::Relu { x }
            | Op::PSwish { x, .. }
            | Op::Dropout { x, .. }
            | Op::Reshape { x }
            | Op::MaxPool2d { x, .. }
            | Op::Gather { x, .. } => vec![*x],
            Op::SoftmaxCrossEntropy { logits, .. } => vec![*logits],
            Op::Structured { x, tws, .. } | Op::KConv2d { x, tws, .. } => {
                std::iter::once(*x).chain(tws.iter().copied()).collect()
            }
        }
    }
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

/// Gradients produced by [`Tape::backward`], indexed by [`Var`].
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&Tensor> {
        self.grads.get(v.0).and_then(|g| g.as_ref())
    }

    pub fn take(&mut self, v: Var) -> Option<Tensor> {
        self.grads.get_mut(v.0).and_then(|g| g.take())
    }
}

#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

pub(crate) fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn leaf(&mut self, value: Tensor, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op: Op::Leaf,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    /// Leaf that receives a gradient.
    pub fn param(&mut self, value: Tensor) -> Var {
        self.leaf(value, true)
    }

    pub fn constant(&mut self, value: Tensor) -> Var {
        self.leaf(value, false)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Input ids of a node; always smaller than the node's own id.
    pub fn inputs_of(&self, v: Var) -> Vec<Var> {
        self.nodes[v.0].op.inputs()
    }

    fn any_grad(&self, vars: &[Var]) -> bool {
        vars.iter().any(|v| self.nodes[v.0].requires_grad)
    }

    fn push(&mut self, value: Tensor, op: Op) -> Var {
        let requires_grad = self.any_grad(&op.inputs());
        let op = if requires_grad { op } else { Op::Detached };
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).matmul(self.value(b))?;
        Ok(self.push(value, Op::MatMul { a, b }))
    }

    /// `x · wᵀ` for `x: [B, in]`, `w: [out, in]`.
    pub fn linear(&mut self, x: Var, w: Var) -> Result<Var> {
        let (xv, wv) = (self.value(x), self.value(w));
        xv.expect_rank(2, "linear input")?;
        wv.expect_rank(2, "linear weight")?;
        let (b, din) = (xv.rows(), xv.cols());
        let (dout, din2) = (wv.rows(), wv.cols());
        if din != din2 {
            return Err(Error::dim(format!(
                "linear: input {:?} vs weight {:?}",
                xv.shape(),
                wv.shape()
            )));
        }
        let mut out = vec![0.0; b * dout];
        gemm(
            b,
            din,
            dout,
            1.0,
            MatRef::row_major(xv.data(), din),
            MatRef::transposed(wv.data(), din),
            0.0,
            &mut out,
        );
        let value = Tensor::new(vec![b, dout], out)?;
        Ok(self.push(value, Op::Linear { x, w }))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).add(self.value(b))?;
        Ok(self.push(value, Op::Add { a, b }))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).mul(self.value(b))?;
        Ok(self.push(value, Op::Mul { a, b }))
    }

    /// `scale · x + shift`.
    pub fn affine(&mut self, x: Var, scale: f64, shift: f64) -> Var {
        let value = self.value(x).map(|v| scale * v + shift);
        self.push(value, Op::Affine { x, scale })
    }

    pub fn scale(&mut self, x: Var, c: f64) -> Var {
        self.affine(x, c, 0.0)
    }

    /// Adds a per-feature (rank 2) or per-channel (rank 4) bias.
    pub fn bias_add(&mut self, x: Var, b: Var) -> Result<Var> {
        let (xv, bv) = (self.value(x), self.value(b));
        let shape = xv.shape();
        let channels = bv.numel();
        let stride = match shape.len() {
            2 if shape[1] == channels => 1,
            4 if shape[1] == channels => shape[2] * shape[3],
            _ => {
                return Err(Error::dim(format!(
                    "bias of length {channels} does not fit input {shape:?}"
                )))
            }
        };
        let bd = bv.data();
        let mut value = xv.clone();
        for (i, v) in value.data_mut().iter_mut().enumerate() {
            *v += bd[(i / stride) % channels];
        }
        Ok(self.push(value, Op::BiasAdd { x, b, stride }))
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let value = Tensor::scalar(self.value(x).sum());
        self.push(value, Op::Sum { x })
    }

    pub fn abs(&mut self, x: Var) -> Var {
        let value = self.value(x).abs();
        self.push(value, Op::Abs { x })
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let value = self.value(x).map(|v| v.max(0.0));
        self.push(value, Op::Relu { x })
    }

    /// `t · sigmoid(β t)`, differentiable in `t` only.
    pub fn pswish(&mut self, x: Var, beta: f64) -> Var {
        let value = self.value(x).map(|t| t * sigmoid(beta * t));
        self.push(value, Op::PSwish { x, beta })
    }

    /// Inverted dropout: zero with probability `p`, scale survivors by `1/(1-p)`.
    /// `p == 0` returns `x` itself.
    pub fn dropout(&mut self, x: Var, p: f64, rng: &mut impl Rng) -> Result<Var> {
        if !(0.0..1.0).contains(&p) {
            return Err(Error::contract(format!("dropout rate {p} outside [0, 1)")));
        }
        if p == 0.0 {
            return Ok(x);
        }
        let scale = 1.0 / (1.0 - p);
        let numel = self.value(x).numel();
        let keep: Vec<f64> = (0..numel)
            .map(|_| if rng.random::<f64>() < p { 0.0 } else { scale })
            .collect();
        let mut value = self.value(x).clone();
        for (v, k) in value.data_mut().iter_mut().zip(&keep) {
            *v *= k;
        }
        Ok(self.push(value, Op::Dropout { x, keep }))
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var> {
        let value = self.value(x).clone().reshape(shape)?;
        Ok(self.push(value, Op::Reshape { x }))
    }

    /// Mean over the batch of `-Σ_k target_k · log softmax(logits)_k`.
    /// Targets may be any non-negative distributions (e.g. smoothed labels).
    pub fn softmax_cross_entropy(&mut self, logits: Var, target: &Tensor) -> Result<Var> {
        let lv = self.value(logits);
        lv.expect_rank(2, "cross entropy logits")?;
        if target.shape() != lv.shape() {
            return Err(Error::dim(format!(
                "cross entropy: logits {:?} vs target {:?}",
                lv.shape(),
                target.shape()
            )));
        }
        let (b, k) = (lv.rows(), lv.cols());
        let mut probs = vec![0.0; b * k];
        let mut loss = 0.0;
        for r in 0..b {
            let row = &lv.data()[r * k..(r + 1) * k];
            let max = row.iter().fold(f64::NEG_INFINITY, |m, &v| m.max(v));
            let lse = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
            for c in 0..k {
                let logp = row[c] - lse;
                probs[r * k + c] = logp.exp();
                let t = target.data()[r * k + c];
                if t != 0.0 {
                    loss -= t * logp;
                }
            }
        }
        let value = Tensor::scalar(loss / b as f64);
        Ok(self.push(
            value,
            Op::SoftmaxCrossEntropy {
                logits,
                target: target.clone(),
                probs,
            },
        ))
    }

    /// Cross-correlation of `x: [B, Cin, H, W]` with `w: [Cout, Cin, k, k]`.
    pub fn conv2d(&mut self, x: Var, w: Var, stride: usize, padding: usize) -> Result<Var> {
        let wv = self.value(w);
        wv.expect_rank(4, "conv2d kernel")?;
        let ws = wv.shape();
        if ws[2] != ws[3] {
            return Err(Error::dim(format!("conv2d kernel must be square, got {ws:?}")));
        }
        let geom = ConvGeom::new(ws[1], ws[0], ws[2], stride, padding);
        let xv = self.value(x);
        let (b, h, wd, ho, wo) = geom.check_input(xv.shape())?;
        let (cin, cout, plen, p) = (geom.in_channels, geom.out_channels, geom.patch_len(), ho * wo);
        let mut out = vec![0.0; b * cout * p];
        let mut rows = vec![0.0; p * plen];
        for s in 0..b {
            let xs = &xv.data()[s * cin * h * wd..(s + 1) * cin * h * wd];
            im2col_rows(&geom, xs, h, wd, ho, wo, &mut rows);
            gemm(
                cout,
                plen,
                p,
                1.0,
                MatRef::row_major(wv.data(), plen),
                MatRef::transposed(&rows, plen),
                0.0,
                &mut out[s * cout * p..(s + 1) * cout * p],
            );
        }
        let value = Tensor::new(vec![b, cout, ho, wo], out)?;
        Ok(self.push(value, Op::Conv2d { x, w, geom }))
    }

    /// Non-overlapping max pooling with window and stride `k`.
    pub fn max_pool2d(&mut self, x: Var, k: usize) -> Result<Var> {
        let xv = self.value(x);
        xv.expect_rank(4, "max_pool2d")?;
        let s = xv.shape();
        let (b, c, h, w) = (s[0], s[1], s[2], s[3]);
        let (ho, wo) = (h / k, w / k);
        if ho == 0 || wo == 0 {
            return Err(Error::dim(format!("max_pool2d window {k} larger than input {s:?}")));
        }
        let mut out = vec![0.0; b * c * ho * wo];
        let mut argmax = vec![0; out.len()];
        for bc in 0..b * c {
            let plane = &xv.data()[bc * h * w..(bc + 1) * h * w];
            for oh in 0..ho {
                for ow in 0..wo {
                    let mut best = f64::NEG_INFINITY;
                    let mut at = 0;
                    for i in 0..k {
                        for j in 0..k {
                            let idx = (oh * k + i) * w + ow * k + j;
                            if plane[idx] > best {
                                best = plane[idx];
                                at = idx;
                            }
                        }
                    }
                    let o = bc * ho * wo + oh * wo + ow;
                    out[o] = best;
                    argmax[o] = bc * h * w + at;
                }
            }
        }
        let value = Tensor::new(vec![b, c, ho, wo], out)?;
        Ok(self.push(value, Op::MaxPool2d { x, argmax }))
    }

    /// Resizes to `shape` by copying entries: feature truncation / zero-padding
    /// for rank 2, nearest-neighbour spatial interpolation plus channel
    /// truncation / zero-padding for rank 4. Batch sizes must agree.
    pub fn resize(&mut self, x: Var, shape: &[usize]) -> Result<Var> {
        let xv = self.value(x);
        let from = xv.shape().to_vec();
        if from.len() != shape.len() || from[0] != shape[0] {
            return Err(Error::dim(format!("cannot resize {from:?} to {shape:?}")));
        }
        let numel: usize = shape.iter().product();
        let mut src = vec![usize::MAX; numel];
        match shape.len() {
            2 => {
                let (fin, fout) = (from[1], shape[1]);
                for b in 0..shape[0] {
                    for j in 0..fout.min(fin) {
                        src[b * fout + j] = b * fin + j;
                    }
                }
            }
            4 => {
                let (c0, h0, w0) = (from[1], from[2], from[3]);
                let (c1, h1, w1) = (shape[1], shape[2], shape[3]);
                for b in 0..shape[0] {
                    for c in 0..c1.min(c0) {
                        for i in 0..h1 {
                            let si = i * h0 / h1;
                            for j in 0..w1 {
                                let sj = j * w0 / w1;
                                src[((b * c1 + c) * h1 + i) * w1 + j] =
                                    ((b * c0 + c) * h0 + si) * w0 + sj;
                            }
                        }
                    }
                }
            }
            _ => return Err(Error::dim(format!("resize supports rank 2 or 4, got {from:?}"))),
        }
        let data = src
            .iter()
            .map(|&s| if s == usize::MAX { 0.0 } else { xv.data()[s] })
            .collect();
        let value = Tensor::new(shape.to_vec(), data)?;
        Ok(self.push(value, Op::Gather { x, src }))
    }

    /// Applies a rectangular structured map to every row of `x: [B, in_dim]`.
    /// `tws` holds one twiddle tensor per butterfly in the map's core.
    pub fn structured_map(&mut self, x: Var, tws: &[Var], spec: MapSpec) -> Result<Var> {
        let xv = self.value(x);
        xv.expect_rank(2, "structured map input")?;
        if xv.cols() != spec.in_dim {
            return Err(Error::dim(format!(
                "structured map expects {} features, got {}",
                spec.in_dim,
                xv.cols()
            )));
        }
        self.check_twiddles(tws, &spec)?;
        let b = xv.rows();
        let needs_grad = self.any_grad(&[x]) || self.any_grad(tws);
        let saved_len = spec.saved_len();
        let mut saved = if needs_grad { vec![0.0; b * saved_len] } else { Vec::new() };
        let mut out = vec![0.0; b * spec.out_dim];
        let mut work = vec![0.0; spec.n];
        {
            let tw_data: Vec<&[f64]> = tws.iter().map(|t| self.value(*t).data()).collect();
            let xd = self.value(x).data();
            for r in 0..b {
                let s = if needs_grad {
                    Some(&mut saved[r * saved_len..(r + 1) * saved_len])
                } else {
                    None
                };
                spec.forward_row(
                    &tw_data,
                    &xd[r * spec.in_dim..(r + 1) * spec.in_dim],
                    &mut out[r * spec.out_dim..(r + 1) * spec.out_dim],
                    &mut work,
                    s,
                );
            }
        }
        let value = Tensor::new(vec![b, spec.out_dim], out)?;
        Ok(self.push(
            value,
            Op::Structured {
                x,
                tws: tws.to_vec(),
                spec,
                saved,
            },
        ))
    }

    /// Kaleidoscope convolution: the structured map applied to every patch.
    pub fn kconv2d(&mut self, x: Var, tws: &[Var], spec: KConvSpec) -> Result<Var> {
        self.check_twiddles(tws, &spec.map)?;
        let g = spec.geom;
        let (b, h, w, ho, wo) = g.check_input(self.value(x).shape())?;
        let (cin, cout, plen, p) = (g.in_channels, g.out_channels, g.patch_len(), ho * wo);
        let mut out = vec![0.0; b * cout * p];
        let mut rows = vec![0.0; p * plen];
        let mut work = vec![0.0; spec.map.n];
        let mut y = vec![0.0; cout];
        {
            let tw_data: Vec<&[f64]> = tws.iter().map(|t| self.value(*t).data()).collect();
            let xd = self.value(x).data();
            for s in 0..b {
                im2col_rows(&g, &xd[s * cin * h * w..(s + 1) * cin * h * w], h, w, ho, wo, &mut rows);
                let os = &mut out[s * cout * p..(s + 1) * cout * p];
                for q in 0..p {
                    spec.map
                        .forward_row(&tw_data, &rows[q * plen..(q + 1) * plen], &mut y, &mut work, None);
                    for (c, v) in y.iter().enumerate() {
                        os[c * p + q] = *v;
                    }
                }
            }
        }
        let value = Tensor::new(vec![b, cout, ho, wo], out)?;
        Ok(self.push(
            value,
            Op::KConv2d {
                x,
                tws: tws.to_vec(),
                spec,
            },
        ))
    }

    fn check_twiddles(&self, tws: &[Var], spec: &MapSpec) -> Result<()> {
        if tws.len() != spec.num_butterflies() {
            return Err(Error::dim(format!(
                "structured core needs {} twiddle tensors, got {}",
                spec.num_butterflies(),
                tws.len()
            )));
        }
        for t in tws {
            if self.value(*t).numel() != spec.twiddle_len() {
                return Err(Error::dim(format!(
                    "twiddle tensor has {} entries, core of size {} needs {}",
                    self.value(*t).numel(),
                    spec.n,
                    spec.twiddle_len()
                )));
            }
        }
        Ok(())
    }

    /// Reverse sweep from a scalar `root`. Gradients are returned for every
    /// node that requires them and is reachable from `root`.
    pub fn backward(&self, root: Var) -> Result<Gradients> {
        if !self.value(root).is_scalar() {
            return Err(Error::contract(format!(
                "backward root must be scalar, got shape {:?}",
                self.value(root).shape()
            )));
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; root.0 + 1];
        grads[root.0] = Some(vec![1.0]);
        for id in (0..=root.0).rev() {
            let Some(g) = grads[id].take() else { continue };
            let node = &self.nodes[id];
            if !node.requires_grad {
                continue;
            }
            self.propagate(node, &g, &mut grads)?;
            grads[id] = Some(g);
        }
        let grads = grads
            .into_iter()
            .enumerate()
            .map(|(id, g)| {
                let node = &self.nodes[id];
                g.filter(|_| node.requires_grad)
                    .map(|d| Tensor::new(node.value.shape().to_vec(), d))
                    .transpose()
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Gradients { grads })
    }

    fn propagate(&self, node: &Node, g: &[f64], grads: &mut [Option<Vec<f64>>]) -> Result<()> {
        let rg = |v: &Var| self.nodes[v.0].requires_grad;
        // Accumulates `delta(i)` for every element into the gradient of `v`.
        let mut acc = |v: Var, f: &mut dyn FnMut(&mut [f64])| {
            if !self.nodes[v.0].requires_grad {
                return;
            }
            let slot = grads[v.0].get_or_insert_with(|| vec![0.0; self.nodes[v.0].value.numel()]);
            f(slot);
        };
        match &node.op {
            Op::Leaf | Op::Detached => {}
            Op::MatMul { a, b } => {
                let (av, bv) = (self.value(*a), self.value(*b));
                let (m, k, n) = (av.rows(), av.cols(), bv.cols());
                // dA = G · Bᵀ, dB = Aᵀ · G
                acc(*a, &mut |d| {
                    gemm(m, n, k, 1.0, MatRef::row_major(g, n), MatRef::transposed(bv.data(), n), 1.0, d)
                });
                acc(*b, &mut |d| {
                    gemm(k, m, n, 1.0, MatRef::transposed(av.data(), k), MatRef::row_major(g, n), 1.0, d)
                });
            }
            Op::Linear { x, w } => {
                let (xv, wv) = (self.value(*x), self.value(*w));
                let (bsz, din, dout) = (xv.rows(), xv.cols(), wv.rows());
                // y = x wᵀ: dx = G · w, dw = Gᵀ · x
                acc(*x, &mut |d| {
                    gemm(bsz, dout, din, 1.0, MatRef::row_major(g, dout), MatRef::row_major(wv.data(), din), 1.0, d)
                });
                acc(*w, &mut |d| {
                    gemm(dout, bsz, din, 1.0, MatRef::transposed(g, dout), MatRef::row_major(xv.data(), din), 1.0, d)
                });
            }
            Op::Add { a, b } => {
                for v in [a, b] {
                    acc(*v, &mut |d| d.iter_mut().zip(g).for_each(|(d, g)| *d += g));
                }
            }
            Op::Mul { a, b } => {
                let (av, bv) = (self.value(*a).data(), self.value(*b).data());
                acc(*a, &mut |d| {
                    for i in 0..d.len() {
                        d[i] += g[i] * bv[i];
                    }
                });
                acc(*b, &mut |d| {
                    for i in 0..d.len() {
                        d[i] += g[i] * av[i];
                    }
                });
            }
            Op::Affine { x, scale } => {
                acc(*x, &mut |d| d.iter_mut().zip(g).for_each(|(d, g)| *d += scale * g));
            }
            Op::BiasAdd { x, b, stride } => {
                acc(*x, &mut |d| d.iter_mut().zip(g).for_each(|(d, g)| *d += g));
                acc(*b, &mut |d| {
                    let c = d.len();
                    for (i, gi) in g.iter().enumerate() {
                        d[(i / stride) % c] += gi;
                    }
                });
            }
            Op::Sum { x } => {
                acc(*x, &mut |d| d.iter_mut().for_each(|d| *d += g[0]));
            }
            Op::Abs { x } => {
                let xv = self.value(*x).data();
                acc(*x, &mut |d| {
                    for i in 0..d.len() {
                        let s = if xv[i] > 0.0 {
                            1.0
                        } else if xv[i] < 0.0 {
                            -1.0
                        } else {
                            0.0
                        };
                        d[i] += s * g[i];
                    }
                });
            }
            Op::Relu { x } => {
                let xv = self.value(*x).data();
                acc(*x, &mut |d| {
                    for i in 0..d.len() {
                        if xv[i] > 0.0 {
                            d[i] += g[i];
                        }
                    }
                });
            }
            Op::PSwish { x, beta } => {
                let xv = self.value(*x).data();
                acc(*x, &mut |d| {
                    for i in 0..d.len() {
                        let s = sigmoid(beta * xv[i]);
                        d[i] += g[i] * (s + beta * xv[i] * s * (1.0 - s));
                    }
                });
            }
            Op::Dropout { x, keep } => {
                acc(*x, &mut |d| {
                    for i in 0..d.len() {
                        d[i] += g[i] * keep[i];
                    }
                });
            }
            Op::Reshape { x } => {
                acc(*x, &mut |d| d.iter_mut().zip(g).for_each(|(d, g)| *d += g));
            }
            Op::SoftmaxCrossEntropy {
                logits,
                target,
                probs,
            } => {
                let lv = self.value(*logits);
                let (b, k) = (lv.rows(), lv.cols());
                let t = target.data();
                acc(*logits, &mut |d| {
                    for r in 0..b {
                        let mass: f64 = t[r * k..(r + 1) * k].iter().sum();
                        for c in 0..k {
                            let i = r * k + c;
                            d[i] += g[0] * (probs[i] * mass - t[i]) / b as f64;
                        }
                    }
                });
            }
            Op::Conv2d { x, w, geom } => {
                let (xv, wv) = (self.value(*x), self.value(*w));
                let (b, h, wd, ho, wo) = geom.check_input(xv.shape())?;
                let (cin, cout, plen, p) = (geom.in_channels, geom.out_channels, geom.patch_len(), ho * wo);
                let mut rows = vec![0.0; p * plen];
                let mut drows = vec![0.0; p * plen];
                let need_x = rg(x);
                let need_w = rg(w);
                let mut dw = vec![0.0; if need_w { wv.numel() } else { 0 }];
                let mut dx = vec![0.0; if need_x { xv.numel() } else { 0 }];
                for s in 0..b {
                    let gs = &g[s * cout * p..(s + 1) * cout * p];
                    if need_w {
                        let xs = &xv.data()[s * cin * h * wd..(s + 1) * cin * h * wd];
                        im2col_rows(geom, xs, h, wd, ho, wo, &mut rows);
                        // dW += G_s · rows
                        gemm(cout, p, plen, 1.0, MatRef::row_major(gs, p), MatRef::row_major(&rows, plen), 1.0, &mut dw);
                    }
                    if need_x {
                        // drows = G_sᵀ · W
                        gemm(p, cout, plen, 1.0, MatRef::transposed(gs, p), MatRef::row_major(wv.data(), plen), 0.0, &mut drows);
                        col2im_rows_add(geom, &drows, h, wd, ho, wo, &mut dx[s * cin * h * wd..(s + 1) * cin * h * wd]);
                    }
                }
                acc(*w, &mut |d| d.iter_mut().zip(&dw).for_each(|(d, g)| *d += g));
                acc(*x, &mut |d| d.iter_mut().zip(&dx).for_each(|(d, g)| *d += g));
            }
            Op::MaxPool2d { x, argmax } => {
                acc(*x, &mut |d| {
                    for (o, &src) in argmax.iter().enumerate() {
                        d[src] += g[o];
                    }
                });
            }
            Op::Gather { x, src } => {
                acc(*x, &mut |d| {
                    for (o, &s) in src.iter().enumerate() {
                        if s != usize::MAX {
                            d[s] += g[o];
                        }
                    }
                });
            }
            Op::Structured { x, tws, spec, saved } => {
                let b = self.value(*x).rows();
                let tw_data: Vec<&[f64]> = tws.iter().map(|t| self.value(*t).data()).collect();
                let mut dtws: Vec<Vec<f64>> = vec![vec![0.0; spec.twiddle_len()]; tws.len()];
                let mut dx = vec![0.0; b * spec.in_dim];
                let mut work = vec![0.0; spec.n];
                let saved_len = spec.saved_len();
                for r in 0..b {
                    spec.backward_row(
                        &tw_data,
                        &saved[r * saved_len..(r + 1) * saved_len],
                        &g[r * spec.out_dim..(r + 1) * spec.out_dim],
                        Some(&mut dx[r * spec.in_dim..(r + 1) * spec.in_dim]),
                        &mut dtws,
                        &mut work,
                    );
                }
                acc(*x, &mut |d| d.iter_mut().zip(&dx).for_each(|(d, g)| *d += g));
                for (t, dt) in tws.iter().zip(&dtws) {
                    acc(*t, &mut |d| d.iter_mut().zip(dt).for_each(|(d, g)| *d += g));
                }
            }
            Op::KConv2d { x, tws, spec } => {
                let geom = &spec.geom;
                let map = &spec.map;
                let xv = self.value(*x);
                let (b, h, wd, ho, wo) = geom.check_input(xv.shape())?;
                let (cin, cout, plen, p) = (geom.in_channels, geom.out_channels, geom.patch_len(), ho * wo);
                let tw_data: Vec<&[f64]> = tws.iter().map(|t| self.value(*t).data()).collect();
                let mut dtws: Vec<Vec<f64>> = vec![vec![0.0; map.twiddle_len()]; tws.len()];
                let need_x = rg(x);
                let mut dx = vec![0.0; if need_x { xv.numel() } else { 0 }];
                let mut rows = vec![0.0; p * plen];
                let mut drows = vec![0.0; p * plen];
                let mut saved = vec![0.0; map.saved_len()];
                let mut work = vec![0.0; map.n];
                let mut y = vec![0.0; cout];
                let mut dy = vec![0.0; cout];
                for s in 0..b {
                    let xs = &xv.data()[s * cin * h * wd..(s + 1) * cin * h * wd];
                    im2col_rows(geom, xs, h, wd, ho, wo, &mut rows);
                    drows.iter_mut().for_each(|v| *v = 0.0);
                    let gs = &g[s * cout * p..(s + 1) * cout * p];
                    for q in 0..p {
                        map.forward_row(&tw_data, &rows[q * plen..(q + 1) * plen], &mut y, &mut work, Some(saved.as_mut_slice()));
                        for c in 0..cout {
                            dy[c] = gs[c * p + q];
                        }
                        let dxq = if need_x { Some(&mut drows[q * plen..(q + 1) * plen]) } else { None };
                        map.backward_row(&tw_data, &saved, &dy, dxq, &mut dtws, &mut work);
                    }
                    if need_x {
                        col2im_rows_add(geom, &drows, h, wd, ho, wo, &mut dx[s * cin * h * wd..(s + 1) * cin * h * wd]);
                    }
                }
                acc(*x, &mut |d| d.iter_mut().zip(&dx).for_each(|(d, g)| *d += g));
                for (t, dt) in tws.iter().zip(&dtws) {
                    acc(*t, &mut |d| d.iter_mut().zip(dt).for_each(|(d, g)| *d += g));
                }
            }
        }
        Ok(())
    }
}
