use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::config::{ActivationKind, ModelConfig};
use super::skip::soft_skip_forward;
use crate::autodiff::{ConvGeom, Gradients, ParamKind, Parameter, Tape, Var};
use crate::error::{Error, Result};
use crate::structured::{KConvSpec, MapSpec, StructuredSpec};
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LayerKind {
    Dense,
    Conv2d,
    ButterflyLinear,
    KConv2d,
    Relu,
    PSwish,
    Dropout,
    MaxPool,
    Flatten,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Layer {
    /// `y = x Wᵀ + b` with `W: [out, in]`.
    Dense { weight: Parameter, bias: Parameter },
    Conv2d {
        weight: Parameter,
        bias: Parameter,
        stride: usize,
        padding: usize,
    },
    ButterflyLinear {
        spec: MapSpec,
        twiddles: Vec<Parameter>,
        bias: Parameter,
    },
    KConv2d {
        spec: KConvSpec,
        twiddles: Vec<Parameter>,
        bias: Parameter,
    },
    Activation(ActivationKind),
    Dropout(f64),
    MaxPool2d(usize),
    Flatten,
}

impl Layer {
    pub fn kind(&self) -> LayerKind {
        match self {
            Layer::Dense { .. } => LayerKind::Dense,
            Layer::Conv2d { .. } => LayerKind::Conv2d,
            Layer::ButterflyLinear { .. } => LayerKind::ButterflyLinear,
            Layer::KConv2d { .. } => LayerKind::KConv2d,
            Layer::Activation(ActivationKind::Relu) => LayerKind::Relu,
            Layer::Activation(ActivationKind::PSwish) => LayerKind::PSwish,
            Layer::Dropout(_) => LayerKind::Dropout,
            Layer::MaxPool2d(_) => LayerKind::MaxPool,
            Layer::Flatten => LayerKind::Flatten,
        }
    }

    /// Dense and convolution layers are prunable; structured layers never are.
    pub fn prunable(&self) -> bool {
        matches!(self, Layer::Dense { .. } | Layer::Conv2d { .. })
    }

    pub fn has_weights(&self) -> bool {
        self.parameters().next().is_some()
    }

    pub fn parameters(&self) -> Box<dyn Iterator<Item = &Parameter> + '_> {
        match self {
            Layer::Dense { weight, bias } | Layer::Conv2d { weight, bias, .. } => {
                Box::new([weight, bias].into_iter())
            }
            Layer::ButterflyLinear { twiddles, bias, .. } | Layer::KConv2d { twiddles, bias, .. } => {
                Box::new(twiddles.iter().chain(std::iter::once(bias)))
            }
            _ => Box::new(std::iter::empty()),
        }
    }

    pub fn parameters_mut(&mut self) -> Box<dyn Iterator<Item = &mut Parameter> + '_> {
        match self {
            Layer::Dense { weight, bias } | Layer::Conv2d { weight, bias, .. } => {
                Box::new([weight, bias].into_iter())
            }
            Layer::ButterflyLinear { twiddles, bias, .. } | Layer::KConv2d { twiddles, bias, .. } => {
                Box::new(twiddles.iter_mut().chain(std::iter::once(bias)))
            }
            _ => Box::new(std::iter::empty()),
        }
    }

    pub fn structured_spec(&self) -> Option<StructuredSpec> {
        match self {
            Layer::ButterflyLinear { spec, .. } => Some(StructuredSpec::Linear(*spec)),
            Layer::KConv2d { spec, .. } => Some(StructuredSpec::Conv(*spec)),
            _ => None,
        }
    }

    /// Per-sample output shape for a per-sample input shape.
    pub fn output_shape(&self, input: &[usize]) -> Result<Vec<usize>> {
        match self {
            Layer::Dense { weight, .. } => Ok(vec![weight.value.shape()[0]]),
            Layer::ButterflyLinear { spec, .. } => Ok(vec![spec.out_dim]),
            Layer::Conv2d {
                weight,
                stride,
                padding,
                ..
            } => {
                let s = weight.value.shape();
                let g = ConvGeom::new(s[1], s[0], s[2], *stride, *padding);
                let (h, w) = g.output_hw(input[1], input[2])?;
                Ok(vec![s[0], h, w])
            }
            Layer::KConv2d { spec, .. } => {
                let (h, w) = spec.geom.output_hw(input[1], input[2])?;
                Ok(vec![spec.geom.out_channels, h, w])
            }
            Layer::MaxPool2d(k) => Ok(vec![input[0], input[1] / k, input[2] / k]),
            Layer::Flatten => Ok(vec![input.iter().product()]),
            Layer::Activation(_) | Layer::Dropout(_) => Ok(input.to_vec()),
        }
    }
}

/// A group of layers that a soft skip connection may wrap.
#[derive(Clone, Debug, PartialEq)]
pub struct Block {
    pub layers: Vec<Layer>,
    /// Whether a soft skip connection is applied around this block.
    pub skip: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// Per-call forward settings: mode, schedule values and the dropout seed.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ForwardCtx {
    pub mode: Mode,
    /// PSwish temperature.
    pub beta: f64,
    /// Soft-skip weight; 0 disables the skip path.
    pub gamma: f64,
    pub dropout_seed: u64,
}

impl ForwardCtx {
    pub fn eval() -> Self {
        Self {
            mode: Mode::Eval,
            beta: 20.0,
            gamma: 0.0,
            dropout_seed: 0,
        }
    }

    pub fn train(dropout_seed: u64) -> Self {
        Self {
            mode: Mode::Train,
            dropout_seed,
            ..Self::eval()
        }
    }
}

/// Model parameters registered on a tape, in [`Model::parameters`] order.
#[derive(Clone, Debug)]
pub struct Binding {
    /// Leaf holding each parameter's effective (masked) value.
    pub params: Vec<Var>,
    /// Leaf holding each parameter's soft mask, when one is being learned.
    pub soft_masks: Vec<Option<Var>>,
    /// What the forward pass consumes for each parameter.
    used: Vec<Var>,
}

impl Binding {
    /// Gradients of every parameter leaf, zero-filled where unreachable.
    pub fn param_grads(&self, tape: &Tape, grads: &Gradients) -> Vec<Tensor> {
        self.params
            .iter()
            .map(|v| {
                grads
                    .get(*v)
                    .cloned()
                    .unwrap_or_else(|| Tensor::zeros(tape.value(*v).shape()))
            })
            .collect()
    }
}

/// Description of one weight-carrying layer, in layer order.
#[derive(Clone, Debug, PartialEq)]
pub struct WeightLayerInfo {
    pub name: String,
    pub kind: LayerKind,
    pub prunable: bool,
    /// Index into [`Model::parameters`] of the weight (first twiddle for structured layers).
    pub param_index: usize,
    /// Per-sample input shape.
    pub input_shape: Vec<usize>,
    pub output_shape: Vec<usize>,
    pub structured: Option<StructuredSpec>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Model {
    pub config: ModelConfig,
    pub blocks: Vec<Block>,
}

impl Model {
    pub fn parameters(&self) -> Vec<&Parameter> {
        self.blocks
            .iter()
            .flat_map(|b| b.layers.iter().flat_map(|l| l.parameters()))
            .collect()
    }

    pub fn parameters_mut(&mut self) -> Vec<&mut Parameter> {
        self.blocks
            .iter_mut()
            .flat_map(|b| b.layers.iter_mut().flat_map(|l| l.parameters_mut()))
            .collect()
    }

    pub fn prunable_parameters(&self) -> Vec<&Parameter> {
        self.parameters().into_iter().filter(|p| p.prunable()).collect()
    }

    pub fn prunable_parameters_mut(&mut self) -> Vec<&mut Parameter> {
        self.parameters_mut().into_iter().filter(|p| p.prunable()).collect()
    }

    pub fn param_count(&self) -> usize {
        self.parameters().iter().map(|p| p.numel()).sum()
    }

    pub fn prunable_count(&self) -> usize {
        self.prunable_parameters().iter().map(|p| p.numel()).sum()
    }

    pub fn layers(&self) -> impl Iterator<Item = &Layer> {
        self.blocks.iter().flat_map(|b| b.layers.iter())
    }

    /// Weight-carrying layers with their per-sample shapes.
    pub fn weight_layers(&self) -> Result<Vec<WeightLayerInfo>> {
        self.weight_layers_for(self.config.input_shape)
    }

    /// [`Model::weight_layers`] for a per-sample input other than the configured one.
    pub fn weight_layers_for(&self, input_shape: [usize; 3]) -> Result<Vec<WeightLayerInfo>> {
        let mut shape = input_shape.to_vec();
        let mut out = Vec::new();
        let mut pidx = 0;
        for (bi, block) in self.blocks.iter().enumerate() {
            for (li, layer) in block.layers.iter().enumerate() {
                let next = layer.output_shape(&shape)?;
                let nparams = layer.parameters().count();
                if nparams > 0 {
                    out.push(WeightLayerInfo {
                        name: format!("blocks.{bi}.{li}"),
                        kind: layer.kind(),
                        prunable: layer.prunable(),
                        param_index: pidx,
                        input_shape: shape.clone(),
                        output_shape: next.clone(),
                        structured: layer.structured_spec(),
                    });
                }
                pidx += nparams;
                shape = next;
            }
        }
        Ok(out)
    }

    /// Registers every parameter on `tape`. With `requires_grad`, soft masks
    /// become separate leaves multiplied into their weights.
    pub fn bind(&self, tape: &mut Tape, requires_grad: bool) -> Result<Binding> {
        let mut params = Vec::new();
        let mut soft_masks = Vec::new();
        let mut used = Vec::new();
        for p in self.parameters() {
            let v = tape.leaf(p.effective_value(), requires_grad);
            params.push(v);
            match &p.soft_mask {
                Some(m) => {
                    let mv = tape.leaf(m.clone(), requires_grad);
                    soft_masks.push(Some(mv));
                    used.push(tape.mul(v, mv)?);
                }
                None => {
                    soft_masks.push(None);
                    used.push(v);
                }
            }
        }
        Ok(Binding {
            params,
            soft_masks,
            used,
        })
    }

    /// Forward pass of a batch `x: [B, C, H, W]` (or `[B, features]`).
    pub fn forward(&self, tape: &mut Tape, binding: &Binding, x: Var, ctx: &ForwardCtx) -> Result<Var> {
        let mut rng = ChaCha8Rng::seed_from_u64(ctx.dropout_seed);
        let mut pidx = 0;
        let mut h = x;
        for block in &self.blocks {
            let start = pidx;
            let run = |tape: &mut Tape, z: Var, rng: &mut ChaCha8Rng| -> Result<(Var, usize)> {
                let mut p = start;
                let mut z = z;
                for layer in &block.layers {
                    z = self.layer_forward(tape, &binding.used, &mut p, layer, z, ctx, rng)?;
                }
                Ok((z, p))
            };
            if block.skip && ctx.gamma != 0.0 {
                let mut end = start;
                h = soft_skip_forward(tape, h, ctx.gamma, |tape, z| {
                    let (out, p) = run(tape, z, &mut rng)?;
                    end = p;
                    Ok(out)
                })?;
                pidx = end;
            } else {
                let (out, p) = run(tape, h, &mut rng)?;
                h = out;
                pidx = p;
            }
        }
        Ok(h)
    }

    #[allow(clippy::too_many_arguments)]
    fn layer_forward(
        &self,
        tape: &mut Tape,
        used: &[Var],
        pidx: &mut usize,
        layer: &Layer,
        z: Var,
        ctx: &ForwardCtx,
        rng: &mut ChaCha8Rng,
    ) -> Result<Var> {
        let mut next = || {
            let v = used[*pidx];
            *pidx += 1;
            v
        };
        match layer {
            Layer::Dense { .. } => {
                let (w, b) = (next(), next());
                let y = tape.linear(z, w)?;
                tape.bias_add(y, b)
            }
            Layer::Conv2d { stride, padding, .. } => {
                let (w, b) = (next(), next());
                let y = tape.conv2d(z, w, *stride, *padding)?;
                tape.bias_add(y, b)
            }
            Layer::ButterflyLinear { spec, twiddles, .. } => {
                let tws: Vec<Var> = (0..twiddles.len()).map(|_| next()).collect();
                let b = next();
                let y = tape.structured_map(z, &tws, *spec)?;
                tape.bias_add(y, b)
            }
            Layer::KConv2d { spec, twiddles, .. } => {
                let tws: Vec<Var> = (0..twiddles.len()).map(|_| next()).collect();
                let b = next();
                let y = tape.kconv2d(z, &tws, *spec)?;
                tape.bias_add(y, b)
            }
            Layer::Activation(ActivationKind::Relu) => Ok(tape.relu(z)),
            Layer::Activation(ActivationKind::PSwish) => Ok(tape.pswish(z, ctx.beta)),
            Layer::Dropout(p) => match ctx.mode {
                Mode::Train => tape.dropout(z, *p, rng),
                Mode::Eval => Ok(z),
            },
            Layer::MaxPool2d(k) => tape.max_pool2d(z, *k),
            Layer::Flatten => {
                let s = tape.value(z).shape().to_vec();
                let rest: usize = s[1..].iter().product();
                tape.reshape(z, &[s[0], rest])
            }
        }
    }

    /// Shapes a batch of samples for the model's input.
    pub fn batch_input(&self, images: &Tensor) -> Result<Tensor> {
        let per: usize = self.config.input_features();
        if !images.numel().is_multiple_of(per) {
            return Err(Error::dim(format!(
                "batch of {} values is not a multiple of the input size {per}",
                images.numel()
            )));
        }
        let b = images.numel() / per;
        let [c, h, w] = self.config.input_shape;
        images.clone().reshape(&[b, c, h, w])
    }

    /// Eval-mode logits without gradient tracking.
    pub fn predict(&self, images: &Tensor) -> Result<Tensor> {
        self.predict_with(images, &ForwardCtx::eval())
    }

    pub fn predict_with(&self, images: &Tensor, ctx: &ForwardCtx) -> Result<Tensor> {
        let mut tape = Tape::new();
        let binding = self.bind(&mut tape, false)?;
        let x = tape.constant(self.batch_input(images)?);
        let y = self.forward(&mut tape, &binding, x, ctx)?;
        Ok(tape.value(y).clone())
    }

    /// Mean cross-entropy against soft `targets: [B, classes]` together with
    /// the gradient of every parameter, in [`Model::parameters`] order.
    pub fn loss_and_grads(
        &self,
        images: &Tensor,
        targets: &Tensor,
        ctx: &ForwardCtx,
    ) -> Result<(f64, Vec<Tensor>)> {
        let mut tape = Tape::new();
        let binding = self.bind(&mut tape, true)?;
        let x = tape.constant(self.batch_input(images)?);
        let logits = self.forward(&mut tape, &binding, x, ctx)?;
        let loss = tape.softmax_cross_entropy(logits, targets)?;
        let grads = tape.backward(loss)?;
        Ok((tape.value(loss).item(), binding.param_grads(&tape, &grads)))
    }

    /// Copy of the model with every parameter replaced by its absolute value.
    pub fn linearized(&self) -> Model {
        let mut m = self.clone();
        for p in m.parameters_mut() {
            p.value = p.value.abs();
        }
        m
    }

    pub fn param_kinds(&self) -> Vec<ParamKind> {
        self.parameters().iter().map(|p| p.kind).collect()
    }
}
