use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::config::{Architecture, BodyKind, HeadKind, ModelConfig, PlanItem};
use super::init::uniform_fan_in;
use super::model::{Block, Layer, Model};
use crate::autodiff::{ConvGeom, ParamKind, Parameter};
use crate::error::{Error, Result};
use crate::structured::{ButterflyMatrix, InnerKind, KConvSpec, MapSpec};
use crate::tensor::Tensor;

fn dense(name: &str, fan_in: usize, fan_out: usize, rng: &mut ChaCha8Rng) -> Layer {
    Layer::Dense {
        weight: Parameter::new(
            format!("{name}.weight"),
            uniform_fan_in(&[fan_out, fan_in], fan_in, rng),
            ParamKind::Weight,
        ),
        bias: Parameter::new(
            format!("{name}.bias"),
            uniform_fan_in(&[fan_out], fan_in, rng),
            ParamKind::Bias,
        ),
    }
}

fn givens_twiddles(name: &str, n: usize, count: usize, rng: &mut ChaCha8Rng) -> Result<Vec<Parameter>> {
    (0..count)
        .map(|i| {
            let b = ButterflyMatrix::random_givens_with(n, rng)?;
            let levels = b.levels();
            let value = Tensor::new(vec![levels, n / 2, 2, 2], b.twiddles().to_vec())?;
            Ok(Parameter::new(format!("{name}.twiddle{i}"), value, ParamKind::Structured))
        })
        .collect()
}

fn butterfly_linear(name: &str, fan_in: usize, fan_out: usize, rng: &mut ChaCha8Rng) -> Result<Layer> {
    let spec = MapSpec::new(fan_in, fan_out, InnerKind::Butterfly)?;
    let twiddles = givens_twiddles(name, spec.n, spec.num_butterflies(), rng)?;
    let bias = Parameter::new(
        format!("{name}.bias"),
        uniform_fan_in(&[fan_out], fan_in, rng),
        ParamKind::Bias,
    );
    Ok(Layer::ButterflyLinear {
        spec,
        twiddles,
        bias,
    })
}

fn conv(name: &str, cin: usize, cout: usize, rng: &mut ChaCha8Rng) -> Layer {
    let fan_in = cin * 9;
    Layer::Conv2d {
        weight: Parameter::new(
            format!("{name}.weight"),
            uniform_fan_in(&[cout, cin, 3, 3], fan_in, rng),
            ParamKind::Weight,
        ),
        bias: Parameter::new(
            format!("{name}.bias"),
            uniform_fan_in(&[cout], fan_in, rng),
            ParamKind::Bias,
        ),
        stride: 1,
        padding: 1,
    }
}

fn kconv(name: &str, cin: usize, cout: usize, width: usize, rng: &mut ChaCha8Rng) -> Result<Layer> {
    let spec = KConvSpec::new(ConvGeom::new(cin, cout, 3, 1, 1), width)?;
    let twiddles = givens_twiddles(name, spec.map.n, spec.map.num_butterflies(), rng)?;
    let bias = Parameter::new(
        format!("{name}.bias"),
        uniform_fan_in(&[cout], cin * 9, rng),
        ParamKind::Bias,
    );
    Ok(Layer::KConv2d {
        spec,
        twiddles,
        bias,
    })
}

fn hidden_tail(config: &ModelConfig) -> Vec<Layer> {
    let mut v = vec![Layer::Activation(config.activation)];
    if config.dropout > 0.0 {
        v.push(Layer::Dropout(config.dropout));
    }
    v
}

/// Six linear layers `in → h → h → h → h → h → classes` with an activation
/// and dropout after each hidden layer.
pub fn build_fc6(config: &ModelConfig) -> Result<Model> {
    config.validate()?;
    if config.architecture != Architecture::Fc6 {
        return Err(Error::Config("build_fc6 needs architecture FC6".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let h = config.hidden_width;
    let mut widths = vec![config.input_features()];
    widths.extend(std::iter::repeat_n(h, 5));
    widths.push(config.classes);

    let mut blocks = vec![Block {
        layers: vec![Layer::Flatten],
        skip: false,
    }];
    for l in 0..6 {
        let name = format!("fc{l}");
        let is_head = l == 5;
        let structured = if is_head {
            config.head == HeadKind::Butterfly
        } else {
            config.body == BodyKind::Factorized
        };
        let layer = if structured {
            butterfly_linear(&name, widths[l], widths[l + 1], &mut rng)?
        } else {
            dense(&name, widths[l], widths[l + 1], &mut rng)
        };
        let mut layers = vec![layer];
        if !is_head {
            layers.extend(hidden_tail(config));
        }
        blocks.push(Block {
            layers,
            skip: !is_head,
        });
    }
    Ok(Model {
        config: config.clone(),
        blocks,
    })
}

/// VGG-style network: 3×3 convolutions (padding 1) per the channel plan,
/// 2×2 max pooling at `M` entries, then one linear head on the flattened features.
pub fn build_vgg16(config: &ModelConfig) -> Result<Model> {
    config.validate()?;
    if config.architecture != Architecture::Vgg16 {
        return Err(Error::Config("build_vgg16 needs architecture VGG16".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let [mut channels, mut h, mut w] = config.input_shape;
    let mut blocks: Vec<Block> = Vec::new();
    let mut conv_idx = 0;
    for item in config.plan() {
        match item {
            PlanItem::Conv(cout) => {
                let name = format!("conv{conv_idx}");
                conv_idx += 1;
                let layer = match config.body {
                    BodyKind::Dense => conv(&name, channels, cout, &mut rng),
                    BodyKind::Factorized => {
                        kconv(&name, channels, cout, config.kaleidoscope_width, &mut rng)?
                    }
                };
                let mut layers = vec![layer];
                layers.extend(hidden_tail(config));
                blocks.push(Block { layers, skip: true });
                channels = cout;
            }
            PlanItem::MaxPool => {
                let last = blocks
                    .last_mut()
                    .ok_or_else(|| Error::Config("conv plan cannot start with a pool".into()))?;
                last.layers.push(Layer::MaxPool2d(2));
                h /= 2;
                w /= 2;
                if h == 0 || w == 0 {
                    return Err(Error::Config("conv plan pools the input away".into()));
                }
            }
        }
    }
    let features = channels * h * w;
    let head = match config.head {
        HeadKind::Dense => dense("head", features, config.classes, &mut rng),
        HeadKind::Butterfly => butterfly_linear("head", features, config.classes, &mut rng)?,
    };
    blocks.push(Block {
        layers: vec![Layer::Flatten, head],
        skip: false,
    });
    Ok(Model {
        config: config.clone(),
        blocks,
    })
}

/// Builds whichever architecture the config names.
pub fn build_model(config: &ModelConfig) -> Result<Model> {
    match config.architecture {
        Architecture::Fc6 => build_fc6(config),
        Architecture::Vgg16 => build_vgg16(config),
    }
}
