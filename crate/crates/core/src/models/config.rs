use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Architecture {
    /// Six fully-connected layers.
    Fc6,
    /// VGG-style stack of 3×3 convolutions followed by one linear head.
    Vgg16,
}

/// How the classification head is realized.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum HeadKind {
    Dense,
    Butterfly,
}

/// How every layer before the head is realized.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum BodyKind {
    Dense,
    /// Linear layers become butterfly maps, convolutions become kaleidoscope convolutions.
    Factorized,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum ActivationKind {
    Relu,
    PSwish,
}

/// One entry of a VGG channel plan.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum PlanItem {
    Conv(usize),
    MaxPool,
}

/// The 13-convolution VGG16 plan.
#[rustfmt::skip]
pub fn vgg16_plan() -> Vec<PlanItem> {
    use PlanItem::{Conv as C, MaxPool as M};
    vec![
        C(64), C(64), M,
        C(128), C(128), M,
        C(256), C(256), C(256), M,
        C(512), C(512), C(512), M,
        C(512), C(512), C(512), M,
    ]
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub architecture: Architecture,
    pub head: HeadKind,
    pub body: BodyKind,
    /// FC6 hidden width.
    pub hidden_width: usize,
    /// Per-sample input shape `[C, H, W]`.
    pub input_shape: [usize; 3],
    pub classes: usize,
    pub dropout: f64,
    pub activation: ActivationKind,
    pub kaleidoscope_width: usize,
    /// VGG channel plan; `None` means [`vgg16_plan`].
    pub conv_plan: Option<Vec<PlanItem>>,
    /// Seed for random weight initialization.
    pub seed: u64,
}

impl ModelConfig {
    /// FC6 on 28×28 single-channel inputs with 10 classes.
    pub fn fc6() -> Self {
        Self {
            architecture: Architecture::Fc6,
            head: HeadKind::Dense,
            body: BodyKind::Dense,
            hidden_width: 100,
            input_shape: [1, 28, 28],
            classes: 10,
            dropout: 0.1,
            activation: ActivationKind::Relu,
            kaleidoscope_width: 1,
            conv_plan: None,
            seed: 0,
        }
    }

    /// VGG16 on 32×32 RGB inputs with 10 classes.
    pub fn vgg16() -> Self {
        Self {
            architecture: Architecture::Vgg16,
            input_shape: [3, 32, 32],
            ..Self::fc6()
        }
    }

    pub fn with_head(mut self, head: HeadKind) -> Self {
        self.head = head;
        self
    }

    /// Replaces every layer: factorized body plus butterfly head.
    pub fn fully_factorized(mut self) -> Self {
        self.body = BodyKind::Factorized;
        self.head = HeadKind::Butterfly;
        self
    }

    pub fn input_features(&self) -> usize {
        self.input_shape.iter().product()
    }

    pub fn plan(&self) -> Vec<PlanItem> {
        self.conv_plan.clone().unwrap_or_else(vgg16_plan)
    }

    pub fn validate(&self) -> Result<()> {
        if self.body == BodyKind::Factorized && self.head != HeadKind::Butterfly {
            return Err(Error::Config(
                "a factorized body requires a butterfly head".into(),
            ));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config(format!("dropout {} outside [0, 1)", self.dropout)));
        }
        if self.classes < 2 || self.hidden_width == 0 || self.kaleidoscope_width == 0 {
            return Err(Error::Config(
                "classes >= 2, hidden width >= 1 and kaleidoscope width >= 1 required".into(),
            ));
        }
        if self.input_shape.contains(&0) {
            return Err(Error::Config(format!("bad input shape {:?}", self.input_shape)));
        }
        Ok(())
    }
}
