//! Layers, the FC6 and VGG16 builders, ZerO initialization, PSwish and
//! soft skip connections.

pub mod build;
pub mod config;
pub mod init;
pub mod model;
pub mod skip;

pub use build::{build_fc6, build_model, build_vgg16};
pub use config::{
    vgg16_plan, ActivationKind, Architecture, BodyKind, HeadKind, ModelConfig, PlanItem,
};
pub use init::{zero_init, zero_matrix};
pub use model::{Binding, Block, ForwardCtx, Layer, LayerKind, Mode, Model, WeightLayerInfo};
pub use skip::soft_skip_forward;

use crate::autodiff::tape::sigmoid;

/// Scalar PSwish, `t · sigmoid(β t)`.
pub fn pswish(t: f64, beta: f64) -> f64 {
    t * sigmoid(beta * t)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pswish_limits() {
        for t in [-3.0, -0.5, 0.0, 0.25, 4.0] {
            assert_eq!(pswish(t, 0.0), t / 2.0);
            assert_eq!(pswish(0.0, t.abs() * 10.0), 0.0);
        }
        assert!((pswish(5.0, 1000.0) - 5.0).abs() < 1e-9);
        assert!(pswish(-5.0, 1000.0).abs() < 1e-9);
    }
}
