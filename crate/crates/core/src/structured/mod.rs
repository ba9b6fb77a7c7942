//! Butterfly and kaleidoscope structured matrices, rectangular maps built on
//! them, and the kaleidoscope replacement for 2-D convolution.

pub mod butterfly;
pub mod kaleidoscope;
pub mod kconv;
pub mod rect;

pub use butterfly::ButterflyMatrix;
pub use kaleidoscope::KaleidoscopeMatrix;
pub use kconv::KConvSpec;
pub use rect::{Inner, InnerKind, MapSpec, RectangularButterflyMap};

use crate::error::Result;

/// A structured layer's shape, independent of its parameter values.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StructuredSpec {
    Linear(MapSpec),
    Conv(KConvSpec),
}

/// Number of structured parameters (biases excluded).
pub fn structured_param_count(layer: &StructuredSpec) -> usize {
    match layer {
        StructuredSpec::Linear(m) => m.param_count(),
        StructuredSpec::Conv(k) => k.param_count(),
    }
}

/// Multiply-accumulates for one sample. `input_shape` is `[features]` for a
/// linear map and `[C, H, W]` for a convolution.
pub fn structured_flops(layer: &StructuredSpec, input_shape: &[usize]) -> Result<usize> {
    match layer {
        StructuredSpec::Linear(m) => Ok(m.macs_per_vector()),
        StructuredSpec::Conv(k) => k.macs(input_shape),
    }
}
