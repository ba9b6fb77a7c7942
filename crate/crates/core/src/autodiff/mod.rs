//! Reverse-mode automatic differentiation over [`Tensor`](crate::Tensor)s,
//! trainable parameters with pruning masks, and the Adam optimizer.

pub mod adam;
pub mod conv;
pub mod param;
pub mod tape;

pub use adam::{AdamConfig, AdamState};
pub use conv::ConvGeom;
pub use param::{ParamKind, Parameter};
pub use tape::{Gradients, Tape, Var};
