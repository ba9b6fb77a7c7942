pub mod autodiff;
pub mod data;
pub mod error;
pub mod harness;
pub mod metrics;
pub mod models;
pub mod pruning;
pub mod structured;
pub mod tensor;

pub use error::{Error, Result};
pub use tensor::Tensor;
