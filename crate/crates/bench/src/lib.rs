//! Shared fixtures for the benchmarks.

use sparsekit::data::{synthetic_blobs, Dataset};
use sparsekit::models::{build_model, HeadKind, Model, ModelConfig};

/// FC6 over `dim` inputs with the given head.
pub fn fc6(dim: usize, width: usize, head: HeadKind) -> Model {
    let mut c = ModelConfig::fc6().with_head(head);
    c.input_shape = [1, 1, dim];
    c.hidden_width = width;
    build_model(&c).expect("valid FC6 config")
}

/// `n` blob samples of dimension `dim`.
pub fn blobs(n: usize, dim: usize) -> Dataset {
    synthetic_blobs(n, 10, dim, 7).expect("valid blob parameters")
}
