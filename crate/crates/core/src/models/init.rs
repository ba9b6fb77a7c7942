//! Weight initializers.

use rand::Rng;

use super::model::{Layer, Model};
use crate::tensor::Tensor;

/// `U(-1/√fan_in, 1/√fan_in)`, the usual default for linear and conv layers.
pub(crate) fn uniform_fan_in(shape: &[usize], fan_in: usize, rng: &mut impl Rng) -> Tensor {
    let bound = 1.0 / (fan_in as f64).sqrt();
    let numel: usize = shape.iter().product();
    let data = (0..numel).map(|_| rng.random_range(-bound..bound)).collect();
    Tensor::new(shape.to_vec(), data).expect("shape matches data")
}

/// Entry `(r, s)` of the Sylvester-Hadamard matrix: `(-1)^popcount(r & s)`.
fn hadamard_entry(r: usize, s: usize) -> f64 {
    if (r & s).count_ones().is_multiple_of(2) {
        1.0
    } else {
        -1.0
    }
}

/// ZerO matrix for a map from `fan_in` to `fan_out` features, stored
/// `[fan_out, fan_in]`:
/// - equal widths: identity;
/// - expanding: partial identity (identity on top, zeros below);
/// - contracting: `c · I* H_m I*` with `m = ⌈log2 fan_in⌉`, `c = 2^{-(m-1)/2}`.
pub fn zero_matrix(fan_in: usize, fan_out: usize) -> Tensor {
    let mut w = Tensor::zeros(&[fan_out, fan_in]);
    let d = w.data_mut();
    if fan_in <= fan_out {
        for i in 0..fan_in {
            d[i * fan_in + i] = 1.0;
        }
    } else {
        let m = fan_in.next_power_of_two().trailing_zeros() as i32;
        let c = 2f64.powf(-f64::from(m - 1) / 2.0);
        for r in 0..fan_out {
            for s in 0..fan_in {
                d[r * fan_in + s] = c * hadamard_entry(s, r);
            }
        }
    }
    w
}

/// Deterministic ZerO initialization. Dense weights get [`zero_matrix`];
/// convolution kernels get it on the spatial centre tap and zero elsewhere;
/// biases become zero. Structured layers are left as they are.
pub fn zero_init(model: &mut Model) {
    for block in &mut model.blocks {
        for layer in &mut block.layers {
            match layer {
                Layer::Dense { weight, bias } => {
                    let s = weight.value.shape().to_vec();
                    weight.value = zero_matrix(s[1], s[0]);
                    bias.value = Tensor::zeros(bias.value.shape());
                }
                Layer::Conv2d { weight, bias, .. } => {
                    let s = weight.value.shape().to_vec();
                    let (cout, cin, k) = (s[0], s[1], s[2]);
                    let centre = zero_matrix(cin, cout);
                    let mut kernel = Tensor::zeros(&s);
                    let c = k / 2;
                    for o in 0..cout {
                        for i in 0..cin {
                            kernel.data_mut()[((o * cin + i) * k + c) * k + c] = centre.data()[o * cin + i];
                        }
                    }
                    weight.value = kernel;
                    bias.value = Tensor::zeros(bias.value.shape());
                }
                Layer::ButterflyLinear { bias, .. } | Layer::KConv2d { bias, .. } => {
                    bias.value = Tensor::zeros(bias.value.shape());
                }
                _ => {}
            }
        }
    }
}
