//! Patch-matrix (im2col) helpers shared by dense and kaleidoscope convolutions.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Geometry of a square-kernel 2-D convolution.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConvGeom {
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: usize,
    pub stride: usize,
    pub padding: usize,
}

impl ConvGeom {
    pub fn new(
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
    ) -> Self {
        Self {
            in_channels,
            out_channels,
            kernel,
            stride,
            padding,
        }
    }

    /// Length of one patch vector, `Cin·k²`.
    pub fn patch_len(&self) -> usize {
        self.in_channels * self.kernel * self.kernel
    }

    /// `(H', W')` for an `H × W` input.
    pub fn output_hw(&self, h: usize, w: usize) -> Result<(usize, usize)> {
        let out = |size: usize| -> Result<usize> {
            let span = size + 2 * self.padding;
            if self.stride == 0 || span < self.kernel || !(span - self.kernel).is_multiple_of(self.stride) {
                return Err(Error::dim(format!(
                    "convolution over size {size} with kernel {}, stride {}, padding {} has non-integral output",
                    self.kernel, self.stride, self.padding
                )));
            }
            Ok((span - self.kernel) / self.stride + 1)
        };
        Ok((out(h)?, out(w)?))
    }

    /// Checks a `[B, C, H, W]` input and returns `(B, H, W, H', W')`.
    pub fn check_input(&self, shape: &[usize]) -> Result<(usize, usize, usize, usize, usize)> {
        if shape.len() != 4 {
            return Err(Error::dim(format!("convolution input must be rank 4, got {shape:?}")));
        }
        if shape[1] != self.in_channels {
            return Err(Error::dim(format!(
                "convolution expects {} input channels, got {}",
                self.in_channels, shape[1]
            )));
        }
        let (ho, wo) = self.output_hw(shape[2], shape[3])?;
        Ok((shape[0], shape[2], shape[3], ho, wo))
    }
}

/// Fills `rows` (`P × Cin·k²`, P = H'·W') with the patches of one sample
/// `x` (`Cin × H × W`). Out-of-bounds taps read zero.
pub(crate) fn im2col_rows(g: &ConvGeom, x: &[f64], h: usize, w: usize, ho: usize, wo: usize, rows: &mut [f64]) {
    let k = g.kernel;
    let plen = g.patch_len();
    for oh in 0..ho {
        for ow in 0..wo {
            let row = &mut rows[(oh * wo + ow) * plen..(oh * wo + ow + 1) * plen];
            let mut r = 0;
            for c in 0..g.in_channels {
                let plane = &x[c * h * w..(c + 1) * h * w];
                for ki in 0..k {
                    let ih = (oh * g.stride + ki) as isize - g.padding as isize;
                    for kj in 0..k {
                        let iw = (ow * g.stride + kj) as isize - g.padding as isize;
                        row[r] = if ih >= 0 && (ih as usize) < h && iw >= 0 && (iw as usize) < w {
                            plane[ih as usize * w + iw as usize]
                        } else {
                            0.0
                        };
                        r += 1;
                    }
                }
            }
        }
    }
}

/// Scatter-adds patch gradients back onto the input gradient of one sample.
pub(crate) fn col2im_rows_add(g: &ConvGeom, rows: &[f64], h: usize, w: usize, ho: usize, wo: usize, dx: &mut [f64]) {
    let k = g.kernel;
    let plen = g.patch_len();
    for oh in 0..ho {
        for ow in 0..wo {
            let row = &rows[(oh * wo + ow) * plen..(oh * wo + ow + 1) * plen];
            let mut r = 0;
            for c in 0..g.in_channels {
                for ki in 0..k {
                    let ih = (oh * g.stride + ki) as isize - g.padding as isize;
                    for kj in 0..k {
                        let iw = (ow * g.stride + kj) as isize - g.padding as isize;
                        if ih >= 0 && (ih as usize) < h && iw >= 0 && (iw as usize) < w {
                            dx[c * h * w + ih as usize * w + iw as usize] += row[r];
                        }
                        r += 1;
                    }
                }
            }
        }
    }
}
