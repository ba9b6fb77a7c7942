use serde::{Deserialize, Serialize};

use super::rect::{InnerKind, MapSpec};
use crate::autodiff::conv::ConvGeom;
use crate::error::Result;

/// A convolution whose per-patch `Cin·k² → Cout` map is a kaleidoscope
/// core instead of a dense kernel.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct KConvSpec {
    pub geom: ConvGeom,
    pub map: MapSpec,
}

impl KConvSpec {
    pub fn new(geom: ConvGeom, width: usize) -> Result<Self> {
        let map = MapSpec::new(
            geom.patch_len(),
            geom.out_channels,
            InnerKind::Kaleidoscope { width },
        )?;
        Ok(Self { geom, map })
    }

    pub fn param_count(&self) -> usize {
        self.map.param_count()
    }

    /// MACs for a `[C, H, W]` input: one core product per patch.
    pub fn macs(&self, input_chw: &[usize]) -> Result<usize> {
        let (ho, wo) = self.geom.output_hw(input_chw[1], input_chw[2])?;
        Ok(ho * wo * self.map.macs_per_vector())
    }
}
