//! Rectangular maps built from a square structured core: zero-pad the input
//! to the core size `n`, apply the core, keep the first `out_dim` entries.

use serde::{Deserialize, Serialize};

use super::butterfly::{self, apply_level, backward_level, level_order, ButterflyMatrix};
use super::kaleidoscope::KaleidoscopeMatrix;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum InnerKind {
    Butterfly,
    Kaleidoscope { width: usize },
}

/// Shape of a rectangular structured map; the twiddle buffers are held
/// separately (as model parameters or inside [`RectangularButterflyMap`]).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MapSpec {
    pub in_dim: usize,
    pub out_dim: usize,
    pub n: usize,
    pub inner: InnerKind,
}

impl MapSpec {
    pub fn new(in_dim: usize, out_dim: usize, inner: InnerKind) -> Result<Self> {
        if in_dim == 0 || out_dim == 0 {
            return Err(Error::dim("structured map dimensions must be positive"));
        }
        if let InnerKind::Kaleidoscope { width } = inner {
            if width == 0 {
                return Err(Error::contract("kaleidoscope width must be >= 1"));
            }
        }
        let n = in_dim.max(out_dim).next_power_of_two().max(2);
        Ok(Self {
            in_dim,
            out_dim,
            n,
            inner,
        })
    }

    pub fn levels(&self) -> usize {
        self.n.trailing_zeros() as usize
    }

    /// Number of butterfly matrices in the core.
    pub fn num_butterflies(&self) -> usize {
        match self.inner {
            InnerKind::Butterfly => 1,
            InnerKind::Kaleidoscope { width } => 2 * width,
        }
    }

    /// `(butterfly index, transposed)` in application order. Kaleidoscope
    /// butterflies are stored `[B_0, C_0, B_1, C_1, …]`.
    pub fn stages(&self) -> Vec<(usize, bool)> {
        match self.inner {
            InnerKind::Butterfly => vec![(0, false)],
            InnerKind::Kaleidoscope { width } => (0..width)
                .rev()
                .flat_map(|i| [(2 * i + 1, true), (2 * i, false)])
                .collect(),
        }
    }

    pub fn twiddle_len(&self) -> usize {
        butterfly::twiddle_len(self.n)
    }

    pub fn param_count(&self) -> usize {
        self.num_butterflies() * self.twiddle_len()
    }

    /// MACs per input vector: `2 n log2 n` per butterfly in the core.
    pub fn macs_per_vector(&self) -> usize {
        self.num_butterflies() * 2 * self.n * self.levels()
    }

    /// Scratch floats one row needs to save level inputs for backward.
    pub fn saved_len(&self) -> usize {
        self.stages().len() * self.levels() * self.n
    }

    /// Forward one row. `work` has length `n`; when `saved` is given it receives
    /// every level's input (length [`Self::saved_len`]).
    pub(crate) fn forward_row(
        &self,
        tws: &[&[f64]],
        x: &[f64],
        y: &mut [f64],
        work: &mut [f64],
        mut saved: Option<&mut [f64]>,
    ) {
        let n = self.n;
        work[..self.in_dim].copy_from_slice(x);
        work[self.in_dim..].iter_mut().for_each(|v| *v = 0.0);
        let levels = self.levels();
        let mut slot = 0;
        for (bi, transpose) in self.stages() {
            for level in level_order(levels, transpose) {
                if let Some(s) = saved.as_deref_mut() {
                    s[slot * n..(slot + 1) * n].copy_from_slice(work);
                }
                slot += 1;
                apply_level(tws[bi], n, level, transpose, work);
            }
        }
        y.copy_from_slice(&work[..self.out_dim]);
    }

    /// Backward one row given the level inputs saved by [`Self::forward_row`].
    /// `dx` (length `in_dim`) is accumulated into; `dtws` are accumulated into.
    pub(crate) fn backward_row(
        &self,
        tws: &[&[f64]],
        saved: &[f64],
        dy: &[f64],
        dx: Option<&mut [f64]>,
        dtws: &mut [Vec<f64>],
        g: &mut [f64],
    ) {
        let n = self.n;
        g[..self.out_dim].copy_from_slice(dy);
        g[self.out_dim..].iter_mut().for_each(|v| *v = 0.0);
        let levels = self.levels();
        let mut order = Vec::with_capacity(self.stages().len() * levels);
        for (bi, transpose) in self.stages() {
            for level in level_order(levels, transpose) {
                order.push((bi, transpose, level));
            }
        }
        for (slot, &(bi, transpose, level)) in order.iter().enumerate().rev() {
            let x_in = &saved[slot * n..(slot + 1) * n];
            backward_level(tws[bi], n, level, transpose, x_in, g, &mut dtws[bi]);
        }
        if let Some(dx) = dx {
            for (d, v) in dx.iter_mut().zip(&g[..self.in_dim]) {
                *d += v;
            }
        }
    }
}

/// The structured core of a rectangular map.
#[derive(Clone, Debug, PartialEq)]
pub enum Inner {
    Butterfly(ButterflyMatrix),
    Kaleidoscope(KaleidoscopeMatrix),
}

/// A rectangular `in_dim → out_dim` map with an owned structured core.
#[derive(Clone, Debug, PartialEq)]
pub struct RectangularButterflyMap {
    spec: MapSpec,
    inner: Inner,
}

impl RectangularButterflyMap {
    pub fn new(in_dim: usize, out_dim: usize, inner: Inner) -> Result<Self> {
        let (kind, n) = match &inner {
            Inner::Butterfly(b) => (InnerKind::Butterfly, b.size()),
            Inner::Kaleidoscope(k) => (InnerKind::Kaleidoscope { width: k.width() }, k.size()),
        };
        let spec = MapSpec::new(in_dim, out_dim, kind)?;
        if spec.n != n {
            return Err(Error::dim(format!(
                "{in_dim}→{out_dim} map needs a core of size {}, got {n}",
                spec.n
            )));
        }
        Ok(Self { spec, inner })
    }

    /// Givens-initialized map of the given shape.
    pub fn random(in_dim: usize, out_dim: usize, inner: InnerKind, seed: u64) -> Result<Self> {
        let spec = MapSpec::new(in_dim, out_dim, inner)?;
        let core = match inner {
            InnerKind::Butterfly => Inner::Butterfly(ButterflyMatrix::random_givens(spec.n, seed)?),
            InnerKind::Kaleidoscope { width } => {
                Inner::Kaleidoscope(KaleidoscopeMatrix::random_givens(spec.n, width, seed)?)
            }
        };
        Self::new(in_dim, out_dim, core)
    }

    pub fn spec(&self) -> &MapSpec {
        &self.spec
    }

    pub fn inner(&self) -> &Inner {
        &self.inner
    }

    /// Twiddle buffers in the order [`MapSpec::stages`] indexes them.
    pub fn twiddle_slices(&self) -> Vec<&[f64]> {
        match &self.inner {
            Inner::Butterfly(b) => vec![b.twiddles()],
            Inner::Kaleidoscope(k) => k
                .pairs()
                .iter()
                .flat_map(|(b, c)| [b.twiddles(), c.twiddles()])
                .collect(),
        }
    }

    pub fn matvec(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.spec.in_dim {
            return Err(Error::dim(format!(
                "map expects input length {}, got {}",
                self.spec.in_dim,
                x.len()
            )));
        }
        let mut y = vec![0.0; self.spec.out_dim];
        let mut work = vec![0.0; self.spec.n];
        self.spec
            .forward_row(&self.twiddle_slices(), x, &mut y, &mut work, None);
        Ok(y)
    }

    pub fn param_count(&self) -> usize {
        self.spec.param_count()
    }
}
