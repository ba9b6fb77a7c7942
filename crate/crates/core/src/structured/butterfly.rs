//! Butterfly matrices: products of `log2 n` sparse factors, each pairing
//! indices `(i, i + h)` with a 2×2 block, where `h = 2^level`.
//!
//! Twiddles live in a flat buffer of shape `[levels, n/2, 2, 2]`. Within a
//! level of stride `h`, block `p` mixes indices `i = b + off` and `i + h`,
//! where `b` walks the contiguous groups of size `2h` and `p = b/2 + off`.
//! Block `[[a, b], [c, d]]` maps `(x_i, x_{i+h})` to
//! `(a x_i + b x_{i+h}, c x_i + d x_{i+h})`.
//!
//! Factors are applied to a vector in ascending stride (stride 1 first), so the
//! dense matrix is `F_m ⋯ F_1`. The transposed matrix applies the factors in
//! descending stride with every block transposed.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// `log2 n` for a power of two `n >= 2`.
pub fn log2_exact(n: usize) -> Result<usize> {
    if n < 2 || !n.is_power_of_two() {
        return Err(Error::contract(format!(
            "butterfly size must be a power of two >= 2, got {n}"
        )));
    }
    Ok(n.trailing_zeros() as usize)
}

/// Number of twiddle entries for a size-`n` butterfly: `2 n log2 n`.
pub fn twiddle_len(n: usize) -> usize {
    let m = n.trailing_zeros() as usize;
    2 * n * m
}

#[inline]
fn block(tw: &[f64], n: usize, level: usize, p: usize, transpose: bool) -> (f64, f64, f64, f64) {
    let base = (level * (n / 2) + p) * 4;
    let (a, b, c, d) = (tw[base], tw[base + 1], tw[base + 2], tw[base + 3]);
    if transpose {
        (a, c, b, d)
    } else {
        (a, b, c, d)
    }
}

/// Applies one factor in place.
pub(crate) fn apply_level(tw: &[f64], n: usize, level: usize, transpose: bool, v: &mut [f64]) {
    let h = 1usize << level;
    let mut start = 0;
    while start < n {
        for off in 0..h {
            let i = start + off;
            let k = i + h;
            let (a, b, c, d) = block(tw, n, level, start / 2 + off, transpose);
            let (xi, xk) = (v[i], v[k]);
            v[i] = a * xi + b * xk;
            v[k] = c * xi + d * xk;
        }
        start += 2 * h;
    }
}

/// Back-propagates through one factor. `x_in` is the factor's input, `g`
/// holds the output gradient on entry and the input gradient on exit, and
/// twiddle gradients accumulate into `dtw`.
pub(crate) fn backward_level(
    tw: &[f64],
    n: usize,
    level: usize,
    transpose: bool,
    x_in: &[f64],
    g: &mut [f64],
    dtw: &mut [f64],
) {
    let h = 1usize << level;
    let mut start = 0;
    while start < n {
        for off in 0..h {
            let i = start + off;
            let k = i + h;
            let p = start / 2 + off;
            let (a, b, c, d) = block(tw, n, level, p, transpose);
            let (gi, gk) = (g[i], g[k]);
            let (xi, xk) = (x_in[i], x_in[k]);
            g[i] = a * gi + c * gk;
            g[k] = b * gi + d * gk;
            let base = (level * (n / 2) + p) * 4;
            // gradients w.r.t. the effective block (a, b, c, d)
            let (ga, gb, gc, gd) = (gi * xi, gi * xk, gk * xi, gk * xk);
            dtw[base] += ga;
            dtw[base + 3] += gd;
            if transpose {
                dtw[base + 1] += gc;
                dtw[base + 2] += gb;
            } else {
                dtw[base + 1] += gb;
                dtw[base + 2] += gc;
            }
        }
        start += 2 * h;
    }
}

/// Order in which levels are applied.
pub(crate) fn level_order(levels: usize, transpose: bool) -> impl Iterator<Item = usize> {
    let asc = 0..levels;
    let v: Vec<usize> = if transpose { asc.rev().collect() } else { asc.collect() };
    v.into_iter()
}

/// A square butterfly matrix of power-of-two size.
#[derive(Clone, Debug, PartialEq)]
pub struct ButterflyMatrix {
    n: usize,
    levels: usize,
    twiddles: Vec<f64>,
}

impl ButterflyMatrix {
    /// Wraps a twiddle buffer laid out as `[levels, n/2, 2, 2]`.
    pub fn from_twiddles(n: usize, twiddles: Vec<f64>) -> Result<Self> {
        let levels = log2_exact(n)?;
        if twiddles.len() != twiddle_len(n) {
            return Err(Error::dim(format!(
                "butterfly of size {n} needs {} twiddles, got {}",
                twiddle_len(n),
                twiddles.len()
            )));
        }
        Ok(Self {
            n,
            levels,
            twiddles,
        })
    }

    fn constant_blocks(n: usize, blk: [f64; 4]) -> Result<Self> {
        let len = twiddle_len(n);
        log2_exact(n)?;
        let twiddles = blk.iter().copied().cycle().take(len).collect();
        Self::from_twiddles(n, twiddles)
    }

    /// All blocks `[[1, 0], [0, 1]]`.
    pub fn identity(n: usize) -> Result<Self> {
        Self::constant_blocks(n, [1.0, 0.0, 0.0, 1.0])
    }

    /// All blocks `[[1, 1], [1, -1]]`; the product is the Sylvester-Hadamard matrix.
    pub fn hadamard(n: usize) -> Result<Self> {
        Self::constant_blocks(n, [1.0, 1.0, 1.0, -1.0])
    }

    /// Every block an independent Givens rotation with angle uniform in
    /// `[0, 2π)`; the product is orthogonal.
    pub fn random_givens(n: usize, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Self::random_givens_with(n, &mut rng)
    }

    pub fn random_givens_with(n: usize, rng: &mut impl Rng) -> Result<Self> {
        let len = twiddle_len(n);
        log2_exact(n)?;
        let mut twiddles = Vec::with_capacity(len);
        for _ in 0..len / 4 {
            let phi: f64 = rng.random_range(0.0..std::f64::consts::TAU);
            let (s, c) = phi.sin_cos();
            twiddles.extend_from_slice(&[c, -s, s, c]);
        }
        Self::from_twiddles(n, twiddles)
    }

    pub fn size(&self) -> usize {
        self.n
    }

    pub fn levels(&self) -> usize {
        self.levels
    }

    pub fn twiddles(&self) -> &[f64] {
        &self.twiddles
    }

    pub fn twiddles_mut(&mut self) -> &mut [f64] {
        &mut self.twiddles
    }

    /// `2 n log2 n`.
    pub fn param_count(&self) -> usize {
        self.twiddles.len()
    }

    /// Multiply-accumulates for one matrix-vector product: `2 n log2 n`.
    pub fn macs(&self) -> usize {
        2 * self.n * self.levels
    }

    /// Block of `level` (0-based, stride `2^level`) and pair index `p`.
    pub fn block(&self, level: usize, p: usize) -> [f64; 4] {
        let base = (level * (self.n / 2) + p) * 4;
        [
            self.twiddles[base],
            self.twiddles[base + 1],
            self.twiddles[base + 2],
            self.twiddles[base + 3],
        ]
    }

    fn check_len(&self, len: usize) -> Result<()> {
        if len != self.n {
            return Err(Error::dim(format!(
                "butterfly of size {} applied to vector of length {len}",
                self.n
            )));
        }
        Ok(())
    }

    /// In-place `v ← B v` (or `Bᵀ v`).
    pub fn apply_in_place(&self, v: &mut [f64], transpose: bool) -> Result<()> {
        self.check_len(v.len())?;
        for level in level_order(self.levels, transpose) {
            apply_level(&self.twiddles, self.n, level, transpose, v);
        }
        Ok(())
    }

    pub fn matvec(&self, x: &[f64]) -> Result<Vec<f64>> {
        let mut v = x.to_vec();
        self.apply_in_place(&mut v, false)?;
        Ok(v)
    }

    pub fn transpose_matvec(&self, x: &[f64]) -> Result<Vec<f64>> {
        let mut v = x.to_vec();
        self.apply_in_place(&mut v, true)?;
        Ok(v)
    }

    /// Applies the matrix to every column of an `n × cols` tensor.
    pub fn matmul_columns(&self, x: &Tensor) -> Result<Tensor> {
        x.expect_rank(2, "butterfly matmul")?;
        self.check_len(x.rows())?;
        let cols = x.cols();
        let mut out = vec![0.0; x.numel()];
        let mut col = vec![0.0; self.n];
        for j in 0..cols {
            for i in 0..self.n {
                col[i] = x.data()[i * cols + j];
            }
            self.apply_in_place(&mut col, false)?;
            for i in 0..self.n {
                out[i * cols + j] = col[i];
            }
        }
        Tensor::new(vec![self.n, cols], out)
    }

    /// Dense `n × n` factor for one level.
    pub fn factor_dense(&self, level: usize) -> Tensor {
        let n = self.n;
        let mut m = Tensor::zeros(&[n, n]);
        let h = 1usize << level;
        let mut start = 0;
        let d = m.data_mut();
        while start < n {
            for off in 0..h {
                let (i, k) = (start + off, start + off + h);
                let [a, b, c, dd] = self.block(level, start / 2 + off);
                d[i * n + i] = a;
                d[i * n + k] = b;
                d[k * n + i] = c;
                d[k * n + k] = dd;
            }
            start += 2 * h;
        }
        m
    }

    /// Explicit product `F_m ⋯ F_1`, built by pushing each basis vector
    /// through the factors.
    pub fn to_dense(&self) -> Tensor {
        let n = self.n;
        let mut out = Tensor::zeros(&[n, n]);
        let mut e = vec![0.0; n];
        for j in 0..n {
            e.iter_mut().for_each(|v| *v = 0.0);
            e[j] = 1.0;
            for level in 0..self.levels {
                apply_level(&self.twiddles, n, level, false, &mut e);
            }
            for i in 0..n {
                out.data_mut()[i * n + j] = e[i];
            }
        }
        out
    }
}
