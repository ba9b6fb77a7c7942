use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::butterfly::ButterflyMatrix;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Product `Π_i B_i C_iᵀ` of `width` butterfly pairs of a common size.
#[derive(Clone, Debug, PartialEq)]
pub struct KaleidoscopeMatrix {
    n: usize,
    pairs: Vec<(ButterflyMatrix, ButterflyMatrix)>,
}

impl KaleidoscopeMatrix {
    pub fn new(pairs: Vec<(ButterflyMatrix, ButterflyMatrix)>) -> Result<Self> {
        let n = pairs
            .first()
            .map(|(b, _)| b.size())
            .ok_or_else(|| Error::contract("kaleidoscope width must be >= 1"))?;
        if pairs.iter().any(|(b, c)| b.size() != n || c.size() != n) {
            return Err(Error::dim("kaleidoscope butterflies must share one size"));
        }
        Ok(Self { n, pairs })
    }

    pub fn identity(n: usize, width: usize) -> Result<Self> {
        let pairs = (0..width)
            .map(|_| Ok((ButterflyMatrix::identity(n)?, ButterflyMatrix::identity(n)?)))
            .collect::<Result<Vec<_>>>()?;
        Self::new(pairs)
    }

    pub fn random_givens(n: usize, width: usize, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let pairs = (0..width)
            .map(|_| {
                Ok((
                    ButterflyMatrix::random_givens_with(n, &mut rng)?,
                    ButterflyMatrix::random_givens_with(n, &mut rng)?,
                ))
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(pairs)
    }

    pub fn size(&self) -> usize {
        self.n
    }

    pub fn width(&self) -> usize {
        self.pairs.len()
    }

    pub fn pairs(&self) -> &[(ButterflyMatrix, ButterflyMatrix)] {
        &self.pairs
    }

    /// `4 n log2 n · width`.
    pub fn param_count(&self) -> usize {
        self.pairs
            .iter()
            .map(|(b, c)| b.param_count() + c.param_count())
            .sum()
    }

    pub fn macs(&self) -> usize {
        self.param_count()
    }

    pub fn apply_in_place(&self, v: &mut [f64]) -> Result<()> {
        for (b, c) in self.pairs.iter().rev() {
            c.apply_in_place(v, true)?;
            b.apply_in_place(v, false)?;
        }
        Ok(())
    }

    pub fn matvec(&self, x: &[f64]) -> Result<Vec<f64>> {
        let mut v = x.to_vec();
        self.apply_in_place(&mut v)?;
        Ok(v)
    }

    pub fn to_dense(&self) -> Result<Tensor> {
        let mut acc = Tensor::eye(self.n);
        for (b, c) in &self.pairs {
            let pair = b.to_dense().matmul(&c.to_dense().transpose2()?)?;
            acc = acc.matmul(&pair)?;
        }
        Ok(acc)
    }
}
