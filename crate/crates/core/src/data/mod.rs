//! Datasets: MNIST IDX and CIFAR-10 binary loaders, normalization,
//! seeded splitting and batching, and Gaussian blobs for quick runs.

mod cifar;
mod idx;

pub use cifar::{load_cifar10_binary, CIFAR10_MEAN, CIFAR10_STD};
pub use idx::{load_mnist_idx, read_idx, IdxArray};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const MNIST_MEAN: f64 = 0.1307;
pub const MNIST_STD: f64 = 0.3081;

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub name: String,
    pub split: String,
    /// `[N, C, H, W]`.
    pub images: Tensor,
    pub labels: Vec<usize>,
    pub classes: usize,
}

/// A contiguous slice of samples.
#[derive(Clone, Debug, PartialEq)]
pub struct Batch {
    pub images: Tensor,
    pub labels: Vec<usize>,
}

impl Dataset {
    pub fn new(
        name: impl Into<String>,
        split: impl Into<String>,
        images: Tensor,
        labels: Vec<usize>,
        classes: usize,
    ) -> Result<Self> {
        if images.shape().len() != 4 {
            return Err(Error::dim(format!(
                "dataset images must be [N, C, H, W], got {:?}",
                images.shape()
            )));
        }
        if images.shape()[0] != labels.len() {
            return Err(Error::dim(format!(
                "{} images but {} labels",
                images.shape()[0],
                labels.len()
            )));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= classes) {
            return Err(Error::contract(format!("label {bad} outside [0, {classes})")));
        }
        Ok(Self {
            name: name.into(),
            split: split.into(),
            images,
            labels,
            classes,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Per-sample `[C, H, W]`.
    pub fn sample_shape(&self) -> [usize; 3] {
        let s = self.images.shape();
        [s[1], s[2], s[3]]
    }

    fn sample_len(&self) -> usize {
        self.sample_shape().iter().product()
    }

    /// Samples at `indices`, in that order.
    pub fn select(&self, indices: &[usize]) -> Batch {
        let per = self.sample_len();
        let mut data = Vec::with_capacity(indices.len() * per);
        for &i in indices {
            data.extend_from_slice(&self.images.data()[i * per..(i + 1) * per]);
        }
        let [c, h, w] = self.sample_shape();
        Batch {
            images: Tensor::new(vec![indices.len(), c, h, w], data).expect("sizes agree"),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
        }
    }

    /// A new dataset made of the samples at `indices`.
    pub fn subset(&self, indices: &[usize]) -> Dataset {
        let b = self.select(indices);
        Dataset {
            name: self.name.clone(),
            split: self.split.clone(),
            images: b.images,
            labels: b.labels,
            classes: self.classes,
        }
    }

    pub fn take(&self, n: usize) -> Dataset {
        let idx: Vec<usize> = (0..n.min(self.len())).collect();
        self.subset(&idx)
    }

    /// In-order batches; the last one may be short.
    pub fn chunks(&self, batch_size: usize) -> impl Iterator<Item = Batch> + '_ {
        let bs = batch_size.max(1);
        (0..self.len())
            .step_by(bs)
            .map(move |start| {
                let idx: Vec<usize> = (start..(start + bs).min(self.len())).collect();
                self.select(&idx)
            })
    }

    /// Per-channel `(x - mean) / std`.
    pub fn normalize(&mut self, mean: &[f64], std: &[f64]) -> Result<()> {
        let [c, h, w] = self.sample_shape();
        if mean.len() != c || std.len() != c {
            return Err(Error::dim(format!(
                "{} channels but {} means / {} stds",
                c,
                mean.len(),
                std.len()
            )));
        }
        let plane = h * w;
        for (i, v) in self.images.data_mut().iter_mut().enumerate() {
            let ch = (i / plane) % c;
            *v = (*v - mean[ch]) / std[ch];
        }
        Ok(())
    }

    /// How often each class occurs.
    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.classes];
        for &l in &self.labels {
            counts[l] += 1;
        }
        counts
    }
}

/// One-hot rows `[B, classes]`.
pub fn one_hot(labels: &[usize], classes: usize) -> Result<Tensor> {
    let mut t = Tensor::zeros(&[labels.len().max(1), classes]);
    if labels.is_empty() {
        return Err(Error::contract("cannot one-hot an empty label list"));
    }
    for (r, &l) in labels.iter().enumerate() {
        if l >= classes {
            return Err(Error::contract(format!("label {l} outside [0, {classes})")));
        }
        t.data_mut()[r * classes + l] = 1.0;
    }
    Ok(t)
}

/// Applies the usual MNIST mean/std.
pub fn normalize_mnist(ds: &mut Dataset) -> Result<()> {
    ds.normalize(&[MNIST_MEAN], &[MNIST_STD])
}

/// Isotropic Gaussian blobs, one per class, flattened to `[n, 1, 1, dim]`.
/// Class centres are `N(0, 3²)` per coordinate and the spread is `σ = 0.5`.
pub fn synthetic_blobs(n: usize, classes: usize, dim: usize, seed: u64) -> Result<Dataset> {
    synthetic_blobs_with(n, classes, dim, 0.5, seed)
}

pub fn synthetic_blobs_with(
    n: usize,
    classes: usize,
    dim: usize,
    sigma: f64,
    seed: u64,
) -> Result<Dataset> {
    if n == 0 || classes == 0 || dim == 0 {
        return Err(Error::contract("blobs need n, classes and dim > 0"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let centre = Normal::new(0.0, 3.0).expect("valid normal");
    let noise = Normal::new(0.0, sigma).map_err(|e| Error::contract(e.to_string()))?;
    let centres: Vec<Vec<f64>> = (0..classes)
        .map(|_| (0..dim).map(|_| centre.sample(&mut rng)).collect())
        .collect();
    let mut data = Vec::with_capacity(n * dim);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let c = i % classes;
        labels.push(c);
        data.extend(centres[c].iter().map(|m| m + noise.sample(&mut rng)));
    }
    let images = Tensor::new(vec![n, 1, 1, dim], data)?;
    Dataset::new("blobs", "all", images, labels, classes)
}

/// Seeded shuffle, then consecutive pieces of the given fractions. Rounding
/// leftovers go to the last piece.
pub fn split(ds: &Dataset, fractions: &[f64], seed: u64) -> Result<Vec<Dataset>> {
    let total: f64 = fractions.iter().sum();
    if fractions.is_empty() || (total - 1.0).abs() > 1e-9 || fractions.iter().any(|&f| f < 0.0) {
        return Err(Error::contract(format!(
            "split fractions must be non-negative and sum to 1, got {fractions:?}"
        )));
    }
    let mut idx: Vec<usize> = (0..ds.len()).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut out = Vec::with_capacity(fractions.len());
    let mut start = 0;
    for (i, f) in fractions.iter().enumerate() {
        let end = if i + 1 == fractions.len() {
            ds.len()
        } else {
            (start + (f * ds.len() as f64).round() as usize).min(ds.len())
        };
        out.push(ds.subset(&idx[start..end]));
        start = end;
    }
    Ok(out)
}

/// Shuffled batches in an order fixed by `seed`; the last may be short.
pub fn batches(ds: &Dataset, batch_size: usize, seed: u64) -> Result<Batches<'_>> {
    if batch_size == 0 {
        return Err(Error::contract("batch size must be positive"));
    }
    let mut order: Vec<usize> = (0..ds.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    Ok(Batches {
        ds,
        order,
        batch_size,
        pos: 0,
    })
}

pub struct Batches<'a> {
    ds: &'a Dataset,
    order: Vec<usize>,
    batch_size: usize,
    pos: usize,
}

impl Iterator for Batches<'_> {
    type Item = Batch;

    fn next(&mut self) -> Option<Batch> {
        if self.pos >= self.order.len() {
            return None;
        }
        let end = (self.pos + self.batch_size).min(self.order.len());
        let b = self.ds.select(&self.order[self.pos..end]);
        self.pos = end;
        Some(b)
    }

    fn size_hint(&self) -> (usize, Option<usize>) {
        let left = (self.order.len() - self.pos).div_ceil(self.batch_size);
        (left, Some(left))
    }
}

impl ExactSizeIterator for Batches<'_> {}
