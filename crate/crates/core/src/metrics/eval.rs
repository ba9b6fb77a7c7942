use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::models::Model;
use crate::tensor::Tensor;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub accuracy: f64,
    pub samples: usize,
    /// `confusion[true][predicted]`.
    pub confusion: Vec<Vec<usize>>,
}

impl EvalReport {
    fn empty(classes: usize) -> Self {
        Self {
            accuracy: 0.0,
            samples: 0,
            confusion: vec![vec![0; classes]; classes],
        }
    }

    fn merge(&mut self, other: &EvalReport) {
        self.samples += other.samples;
        for (a, b) in self.confusion.iter_mut().zip(&other.confusion) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
    }

    fn finish(mut self) -> Self {
        let correct: usize = (0..self.confusion.len()).map(|i| self.confusion[i][i]).sum();
        self.accuracy = if self.samples == 0 {
            0.0
        } else {
            correct as f64 / self.samples as f64
        };
        self
    }

    /// Distinct predicted classes.
    pub fn predicted_classes(&self) -> Vec<usize> {
        let k = self.confusion.len();
        (0..k)
            .filter(|&p| (0..k).any(|t| self.confusion[t][p] > 0))
            .collect()
    }
}

/// Index of the largest entry; the first one wins ties.
pub fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = i;
        }
    }
    best
}

/// Top-1 accuracy and confusion counts of `logits: [B, classes]`.
pub fn evaluate_logits(logits: &Tensor, labels: &[usize], classes: usize) -> Result<EvalReport> {
    if logits.shape().len() != 2 || logits.shape()[0] != labels.len() || logits.shape()[1] != classes {
        return Err(Error::dim(format!(
            "logits {:?} for {} labels and {classes} classes",
            logits.shape(),
            labels.len()
        )));
    }
    let mut r = EvalReport::empty(classes);
    for (row, &l) in logits.data().chunks(classes).zip(labels) {
        r.confusion[l][argmax(row)] += 1;
    }
    r.samples = labels.len();
    Ok(r.finish())
}

const EVAL_BATCH: usize = 256;

/// Eval-mode top-1 accuracy, sharded over the available cores.
pub fn evaluate_top1(model: &Model, dataset: &Dataset) -> Result<EvalReport> {
    let classes = model.config.classes;
    let n = dataset.len();
    if n == 0 {
        return Ok(EvalReport::empty(classes).finish());
    }
    let threads = std::thread::available_parallelism().map_or(1, |t| t.get());
    let batches = n.div_ceil(EVAL_BATCH);
    let shards = threads.min(batches).max(1);
    let per_shard = batches.div_ceil(shards);
    let partials: Vec<Result<EvalReport>> = std::thread::scope(|s| {
        let handles: Vec<_> = (0..shards)
            .map(|shard| {
                s.spawn(move || {
                    let mut acc = EvalReport::empty(classes);
                    let first = shard * per_shard;
                    for b in first..(first + per_shard).min(batches) {
                        let idx: Vec<usize> = (b * EVAL_BATCH..((b + 1) * EVAL_BATCH).min(n)).collect();
                        let batch = dataset.select(&idx);
                        let logits = model.predict(&batch.images)?;
                        acc.merge(&evaluate_logits(&logits, &batch.labels, classes)?);
                    }
                    Ok(acc)
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("evaluation thread panicked")).collect()
    });
    let mut total = EvalReport::empty(classes);
    for p in partials {
        total.merge(&p?);
    }
    Ok(total.finish())
}
