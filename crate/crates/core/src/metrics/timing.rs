use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::models::Model;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimingReport {
    pub workload: String,
    pub samples: usize,
    pub batch_size: usize,
    pub warmup: usize,
    pub repetitions: usize,
    /// Wall-clock seconds of each timed pass.
    pub raw_seconds: Vec<f64>,
    pub median_seconds: f64,
    pub threads: usize,
    pub precision: String,
}

fn median(v: &[f64]) -> f64 {
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    let m = s.len() / 2;
    if s.len() % 2 == 1 {
        s[m]
    } else {
        (s[m - 1] + s[m]) / 2.0
    }
}

/// Median wall time of full eval-mode passes over `dataset` (forward only,
/// batches pre-assembled), single-threaded.
pub fn time_inference(
    model: &Model,
    dataset: &Dataset,
    batch_size: usize,
    reps: usize,
    warmup: usize,
) -> Result<TimingReport> {
    if dataset.is_empty() {
        return Err(Error::contract("cannot time inference on an empty dataset"));
    }
    if batch_size == 0 {
        return Err(Error::contract("batch size must be positive"));
    }
    if reps < 5 || warmup < 2 {
        return Err(Error::contract(format!(
            "timing needs at least 5 repetitions and 2 warmups, got {reps} and {warmup}"
        )));
    }
    let batches: Vec<_> = dataset.chunks(batch_size).map(|b| b.images).collect();
    let pass = || -> Result<()> {
        for b in &batches {
            std::hint::black_box(model.predict(b)?);
        }
        Ok(())
    };
    for _ in 0..warmup {
        pass()?;
    }
    let mut raw = Vec::with_capacity(reps);
    for _ in 0..reps {
        let t = Instant::now();
        pass()?;
        raw.push(t.elapsed().as_secs_f64());
    }
    Ok(TimingReport {
        workload: format!(
            "{} {} x{} batch {}",
            dataset.name,
            dataset.split,
            dataset.len(),
            batch_size
        ),
        samples: dataset.len(),
        batch_size,
        warmup,
        repetitions: reps,
        median_seconds: median(&raw),
        raw_seconds: raw,
        threads: 1,
        precision: "f64".into(),
    })
}
