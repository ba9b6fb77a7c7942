use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Instant;

use log::{info, warn};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::checkpoint::checkpoint_save;
use super::config::{DatasetKind, ExperimentConfig};
use super::train::{train, EpochStats, TrainOptions};
use crate::autodiff::AdamConfig;
use crate::data::{
    batches, load_cifar10_binary, load_mnist_idx, normalize_mnist, split, synthetic_blobs, Dataset,
};
use crate::error::{Error, Result};
use crate::metrics::{count_flops, evaluate_top1, time_inference, FlopsReport};
use crate::models::{build_model, zero_init, HeadKind, Model};
use crate::pruning::{
    apply_mask, build_mask, detect_collapse, score_grasp, score_magnitude, score_random, score_snip,
    score_synflow, CollapseReport, PruneMask, PruneMethod, SparsityLevel,
};
use crate::tensor::Tensor;

/// Environment variable naming the dataset root directory.
pub const DATA_ENV: &str = "SPARSEKIT_DATA";

#[derive(Clone, Debug)]
pub struct ExperimentData {
    pub train: Dataset,
    pub test: Dataset,
}

fn data_root() -> Option<PathBuf> {
    std::env::var_os(DATA_ENV).map(PathBuf::from)
}

fn find_file(dir: &Path, stem: &str) -> Result<PathBuf> {
    for cand in [stem.to_string(), format!("{stem}.gz")] {
        let p = dir.join(&cand);
        if p.is_file() {
            return Ok(p);
        }
    }
    Err(Error::format(dir.join(stem), "dataset file not found (plain or .gz)"))
}

/// Directory the loaders read for `kind`: the configured directory, else
/// `$SPARSEKIT_DATA/<name>`, else the bundled MNIST subset.
pub fn dataset_dir(cfg: &ExperimentConfig) -> PathBuf {
    if let Some(d) = &cfg.data_dir {
        return d.clone();
    }
    match (cfg.dataset, data_root()) {
        (DatasetKind::Mnist, Some(root)) => root.join("mnist"),
        (DatasetKind::Cifar10, Some(root)) => root.join("cifar-10-batches-bin"),
        (DatasetKind::Cifar10, None) => PathBuf::from("data/cifar-10-batches-bin"),
        _ => PathBuf::from("data/mnist-subset"),
    }
}

/// Loads (and normalizes) the configured dataset.
pub fn load_data(cfg: &ExperimentConfig) -> Result<ExperimentData> {
    let dir = dataset_dir(cfg);
    let (mut train, mut test) = match cfg.dataset {
        DatasetKind::Mnist => {
            let mut tr = load_mnist_idx(
                find_file(&dir, "train-images-idx3-ubyte")?,
                find_file(&dir, "train-labels-idx1-ubyte")?,
            )?;
            let mut te = load_mnist_idx(
                find_file(&dir, "t10k-images-idx3-ubyte")?,
                find_file(&dir, "t10k-labels-idx1-ubyte")?,
            )?;
            normalize_mnist(&mut tr)?;
            normalize_mnist(&mut te)?;
            (tr, te)
        }
        DatasetKind::Cifar10 => {
            let train_files: Vec<PathBuf> = (1..=5)
                .map(|i| find_file(&dir, &format!("data_batch_{i}.bin")))
                .collect::<Result<_>>()?;
            let tr = load_cifar10_binary(&train_files)?;
            let te = load_cifar10_binary(&[find_file(&dir, "test_batch.bin")?])?;
            (tr, te)
        }
        DatasetKind::Blobs => {
            let n = cfg.train_limit.unwrap_or(800) + cfg.test_limit.unwrap_or(200);
            let all = synthetic_blobs(n, cfg.model.classes, 20, cfg.seed)?;
            let mut parts = split(&all, &[0.8, 0.2], cfg.seed)?;
            let te = parts.pop().expect("two parts");
            let tr = parts.pop().expect("two parts");
            (tr, te)
        }
    };
    if let Some(n) = cfg.train_limit {
        train = train.take(n);
    }
    if let Some(n) = cfg.test_limit {
        test = test.take(n);
    }
    Ok(ExperimentData { train, test })
}

/// One experiment's summary; one row per (method, sparsity, head, seed).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub config_digest: String,
    pub dataset: String,
    pub architecture: String,
    pub head: String,
    pub body: String,
    pub method: String,
    /// Sparsity exponent, `s = 10^-k`.
    pub k: f64,
    pub s: f64,
    pub seed: u64,
    pub accuracy: f64,
    pub collapsed: bool,
    pub kept_weights: usize,
    pub prunable_weights: usize,
    pub flops_sparsity: f64,
    pub layer_flops_sparsity: Vec<f64>,
    pub inference_seconds: Option<f64>,
    pub train_seconds: f64,
    pub threads: usize,
    pub precision: String,
}

/// Everything a run produces besides its row.
#[derive(Clone, Debug)]
pub struct ExperimentOutcome {
    pub row: ResultRow,
    pub model: Model,
    pub mask: PruneMask,
    pub collapse: CollapseReport,
    pub flops: FlopsReport,
    pub history: Vec<EpochStats>,
}

/// Short SHA-256 of the configuration, ignoring output paths.
pub fn config_digest(cfg: &ExperimentConfig) -> String {
    let mut c = cfg.clone();
    c.checkpoint = None;
    c.data_dir = None;
    let json = serde_json::to_vec(&c).expect("config serializes");
    hex::encode(&Sha256::digest(&json)[..8])
}

fn lower<T: std::fmt::Debug>(v: T) -> String {
    format!("{v:?}").to_ascii_lowercase()
}

fn scoring_batch(cfg: &ExperimentConfig, data: &Dataset) -> Result<(Tensor, Vec<usize>)> {
    let b = batches(data, cfg.score_batch, cfg.seed ^ 0x5c0e)?
        .next()
        .ok_or_else(|| Error::contract("scoring needs a non-empty training set"))?;
    Ok((b.images, b.labels))
}

/// Scores `model` with `cfg.method` and returns the mask at `cfg.sparsity`.
pub fn prune_mask(model: &Model, cfg: &ExperimentConfig, train: &Dataset) -> Result<PruneMask> {
    let s = cfg.sparsity;
    let scores = match cfg.method {
        PruneMethod::None => return Ok(PruneMask::ones(model)),
        PruneMethod::Synflow => return score_synflow(model, s, cfg.synflow_iterations),
        PruneMethod::Random => score_random(model, cfg.seed),
        PruneMethod::Magnitude => score_magnitude(model),
        PruneMethod::Snip => {
            let (x, y) = scoring_batch(cfg, train)?;
            score_snip(model, &x, &y)?
        }
        PruneMethod::Grasp => {
            let (x, y) = scoring_batch(cfg, train)?;
            score_grasp(model, &x, &y)?
        }
    };
    build_mask(&scores, s)
}

/// Thresholds learned masks at 0.5, folds them into the weights and drops them.
fn binarize_learned_masks(model: &mut Model) {
    for p in model.parameters_mut() {
        if let Some(m) = p.soft_mask.take() {
            for (w, m) in p.value.data_mut().iter_mut().zip(m.data()) {
                if *m < 0.5 {
                    *w = 0.0;
                }
            }
        }
    }
}

/// Builds the model for `cfg`, with input shape and classes taken from the data.
pub fn build_for(cfg: &ExperimentConfig, data: &ExperimentData) -> Result<Model> {
    let mut mc = cfg.model.clone();
    mc.input_shape = data.train.sample_shape();
    mc.classes = data.train.classes;
    mc.seed = cfg.seed;
    let mut model = build_model(&mc)?;
    if cfg.zero_init {
        zero_init(&mut model);
    }
    Ok(model)
}

/// Pre-train (magnitude / learned mask only) → score → mask → collapse check
/// → post-prune training → accuracy, MACs and timing.
pub fn run_experiment(cfg: &ExperimentConfig, data: &ExperimentData) -> Result<ExperimentOutcome> {
    cfg.validate()?;
    for w in cfg.warnings() {
        warn!("{w}");
    }
    let started = Instant::now();
    let mut model = build_for(cfg, data)?;
    let adam = AdamConfig {
        lr: cfg.lr,
        weight_decay: cfg.weight_decay,
        ..AdamConfig::default()
    };
    let mut history = Vec::new();

    let pre = cfg.effective_pretrain_epochs();
    if pre > 0 {
        if cfg.learned_mask.enabled {
            for p in model.prunable_parameters_mut() {
                p.soft_mask = Some(Tensor::full(p.value.shape(), cfg.learned_mask.params.init));
            }
        }
        history.extend(train(
            &mut model,
            &data.train,
            &TrainOptions {
                epochs: pre,
                first_epoch: 0,
                batch_size: cfg.batch_size,
                adam,
                schedule: cfg.schedule,
                learned_mask: cfg.learned_mask.enabled.then_some(cfg.learned_mask.params),
                seed: cfg.seed,
            },
        )?);
        binarize_learned_masks(&mut model);
    }

    let mask = prune_mask(&model, cfg, &data.train)?;
    apply_mask(&mut model, &mask)?;
    let collapse = detect_collapse(&model, &mask)?;
    if collapse.collapsed {
        info!(
            "{} at s = {:.6} collapsed (empty layers {:?}, path {})",
            cfg.method,
            cfg.sparsity.fraction(),
            collapse.empty_layers,
            collapse.path_exists
        );
    }

    if cfg.epochs > 0 && (!collapse.collapsed || cfg.train_collapsed) {
        history.extend(train(
            &mut model,
            &data.train,
            &TrainOptions {
                epochs: cfg.epochs,
                first_epoch: pre,
                batch_size: cfg.batch_size,
                adam,
                schedule: cfg.schedule,
                learned_mask: None,
                seed: cfg.seed.wrapping_add(1),
            },
        )?);
    }
    let train_seconds = started.elapsed().as_secs_f64();

    let eval = evaluate_top1(&model, &data.test)?;
    let flops = count_flops(&model, Some(&mask), model.config.input_shape)?;
    let timing = if cfg.timing.enabled {
        Some(time_inference(
            &model,
            &data.test,
            cfg.timing.batch_size,
            cfg.timing.reps,
            cfg.timing.warmup,
        )?)
    } else {
        None
    };
    if let Some(path) = &cfg.checkpoint {
        checkpoint_save(&model, Some(&mask), path)?;
    }

    let row = ResultRow {
        config_digest: config_digest(cfg),
        dataset: cfg.dataset.to_string(),
        architecture: lower(cfg.model.architecture),
        head: lower(cfg.model.head),
        body: lower(cfg.model.body),
        method: cfg.method.to_string(),
        k: cfg.sparsity.compression().max(0.0),
        s: cfg.sparsity.fraction(),
        seed: cfg.seed,
        accuracy: eval.accuracy,
        collapsed: collapse.collapsed,
        kept_weights: mask.kept(),
        prunable_weights: mask.total(),
        flops_sparsity: flops.total_sparsity,
        layer_flops_sparsity: flops.layers.iter().map(|l| l.flops_sparsity).collect(),
        inference_seconds: timing.map(|t| t.median_seconds),
        train_seconds,
        threads: 1,
        precision: "f64".into(),
    };
    Ok(ExperimentOutcome {
        row,
        model,
        mask,
        collapse,
        flops,
        history,
    })
}

/// Cross product `methods × ks × heads` over a base configuration.
pub fn sweep_configs(
    base: &ExperimentConfig,
    methods: &[PruneMethod],
    ks: &[f64],
    heads: &[HeadKind],
) -> Result<Vec<ExperimentConfig>> {
    let mut out = Vec::with_capacity(methods.len() * ks.len() * heads.len());
    for &head in heads {
        for &method in methods {
            for &k in ks {
                let mut c = base.clone();
                c.method = method;
                c.sparsity = SparsityLevel::from_exponent(k)?;
                c.model.head = head;
                out.push(c);
            }
        }
    }
    Ok(out)
}

/// Runs every configuration on up to `workers` threads; rows keep input order.
pub fn sweep(configs: &[ExperimentConfig], data: &ExperimentData, workers: usize) -> Result<Vec<ResultRow>> {
    let next = AtomicUsize::new(0);
    let slots: Mutex<Vec<Option<Result<ResultRow>>>> =
        Mutex::new(std::iter::repeat_with(|| None).take(configs.len()).collect());
    std::thread::scope(|s| {
        for _ in 0..workers.clamp(1, configs.len().max(1)) {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                if i >= configs.len() {
                    break;
                }
                let r = run_experiment(&configs[i], data).map(|o| o.row);
                slots.lock().expect("no poisoned workers")[i] = Some(r);
            });
        }
    });
    slots
        .into_inner()
        .expect("no poisoned workers")
        .into_iter()
        .map(|r| r.expect("every slot filled"))
        .collect()
}
