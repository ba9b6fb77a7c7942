mod reference;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use log::info;
use sparsekit::harness::{
    checkpoint_load, checkpoint_save, emit_csv, emit_json, emit_layer_flops, load_data, prune_mask,
    run_experiment, sweep, sweep_configs, DatasetKind, ExperimentConfig, ResultRow, DATA_ENV,
};
use sparsekit::metrics::{count_flops, evaluate_top1, time_inference};
use sparsekit::models::HeadKind;
use sparsekit::pruning::{apply_mask, detect_collapse, CollapseReport, PruneMethod, SparsityLevel};
use sparsekit::{Error, Result};

/// Structured sparsity experiments: factorized layers, pruning at
/// initialization, collapse and FLOPS accounting.
#[derive(Parser)]
#[command(name = "sparsekit", version, about)]
struct Cli {
    /// Log more (repeat for debug output).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment: optional pre-training, pruning, training, evaluation.
    Train(TrainArgs),
    /// Score and mask a freshly initialized model, then report collapse.
    Prune(PruneArgs),
    /// Evaluate a checkpoint on the configured test set.
    Eval(CheckpointArgs),
    /// Time inference over the test set.
    Bench(BenchArgs),
    /// Per-layer MACs and FLOPS sparsity.
    Flops(FlopsArgs),
    /// Cross product of methods, sparsity exponents and heads.
    Sweep(SweepArgs),
    /// Run the grids behind the accuracy (1) or timing (2) tables.
    Reproduce(ReproduceArgs),
}

#[derive(Args, Clone)]
struct ConfigArgs {
    /// Experiment config file (key = value with [sections]).
    #[arg(short, long)]
    config: Option<PathBuf>,
    /// Override one key, e.g. `--set method=snip --set model.head=butterfly`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Dataset directory (defaults to $SPARSEKIT_DATA/<dataset> or the bundled MNIST subset).
    #[arg(long)]
    data_dir: Option<PathBuf>,
}

impl ConfigArgs {
    fn resolve(&self) -> Result<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(p) => ExperimentConfig::load(p)?,
            None => ExperimentConfig::default(),
        };
        for o in &self.overrides {
            let (k, v) = o
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("override {o:?} is not KEY=VALUE")))?;
            let k = k.trim().to_ascii_lowercase();
            let (section, key) = k.split_once('.').unwrap_or(("", k.as_str()));
            cfg.set(section, key, v.trim())?;
        }
        if let Some(d) = &self.data_dir {
            cfg.data_dir = Some(d.clone());
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    config: ConfigArgs,
    /// Append the result row to this CSV file (created with a header).
    #[arg(long)]
    csv: Option<PathBuf>,
    #[arg(long)]
    json: Option<PathBuf>,
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    /// Exit with status 4 if the mask collapses the network.
    #[arg(long)]
    fail_on_collapse: bool,
}

#[derive(Args)]
struct PruneArgs {
    #[command(flatten)]
    config: ConfigArgs,
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    #[arg(long)]
    fail_on_collapse: bool,
}

#[derive(Args)]
struct CheckpointArgs {
    #[command(flatten)]
    config: ConfigArgs,
    #[arg(long)]
    checkpoint: PathBuf,
}

#[derive(Args)]
struct BenchArgs {
    #[command(flatten)]
    config: ConfigArgs,
    /// Time this checkpoint instead of a freshly built model.
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    #[arg(long, default_value_t = 256)]
    batch_size: usize,
    #[arg(long, default_value_t = 5)]
    reps: usize,
    #[arg(long, default_value_t = 2)]
    warmup: usize,
}

#[derive(Args)]
struct FlopsArgs {
    #[command(flatten)]
    config: ConfigArgs,
    /// Count this checkpoint instead of scoring a fresh model.
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    /// Print JSON instead of a table.
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    config: ConfigArgs,
    #[arg(long, value_delimiter = ',', default_value = "random,magnitude,snip,grasp,synflow")]
    methods: Vec<String>,
    /// Sparsity exponents k, s = 10^-k.
    #[arg(long, value_delimiter = ',', default_value = "0.05,0.1,0.2,0.5,1,2")]
    ks: Vec<f64>,
    #[arg(long, value_delimiter = ',', default_value = "dense,butterfly")]
    heads: Vec<String>,
    #[arg(long, default_value_t = 1)]
    workers: usize,
    #[arg(long, default_value = "results")]
    out_dir: PathBuf,
}

#[derive(Args)]
struct ReproduceArgs {
    #[command(flatten)]
    config: ConfigArgs,
    /// 1: accuracy at s = 0.1; 2: VGG16 / CIFAR-10 inference time over k.
    #[arg(long, value_parser = clap::value_parser!(u8).range(1..=2))]
    table: u8,
    #[arg(long, default_value_t = 1)]
    workers: usize,
    #[arg(long, default_value = "results")]
    out_dir: PathBuf,
    /// List the runs without executing them.
    #[arg(long)]
    dry_run: bool,
}

fn parse_head(s: &str) -> Result<HeadKind> {
    match s.trim().to_ascii_lowercase().as_str() {
        "dense" => Ok(HeadKind::Dense),
        "butterfly" => Ok(HeadKind::Butterfly),
        _ => Err(Error::Config(format!("unknown head {s:?}"))),
    }
}

fn print_collapse(r: &CollapseReport) {
    for l in &r.layers {
        println!("  {:<14} {:>9} / {:<9}", l.name, l.surviving, l.total);
    }
    println!(
        "collapsed: {} (empty layers: {}, surviving path: {})",
        r.collapsed,
        r.empty_layers.len(),
        r.path_exists
    );
}

fn print_row(r: &ResultRow) {
    println!(
        "{} {} head={} body={} k={:.3} s={:.6}: top-1 {:.4}, collapsed {}, FLOPS sparsity {:.6}{}",
        r.dataset,
        r.method,
        r.head,
        r.body,
        r.k,
        r.s,
        r.accuracy,
        r.collapsed,
        r.flops_sparsity,
        r.inference_seconds
            .map(|t| format!(", inference {t:.3} s"))
            .unwrap_or_default()
    );
}

fn write_outputs(rows: &[ResultRow], dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::Io {
        path: dir.to_path_buf(),
        source: e,
    })?;
    emit_csv(rows, dir.join("results.csv"))?;
    emit_json(rows, dir.join("results.json"))?;
    emit_layer_flops(rows, dir.join("layer_flops.csv"))?;
    println!("wrote {}/results.csv, results.json, layer_flops.csv", dir.display());
    Ok(())
}

enum Outcome {
    Ok,
    Collapsed,
}

fn run(cli: Cli) -> Result<Outcome> {
    match cli.command {
        Command::Train(a) => {
            let mut cfg = a.config.resolve()?;
            if a.checkpoint.is_some() {
                cfg.checkpoint = a.checkpoint.clone();
            }
            let data = load_data(&cfg)?;
            let out = run_experiment(&cfg, &data)?;
            print_row(&out.row);
            if let Some(p) = &a.csv {
                let mut rows = if p.exists() { sparsekit::harness::read_csv(p)? } else { Vec::new() };
                rows.push(out.row.clone());
                emit_csv(&rows, p)?;
            }
            if let Some(p) = &a.json {
                emit_json(std::slice::from_ref(&out.row), p)?;
            }
            if a.fail_on_collapse && out.collapse.collapsed {
                return Ok(Outcome::Collapsed);
            }
        }
        Command::Prune(a) => {
            let cfg = a.config.resolve()?;
            let data = load_data(&cfg)?;
            let mut model = sparsekit::harness::build_for(&cfg, &data)?;
            let mask = prune_mask(&model, &cfg, &data.train)?;
            apply_mask(&mut model, &mask)?;
            let report = detect_collapse(&model, &mask)?;
            println!(
                "{} at s = {:.6}: kept {} of {} prunable weights",
                cfg.method,
                cfg.sparsity.fraction(),
                mask.kept(),
                mask.total()
            );
            print_collapse(&report);
            if let Some(p) = &a.checkpoint {
                checkpoint_save(&model, Some(&mask), p)?;
            }
            if a.fail_on_collapse && report.collapsed {
                return Ok(Outcome::Collapsed);
            }
        }
        Command::Eval(a) => {
            let cfg = a.config.resolve()?;
            let ck = checkpoint_load(&a.checkpoint)?;
            let data = load_data(&cfg)?;
            let r = evaluate_top1(&ck.model, &data.test)?;
            println!("top-1 {:.4} on {} samples", r.accuracy, r.samples);
            for (t, row) in r.confusion.iter().enumerate() {
                let cells: Vec<String> = row.iter().map(|c| format!("{c:>5}")).collect();
                println!("  {t:>2} |{}", cells.join(""));
            }
        }
        Command::Bench(a) => {
            let cfg = a.config.resolve()?;
            let data = load_data(&cfg)?;
            let model = match &a.checkpoint {
                Some(p) => checkpoint_load(p)?.model,
                None => sparsekit::harness::build_for(&cfg, &data)?,
            };
            let t = time_inference(&model, &data.test, a.batch_size, a.reps, a.warmup)?;
            println!("{}", serde_json::to_string_pretty(&t)?);
        }
        Command::Flops(a) => {
            let cfg = a.config.resolve()?;
            let (model, mask) = match &a.checkpoint {
                Some(p) => {
                    let ck = checkpoint_load(p)?;
                    let m = ck.mask();
                    (ck.model, m)
                }
                None => {
                    let data = load_data(&cfg)?;
                    let model = sparsekit::harness::build_for(&cfg, &data)?;
                    let mask = prune_mask(&model, &cfg, &data.train)?;
                    (model, mask)
                }
            };
            let report = count_flops(&model, Some(&mask), model.config.input_shape)?;
            if a.json {
                println!("{}", serde_json::to_string_pretty(&report)?);
            } else {
                println!("{:<14} {:<16} {:>14} {:>14} {:>10}", "layer", "kind", "dense MACs", "effective", "sparsity");
                for l in &report.layers {
                    println!(
                        "{:<14} {:<16} {:>14} {:>14} {:>10.6}",
                        l.name, l.kind, l.dense_macs, l.effective_macs, l.flops_sparsity
                    );
                }
                println!(
                    "{:<14} {:<16} {:>14} {:>14} {:>10.6}",
                    "total", "", report.total_dense, report.total_effective, report.total_sparsity
                );
            }
        }
        Command::Sweep(a) => {
            let base = a.config.resolve()?;
            let methods: Vec<PruneMethod> = a.methods.iter().map(|m| m.parse()).collect::<Result<_>>()?;
            let heads: Vec<HeadKind> = a.heads.iter().map(|h| parse_head(h)).collect::<Result<_>>()?;
            let configs = sweep_configs(&base, &methods, &a.ks, &heads)?;
            let data = load_data(&base)?;
            info!("running {} configurations on {} workers", configs.len(), a.workers);
            let rows = sweep(&configs, &data, a.workers)?;
            for r in &rows {
                print_row(r);
            }
            write_outputs(&rows, &a.out_dir)?;
        }
        Command::Reproduce(a) => return reproduce(a),
    }
    Ok(Outcome::Ok)
}

fn table1_configs(base: &ExperimentConfig) -> Result<Vec<(String, ExperimentConfig)>> {
    let mut out = Vec::new();
    let s = SparsityLevel::from_fraction(0.1)?;
    for dataset in [DatasetKind::Cifar10, DatasetKind::Mnist] {
        for head in [HeadKind::Dense, HeadKind::Butterfly] {
            let mut c = base.clone();
            c.dataset = dataset;
            c.model = match dataset {
                DatasetKind::Cifar10 => sparsekit::models::ModelConfig::vgg16(),
                _ => sparsekit::models::ModelConfig::fc6(),
            };
            c.model.head = head;
            c.sparsity = s;
            for method in [
                PruneMethod::Random,
                PruneMethod::Magnitude,
                PruneMethod::Snip,
                PruneMethod::Grasp,
                PruneMethod::Synflow,
            ] {
                let mut m = c.clone();
                m.method = method;
                out.push((method.to_string(), m));
            }
        }
        let mut f = out.last().expect("runs for this dataset").1.clone();
        f.method = PruneMethod::None;
        f.sparsity = SparsityLevel::dense();
        f.model = f.model.clone().fully_factorized();
        out.push(("factorized".into(), f));
    }
    Ok(out)
}

fn table2_configs(base: &ExperimentConfig) -> Result<Vec<(String, ExperimentConfig)>> {
    let mut out = Vec::new();
    let mut c = base.clone();
    c.dataset = DatasetKind::Cifar10;
    c.model = sparsekit::models::ModelConfig::vgg16();
    for head in [HeadKind::Butterfly, HeadKind::Dense] {
        for k in [0.05, 0.1, 0.2, 0.5, 1.0, 2.0] {
            for method in [
                PruneMethod::Random,
                PruneMethod::Magnitude,
                PruneMethod::Snip,
                PruneMethod::Grasp,
                PruneMethod::Synflow,
            ] {
                let mut m = c.clone();
                m.model.head = head;
                m.method = method;
                m.sparsity = SparsityLevel::from_exponent(k)?;
                out.push((method.to_string(), m));
            }
        }
    }
    let mut f = c.clone();
    f.method = PruneMethod::None;
    f.model = f.model.clone().fully_factorized();
    out.push(("factorized".into(), f));
    Ok(out)
}

fn reproduce(a: ReproduceArgs) -> Result<Outcome> {
    let base = a.config.resolve()?;
    let runs = if a.table == 1 { table1_configs(&base)? } else { table2_configs(&base)? };
    println!(
        "table {}: {} runs (table 1 at s = 0.1, table 2 over sparsity exponents k)",
        a.table,
        runs.len()
    );
    // A factorized body always carries a butterfly head, but the table-1
    // reference lists it under both head columns; print both.
    let reference_of = |label: &str, c: &ExperimentConfig| -> String {
        let fmt = |v: Option<f64>| v.map_or("-".into(), |v| format!("{v}"));
        let head = if c.model.head == HeadKind::Butterfly { "butterfly" } else { "dense" };
        if a.table == 2 {
            if label == "factorized" {
                return reference::table2_range(label).map_or("-".into(), |(lo, hi)| format!("{lo}-{hi}"));
            }
            return fmt(reference::table2(head, c.sparsity.compression(), label));
        }
        let ds = c.dataset.to_string();
        if label == "factorized" {
            format!(
                "{} (dense) / {} (butterfly)",
                fmt(reference::table1(&ds, "dense", label)),
                fmt(reference::table1(&ds, "butterfly", label))
            )
        } else {
            fmt(reference::table1(&ds, head, label))
        }
    };
    if a.dry_run {
        for (label, c) in &runs {
            println!(
                "  {:<8} {:<8} head={:<9} {:<10} k={:<5} reference {}",
                c.dataset.to_string(),
                format!("{:?}", c.model.architecture).to_lowercase(),
                format!("{:?}", c.model.head).to_lowercase(),
                label,
                c.sparsity.compression().abs(),
                reference_of(label, c)
            );
        }
        return Ok(Outcome::Ok);
    }
    let mut rows = Vec::with_capacity(runs.len());
    let mut by_dataset: Vec<(DatasetKind, Vec<usize>)> = Vec::new();
    for (i, (_, c)) in runs.iter().enumerate() {
        match by_dataset.iter_mut().find(|(d, _)| *d == c.dataset) {
            Some((_, v)) => v.push(i),
            None => by_dataset.push((c.dataset, vec![i])),
        }
    }
    let mut slots: Vec<Option<ResultRow>> = vec![None; runs.len()];
    for (_, idx) in by_dataset {
        let configs: Vec<ExperimentConfig> = idx.iter().map(|&i| runs[i].1.clone()).collect();
        let data = load_data(&configs[0])?;
        for (&i, r) in idx.iter().zip(sweep(&configs, &data, a.workers)?) {
            slots[i] = Some(r);
        }
    }
    for ((label, c), r) in runs.iter().zip(slots) {
        let r = r.expect("every run produced a row");
        let ours = if a.table == 1 {
            format!("{:.2}", 100.0 * r.accuracy)
        } else {
            r.inference_seconds.map_or("-".into(), |t| format!("{t:.3}"))
        };
        println!(
            "  {:<8} head={:<9} {:<10} k={:<5} ours {:>8}  reference {}",
            r.dataset,
            r.head,
            label,
            c.sparsity.compression().abs(),
            ours,
            reference_of(label, c)
        );
        rows.push(r);
    }
    write_outputs(&rows, &a.out_dir)?;
    Ok(Outcome::Ok)
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_) => 2,
        Error::Format { .. } | Error::Corruption { .. } | Error::Io { .. } | Error::Csv(_) | Error::Json(_) => 3,
        Error::Dimension(_) | Error::Contract(_) => 1,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(Outcome::Ok) => ExitCode::SUCCESS,
        Ok(Outcome::Collapsed) => {
            eprintln!("error: pruning collapsed the network");
            ExitCode::from(4)
        }
        Err(e) => {
            eprintln!("error: {e}");
            if matches!(e, Error::Format { .. } | Error::Io { .. }) {
                eprintln!("hint: set {DATA_ENV} or --data-dir to the dataset directory");
            }
            ExitCode::from(exit_code(&e))
        }
    }
}
