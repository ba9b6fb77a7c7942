//! End-to-end acceptance gate. Each test prints one `criterion N: PASS|FAIL`
//! line straight to stdout (bypassing libtest capture) and then asserts.

mod common;

use std::io::Write;
use std::path::PathBuf;
use std::time::{Duration, Instant};

use common::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sparsekit::data::Dataset;
use sparsekit::harness::{
    label_smooth, load_data, run_experiment, train, ExperimentConfig, ScheduleConfig, TrainOptions,
};
use sparsekit::metrics::{count_flops, evaluate_top1};
use sparsekit::models::{build_model, zero_init, zero_matrix, BodyKind, HeadKind, ModelConfig};
use sparsekit::pruning::{
    apply_mask, build_mask, detect_collapse, learned_mask_penalty, score_random, score_synflow,
    PruneMask, PruneMethod, ScoreMap, SparsityLevel,
};
use sparsekit::structured::{structured_flops, ButterflyMatrix, InnerKind, MapSpec, StructuredSpec};
use sparsekit::Tensor;

/// Collects named checks and reports them as one line.
struct Gate {
    id: u32,
    start: Instant,
    budget: Duration,
    failures: Vec<String>,
    notes: Vec<String>,
}

impl Gate {
    fn new(id: u32, budget_secs: u64) -> Self {
        Self {
            id,
            start: Instant::now(),
            budget: Duration::from_secs(budget_secs),
            failures: Vec::new(),
            notes: Vec::new(),
        }
    }

    fn check(&mut self, ok: bool, what: impl Into<String>) {
        if !ok {
            self.failures.push(what.into());
        }
    }

    fn note(&mut self, s: impl Into<String>) {
        self.notes.push(s.into());
    }

    fn finish(mut self) {
        let elapsed = self.start.elapsed();
        if elapsed > self.budget {
            self.failures.push(format!("took {elapsed:.1?}, budget {:?}", self.budget));
        }
        let verdict = if self.failures.is_empty() { "PASS" } else { "FAIL" };
        let mut line = format!("criterion {}: {verdict} ({elapsed:.2?})", self.id);
        if !self.notes.is_empty() {
            line += &format!(" {}", self.notes.join("; "));
        }
        if !self.failures.is_empty() {
            line += &format!(" failures: {}", self.failures.join("; "));
        }
        let mut out = std::io::stdout().lock();
        writeln!(out, "{line}").unwrap();
        out.flush().unwrap();
        assert!(self.failures.is_empty(), "{line}");
    }
}

#[test]
fn criterion_1_structured() {
    let mut g = Gate::new(1, 5);
    let mut worst: f64 = 0.0;
    for log2n in 1..=6 {
        let n = 1usize << log2n;
        for seed in 0..50 {
            let b = random_butterfly(n, seed);
            let x = random_tensor(&[n], 1000 + seed);
            let want = apply(&dense_oracle(&b), x.data());
            let got = b.matvec(x.data()).unwrap();
            worst = worst.max(max_abs_diff(&got, &want) / norm(&want));
        }
    }
    g.check(worst < 1e-10, format!("matvec rel err {worst:e}"));
    g.note(format!("matvec rel err {worst:.1e}"));

    for log2n in 1..=6u32 {
        let n = 1usize << log2n;
        let x = random_tensor(&[n], 2);
        let id = ButterflyMatrix::identity(n).unwrap();
        g.check(id.matvec(x.data()).unwrap() == x.data(), format!("identity n={n}"));
        let h = ButterflyMatrix::hadamard(n).unwrap().to_dense();
        g.check(h.data() == hadamard_recursive(log2n).as_slice(), format!("hadamard n={n}"));
    }

    let mut worst_norm: f64 = 0.0;
    for log2n in 1..=6 {
        let n = 1usize << log2n;
        for seed in 0..50 {
            let b = ButterflyMatrix::random_givens(n, seed).unwrap();
            let x = random_tensor(&[n], 7 * seed + 1);
            let y = b.matvec(x.data()).unwrap();
            worst_norm = worst_norm.max((norm(&y) - norm(x.data())).abs() / norm(x.data()));
        }
    }
    g.check(worst_norm < 1e-10, format!("norm preservation {worst_norm:e}"));

    for log2n in 1..=12 {
        let n = 1usize << log2n;
        let count = ButterflyMatrix::identity(n).unwrap().param_count();
        g.check(count == 2 * n * log2n, format!("param count n={n}: {count}"));
    }
    g.finish();
}

#[test]
fn criterion_2_autodiff() {
    let mut g = Gate::new(2, 30);
    let results = all_gradchecks();
    let worst = results.iter().map(|(_, e)| *e).fold(0.0, f64::max);
    for (name, err) in &results {
        g.check(*err < 1e-4, format!("{name}: {err:e}"));
    }
    g.note(format!("{} checks, worst rel err {worst:.1e}", results.len()));
    g.finish();
}

#[test]
fn criterion_3_pruning_oracles() {
    let mut g = Gate::new(3, 60);
    let snip = snip_fd_error();
    g.check(snip < 1e-3, format!("snip rel err {snip:e}"));
    let grasp = grasp_hessian_error();
    g.check(grasp < 1e-3, format!("grasp rel err {grasp:e}"));
    g.note(format!("snip {snip:.1e}, grasp {grasp:.1e}"));

    let mut rng = ChaCha8Rng::seed_from_u64(31);
    for case in 0..200 {
        let layers = rng.random_range(1..5);
        let scores: Vec<Tensor> = (0..layers)
            .map(|_| {
                let n = rng.random_range(1..400);
                Tensor::from_vec((0..n).map(|_| f64::from(rng.random_range(0..20u8)) / 4.0).collect())
            })
            .collect();
        let total: usize = scores.iter().map(Tensor::numel).sum();
        let s = rng.random_range(1e-3..=1.0);
        let map = ScoreMap {
            method: PruneMethod::Random,
            scores,
        };
        let level = SparsityLevel::from_fraction(s).unwrap();
        let mask = build_mask(&map, level).unwrap();
        let want = (s * total as f64).ceil() as usize;
        g.check(mask.kept() == want, format!("case {case}: kept {} want {want}", mask.kept()));

        let c = 10f64.powf(rng.random_range(-3.0..3.0));
        g.check(build_mask(&map.scaled(c), level).unwrap() == mask, format!("case {case}: scale {c}"));
    }
    g.finish();
}

/// Test-split class counts of the reference digit set; class 1 is the majority.
const TEST_COUNTS: [usize; 10] = [980, 1135, 1032, 1010, 982, 892, 958, 1028, 974, 1009];

#[test]
fn criterion_4_collapse() {
    let mut g = Gate::new(4, 120);
    let mut cfg = ModelConfig::fc6();
    cfg.hidden_width = 16;
    let model = build_model(&cfg).unwrap();
    let s = SparsityLevel::from_exponent(2.0).unwrap();

    let syn = score_synflow(&model, s, 100).unwrap();
    let report = detect_collapse(&model, &syn).unwrap();
    g.check(report.empty_layers.is_empty(), format!("synflow emptied layers {:?}", report.empty_layers));
    g.check(!report.collapsed, "synflow mask collapsed");
    g.check(
        report.collapsed == mlp_collapse_oracle(&dense_abs_weights(&model, &syn)),
        "detector vs oracle on synflow mask",
    );

    let seeds = 50u64;
    let mut collapsed_masks = Vec::new();
    for seed in 0..seeds {
        let m = build_mask(&score_random(&model, seed), s).unwrap();
        let r = detect_collapse(&model, &m).unwrap();
        let oracle = mlp_collapse_oracle(&dense_abs_weights(&model, &m));
        g.check(r.collapsed == oracle, format!("detector vs oracle, seed {seed}"));
        if r.collapsed {
            collapsed_masks.push(m);
        }
    }
    let rate = collapsed_masks.len() as f64 / seeds as f64;
    g.check(rate >= 0.6, format!("random collapse rate {rate}"));
    g.note(format!("random collapsed {}/{seeds}", collapsed_masks.len()));

    // A collapsed net cannot see its input, so after training it predicts the
    // most frequent training class everywhere.
    let labels: Vec<usize> = TEST_COUNTS
        .iter()
        .enumerate()
        .flat_map(|(c, &n)| std::iter::repeat_n(c, n))
        .collect();
    let images = random_tensor(&[labels.len(), 1, 28, 28], 5);
    let ds = Dataset::new("counts", "test", images, labels, 10).unwrap();
    let mut accs = Vec::new();
    for mask in collapsed_masks.iter().take(3) {
        let mut m = model.clone();
        apply_mask(&mut m, mask).unwrap();
        let opts = TrainOptions {
            epochs: 2,
            first_epoch: 0,
            batch_size: 256,
            adam: sparsekit::autodiff::AdamConfig {
                lr: 1e-2,
                ..Default::default()
            },
            schedule: ScheduleConfig::default(),
            learned_mask: None,
            seed: 0,
        };
        train(&mut m, &ds, &opts).unwrap();
        let r = evaluate_top1(&m, &ds).unwrap();
        accs.push(r.accuracy);
        g.check(r.accuracy == 0.1135, format!("collapsed accuracy {}", r.accuracy));
    }
    g.check(!accs.is_empty(), "no collapsed mask to evaluate");
    g.note(format!("collapsed accuracies {accs:?}"));
    g.finish();
}

fn desk_config() -> ExperimentConfig {
    let mut c = ExperimentConfig::default();
    c.data_dir = Some(PathBuf::from(concat!(env!("CARGO_MANIFEST_DIR"), "/../../data/mnist-subset")));
    c.timing.enabled = false;
    c.batch_size = 64;
    c.lr = 3e-3;
    c.sparsity = SparsityLevel::from_fraction(0.1).unwrap();
    c
}

#[test]
fn criterion_5_desk_mnist() {
    let mut g = Gate::new(5, 600);
    let base = desk_config();
    let data = load_data(&base).unwrap();
    g.check(data.train.len() + data.test.len() == 10_000, "subset size");

    let mut mag = base.clone();
    mag.method = PruneMethod::Magnitude;
    mag.pretrain_epochs = 5;
    mag.epochs = 5;
    let mag = run_experiment(&mag, &data).unwrap().row.accuracy;

    let mut rand = base.clone();
    rand.method = PruneMethod::Random;
    rand.pretrain_epochs = 0;
    rand.epochs = 10;
    let rand = run_experiment(&rand, &data).unwrap().row.accuracy;

    let mut fact = base.clone();
    fact.method = PruneMethod::None;
    fact.epochs = 5;
    fact.model = fact.model.clone().fully_factorized();
    let fact = run_experiment(&fact, &data).unwrap().row.accuracy;

    g.check(mag >= 0.90, format!("magnitude {mag}"));
    g.check(rand >= 0.85, format!("random {rand}"));
    g.check(fact >= 0.90, format!("factorized {fact}"));
    g.note(format!("magnitude {mag:.4}, random {rand:.4}, factorized {fact:.4}"));
    g.finish();
}

#[test]
fn criterion_6_flops() {
    let mut g = Gate::new(6, 5);
    let model = build_model(&ModelConfig::vgg16().with_head(HeadKind::Butterfly)).unwrap();
    let mask = build_mask(&score_random(&model, 4), SparsityLevel::from_exponent(1.0).unwrap()).unwrap();
    let r = count_flops(&model, Some(&mask), [3, 32, 32]).unwrap();
    g.check(r.total_dense == r.layers.iter().map(|l| l.dense_macs).sum::<u64>(), "dense total");
    g.check(r.total_effective == r.layers.iter().map(|l| l.effective_macs).sum::<u64>(), "effective total");

    let mut cfg = fc6_config(100, [1, 1, 100], 100);
    cfg.dropout = 0.0;
    let fc = build_model(&cfg).unwrap();
    let mut half = PruneMask::ones(&fc);
    for (i, v) in half.masks[2].data_mut().iter_mut().enumerate() {
        *v = (i % 2) as f64;
    }
    let r = count_flops(&fc, Some(&half), cfg.input_shape).unwrap();
    g.check(r.layers[2].effective_macs * 2 == r.layers[2].dense_macs, "half mask");

    let n = 512usize;
    let dense = n * n;
    let butterfly = 2 * n * n.trailing_zeros() as usize;
    let spec = StructuredSpec::Linear(MapSpec::new(n, n, InnerKind::Butterfly).unwrap());
    g.check(structured_flops(&spec, &[n]).unwrap() == butterfly, "butterfly formula");
    let mut cfg = fc6_config(n, [1, 1, n], 10);
    cfg.body = BodyKind::Factorized;
    cfg.head = HeadKind::Butterfly;
    let r = count_flops(&build_model(&cfg).unwrap(), None, cfg.input_shape).unwrap();
    let l = &r.layers[1];
    g.check((l.dense_macs, l.effective_macs) == (dense as u64, butterfly as u64), format!("{l:?}"));
    g.check((dense, butterfly) == (262_144, 9216), "512 → 512 MACs");
    g.note(format!("512x512: {} vs {} MACs, ratio {:.3}", l.effective_macs, l.dense_macs, dense as f64 / butterfly as f64));
    g.finish();
}

#[test]
fn criterion_7_schedules_and_extras() {
    let mut g = Gate::new(7, 5);
    let s = ScheduleConfig {
        alpha0: 0.3,
        t_alpha: 10,
        beta0: 1.0,
        beta_max: 20.0,
        t_beta: 8,
        gamma0: 1.0,
        t_gamma: 4,
    };
    let a0 = s.at(0);
    g.check((a0.alpha, a0.beta, a0.gamma) == (0.3, 1.0, 1.0), "start values");
    g.check(s.at(10).alpha == 0.0 && s.at(8).beta == 20.0 && s.at(4).gamma == 0.0, "end values");
    for t in 0..=15usize {
        let st = s.at(t);
        let a = if t >= 10 { 0.0 } else { 0.3 * (1.0 - t as f64 / 10.0) };
        let b = if t >= 8 { 20.0 } else { 1.0 + 19.0 * t as f64 / 8.0 };
        let c = if t >= 4 { 0.0 } else { 1.0 - t as f64 / 4.0 };
        g.check((st.alpha - a).abs() < 1e-12, format!("alpha at {t}"));
        g.check((st.beta - b).abs() < 1e-12, format!("beta at {t}"));
        g.check((st.gamma - c).abs() < 1e-12, format!("gamma at {t}"));
    }

    let mut y = Tensor::zeros(&[1, 10]);
    y.data_mut()[4] = 1.0;
    let sm = label_smooth(&y, 0.3, 10).unwrap();
    for (i, &v) in sm.data().iter().enumerate() {
        let want = if i == 4 { 0.73 } else { 0.03 };
        g.check((v - want).abs() < 1e-12, format!("smoothed[{i}] = {v}"));
    }

    let mut fc = build_model(&ModelConfig::fc6()).unwrap();
    zero_init(&mut fc);
    g.check(fc.parameters()[2].value == Tensor::eye(100), "square ZerO layer");
    for (inp, out) in [(784, 100), (100, 10), (5, 3), (9, 2)] {
        let m = (inp as f64).log2().ceil() as i32;
        let c = 2f64.powf(-f64::from(m - 1) / 2.0);
        let ok = zero_matrix(inp, out).data().iter().all(|&v| v == 0.0 || v == c || v == -c);
        g.check(ok, format!("ZerO entries {inp}→{out}"));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..200 {
        let n = rng.random_range(1..50);
        let mut m: Vec<f64> = (0..n).map(|_| f64::from(rng.random_range(0..2u8))).collect();
        g.check(learned_mask_penalty(&[Tensor::from_vec(m.clone())], 1.0, 0.0) == 0.0, "binary mask penalty");
        let i = rng.random_range(0..n);
        m[i] = rng.random_range(1e-6..1.0 - 1e-6);
        g.check(learned_mask_penalty(&[Tensor::from_vec(m)], 1.0, 0.0) > 0.0, "fractional mask penalty");
    }
    g.finish();
}

#[test]
fn criterion_8_full_scale_is_config_only() {
    let mut g = Gate::new(8, 5);
    for (head, factorized) in [(HeadKind::Dense, false), (HeadKind::Butterfly, false), (HeadKind::Butterfly, true)] {
        let mut cfg = ModelConfig::vgg16().with_head(head);
        if factorized {
            cfg = cfg.fully_factorized();
        }
        let built = build_model(&cfg);
        g.check(built.is_ok(), format!("vgg16 {head:?} factorized={factorized}"));
    }
    g.note("CIFAR-10/VGG16 grids run through `sparsekit reproduce`; no accuracy assertion");
    g.finish();
}
