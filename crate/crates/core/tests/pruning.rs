mod common;

use common::*;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sparsekit::autodiff::ParamKind;
use sparsekit::data::{one_hot, synthetic_blobs};
use sparsekit::harness::{train, ScheduleConfig, TrainOptions};
use sparsekit::models::{
    build_model, ActivationKind, ForwardCtx, HeadKind, Model, ModelConfig,
};
use sparsekit::pruning::{
    apply_mask, build_mask, detect_collapse, grasp_scores, score_grasp, score_magnitude,
    score_random, score_snip, score_synflow, PruneMask, PruneMethod, ScoreMap, SparsityLevel,
};
use sparsekit::{Error, Tensor};
use statrs::distribution::{ChiSquared, ContinuousCDF};

#[test]
fn snip_matches_finite_difference_saliency() {
    let err = snip_fd_error();
    assert!(err < 1e-3, "{err}");
}

#[test]
fn snip_zero_gradient_gives_zero_score() {
    let model = small_fc6(4, 5, 3);
    let mut x = random_tensor(&[6, 1, 1, 4], 8);
    for r in 0..6 {
        x.data_mut()[r * 4 + 2] = 0.0;
    }
    let scores = score_snip(&model, &x, &labels_for(6, 3)).unwrap();
    let first = &scores.scores[0];
    for o in 0..5 {
        assert_eq!(first.data()[o * 4 + 2], 0.0);
    }
}

#[test]
fn empty_scoring_batch_is_a_contract_error() {
    let model = small_fc6(4, 5, 3);
    let empty = Tensor::zeros(&[0, 1, 1, 4]);
    assert!(matches!(score_snip(&model, &empty, &[]), Err(Error::Contract(_))));
    assert!(matches!(score_grasp(&model, &empty, &[]), Err(Error::Contract(_))));
}

#[test]
fn grasp_matches_explicit_hessian() {
    let err = grasp_hessian_error();
    assert!(err < 1e-3, "{err}");
}

#[test]
fn grasp_on_model_matches_gradient_jacobian() {
    let model = small_fc6(2, 2, 2);
    let x = random_tensor(&[4, 1, 1, 2], 17);
    let labels = labels_for(4, 2);
    let targets = one_hot(&labels, 2).unwrap();
    let idx: Vec<usize> = model
        .parameters()
        .iter()
        .enumerate()
        .filter(|(_, p)| p.prunable())
        .map(|(i, _)| i)
        .collect();
    let grad_at = |m: &Model| -> Vec<f64> {
        let (_, g) = m.loss_and_grads(&x, &targets, &ForwardCtx::eval()).unwrap();
        idx.iter().flat_map(|&i| g[i].data().to_vec()).collect()
    };
    let g = grad_at(&model);
    let n = g.len();
    assert!(n <= 24);
    // column j of the Hessian: finite difference of the gradient along weight j
    let mut hess = vec![0.0; n * n];
    let h = 1e-5;
    let mut col = 0;
    for &pi in &idx {
        for k in 0..model.parameters()[pi].numel() {
            let mut plus = model.clone();
            plus.parameters_mut()[pi].value.data_mut()[k] += h;
            let mut minus = model.clone();
            minus.parameters_mut()[pi].value.data_mut()[k] -= h;
            let (gp, gm) = (grad_at(&plus), grad_at(&minus));
            for r in 0..n {
                hess[r * n + col] = (gp[r] - gm[r]) / (2.0 * h);
            }
            col += 1;
        }
    }
    let theta: Vec<f64> = model.prunable_parameters().iter().flat_map(|p| p.value.data().to_vec()).collect();
    let want: Vec<f64> = (0..n)
        .map(|i| -theta[i] * (0..n).map(|j| hess[i * n + j] * g[j]).sum::<f64>())
        .collect();
    let got: Vec<f64> = score_grasp(&model, &x, &labels)
        .unwrap()
        .scores
        .iter()
        .flat_map(|s| s.data().to_vec())
        .collect();
    assert!(rel_err(&got, &want) < 1e-3, "{}", rel_err(&got, &want));
}

#[test]
fn grasp_zero_gradient_falls_back_to_index_order() {
    let scores = grasp_scores(&[1.0, -2.0, 3.0, 0.5], |_| Ok(vec![0.0; 4])).unwrap();
    assert_eq!(scores, vec![0.0; 4]);
    let map = ScoreMap {
        method: PruneMethod::Grasp,
        scores: vec![Tensor::from_vec(scores)],
    };
    let mask = build_mask(&map, SparsityLevel::from_fraction(0.5).unwrap()).unwrap();
    assert_eq!(mask.masks[0].data(), &[1.0, 1.0, 0.0, 0.0]);
}

#[test]
fn magnitude_hand_example() {
    let map = ScoreMap {
        method: PruneMethod::Magnitude,
        scores: vec![Tensor::from_vec(vec![-3.0f64, 0.5, 2.0]).abs()],
    };
    let mask = build_mask(&map, SparsityLevel::from_fraction(2.0 / 3.0).unwrap()).unwrap();
    assert_eq!(mask.masks[0].data(), &[1.0, 0.0, 1.0]);
}

#[test]
fn magnitude_on_trained_fc6_matches_sort_oracle() {
    let data = synthetic_blobs(200, 4, 12, 3).unwrap();
    let mut model = small_fc6(12, 16, 4);
    let opts = TrainOptions {
        epochs: 2,
        first_epoch: 0,
        batch_size: 32,
        adam: Default::default(),
        schedule: ScheduleConfig::default(),
        learned_mask: None,
        seed: 1,
    };
    train(&mut model, &data, &opts).unwrap();
    let s = SparsityLevel::from_fraction(0.1).unwrap();
    let mask = build_mask(&score_magnitude(&model), s).unwrap();
    let abs: Vec<f64> = model.prunable_parameters().iter().flat_map(|p| p.value.abs().into_data()).collect();
    let k = (0.1 * abs.len() as f64).ceil() as usize;
    assert_eq!(flat(&mask), sort_oracle(&abs, k));
}

#[test]
fn density_is_exact_over_random_cases() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for case in 0..100 {
        let layers = rng.random_range(1..5);
        let scores: Vec<Tensor> = (0..layers)
            .map(|_| {
                let n = rng.random_range(1..400);
                // coarse values force plenty of ties
                Tensor::from_vec((0..n).map(|_| (rng.random_range(0..20) as f64) / 4.0).collect())
            })
            .collect();
        let total: usize = scores.iter().map(|s| s.numel()).sum();
        let s = rng.random_range(1e-3..=1.0);
        let map = ScoreMap {
            method: PruneMethod::Random,
            scores,
        };
        let mask = build_mask(&map, SparsityLevel::from_fraction(s).unwrap()).unwrap();
        let want = (s * total as f64).ceil() as usize;
        assert_eq!(mask.kept(), want, "case {case}: s={s} n={total}");
        let all: Vec<f64> = map.scores.iter().flat_map(|t| t.data().to_vec()).collect();
        assert_eq!(flat(&mask), sort_oracle(&all, want), "case {case}");
    }
}

#[test]
fn random_per_layer_density_is_uniform() {
    let model = build_model(&ModelConfig::fc6()).unwrap();
    let s = 0.5;
    let mask = build_mask(&score_random(&model, 77), SparsityLevel::from_fraction(s).unwrap()).unwrap();
    let mut chi2 = 0.0;
    for m in &mask.masks {
        let n = m.numel() as f64;
        let kept = m.data().iter().sum::<f64>();
        chi2 += (kept - s * n).powi(2) / (s * n) + ((n - kept) - (1.0 - s) * n).powi(2) / ((1.0 - s) * n);
    }
    let df = (mask.masks.len() - 1) as f64;
    let p = 1.0 - ChiSquared::new(df).unwrap().cdf(chi2);
    assert!(p > 0.01, "chi2 {chi2} p {p}");
}

#[test]
fn every_method_is_deterministic() {
    let model = small_fc6(10, 12, 3);
    let x = random_tensor(&[16, 1, 1, 10], 5);
    let labels = labels_for(16, 3);
    let s = SparsityLevel::from_fraction(0.2).unwrap();
    let run = || -> Vec<PruneMask> {
        vec![
            build_mask(&score_random(&model, 9), s).unwrap(),
            build_mask(&score_magnitude(&model), s).unwrap(),
            build_mask(&score_snip(&model, &x, &labels).unwrap(), s).unwrap(),
            build_mask(&score_grasp(&model, &x, &labels).unwrap(), s).unwrap(),
            score_synflow(&model, s, 10).unwrap(),
        ]
    };
    assert_eq!(run(), run());
    assert_ne!(
        build_mask(&score_random(&model, 9), s).unwrap(),
        build_mask(&score_random(&model, 10), s).unwrap()
    );
}

#[test]
fn structured_parameters_and_biases_are_never_masked() {
    let mut cfg = fc6_config(8, [1, 1, 10], 3).with_head(HeadKind::Butterfly);
    cfg.dropout = 0.0;
    let model = build_model(&cfg).unwrap();
    let x = random_tensor(&[8, 1, 1, 10], 2);
    let labels = labels_for(8, 3);
    let s = SparsityLevel::from_fraction(0.05).unwrap();
    let masks = [
        build_mask(&score_random(&model, 1), s).unwrap(),
        build_mask(&score_magnitude(&model), s).unwrap(),
        build_mask(&score_snip(&model, &x, &labels).unwrap(), s).unwrap(),
        build_mask(&score_grasp(&model, &x, &labels).unwrap(), s).unwrap(),
        score_synflow(&model, s, 5).unwrap(),
    ];
    for mask in &masks {
        assert_eq!(mask.masks.len(), 5);
        let mut pruned = model.clone();
        apply_mask(&mut pruned, mask).unwrap();
        for (a, b) in model.parameters().iter().zip(pruned.parameters()) {
            if a.kind != ParamKind::Weight {
                assert_eq!(a.value, b.value, "{}", a.name);
                assert!(b.mask().is_none());
            }
        }
    }
}

#[test]
fn synflow_single_linear_layer() {
    let model = one_linear_model(Tensor::new(vec![2, 2], vec![2.0, -1.0, 0.0, 3.0]).unwrap());
    let mask = score_synflow(&model, SparsityLevel::from_fraction(0.5).unwrap(), 1).unwrap();
    assert_eq!(mask.masks[0].data(), &[1.0, 0.0, 0.0, 1.0]);
    let dense = score_synflow(&model, SparsityLevel::dense(), 1).unwrap();
    assert_eq!(dense.kept(), 4);
    assert!(matches!(
        score_synflow(&model, SparsityLevel::dense(), 0),
        Err(Error::Contract(_))
    ));
}

#[test]
fn synflow_avoids_collapse_where_random_collapses() {
    let mut cfg = ModelConfig::fc6();
    cfg.hidden_width = 16;
    let model = build_model(&cfg).unwrap();
    let s = SparsityLevel::from_exponent(2.0).unwrap();
    let mask = score_synflow(&model, s, 100).unwrap();
    assert_eq!(mask.kept(), s.keep_count(model.prunable_count()));
    let report = detect_collapse(&model, &mask).unwrap();
    assert!(!report.collapsed, "{report:?}");
    assert!(!mlp_collapse_oracle(&dense_abs_weights(&model, &mask)));

    let mut collapsed = 0;
    for seed in 0..60 {
        let m = build_mask(&score_random(&model, seed), s).unwrap();
        let r = detect_collapse(&model, &m).unwrap();
        assert_eq!(r.collapsed, mlp_collapse_oracle(&dense_abs_weights(&model, &m)), "seed {seed}");
        collapsed += usize::from(r.collapsed);
    }
    assert!(collapsed > 30, "only {collapsed}/60 random masks collapsed");
}

#[test]
fn synflow_conserves_flow_across_sparsities() {
    let mut cfg = ModelConfig::fc6();
    cfg.hidden_width = 16;
    let model = build_model(&cfg).unwrap();
    for k in [0.05, 0.5, 1.0, 2.0] {
        let mask = score_synflow(&model, SparsityLevel::from_exponent(k).unwrap(), 100).unwrap();
        assert!(!detect_collapse(&model, &mask).unwrap().collapsed, "k={k}");
    }
}

#[test]
fn collapse_detector_basics() {
    let model = small_fc6(6, 8, 3);
    let ones = PruneMask::ones(&model);
    let r = detect_collapse(&model, &ones).unwrap();
    assert!(!r.collapsed && r.path_exists && r.empty_layers.is_empty());
    assert_eq!(r.layers.len(), 6);
    assert!(r.layers.iter().all(|l| l.surviving == l.total));

    let mut holed = ones.clone();
    holed.masks[3] = Tensor::zeros(holed.masks[3].shape());
    let r = detect_collapse(&model, &holed).unwrap();
    assert!(r.collapsed && !r.path_exists);
    assert_eq!(r.empty_layers, vec![3]);
    assert_eq!(r.first_empty().unwrap().name, r.layers[3].name);
}

#[test]
fn collapse_detector_finds_broken_paths_without_empty_layers() {
    // Layer 1 only reads unit 0, layer 0 only writes unit 1.
    let model = small_fc6(4, 4, 2);
    let mut mask = PruneMask::ones(&model);
    let first = mask.masks[0].data_mut();
    first.iter_mut().for_each(|v| *v = 0.0);
    first[4] = 1.0;
    let second = mask.masks[1].data_mut();
    second.iter_mut().for_each(|v| *v = 0.0);
    second[0] = 1.0;
    let r = detect_collapse(&model, &mask).unwrap();
    assert!(r.empty_layers.is_empty());
    assert!(!r.path_exists && r.collapsed);
    assert!(mlp_collapse_oracle(&dense_abs_weights(&model, &mask)));
}

#[test]
fn collapse_detector_agrees_with_signal_oracle_on_pswish_nets() {
    let mut cfg = fc6_config(16, [1, 1, 30], 10);
    cfg.activation = ActivationKind::PSwish;
    let model = build_model(&cfg).unwrap();
    for seed in 0..40 {
        let s = SparsityLevel::from_fraction(0.004 + 0.002 * (seed % 10) as f64).unwrap();
        let m = build_mask(&score_random(&model, 1000 + seed), s).unwrap();
        let r = detect_collapse(&model, &m).unwrap();
        assert_eq!(r.collapsed, mlp_collapse_oracle(&dense_abs_weights(&model, &m)), "seed {seed}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn positive_scaling_leaves_mask_unchanged(
        values in prop::collection::vec(0.0f64..10.0, 1..200),
        c in 1e-3f64..1e3,
        s in 0.01f64..=1.0,
    ) {
        let map = ScoreMap { method: PruneMethod::Snip, scores: vec![Tensor::from_vec(values)] };
        let level = SparsityLevel::from_fraction(s).unwrap();
        prop_assert_eq!(build_mask(&map, level).unwrap(), build_mask(&map.scaled(c), level).unwrap());
    }

    #[test]
    fn snip_mask_invariant_under_loss_scaling(seed in 0u64..1000) {
        let model = small_fc6(5, 6, 3);
        let x = random_tensor(&[6, 1, 1, 5], seed);
        let labels = labels_for(6, 3);
        let level = SparsityLevel::from_fraction(0.3).unwrap();
        let scores = score_snip(&model, &x, &labels).unwrap();
        prop_assert_eq!(build_mask(&scores, level).unwrap(), build_mask(&scores.scaled(7.5), level).unwrap());
    }
}
