//! Independent re-implementations checked against the library: the MLP
//! forward pass, per-head loss weighting, and the Stage-2 logistic optimum.

use finegrain::model::aggregator::{self, balanced_class_weights};
use finegrain::model::mlp;
use finegrain::model::{model_from_str, model_to_string, MlpConfig, MlpModel, ModelKind, RewardModel};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Plain loops: `z = W·x + b` with `W` stored row-major as `out × in`.
fn naive_logits(model: &MlpModel, x: &[f64]) -> Vec<f64> {
    let n_layers = model.shapes().len();
    let mut a = x.to_vec();
    for l in 0..n_layers {
        let s = model.shapes()[l];
        let (w, b) = model.layer(l);
        let mut z = vec![0.0; s.out_dim];
        for o in 0..s.out_dim {
            let mut acc = b[o];
            for i in 0..s.in_dim {
                acc += w[o * s.in_dim + i] * a[i];
            }
            z[o] = if l + 1 < n_layers { acc.max(0.0) } else { acc };
        }
        a = z;
    }
    a
}

fn logistic(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

fn naive_bce(z: f64, y: f64) -> f64 {
    let p = logistic(z);
    -(y * p.ln() + (1.0 - y) * (1.0 - p).ln())
}

fn small_config(rng: &mut ChaCha8Rng) -> MlpConfig {
    let depth = rng.random_range(1..=2);
    MlpConfig {
        hidden_dims: (0..depth).map(|_| rng.random_range(1..=8)).collect(),
        seed: rng.random(),
        ..MlpConfig::new(rng.random_range(1..=8), rng.random_range(1..=3))
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn forward_pass_matches_naive_loops(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let cfg = small_config(&mut rng);
        let model = MlpModel::init(cfg.clone()).unwrap();
        for _ in 0..8 {
            let x: Vec<f64> = (0..cfg.input_dim).map(|_| rng.random_range(-3.0..3.0)).collect();
            let got = model.logits(&x).unwrap();
            let want = naive_logits(&model, &x);
            for (g, w) in got.iter().zip(&want) {
                prop_assert!((g - w).abs() <= 1e-12 * (1.0 + w.abs()), "{g} vs {w}");
            }
            let probs = model.forward(&x).unwrap();
            for (p, z) in probs.iter().zip(&want) {
                prop_assert!((p - logistic(*z)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn batched_forward_equals_row_by_row(seed in any::<u64>(), rows in 1usize..300) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let cfg = small_config(&mut rng);
        let model = MlpModel::init(cfg.clone()).unwrap();
        let xs: Vec<Vec<f64>> = (0..rows)
            .map(|_| (0..cfg.input_dim).map(|_| rng.random_range(-2.0..2.0)).collect())
            .collect();
        let batched = model.forward_many(&xs).unwrap();
        for (x, row) in xs.iter().zip(&batched) {
            let single = model.forward(x).unwrap();
            for (a, b) in single.iter().zip(row) {
                prop_assert!((a - b).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn loss_is_the_weighted_mean_of_head_losses(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut cfg = small_config(&mut rng);
        let weights: Vec<f64> = (0..cfg.n_heads).map(|_| rng.random_range(0.1..2.0)).collect();
        cfg.head_weights = Some(weights.clone());
        let model = MlpModel::init(cfg.clone()).unwrap();
        let x: Vec<f64> = (0..cfg.input_dim).map(|_| rng.random_range(-2.0..2.0)).collect();
        let y: Vec<f64> = (0..cfg.n_heads).map(|_| if rng.random::<bool>() { 1.0 } else { 0.0 }).collect();
        let z = naive_logits(&model, &x);
        let total: f64 = weights.iter().sum();
        let want: f64 = z.iter().zip(&y).zip(&weights).map(|((&z, &y), &w)| w / total * naive_bce(z, y)).sum();
        let got = model.loss(&x, &y).unwrap();
        prop_assert!((got - want).abs() < 1e-12 * (1.0 + want.abs()), "{got} vs {want}");
    }
}

#[test]
fn init_respects_he_uniform_bounds_and_zero_biases() {
    let cfg = MlpConfig { hidden_dims: vec![64, 32], ..MlpConfig::new(20, 3) };
    let model = MlpModel::init(cfg).unwrap();
    for (l, s) in model.shapes().iter().enumerate() {
        let (w, b) = model.layer(l);
        let limit = (6.0 / s.in_dim as f64).sqrt();
        assert!(w.iter().all(|v| v.abs() <= limit));
        assert!(b.iter().all(|&v| v == 0.0));
        // Uniform on [-limit, limit] has variance limit²/3.
        let var = w.iter().map(|v| v * v).sum::<f64>() / w.len() as f64;
        assert!((var / (limit * limit / 3.0) - 1.0).abs() < 0.25, "layer {l}: variance {var}");
    }
}

#[test]
fn training_reduces_loss_and_is_seed_deterministic() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let xs: Vec<Vec<f64>> = (0..256).map(|_| (0..4).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
    let ys: Vec<Vec<bool>> = xs.iter().map(|x| vec![x[0] + x[1] > 0.0, x[2] > 0.3]).collect();
    let cfg = MlpConfig { hidden_dims: vec![16], learning_rate: 1e-2, epochs: 60, batch_size: 32, seed: 4, ..MlpConfig::new(4, 2) };
    let before = mlp::dataset_loss(&MlpModel::init(cfg.clone()).unwrap(), &xs, &ys).unwrap();
    let a = mlp::train(cfg.clone(), &xs, &ys).unwrap();
    let b = mlp::train(cfg, &xs, &ys).unwrap();
    let after = mlp::dataset_loss(&a, &xs, &ys).unwrap();
    assert!(after < 0.5 * before, "{before} -> {after}");
    assert_eq!(a.parameters(), b.parameters());
}

/// The class-weighted L2 objective written out independently of the library.
fn reference_objective(xs: &[Vec<f64>], ys: &[bool], w: &[f64], b: f64) -> f64 {
    let n = ys.len() as f64;
    let pos = ys.iter().filter(|&&y| y).count() as f64;
    let (w_neg, w_pos) = (n / (2.0 * (n - pos)), n / (2.0 * pos));
    let mut total = 0.5 * w.iter().map(|v| v * v).sum::<f64>();
    for (x, &y) in xs.iter().zip(ys) {
        let z: f64 = w.iter().zip(x).map(|(a, b)| a * b).sum::<f64>() + b;
        let loss = if y { (1.0 + (-z).exp()).ln() } else { (1.0 + z.exp()).ln() };
        total += if y { w_pos } else { w_neg } * loss;
    }
    total
}

/// Gradient descent with a fixed 1/L step on the same objective.
fn reference_solve(xs: &[Vec<f64>], ys: &[bool]) -> (Vec<f64>, f64) {
    let d = xs[0].len();
    let n = ys.len() as f64;
    let pos = ys.iter().filter(|&&y| y).count() as f64;
    let (w_neg, w_pos) = (n / (2.0 * (n - pos)), n / (2.0 * pos));
    let lipschitz = 1.0
        + xs.iter()
            .zip(ys)
            .map(|(x, &y)| (if y { w_pos } else { w_neg }) * (1.0 + x.iter().map(|v| v * v).sum::<f64>()) / 4.0)
            .sum::<f64>();
    let step = 1.0 / lipschitz;
    let (mut w, mut b) = (vec![0.0; d], 0.0);
    for _ in 0..2_000_000 {
        let mut g = w.clone();
        let mut gb = 0.0;
        for (x, &y) in xs.iter().zip(ys) {
            let z: f64 = w.iter().zip(x).map(|(a, b)| a * b).sum::<f64>() + b;
            let r = (if y { w_pos } else { w_neg }) * (logistic(z) - if y { 1.0 } else { 0.0 });
            for j in 0..d {
                g[j] += r * x[j];
            }
            gb += r;
        }
        let norm = (g.iter().map(|v| v * v).sum::<f64>() + gb * gb).sqrt();
        if norm < 1e-10 {
            break;
        }
        for j in 0..d {
            w[j] -= step * g[j];
        }
        b -= step * gb;
    }
    (w, b)
}

#[test]
fn aggregator_reaches_the_regularised_optimum() {
    for seed in 0..6u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = rng.random_range(1..=4);
        let n = rng.random_range(30..120);
        let xs: Vec<Vec<f64>> = (0..n).map(|_| (0..d).map(|_| rng.random::<f64>()).collect()).collect();
        // Noisy, imbalanced labels so the optimum is finite.
        let ys: Vec<bool> = xs.iter().map(|x| x[0] + 0.4 * rng.random::<f64>() > 0.75).collect();
        if ys.iter().all(|&y| y) || ys.iter().all(|&y| !y) {
            continue;
        }
        let fit = aggregator::train(&xs, &ys).unwrap();
        assert!(fit.converged && fit.gradient_norm <= 1e-8, "seed {seed}: {fit:?}");
        let agg = &fit.aggregator;
        let (w_ref, b_ref) = reference_solve(&xs, &ys);
        for (a, b) in agg.weights.iter().zip(&w_ref) {
            assert!((a - b).abs() < 1e-6, "seed {seed}: {a} vs {b}");
        }
        assert!((agg.bias - b_ref).abs() < 1e-6);

        let f0 = reference_objective(&xs, &ys, &agg.weights, agg.bias);
        for j in 0..=d {
            for delta in [1e-3, -1e-3] {
                let mut w = agg.weights.clone();
                let mut b = agg.bias;
                if j < d {
                    w[j] += delta;
                } else {
                    b += delta;
                }
                assert!(reference_objective(&xs, &ys, &w, b) > f0, "seed {seed}: coordinate {j} {delta}");
            }
        }
    }
}

#[test]
fn balanced_weights_give_each_class_half_the_mass() {
    let labels = [true, false, false, false, true, false, false];
    let (neg, pos) = balanced_class_weights(&labels).unwrap();
    assert!((neg * 5.0 - 3.5).abs() < 1e-12);
    assert!((pos * 2.0 - 3.5).abs() < 1e-12);
    assert!(balanced_class_weights(&[true, true]).is_err());
}

#[test]
fn reward_model_round_trips_bit_for_bit() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let stage1 = MlpModel::init(MlpConfig { hidden_dims: vec![5], seed: 8, ..MlpConfig::new(3, 2) }).unwrap();
    let mut agg = finegrain::model::LinearAggregator::zeros(2);
    agg.weights = vec![rng.random_range(-3.0..3.0), 1.0 / 3.0];
    agg.bias = -0.1;
    let model = RewardModel::from_parts(ModelKind::Cbm, stage1, Some(agg), vec!["a".into(), "b".into()]).unwrap();
    let text = model_to_string(&model).unwrap();
    let back = model_from_str(&text).unwrap();
    assert_eq!(back, model);
    assert_eq!(model_to_string(&back).unwrap(), text);
    for _ in 0..50 {
        let x: Vec<f64> = (0..3).map(|_| rng.random_range(-5.0..5.0)).collect();
        assert_eq!(model.score(&x).unwrap().to_bits(), back.score(&x).unwrap().to_bits());
    }
}

#[test]
fn reward_model_rejects_mismatched_parts() {
    let stage1 = MlpModel::init(MlpConfig { hidden_dims: vec![4], ..MlpConfig::new(3, 2) }).unwrap();
    let agg = finegrain::model::LinearAggregator::zeros(3);
    assert!(RewardModel::from_parts(ModelKind::Cbm, stage1.clone(), Some(agg), vec!["a".into(), "b".into()]).is_err());
    assert!(RewardModel::from_parts(ModelKind::Coarse, stage1, None, vec![]).is_err());
}
