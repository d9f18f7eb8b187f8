use d2s_core::nn::{Adagrad, Batch, CategoricalFeature, DenseParam, Layer, MaskedLayer, ModelConfig, RecModel};
use d2s_core::pruning::*;
use ndarray::{array, Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn layer(theta: Array2<f64>, aux: Array2<f64>) -> MaskedLayer {
    let bias = Array1::zeros(theta.nrows());
    let mut l = MaskedLayer::from_dense(DenseParam::from_values(theta, bias));
    l.aux = aux;
    l
}

fn cfg(w1: f64, w2: f64, lambda: f64, eps: f64) -> PruneConfig {
    PruneConfig { w1, w2, lambda, aux_lr: eps, ..PruneConfig::default() }
}

#[test]
fn apply_mask_examples() {
    assert_eq!(apply_mask(array![[0.5, 0.7]].view(), array![[1.0, -1.0]].view()), array![[0.5, 0.0]]);
    assert_eq!(apply_mask(array![[0.5, 0.7]].view(), array![[2.0, 0.1]].view()), array![[0.5, 0.7]]);
    assert_eq!(apply_mask(array![[0.3]].view(), array![[0.0]].view()), array![[0.0]]);
}

#[test]
fn taylor_score_examples() {
    let s = taylor_scores(array![[1.0, -3.0]].view(), array![[0.2, 0.1]].view());
    assert!((s.scores[(0, 0)] - 0.2).abs() < 1e-15 && (s.scores[(0, 1)] - 0.3).abs() < 1e-15);
    let zero = taylor_scores(array![[1.0, -3.0]].view(), array![[0.0, 0.0]].view());
    assert!(zero.scores.iter().all(|&v| v == 0.0));
    let flipped = taylor_scores(array![[-1.0, 3.0]].view(), array![[0.2, -0.1]].view());
    assert_eq!(flipped.scores, s.scores);
}

#[test]
fn aux_step_pure_penalty() {
    let mut l = layer(array![[1.0, 1.0]], array![[0.5, -0.2]]);
    aux_step(&mut l, &cfg(0.0, 0.0, 1.0, 0.1));
    assert_eq!(l.aux, array![[0.5 - 0.1, -0.2 - 0.1]]);
    assert!((l.aux[(0, 0)] - 0.4).abs() < 1e-15 && (l.aux[(0, 1)] + 0.3).abs() < 1e-15);
}

#[test]
fn aux_step_magnitude_only() {
    let mut l = layer(array![[2.0, 2.0]], array![[0.1, 0.1]]);
    aux_step(&mut l, &cfg(0.0, 1.0, 0.0, 0.1));
    assert!((l.aux[(0, 0)] - 0.15).abs() < 1e-15 && (l.aux[(0, 1)] - 0.15).abs() < 1e-15);
}

#[test]
fn aux_step_combined_rescaled() {
    let mut l = layer(array![[1.0, -3.0]], array![[0.1, 0.1]]);
    l.grad_masked = array![[0.2, 0.1]];
    let before = l.param.clone();
    aux_step(&mut l, &cfg(0.5, 0.5, 1.0, 0.1));
    assert!((l.aux[(0, 0)] - 0.0325).abs() < 1e-15, "{}", l.aux[(0, 0)]);
    assert!((l.aux[(0, 1)] - 0.0675).abs() < 1e-15, "{}", l.aux[(0, 1)]);
    assert_eq!(l.param, before);
}

#[test]
fn zero_gradient_skips_taylor_term() {
    let mut l = layer(array![[1.0, -3.0]], array![[0.1, 0.1]]);
    aux_step(&mut l, &cfg(1.0, 0.0, 0.0, 0.1));
    assert_eq!(l.aux, array![[0.1, 0.1]]);
}

#[test]
fn unscaled_and_vanilla_rules() {
    let mut l = layer(array![[1.0, -3.0]], array![[0.1, 0.1]]);
    l.grad_masked = array![[0.2, 0.1]];
    let mut c = cfg(0.5, 0.5, 1.0, 0.1);
    c.aux_rule = AuxRule::Unscaled;
    aux_step(&mut l, &c);
    // a − ε(w₁·(−|gθ|) + w₂·(−|θ|) + λ)
    assert!((l.aux[(0, 0)] - (0.1 - 0.1 * (-0.1 - 0.5 + 1.0))).abs() < 1e-15);
    assert!((l.aux[(0, 1)] - (0.1 - 0.1 * (-0.15 - 1.5 + 1.0))).abs() < 1e-15);

    let mut l = layer(array![[1.0, -3.0]], array![[0.1, -0.1]]);
    l.grad_masked = array![[0.2, 0.1]];
    c.aux_rule = AuxRule::Vanilla;
    aux_step(&mut l, &c);
    // signed Taylor term: a − ε(gθ + λ)
    assert!((l.aux[(0, 0)] - (0.1 - 0.1 * (0.2 + 1.0))).abs() < 1e-15);
    assert!((l.aux[(0, 1)] - (-0.1 - 0.1 * (-0.3 + 1.0))).abs() < 1e-15);
}

#[test]
fn linear_ste_revives_pruned_weight() {
    // a strongly important weight sitting just below the threshold
    let mut l = layer(array![[5.0, 0.01]], array![[-0.01, 0.5]]);
    l.grad_masked = array![[1.0, 0.0]];
    let c = cfg(0.5, 0.5, 0.1, 0.1);
    assert!(l.aux[(0, 0)] <= 0.0);
    aux_step(&mut l, &c);
    assert!(l.aux[(0, 0)] > 0.0, "Linear STE must be able to revive: a = {}", l.aux[(0, 0)]);

    let mut l = layer(array![[5.0, 0.01]], array![[-0.01, 0.5]]);
    l.grad_masked = array![[1.0, 0.0]];
    let c = PruneConfig { ste: Ste::Relu, ..c };
    aux_step(&mut l, &c);
    assert_eq!(l.aux[(0, 0)], -0.01);
}

#[test]
fn relu_ste_never_revives_over_ten_thousand_steps() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let theta = Array2::from_shape_fn((8, 16), |_| rng.random_range(-1.0..1.0));
    let aux = Array2::from_shape_fn((8, 16), |_| rng.random_range(-0.05..0.05));
    let mut l = layer(theta, aux);
    let c = PruneConfig { ste: Ste::Relu, ..cfg(0.5, 0.5, 0.002, 0.05) };
    let mut ever_pruned = l.aux.mapv(|a| a <= 0.0);
    for _ in 0..10_000 {
        l.grad_masked = Array2::from_shape_fn((8, 16), |_| rng.random_range(-2.0..2.0));
        aux_step(&mut l, &c);
        for (p, &a) in ever_pruned.iter_mut().zip(&l.aux) {
            assert!(!(*p && a > 0.0), "a pruned entry came back under ReLU STE");
            *p |= a <= 0.0;
        }
    }
    assert!(ever_pruned.iter().any(|&p| p));
}

#[test]
fn mp_ratio_ramp() {
    let c = PruneConfig { target_sparsity: 0.8, prune_phase_samples: 1000, ..PruneConfig::default() };
    assert_eq!(mp_ratio_at(0, &c), 0.0);
    assert!((mp_ratio_at(500, &c) - 0.4).abs() < 1e-15);
    assert_eq!(mp_ratio_at(1000, &c), 0.8);
    assert_eq!(mp_ratio_at(5000, &c), 0.8);
}

fn score(v: Array2<f64>) -> ImportanceScore {
    ImportanceScore { scores: v, criterion: Criterion::Magnitude }
}

#[test]
fn rank_prune_examples() {
    let mut l = layer(array![[4.0, 3.0, 2.0, 1.0]], Array2::from_elem((1, 4), 0.5));
    rank_prune(&mut l, &score(array![[4.0, 3.0, 2.0, 1.0]]), 0.75);
    assert_eq!(l.active_mask(), array![[true, false, false, false]]);
    assert_eq!(l.sparsity(), 0.75);

    let mut l = layer(array![[4.0, 3.0]], array![[0.5, -0.3]]);
    rank_prune(&mut l, &score(array![[4.0, 3.0]]), 0.0);
    assert_eq!(l.aux, array![[0.5, -0.3]]);

    let mut l = layer(Array2::ones((2, 3)), Array2::from_elem((2, 3), 0.5));
    rank_prune(&mut l, &score(Array2::ones((2, 3))), 0.5);
    assert_eq!(l.active_mask(), array![[false, false, false], [true, true, true]]);
}

#[test]
fn rank_prune_hits_exact_counts() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..200 {
        let (r, c) = (rng.random_range(1..12), rng.random_range(1..12));
        let ratio: f64 = rng.random_range(0.0..1.0);
        let scores = Array2::from_shape_fn((r, c), |_| rng.random_range(0..4) as f64);
        let mut l = layer(Array2::ones((r, c)), Array2::from_elem((r, c), 0.5));
        rank_prune(&mut l, &score(scores.clone()), ratio);
        assert_eq!(l.pruned_count(), (ratio * (r * c) as f64).floor() as usize);
        let max_pruned = l.aux.iter().zip(&scores).filter(|(a, _)| **a <= 0.0).map(|(_, s)| *s).fold(f64::MIN, f64::max);
        let min_kept = l.aux.iter().zip(&scores).filter(|(a, _)| **a > 0.0).map(|(_, s)| *s).fold(f64::MAX, f64::min);
        assert!(max_pruned <= min_kept);
    }
}

#[test]
fn momentum_examples() {
    let mut l = layer(array![[1.0]], array![[0.5]]);
    l.grad_masked = array![[1.0]];
    momentum_update(&mut l, 0.99);
    assert!((l.momentum[(0, 0)] - 0.01).abs() < 1e-15);
    l.grad_masked = array![[0.0]];
    let before = l.momentum[(0, 0)];
    momentum_update(&mut l, 0.99);
    momentum_update(&mut l, 0.99);
    assert!((l.momentum[(0, 0)] - before * 0.99 * 0.99).abs() < 1e-18);
    l.grad_masked = array![[3.0]];
    for _ in 0..5000 {
        momentum_update(&mut l, 0.99);
    }
    assert!((l.momentum[(0, 0)] - 3.0).abs() < 1e-12);
}

#[test]
fn mop_importance_examples() {
    let mut l = layer(array![[1.0, 3.0]], array![[0.5, 0.5]]);
    l.momentum = array![[0.2, 0.2]];
    let s = mop_importance(&l, 0.5, 0.5);
    assert!((s.scores[(0, 0)] - 0.375).abs() < 1e-15 && (s.scores[(0, 1)] - 0.625).abs() < 1e-15);

    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let theta = Array2::from_shape_fn((5, 7), |_| rng.random_range(-1.0..1.0));
    let mut l = layer(theta, Array2::from_elem((5, 7), 0.5));
    l.momentum = Array2::from_shape_fn((5, 7), |_| rng.random_range(-1.0..1.0));
    let mut a = l.clone();
    let mut b = l.clone();
    rank_prune(&mut a, &mop_importance(&l, 1.0, 0.0), 0.6);
    rank_prune(&mut b, &magnitude_scores(&l), 0.6);
    assert_eq!(a.active_mask(), b.active_mask());

    let mut l = layer(Array2::from_elem((2, 2), 0.7), Array2::from_elem((2, 2), 0.5));
    l.momentum = Array2::from_elem((2, 2), -0.1);
    let s = mop_importance(&l, 0.3, 0.7);
    assert!(s.scores.iter().all(|&v| (v - 0.25).abs() < 1e-15));
}

#[test]
fn mop_refresh_examples() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let theta = Array2::from_shape_fn((10, 10), |_| rng.random_range(-1.0..1.0));
    let mut l = layer(theta, Array2::from_elem((10, 10), 0.5));
    l.momentum = Array2::from_shape_fn((10, 10), |_| rng.random_range(-0.1..0.1));
    let c = PruneConfig { algorithm: Algorithm::Mop, target_sparsity: 0.8, w1: 0.8, w2: 0.2, ..PruneConfig::default() };
    mop_refresh(&mut l, &c);
    assert_eq!(l.len() - l.pruned_count(), 20);
    let first = l.aux.clone();
    mop_refresh(&mut l, &c);
    assert_eq!(l.aux, first);
    // a pruned entry whose momentum dominates the layer comes back
    let (pos, _) = l.aux.indexed_iter().find(|(_, &a)| a <= 0.0).unwrap();
    l.momentum[pos] = 1e3;
    mop_refresh(&mut l, &c);
    assert!(l.aux[pos] > 0.0);
    assert_eq!(l.len() - l.pruned_count(), 20);
}

fn toy_model(seed: u64) -> RecModel {
    let cfg = ModelConfig {
        dense_dim: 3,
        bottom_widths: vec![4, 2],
        table_rows: vec![5, 5],
        embedding_dim: 2,
        top_widths: vec![6, 1],
        ..ModelConfig::default()
    };
    RecModel::new(cfg, seed).unwrap().into_masked()
}

fn toy_batch(seed: u64, n: usize, t: u64) -> Batch {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dense = Array2::from_shape_fn((n, 3), |_| rng.random_range(-1.0..1.0));
    let categorical = (0..2)
        .map(|_| CategoricalFeature::from_bags((0..n).map(|_| vec![rng.random_range(0..5u32)])))
        .collect();
    let labels = (0..n).map(|_| rng.random_range(0..2u8)).collect();
    Batch { dense, categorical, labels, virtual_time: t }
}

#[test]
fn fixed_mask_step_keeps_pruned_theta_and_aux() {
    let mut m = toy_model(1);
    for l in m.masked_layers_mut() {
        let cols = l.aux.ncols();
        for ((i, j), a) in l.aux.indexed_iter_mut() {
            if (i * cols + j) % 3 == 0 {
                *a = -1.0;
            }
        }
    }
    let before = m.clone();
    let opt = Adagrad::new(0.1, 1e-8).unwrap();
    for k in 0..5 {
        finetune_step_fixed_mask(&mut m, &toy_batch(k, 16, k * 16), &opt).unwrap();
    }
    let mut moved = 0;
    for (a, b) in before.masked_layers().zip(m.masked_layers()) {
        assert_eq!(a.aux, b.aux);
        for ((ta, tb), &alive) in a.theta().iter().zip(b.theta()).zip(&a.active_mask()) {
            if alive {
                moved += (ta.to_bits() != tb.to_bits()) as usize;
            } else {
                assert_eq!(ta.to_bits(), tb.to_bits());
            }
        }
    }
    assert!(moved > 0);
}

#[test]
fn dense_mask_step_equals_plain_step() {
    let masked = toy_model(2);
    let mut plain = masked.clone();
    for l in plain.bottom.iter_mut().chain(plain.top.iter_mut()) {
        *l = Layer::Dense(l.param().clone());
    }
    let mut masked = masked;
    let opt = Adagrad::new(0.1, 1e-8).unwrap();
    let b = toy_batch(7, 32, 0);
    finetune_step_fixed_mask(&mut masked, &b, &opt).unwrap();
    plain.train_step(&b, &opt).unwrap();
    for (x, y) in masked.fc_layers().zip(plain.fc_layers()) {
        assert_eq!(x.param().values, y.param().values);
        assert_eq!(x.param().bias, y.param().bias);
    }
    assert_eq!(masked.tables, plain.tables);
}

#[test]
fn fully_pruned_layer_updates_only_its_bias() {
    let mut m = toy_model(3);
    m.top[1].as_masked_mut().unwrap().aux.fill(-1.0);
    let before = m.top[1].as_masked().unwrap().clone();
    let opt = Adagrad::new(0.1, 1e-8).unwrap();
    finetune_step_fixed_mask(&mut m, &toy_batch(8, 32, 0), &opt).unwrap();
    let after = m.top[1].as_masked().unwrap();
    assert_eq!(after.param.values, before.param.values);
    assert_ne!(after.param.bias, before.param.bias);
}

#[test]
fn sparsity_examples() {
    let l = layer(array![[1.0, 1.0, 1.0, 1.0]], array![[1.0, 0.0, -1.0, -2.0]]);
    assert_eq!(l.sparsity(), 0.75);
    assert_eq!(model_sparsity(&toy_model(4)), 0.0);

    let mut m = toy_model(5);
    // resize to layers of 100 and 300 entries
    let mk = |r, c, pruned: usize| {
        let mut l = layer(Array2::ones((r, c)), Array2::from_elem((r, c), 1.0));
        l.aux.iter_mut().take(pruned).for_each(|a| *a = -1.0);
        Layer::Masked(l)
    };
    m.bottom = vec![mk(10, 10, 50)];
    m.top = vec![mk(30, 10, 270)];
    assert!((model_sparsity(&m) - 0.8).abs() < 1e-15);
    assert_eq!(layer_sparsities(&m), vec![0.5, 0.9]);
}

#[test]
fn magnitude_pruner_reaches_target_monotonically() {
    let mut m = toy_model(6);
    let c = PruneConfig { algorithm: Algorithm::Mp, target_sparsity: 0.5, prune_phase_samples: 320, ..PruneConfig::default() };
    let mut p = Pruner::new(c, &m, false).unwrap();
    let opt = Adagrad::new(0.05, 1e-8).unwrap();
    let mut last = m.clone();
    for k in 0..30u64 {
        p.step(&mut m, &toy_batch(100 + k, 16, k * 16), &opt).unwrap();
        for (a, b) in last.masked_layers().zip(m.masked_layers()) {
            for (&x, &y) in a.aux.iter().zip(&b.aux) {
                assert!(!(x <= 0.0 && y > 0.0), "magnitude pruning revived an entry");
            }
        }
        last = m.clone();
    }
    for l in m.masked_layers() {
        assert_eq!(l.pruned_count(), (0.5 * l.len() as f64).floor() as usize);
    }
    assert!(Pruner::new(PruneConfig { algorithm: Algorithm::Tp, ..PruneConfig::default() }, &m, true).is_err());
}

#[test]
fn aux_pruner_freezes_mask_after_phase() {
    let mut m = toy_model(7);
    let c = PruneConfig { lambda: 0.2, aux_lr: 0.5, prune_phase_samples: 160, ..PruneConfig::default() };
    let mut p = Pruner::new(c.clone(), &m, false).unwrap();
    let opt = Adagrad::new(0.05, 1e-8).unwrap();
    for k in 0..10u64 {
        p.step(&mut m, &toy_batch(200 + k, 16, k * 16), &opt).unwrap();
    }
    assert!(!p.in_prune_phase());
    assert!(model_sparsity(&m) > 0.0);
    let frozen = model_masks(&m);
    for k in 10..20u64 {
        p.step(&mut m, &toy_batch(200 + k, 16, k * 16), &opt).unwrap();
    }
    assert_eq!(model_masks(&m), frozen);

    let mut adaptive = Pruner::new(c, &m, true).unwrap();
    let before = m.clone();
    for k in 20..40u64 {
        adaptive.step(&mut m, &toy_batch(200 + k, 16, k * 16), &opt).unwrap();
    }
    assert!(m.masked_layers().zip(before.masked_layers()).any(|(a, b)| a.aux != b.aux));
}

#[test]
fn mask_file_round_trips() {
    let mut m = toy_model(8);
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for l in m.masked_layers_mut() {
        l.aux.mapv_inplace(|_| rng.random_range(-1.0..1.0));
    }
    let masks = model_masks(&m);
    let mut bytes = Vec::new();
    write_masks(&mut bytes, &masks).unwrap();
    assert_eq!(read_masks(bytes.as_slice()).unwrap(), masks);
    assert!(read_masks(&bytes[..bytes.len() - 1]).is_err());
}
