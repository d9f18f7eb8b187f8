//! Per-layer pruning primitives.

use ndarray::{Array2, ArrayView2, Zip};

use super::config::{AuxRule, PruneConfig};
use crate::nn::{MaskedLayer, RecModel};

/// Which criterion produced an [`ImportanceScore`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Criterion {
    Magnitude,
    Taylor,
    Momentum,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ImportanceScore {
    pub scores: Array2<f64>,
    pub criterion: Criterion,
}

pub fn magnitude_scores(layer: &MaskedLayer) -> ImportanceScore {
    ImportanceScore { scores: layer.theta().mapv(f64::abs), criterion: Criterion::Magnitude }
}

/// `|g_i · θ_i|`, the first-order estimate of the loss change from zeroing θ_i.
pub fn taylor_scores(theta: ArrayView2<'_, f64>, grad_masked: ArrayView2<'_, f64>) -> ImportanceScore {
    assert_eq!(theta.dim(), grad_masked.dim(), "gradient and θ must share a shape");
    let scores = Zip::from(&grad_masked).and(&theta).map_collect(|&g, &t| (g * t).abs());
    ImportanceScore { scores, criterion: Criterion::Taylor }
}

fn l1(values: impl Iterator<Item = f64>) -> f64 {
    values.map(f64::abs).sum()
}

/// One auxiliary-parameter update from the layer's current `grad_masked`.
/// θ is left untouched.
pub fn aux_step(layer: &mut MaskedLayer, cfg: &PruneConfig) {
    let eps = cfg.aux_lr;
    let ste = cfg.ste;
    let theta = &layer.param.values;
    let grad = &layer.grad_masked;
    match cfg.aux_rule {
        AuxRule::Vanilla => {
            Zip::from(&mut layer.aux).and(theta).and(grad).for_each(|a, &t, &g| {
                let q = ste.q(*a);
                *a -= eps * (g * t * q + cfg.lambda * q);
            });
        }
        AuxRule::Rescaled | AuxRule::Unscaled => {
            let (taylor_norm, mag_norm) = if cfg.aux_rule == AuxRule::Rescaled {
                (l1(Zip::from(grad).and(theta).map_collect(|&g, &t| g * t).into_iter()), l1(theta.iter().copied()))
            } else {
                (1.0, 1.0)
            };
            let use_taylor = taylor_norm > 0.0;
            let use_mag = mag_norm > 0.0;
            Zip::from(&mut layer.aux).and(theta).and(grad).for_each(|a, &t, &g| {
                let g1 = if use_taylor { -(g * t).abs() / taylor_norm } else { 0.0 };
                let g2 = if use_mag { -t.abs() / mag_norm } else { 0.0 };
                *a -= eps * (cfg.w1 * g1 + cfg.w2 * g2 + cfg.lambda) * ste.q(*a);
            });
        }
    }
}

/// Linear ramp `min(target, target · step / phase)`.
pub fn mp_ratio_at(step: u64, cfg: &PruneConfig) -> f64 {
    if cfg.prune_phase_samples == 0 || step >= cfg.prune_phase_samples {
        return cfg.target_sparsity;
    }
    (cfg.target_sparsity * step as f64 / cfg.prune_phase_samples as f64).min(cfg.target_sparsity)
}

/// Flat indices ordered from least to most important; ties keep flat order.
fn ascending_order(scores: &Array2<f64>) -> Vec<usize> {
    let flat: Vec<f64> = scores.iter().copied().collect();
    let mut idx: Vec<usize> = (0..flat.len()).collect();
    idx.sort_by(|&i, &j| flat[i].total_cmp(&flat[j]).then(i.cmp(&j)));
    idx
}

fn set_mask_from_order(layer: &mut MaskedLayer, order: &[usize], pruned: usize) {
    let cols = layer.aux.ncols();
    for (rank, &flat) in order.iter().enumerate() {
        layer.aux[(flat / cols, flat % cols)] = if rank < pruned { -1.0 } else { 1.0 };
    }
}

/// Prunes the ⌊ratio·count⌋ lowest-scoring entries (lower flat index first on
/// ties) by setting their aux to −1; every other entry gets +1.
pub fn rank_prune(layer: &mut MaskedLayer, scores: &ImportanceScore, ratio: f64) {
    assert_eq!(scores.scores.dim(), layer.aux.dim(), "scores must match the layer shape");
    let pruned = (ratio * layer.len() as f64).floor() as usize;
    if pruned == 0 && ratio == 0.0 {
        return;
    }
    let order = ascending_order(&scores.scores);
    set_mask_from_order(layer, &order, pruned);
}

/// Like [`rank_prune`] but never revives: already-pruned entries rank below
/// everything else, so the pruned set only grows.
pub fn rank_prune_monotone(layer: &mut MaskedLayer, scores: &ImportanceScore, ratio: f64) {
    let mut s = scores.scores.clone();
    Zip::from(&mut s).and(&layer.aux).for_each(|s, &a| {
        if a <= 0.0 {
            *s = f64::NEG_INFINITY;
        }
    });
    let already = layer.pruned_count();
    let target = (ratio * layer.len() as f64).floor() as usize;
    if target <= already {
        return;
    }
    let order = ascending_order(&s);
    set_mask_from_order(layer, &order, target);
}

/// `s ← decay·s + (1−decay)·g` on the gradient with respect to the effective weight.
pub fn momentum_update(layer: &mut MaskedLayer, decay: f64) {
    Zip::from(&mut layer.momentum).and(&layer.grad_masked).for_each(|s, &g| {
        *s = decay * *s + (1.0 - decay) * g;
    });
}

/// `w₁|θ|/‖θ‖₁ + w₂|s|/‖S‖₁`; a zero momentum norm drops the second term.
pub fn mop_importance(layer: &MaskedLayer, w1: f64, w2: f64) -> ImportanceScore {
    let tn = l1(layer.theta().iter().copied());
    let sn = l1(layer.momentum.iter().copied());
    let scores = Zip::from(layer.theta()).and(&layer.momentum).map_collect(|&t, &s| {
        let mag = if tn > 0.0 { w1 * t.abs() / tn } else { 0.0 };
        let mom = if sn > 0.0 { w2 * s.abs() / sn } else { 0.0 };
        mag + mom
    });
    ImportanceScore { scores, criterion: Criterion::Momentum }
}

/// Rebuilds the mask keeping the top `1 − target_sparsity` entries by MoP
/// importance. Pruned entries with growing momentum may come back.
pub fn mop_refresh(layer: &mut MaskedLayer, cfg: &PruneConfig) {
    let scores = mop_importance(layer, cfg.w1, cfg.w2);
    mop_refresh_to(layer, &scores, cfg.target_sparsity);
}

pub(crate) fn mop_refresh_to(layer: &mut MaskedLayer, scores: &ImportanceScore, ratio: f64) {
    let pruned = (ratio * layer.len() as f64).floor() as usize;
    let order = ascending_order(&scores.scores);
    set_mask_from_order(layer, &order, pruned);
}

/// Pruned count over maskable count across all FC layers; biases and
/// embeddings are excluded.
pub fn model_sparsity(model: &RecModel) -> f64 {
    let (pruned, total) = model
        .masked_layers()
        .fold((0usize, 0usize), |(p, t), l| (p + l.pruned_count(), t + l.len()));
    if total == 0 {
        0.0
    } else {
        pruned as f64 / total as f64
    }
}

/// Per-layer sparsity in `fc_layers` order; unmasked layers report 0.
pub fn layer_sparsities(model: &RecModel) -> Vec<f64> {
    model.fc_layers().map(|l| l.as_masked().map_or(0.0, MaskedLayer::sparsity)).collect()
}

/// Number of entries whose pruned/alive state differs between two models.
pub fn mask_changes(a: &RecModel, b: &RecModel) -> usize {
    a.masked_layers()
        .zip(b.masked_layers())
        .map(|(x, y)| Zip::from(&x.aux).and(&y.aux).fold(0, |n, &p, &q| n + ((p > 0.0) != (q > 0.0)) as usize))
        .sum()
}
