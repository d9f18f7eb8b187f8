use ndarray::{Array2, Zip};

use super::config::{Algorithm, PruneConfig};
use super::ops::{
    aux_step, magnitude_scores, momentum_update, mop_importance, mop_refresh, mop_refresh_to, mp_ratio_at,
    rank_prune_monotone, ImportanceScore, Criterion,
};
use crate::error::{Error, Result};
use crate::nn::{Adagrad, Batch, RecModel};

/// One Adagrad step that only moves entries with `a > 0`; aux is untouched.
pub fn finetune_step_fixed_mask(model: &mut RecModel, batch: &Batch, opt: &Adagrad) -> Result<f64> {
    model.train_step(batch, opt)
}

/// Drives one pruning run: the pruning phase followed by either fixed-mask
/// fine-tuning or continued mask adaptation.
#[derive(Debug, Clone)]
pub struct Pruner {
    cfg: PruneConfig,
    adapt: bool,
    seen: u64,
    since_refresh: u64,
    taylor_ema: Vec<Array2<f64>>,
}

impl Pruner {
    /// `adapt` keeps updating the mask after the pruning phase (AUX and MoP only).
    pub fn new(cfg: PruneConfig, model: &RecModel, adapt: bool) -> Result<Self> {
        cfg.validate()?;
        if adapt && matches!(cfg.algorithm, Algorithm::Mp | Algorithm::Tp) {
            return Err(Error::Config(format!("{} has no mask-adaptation mode", cfg.algorithm.name())));
        }
        let layers: Vec<_> = model.masked_layers().collect();
        if layers.len() != model.fc_layers().count() {
            return Err(Error::State("pruning needs every FC layer masked".into()));
        }
        let taylor_ema = layers.iter().map(|l| Array2::zeros(l.aux.dim())).collect();
        Ok(Self { cfg, adapt, seen: 0, since_refresh: 0, taylor_ema })
    }

    pub fn config(&self) -> &PruneConfig {
        &self.cfg
    }

    pub fn samples_seen(&self) -> u64 {
        self.seen
    }

    pub fn in_prune_phase(&self) -> bool {
        self.seen < self.cfg.prune_phase_samples
    }

    /// Trains on one batch and updates the mask as the current phase requires.
    /// Returns the batch CE measured before the update.
    pub fn step(&mut self, model: &mut RecModel, batch: &Batch, opt: &Adagrad) -> Result<f64> {
        let pruning = self.in_prune_phase();
        if !pruning && !self.adapt {
            self.seen += batch.len() as u64;
            return finetune_step_fixed_mask(model, batch, opt);
        }
        let loss = model.compute_gradients(batch)?;
        self.seen += batch.len() as u64;
        match self.cfg.algorithm {
            Algorithm::Aux => {
                for layer in model.masked_layers_mut() {
                    aux_step(layer, &self.cfg);
                }
                model.apply_adagrad(opt);
            }
            Algorithm::Mp | Algorithm::Tp => {
                model.apply_adagrad(opt);
                let ratio = mp_ratio_at(self.seen, &self.cfg);
                let decay = self.cfg.momentum_decay;
                let taylor = self.cfg.algorithm == Algorithm::Tp;
                for (layer, ema) in model.masked_layers_mut().zip(&mut self.taylor_ema) {
                    let scores = if taylor {
                        Zip::from(&mut *ema).and(&layer.grad_masked).and(&layer.param.values).for_each(|e, &g, &t| {
                            *e = decay * *e + (1.0 - decay) * (g * t).abs();
                        });
                        ImportanceScore { scores: ema.clone(), criterion: Criterion::Taylor }
                    } else {
                        magnitude_scores(layer)
                    };
                    rank_prune_monotone(layer, &scores, ratio);
                }
            }
            Algorithm::Mop => {
                let decay = self.cfg.momentum_decay;
                for layer in model.masked_layers_mut() {
                    momentum_update(layer, decay);
                }
                model.apply_adagrad(opt);
                if pruning {
                    let ratio = mp_ratio_at(self.seen, &self.cfg);
                    for layer in model.masked_layers_mut() {
                        let scores = mop_importance(layer, self.cfg.w1, self.cfg.w2);
                        mop_refresh_to(layer, &scores, ratio);
                    }
                    self.since_refresh = 0;
                } else {
                    self.since_refresh += batch.len() as u64;
                    if self.since_refresh >= self.cfg.refresh_interval {
                        for layer in model.masked_layers_mut() {
                            mop_refresh(layer, &self.cfg);
                        }
                        self.since_refresh = 0;
                    }
                }
            }
        }
        Ok(loss)
    }
}
