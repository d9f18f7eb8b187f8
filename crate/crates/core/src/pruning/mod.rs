//! Auxiliary-mask pruning and the ranking baselines it is compared with.

mod config;
mod maskfile;
mod ops;
mod pruner;

pub use crate::nn::apply_mask;
pub use config::{Algorithm, AuxRule, PruneConfig, Ste};
pub use maskfile::{model_masks, read_masks, write_masks, MASK_MAGIC};
pub use ops::{
    aux_step, layer_sparsities, magnitude_scores, mask_changes, model_sparsity, momentum_update, mop_importance,
    mop_refresh, mp_ratio_at, rank_prune, rank_prune_monotone, taylor_scores, Criterion, ImportanceScore,
};
pub use pruner::{finetune_step_fixed_mask, Pruner};
