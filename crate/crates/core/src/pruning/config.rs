use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algorithm {
    /// Auxiliary-mask pruning driven by a sparsity penalty.
    #[default]
    Aux,
    /// Gradual magnitude pruning.
    Mp,
    /// Gradual first-order Taylor pruning.
    Tp,
    /// Magnitude plus gradient-momentum ranking.
    Mop,
}

impl Algorithm {
    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Aux => "aux",
            Algorithm::Mp => "mp",
            Algorithm::Tp => "tp",
            Algorithm::Mop => "mop",
        }
    }
}

/// Fake gradient substituted for ∂𝕀(a>0)/∂a.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Ste {
    /// q(a) = 1: every entry moves, pruned ones can come back.
    #[default]
    Linear,
    /// q(a) = 𝕀(a>0): pruned entries are frozen forever.
    Relu,
}

impl Ste {
    pub fn q(self, a: f64) -> f64 {
        match self {
            Ste::Linear => 1.0,
            Ste::Relu => {
                if a > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }
}

/// Form of the auxiliary-parameter update.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AuxRule {
    /// `a −= ε(w₁ḡ₁ + w₂ḡ₂ + λ)` with both criteria L1-normalized per layer.
    #[default]
    Rescaled,
    /// Same criteria without normalization: `g₁ = −|g∘θ|`, `g₂ = −|θ|`.
    Unscaled,
    /// Signed Taylor term only: `a −= ε(g∘θ + λ)·q(a)`.
    Vanilla,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PruneConfig {
    pub algorithm: Algorithm,
    /// Sparsity penalty; larger values prune more (AUX only).
    pub lambda: f64,
    /// Weight of the Taylor criterion (AUX) or of magnitude (MoP).
    pub w1: f64,
    /// Weight of the magnitude criterion (AUX) or of momentum (MoP).
    pub w2: f64,
    /// Constant step size ε for the auxiliary parameters.
    pub aux_lr: f64,
    pub ste: Ste,
    pub aux_rule: AuxRule,
    /// Ranking-based algorithms prune to this fraction; AUX reaches its
    /// sparsity through `lambda` and ignores it.
    pub target_sparsity: f64,
    /// Length of the pruning phase in samples.
    pub prune_phase_samples: u64,
    pub momentum_decay: f64,
    /// MoP mask-adaptation period in samples.
    pub refresh_interval: u64,
}

impl Default for PruneConfig {
    fn default() -> Self {
        Self {
            algorithm: Algorithm::Aux,
            lambda: 1e-3,
            w1: 0.5,
            w2: 0.5,
            aux_lr: 0.01,
            ste: Ste::Linear,
            aux_rule: AuxRule::Rescaled,
            target_sparsity: 0.8,
            prune_phase_samples: 100_000,
            momentum_decay: 0.99,
            refresh_interval: 10_000,
        }
    }
}

impl PruneConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda >= 0.0) || !(self.w1 >= 0.0) || !(self.w2 >= 0.0) {
            return Err(Error::Config("lambda, w1 and w2 must be nonnegative".into()));
        }
        let uses_criteria = match self.algorithm {
            Algorithm::Aux => self.aux_rule != AuxRule::Vanilla,
            Algorithm::Mop => true,
            Algorithm::Mp | Algorithm::Tp => false,
        };
        if uses_criteria && self.w1 + self.w2 <= 0.0 {
            return Err(Error::Config("w1 + w2 must be positive".into()));
        }
        if !(self.aux_lr > 0.0) {
            return Err(Error::Config("aux_lr must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.target_sparsity) {
            return Err(Error::Config(format!("target_sparsity {} outside [0, 1)", self.target_sparsity)));
        }
        if !(self.momentum_decay > 0.0 && self.momentum_decay < 1.0) {
            return Err(Error::Config("momentum_decay must lie in (0, 1)".into()));
        }
        if self.refresh_interval == 0 {
            return Err(Error::Config("refresh_interval must be positive".into()));
        }
        Ok(())
    }
}
