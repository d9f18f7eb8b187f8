use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Timeline of incremental training and sparse refreshes, in samples.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct D2SConfig {
    /// Samples per incremental step (Δ).
    pub delta: u64,
    /// Samples served after the first deployment (T); a multiple of Δ.
    pub horizon: u64,
    /// Serving periods per sparse refresh.
    pub r: u64,
    /// Periods between the prune source snapshot and the deployment.
    pub p: u64,
    /// Share of each prune window spent learning the mask; the rest is
    /// fixed-mask fine-tuning.
    pub prune_fraction: f64,
    /// Dense training before the first prune window.
    pub pretrain_samples: u64,
    pub learning_rate: f64,
    pub adagrad_eps: f64,
    /// Relative-CE gap that triggers an extra refresh after two consecutive
    /// windows above it. Unset means refreshes follow `r` only.
    pub monitor_threshold: Option<f64>,
}

impl Default for D2SConfig {
    fn default() -> Self {
        Self {
            delta: 50_000,
            horizon: 2_000_000,
            r: 8,
            p: 2,
            prune_fraction: 0.5,
            pretrain_samples: 400_000,
            learning_rate: 0.02,
            adagrad_eps: 1e-8,
            monitor_threshold: None,
        }
    }
}

impl D2SConfig {
    pub fn validate(&self) -> Result<()> {
        if self.delta == 0 || self.horizon == 0 || self.horizon % self.delta != 0 {
            return Err(Error::Config(format!(
                "horizon {} must be a positive multiple of delta {}",
                self.horizon, self.delta
            )));
        }
        if self.r == 0 {
            return Err(Error::Config("r must be at least 1".into()));
        }
        if self.p == 0 || self.p > self.r {
            return Err(Error::Config(format!("p = {} must satisfy 1 <= p <= r = {}", self.p, self.r)));
        }
        if !(0.0..=1.0).contains(&self.prune_fraction) {
            return Err(Error::Config("prune_fraction must lie in [0, 1]".into()));
        }
        if !(self.learning_rate > 0.0) || !(self.adagrad_eps > 0.0) {
            return Err(Error::Config("learning_rate and adagrad_eps must be positive".into()));
        }
        if let Some(t) = self.monitor_threshold {
            if !(t >= 0.0) {
                return Err(Error::Config("monitor_threshold must be nonnegative".into()));
            }
        }
        Ok(())
    }

    /// Samples of the prune window spent in the mask-learning phase.
    pub fn prune_phase_samples(&self) -> u64 {
        (self.prune_fraction * (self.p * self.delta) as f64).round() as u64
    }

    /// Stream position of experiment time 0 (the first deployment).
    pub fn stream_offset(&self) -> u64 {
        self.pretrain_samples + self.p * self.delta
    }
}
