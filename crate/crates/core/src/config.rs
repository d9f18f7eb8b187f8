//! Experiment configuration file (TOML).

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::d2s::D2SConfig;
use crate::datastream::{mix_seed, DriftSchedule, StreamConfig};
use crate::error::{Error, Result};
use crate::eval::MetricsFormat;
use crate::kernels::BenchConfig;
use crate::nn::ModelConfig;
use crate::pruning::PruneConfig;

/// How the teacher drifts across the run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DriftConfig {
    /// Anchors spread evenly from stream position 0 to the end of the horizon.
    pub anchors: usize,
    pub magnitude: f64,
    pub popularity: f64,
}

impl Default for DriftConfig {
    fn default() -> Self {
        Self { anchors: 6, magnitude: 1.0, popularity: 0.3 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalConfig {
    /// Look-ahead window W in samples.
    pub lookahead_window: u64,
    /// Length of the frozen post-horizon evaluation as a fraction of T.
    pub post_horizon_fraction: f64,
    pub seeds: Vec<u64>,
    pub format: MetricsFormat,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self { lookahead_window: 25_000, post_horizon_fraction: 0.1, seeds: vec![0, 1, 2, 3, 4], format: MetricsFormat::Jsonl }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub model: ModelConfig,
    #[serde(default)]
    pub stream: StreamConfig,
    #[serde(default)]
    pub drift: DriftConfig,
    #[serde(default)]
    pub prune: PruneConfig,
    #[serde(default)]
    pub d2s: D2SConfig,
    #[serde(default)]
    pub eval: EvalConfig,
    #[serde(default)]
    pub bench: BenchConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            model: ModelConfig::default(),
            stream: StreamConfig::default(),
            drift: DriftConfig::default(),
            prune: PruneConfig::default(),
            d2s: D2SConfig::default(),
            eval: EvalConfig::default(),
            bench: BenchConfig::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config is always representable in TOML")
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.stream.validate()?;
        self.stream.check_model(&self.model)?;
        self.prune.validate()?;
        self.d2s.validate()?;
        if self.drift.anchors == 0 {
            return Err(Error::Config("drift.anchors must be at least 1".into()));
        }
        if self.eval.lookahead_window == 0 {
            return Err(Error::Config("eval.lookahead_window must be positive".into()));
        }
        if !(self.eval.post_horizon_fraction > 0.0) {
            return Err(Error::Config("eval.post_horizon_fraction must be positive".into()));
        }
        self.drift_schedule(0).map(|_| ())
    }

    /// SHA-256 over the canonical TOML rendering.
    pub fn content_hash(&self) -> String {
        let digest = Sha256::digest(self.to_toml().as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    /// Stream configuration for one run seed.
    pub fn stream_for(&self, seed: u64) -> StreamConfig {
        StreamConfig { seed: mix_seed(self.stream.seed ^ seed, 1), ..self.stream.clone() }
    }

    /// Drift anchors spread evenly over the stream positions the run touches.
    pub fn drift_schedule(&self, seed: u64) -> Result<DriftSchedule> {
        let span = self.d2s.stream_offset() + self.d2s.horizon;
        DriftSchedule::evenly_spaced(
            self.drift.anchors,
            span,
            self.drift.magnitude,
            self.drift.popularity,
            mix_seed(self.stream.seed ^ seed, 2),
        )
    }

    pub fn model_seed(&self, seed: u64) -> u64 {
        mix_seed(self.stream.seed ^ seed, 3)
    }
}
