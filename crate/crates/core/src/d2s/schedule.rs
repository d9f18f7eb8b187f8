use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::config::D2SConfig;
use crate::error::Result;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum JobKind {
    DenseIncr,
    SparseIncr,
    PruneFinetune,
}

impl JobKind {
    pub fn name(self) -> &'static str {
        match self {
            JobKind::DenseIncr => "dense-incr",
            JobKind::SparseIncr => "sparse-incr",
            JobKind::PruneFinetune => "prune-finetune",
        }
    }
}

/// One training job in experiment time (0 = first sparse deployment).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Job {
    pub kind: JobKind,
    /// Sparse generation the job belongs to; `None` for the dense lineage.
    pub generation: Option<usize>,
    pub source_time: i64,
    pub window: (i64, i64),
    pub output_time: i64,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct JobLog {
    pub jobs: Vec<Job>,
}

impl JobLog {
    pub fn push(&mut self, job: Job) {
        self.jobs.push(job);
    }

    /// Jobs of one lineage: `None` is the dense model, `Some(k)` sparse generation k.
    pub fn lineage(&self, generation: Option<usize>) -> impl Iterator<Item = &Job> {
        self.jobs.iter().filter(move |j| j.generation == generation)
    }

    pub fn prune_jobs(&self) -> impl Iterator<Item = &Job> {
        self.jobs.iter().filter(|j| j.kind == JobKind::PruneFinetune)
    }

    /// Deployment times of every sparse generation in order.
    pub fn deployments(&self) -> Vec<i64> {
        self.prune_jobs().map(|j| j.output_time).collect()
    }

    /// Plain-text audit table.
    pub fn to_table(&self) -> String {
        let mut s = String::from("kind,generation,source_time,window_start,window_end,output_time\n");
        for j in &self.jobs {
            let g = j.generation.map(|g| g.to_string()).unwrap_or_default();
            let _ = writeln!(
                s,
                "{},{},{},{},{},{}",
                j.kind.name(),
                g,
                j.source_time,
                j.window.0,
                j.window.1,
                j.output_time
            );
        }
        s
    }
}

/// Times `(k·r − p)·Δ` at which generation `k` is pruned from the dense model,
/// for every `k` whose deployment `k·r·Δ` falls before the horizon.
pub fn prune_sources(cfg: &D2SConfig, r: u64) -> Vec<(usize, i64, i64)> {
    let (delta, p, r) = (cfg.delta as i64, cfg.p as i64, r as i64);
    (0..)
        .map(|k: i64| (k, k * r * delta))
        .take_while(|&(_, deploy)| deploy < cfg.horizon as i64)
        .map(|(k, deploy)| (k as usize, (k * r - p) * delta, deploy))
        .collect()
}

/// Full job skeleton: pretraining and dense increments over `[−offset, T)`,
/// one prune-finetune job per generation, and the sparse increments that
/// serve each generation until the next deployment or the horizon.
pub fn d2s_schedule(cfg: &D2SConfig) -> Result<JobLog> {
    cfg.validate()?;
    let delta = cfg.delta as i64;
    let p = cfg.p as i64;
    let horizon = cfg.horizon as i64;
    let mut log = JobLog::default();
    let start = -(p * delta);
    if cfg.pretrain_samples > 0 {
        let pre = start - cfg.pretrain_samples as i64;
        log.push(Job { kind: JobKind::DenseIncr, generation: None, source_time: pre, window: (pre, start), output_time: start });
    }
    let mut t = start;
    while t < horizon {
        log.push(Job { kind: JobKind::DenseIncr, generation: None, source_time: t, window: (t, t + delta), output_time: t + delta });
        t += delta;
    }
    let gens = prune_sources(cfg, cfg.r);
    for (i, &(k, source, deploy)) in gens.iter().enumerate() {
        log.push(Job { kind: JobKind::PruneFinetune, generation: Some(k), source_time: source, window: (source, deploy), output_time: deploy });
        let end = gens.get(i + 1).map_or(horizon, |g| g.2);
        let mut t = deploy;
        while t < end {
            log.push(Job { kind: JobKind::SparseIncr, generation: Some(k), source_time: t, window: (t, t + delta), output_time: t + delta });
            t += delta;
        }
    }
    Ok(log)
}
