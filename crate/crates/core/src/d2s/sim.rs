//! Sequential virtual-time simulation of dense and sparse lineages.

use std::str::FromStr;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::monitor::divergence_monitor;
use super::schedule::{prune_sources, Job, JobKind, JobLog};
use super::store::SnapshotStore;
use crate::config::ExperimentConfig;
use crate::datastream::DataStream;
use crate::error::{Error, Result};
use crate::eval::{normalized_ce, relative_ce, window_ce, FinalEval, MetricsRecord};
use crate::nn::{Adagrad, Batch, RecModel};
use crate::pruning::{layer_sparsities, model_masks, model_sparsity, Algorithm, PruneConfig, Pruner};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Variant {
    /// The dense model itself.
    DenseOnly,
    /// Pruned once at time 0, then fine-tuned with a frozen mask.
    FixedMask,
    /// Pruned once, then mask and weights keep learning together.
    AuxAdapt,
    /// Pruned once by momentum ranking, mask rebuilt every refresh interval.
    MopAdapt,
    /// Re-pruned from the dense model every `r` periods.
    D2s,
}

impl Variant {
    pub const ALL: [Variant; 5] = [Variant::DenseOnly, Variant::FixedMask, Variant::AuxAdapt, Variant::MopAdapt, Variant::D2s];

    pub fn name(self) -> &'static str {
        match self {
            Variant::DenseOnly => "dense-only",
            Variant::FixedMask => "fixed-mask",
            Variant::AuxAdapt => "aux-adapt",
            Variant::MopAdapt => "mop-adapt",
            Variant::D2s => "d2s",
        }
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Variant::ALL.into_iter().find(|v| v.name() == s).ok_or_else(|| {
            let names: Vec<&str> = Variant::ALL.iter().map(|v| v.name()).collect();
            Error::Config(format!("unknown variant {s:?}; expected one of {}", names.join(", ")))
        })
    }
}

/// One sparse lineage family simulated alongside the shared dense model.
#[derive(Debug, Clone, PartialEq)]
pub struct Track {
    pub name: String,
    pub variant: Variant,
    pub prune: PruneConfig,
    /// Refresh period override for D2S tracks (defaults to `d2s.r`).
    pub refresh_periods: Option<u64>,
}

impl Track {
    pub fn new(variant: Variant, prune: PruneConfig) -> Self {
        let prune = match variant {
            Variant::MopAdapt => PruneConfig { algorithm: Algorithm::Mop, ..prune },
            _ => prune,
        };
        Self { name: variant.name().to_string(), variant, prune, refresh_periods: None }
    }

    pub fn named(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }

    pub fn refresh_every(mut self, periods: u64) -> Self {
        self.refresh_periods = Some(periods);
        self
    }
}

#[derive(Debug, Clone)]
pub struct TrackOutput {
    pub name: String,
    pub variant: Variant,
    pub records: Vec<MetricsRecord>,
    pub final_eval: FinalEval,
    /// Model serving at the horizon.
    pub model: RecModel,
    pub jobs: JobLog,
}

#[derive(Debug, Clone)]
pub struct SimOutput {
    pub seed: u64,
    pub dense: TrackOutput,
    pub tracks: Vec<TrackOutput>,
    pub snapshots: SnapshotStore,
}

/// Trains `model` once over `batches`, which must cover `[start, end)` in
/// order; the model must have consumed data exactly up to `start`.
pub fn train_window<F>(model: &mut RecModel, batches: &[Batch], start: u64, end: u64, mut step: F) -> Result<()>
where
    F: FnMut(&mut RecModel, &Batch) -> Result<f64>,
{
    if model.time != start as i64 {
        return Err(Error::Schedule(format!(
            "lineage has consumed data up to {} but the window starts at {start}",
            model.time
        )));
    }
    let mut t = start;
    for b in batches {
        if b.virtual_time != t {
            return Err(Error::Schedule(format!("batch at {} breaks the window at {t}", b.virtual_time)));
        }
        step(model, b)?;
        t += b.len() as u64;
    }
    if t != end {
        return Err(Error::Schedule(format!("batches end at {t}, window ends at {end}")));
    }
    model.time = end as i64;
    Ok(())
}

/// One single-pass Adagrad step of the dense lineage over stream window `[start, end)`.
pub fn incremental_step(model: &mut RecModel, stream: &DataStream, start: u64, end: u64, opt: &Adagrad) -> Result<()> {
    let batches: Vec<Batch> = stream.batches(start, end).collect();
    train_window(model, &batches, start, end, |m, b| m.train_step(b, opt))
}

struct Sparse {
    model: RecModel,
    pruner: Option<Pruner>,
    generation: usize,
}

struct TrackState {
    track: Track,
    deployed: Option<Sparse>,
    pending: Option<(Sparse, i64, i64)>,
    records: Vec<MetricsRecord>,
    dense_records: Vec<MetricsRecord>,
    deployed_at_record: usize,
    jobs: JobLog,
    prev_masks: Option<Vec<Array2<bool>>>,
    next_generation: usize,
    periodic: Vec<(usize, i64, i64)>,
}

fn record(
    variant: &str,
    seed: u64,
    time: i64,
    model: &RecModel,
    ce: f64,
    dense_ce: f64,
    prevalence: f64,
    mask_changes: usize,
) -> Result<MetricsRecord> {
    Ok(MetricsRecord {
        variant: variant.to_string(),
        seed,
        virtual_time: time,
        lookahead_ce: ce,
        dense_ce,
        relative_ce: relative_ce(ce, dense_ce)?,
        normalized_ce: normalized_ce(ce, prevalence)?,
        overall_sparsity: model_sparsity(model),
        per_layer_sparsity: layer_sparsities(model),
        mask_changes,
    })
}

fn prevalence(batches: &[Batch]) -> f64 {
    let (pos, n) = batches.iter().fold((0usize, 0usize), |(p, n), b| {
        (p + b.labels.iter().filter(|&&y| y == 1).count(), n + b.len())
    });
    pos as f64 / n as f64
}

/// Runs the shared dense lineage and every track over the configured timeline.
pub fn simulate(cfg: &ExperimentConfig, seed: u64, tracks: &[Track]) -> Result<SimOutput> {
    cfg.validate()?;
    let d = &cfg.d2s;
    let stream = DataStream::new(cfg.stream_for(seed), cfg.drift_schedule(seed)?)?;
    let opt = Adagrad::new(d.learning_rate, d.adagrad_eps)?;
    let offset = d.stream_offset() as i64;
    let delta = d.delta as i64;
    let p = d.p as i64;
    let horizon = d.horizon as i64;
    let abs = |t: i64| (t + offset) as u64;

    let mut states: Vec<TrackState> = tracks
        .iter()
        .map(|t| {
            t.prune.validate()?;
            let periodic = match t.variant {
                Variant::DenseOnly => Vec::new(),
                Variant::D2s if d.monitor_threshold.is_none() => prune_sources(d, t.refresh_periods.unwrap_or(d.r)),
                _ => vec![(0, -(d.p as i64) * d.delta as i64, 0)],
            };
            Ok(TrackState {
                track: t.clone(),
                deployed: None,
                pending: None,
                records: Vec::new(),
                dense_records: Vec::new(),
                deployed_at_record: 0,
                jobs: JobLog::default(),
                prev_masks: None,
                next_generation: 0,
                periodic,
            })
        })
        .collect::<Result<_>>()?;

    let mut dense = RecModel::new(cfg.model.clone(), cfg.model_seed(seed))?;
    let mut dense_jobs = JobLog::default();
    let mut snapshots = SnapshotStore::in_memory();
    let mut dense_records = Vec::new();
    let start = -p * delta;
    if d.pretrain_samples > 0 {
        incremental_step(&mut dense, &stream, 0, d.pretrain_samples, &opt)?;
        dense_jobs.push(Job {
            kind: JobKind::DenseIncr,
            generation: None,
            source_time: start - d.pretrain_samples as i64,
            window: (start - d.pretrain_samples as i64, start),
            output_time: start,
        });
    }

    let mut t = start;
    loop {
        // deployments scheduled for this boundary
        for st in &mut states {
            if let Some((_, _, deploy)) = &st.pending {
                if *deploy == t {
                    let (sparse, _, _) = st.pending.take().unwrap();
                    snapshots.insert(&format!("{}.g{}", st.track.name, sparse.generation), t, &sparse.model)?;
                    st.deployed = Some(sparse);
                    st.deployed_at_record = st.records.len();
                }
            }
        }

        if t >= 0 {
            let w = cfg.eval.lookahead_window;
            let eval: Vec<Batch> = stream.batches(abs(t), abs(t) + w).collect();
            let prev = prevalence(&eval);
            let dense_ce = window_ce(&dense, &eval)?;
            let dense_rec = record("dense-only", seed, t, &dense, dense_ce, dense_ce, prev, 0)?;
            for st in &mut states {
                let rec = match (&st.deployed, st.track.variant) {
                    (_, Variant::DenseOnly) | (None, _) => MetricsRecord { variant: st.track.name.clone(), ..dense_rec.clone() },
                    (Some(s), _) => {
                        let masks = model_masks(&s.model);
                        let changes = st.prev_masks.as_ref().map_or(0, |prev| {
                            prev.iter().zip(&masks).map(|(a, b)| a.iter().zip(b).filter(|(x, y)| x != y).count()).sum()
                        });
                        st.prev_masks = Some(masks);
                        let ce = window_ce(&s.model, &eval)?;
                        record(&st.track.name, seed, t, &s.model, ce, dense_ce, prev, changes)?
                    }
                };
                st.records.push(rec);
                st.dense_records.push(dense_rec.clone());
            }
            dense_records.push(dense_rec);
        }
        if t >= horizon {
            break;
        }

        // prune jobs starting at this boundary
        for st in &mut states {
            let mut start_job = st.periodic.iter().find(|&&(_, source, _)| source == t).map(|&(_, s, dep)| (s, dep));
            if start_job.is_none() && st.track.variant == Variant::D2s && st.pending.is_none() && t >= 0 {
                if let Some(th) = d.monitor_threshold {
                    let from = st.deployed_at_record;
                    let fire = divergence_monitor(&st.dense_records[from..], &st.records[from..], th)?;
                    if fire && t + p * delta < horizon {
                        start_job = Some((t, t + p * delta));
                    }
                }
            }
            if let Some((source, deploy)) = start_job {
                let generation = st.next_generation;
                st.next_generation += 1;
                if !snapshots.times("dense").contains(&source) {
                    snapshots.insert("dense", source, &dense)?;
                }
                let model = dense.clone().into_masked();
                let prune = &st.track.prune;
                let pruner = if prune.target_sparsity == 0.0 {
                    None
                } else {
                    let phase = PruneConfig { prune_phase_samples: d.prune_phase_samples(), ..prune.clone() };
                    let adapt = matches!(st.track.variant, Variant::AuxAdapt | Variant::MopAdapt);
                    Some(Pruner::new(phase, &model, adapt)?)
                };
                st.jobs.push(Job {
                    kind: JobKind::PruneFinetune,
                    generation: Some(generation),
                    source_time: source,
                    window: (source, deploy),
                    output_time: deploy,
                });
                st.pending = Some((Sparse { model, pruner, generation }, source, deploy));
            }
        }

        // one period of training for every live lineage on shared data
        let batches: Vec<Batch> = stream.batches(abs(t), abs(t + delta)).collect();
        train_window(&mut dense, &batches, abs(t), abs(t + delta), |m, b| m.train_step(b, &opt))?;
        dense_jobs.push(Job { kind: JobKind::DenseIncr, generation: None, source_time: t, window: (t, t + delta), output_time: t + delta });
        for st in &mut states {
            if let Some(s) = &mut st.deployed {
                train_sparse(s, &batches, abs(t), abs(t + delta), &opt)?;
                st.jobs.push(Job {
                    kind: JobKind::SparseIncr,
                    generation: Some(s.generation),
                    source_time: t,
                    window: (t, t + delta),
                    output_time: t + delta,
                });
            }
            if let Some((s, _, _)) = &mut st.pending {
                train_sparse(s, &batches, abs(t), abs(t + delta), &opt)?;
            }
        }
        t += delta;
    }

    // frozen evaluation just past the horizon
    let post = ((d.horizon as f64 * cfg.eval.post_horizon_fraction).round() as u64).max(1);
    let tail: Vec<Batch> = stream.batches(abs(horizon), abs(horizon) + post).collect();
    let dense_final = window_ce(&dense, &tail)?;
    let final_eval = |name: &str, ce: f64| -> Result<FinalEval> {
        Ok(FinalEval {
            variant: name.to_string(),
            seed,
            start: horizon,
            samples: post,
            eval_ce: ce,
            dense_eval_ce: dense_final,
            relative_ce: relative_ce(ce, dense_final)?,
        })
    };
    let mut outputs = Vec::with_capacity(states.len());
    for st in states {
        let (model, ce) = match st.deployed {
            Some(s) => {
                let ce = window_ce(&s.model, &tail)?;
                (s.model, ce)
            }
            None => (dense.clone(), dense_final),
        };
        let mut jobs = dense_jobs.clone();
        jobs.jobs.extend(st.jobs.jobs);
        outputs.push(TrackOutput {
            final_eval: final_eval(&st.track.name, ce)?,
            name: st.track.name,
            variant: st.track.variant,
            records: st.records,
            model,
            jobs,
        });
    }
    Ok(SimOutput {
        seed,
        dense: TrackOutput {
            name: "dense-only".into(),
            variant: Variant::DenseOnly,
            records: dense_records,
            final_eval: final_eval("dense-only", dense_final)?,
            model: dense,
            jobs: dense_jobs,
        },
        tracks: outputs,
        snapshots,
    })
}

fn train_sparse(s: &mut Sparse, batches: &[Batch], start: u64, end: u64, opt: &Adagrad) -> Result<()> {
    let Sparse { model, pruner, .. } = s;
    train_window(model, batches, start, end, |m, b| match pruner {
        Some(p) => p.step(m, b, opt),
        None => m.train_step(b, opt),
    })
}

/// Metrics of one variant for one seed.
pub fn run_experiment(cfg: &ExperimentConfig, seed: u64, variant: Variant) -> Result<Vec<MetricsRecord>> {
    let out = simulate(cfg, seed, &[Track::new(variant, cfg.prune.clone())])?;
    Ok(out.tracks.into_iter().next().expect("one track").records)
}
