//! Labeled example generation.

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal, Zipf};
use serde::{Deserialize, Serialize};

use super::schedule::DriftSchedule;
use super::teacher::{TeacherConfig, TeacherModel};
use super::{mix_seed, EXAMPLE_DOMAIN, POPULARITY_DOMAIN};
use crate::error::{Error, Result};
use crate::nn::{Batch, CategoricalFeature, ModelConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StreamConfig {
    pub dense_dim: usize,
    pub table_rows: Vec<usize>,
    /// Ids per bag for each categorical feature.
    pub multiplicity: Vec<usize>,
    pub label_noise: f64,
    pub batch_size: usize,
    pub zipf_exponent: f64,
    pub seed: u64,
    pub teacher: TeacherConfig,
}

impl Default for StreamConfig {
    fn default() -> Self {
        Self {
            dense_dim: 16,
            table_rows: vec![1000; 4],
            multiplicity: vec![1, 1, 2, 2],
            label_noise: 0.1,
            batch_size: 64,
            zipf_exponent: 1.05,
            seed: 0,
            teacher: TeacherConfig::default(),
        }
    }
}

impl StreamConfig {
    pub fn validate(&self) -> Result<()> {
        if self.dense_dim == 0 || self.batch_size == 0 {
            return Err(Error::Config("stream dense_dim and batch_size must be positive".into()));
        }
        if self.table_rows.is_empty() || self.table_rows.iter().any(|&r| r == 0 || r > u32::MAX as usize) {
            return Err(Error::Config("stream needs at least one table with 1..=u32::MAX rows".into()));
        }
        if self.multiplicity.len() != self.table_rows.len() {
            return Err(Error::Config(format!(
                "{} multiplicities for {} tables",
                self.multiplicity.len(),
                self.table_rows.len()
            )));
        }
        if !(0.0..=1.0).contains(&self.label_noise) {
            return Err(Error::Config("label_noise must lie in [0, 1]".into()));
        }
        if !(self.zipf_exponent > 0.0) {
            return Err(Error::Config("zipf_exponent must be positive".into()));
        }
        self.teacher.validate()
    }

    /// Checks that the student model consumes exactly the features this stream emits.
    pub fn check_model(&self, model: &ModelConfig) -> Result<()> {
        if model.dense_dim != self.dense_dim || model.table_rows != self.table_rows {
            return Err(Error::Config(format!(
                "model expects dense {} / tables {:?}, stream emits dense {} / tables {:?}",
                model.dense_dim, model.table_rows, self.dense_dim, self.table_rows
            )));
        }
        Ok(())
    }
}

/// Rank-to-id orders at each anchor, per table.
#[derive(Debug, Clone)]
struct Popularity {
    orders: Vec<Vec<Vec<u32>>>,
}

impl Popularity {
    fn new(cfg: &StreamConfig, schedule: &DriftSchedule) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(schedule.seed ^ cfg.seed, POPULARITY_DOMAIN));
        let first: Vec<Vec<u32>> = cfg
            .table_rows
            .iter()
            .map(|&rows| {
                let mut order: Vec<u32> = (0..rows as u32).collect();
                order.shuffle(&mut rng);
                order
            })
            .collect();
        let mut orders = vec![first];
        for _ in 1..schedule.anchor_times.len() {
            let mut next = orders.last().unwrap().clone();
            for order in &mut next {
                let k = (schedule.popularity_drift * order.len() as f64).round() as usize;
                let picked: Vec<usize> = rand::seq::index::sample(&mut rng, order.len(), k).into_vec();
                let mut ids: Vec<u32> = picked.iter().map(|&p| order[p]).collect();
                ids.shuffle(&mut rng);
                for (&p, id) in picked.iter().zip(ids) {
                    order[p] = id;
                }
            }
            orders.push(next);
        }
        Self { orders }
    }
}

/// Immutable generator: every example is a pure function of its stream index.
#[derive(Debug, Clone)]
pub struct DataStream {
    cfg: StreamConfig,
    teacher: TeacherModel,
    popularity: Popularity,
    zipf: Vec<Zipf<f64>>,
    example_rng: ChaCha8Rng,
}

impl DataStream {
    pub fn new(cfg: StreamConfig, schedule: DriftSchedule) -> Result<Self> {
        cfg.validate()?;
        let teacher = TeacherModel::new(&cfg, &schedule)?;
        let popularity = Popularity::new(&cfg, &schedule);
        let zipf = cfg
            .table_rows
            .iter()
            .map(|&rows| Zipf::new(rows as f64, cfg.zipf_exponent).map_err(|e| Error::Config(e.to_string())))
            .collect::<Result<_>>()?;
        let example_rng = ChaCha8Rng::seed_from_u64(mix_seed(cfg.seed, EXAMPLE_DOMAIN));
        Ok(Self { cfg, teacher, popularity, zipf, example_rng })
    }

    pub fn config(&self) -> &StreamConfig {
        &self.cfg
    }

    pub fn schedule(&self) -> &DriftSchedule {
        self.teacher.schedule()
    }

    pub fn teacher(&self) -> &TeacherModel {
        &self.teacher
    }

    /// Replaces the teacher; used to build degenerate streams in tests.
    pub fn with_teacher(mut self, teacher: TeacherModel) -> Self {
        self.teacher = teacher;
        self
    }

    /// Examples `t .. t+n`. Chunking does not matter: `sample(t, a+b)` equals
    /// `sample(t, a)` followed by `sample(t+a, b)`.
    pub fn sample_batch(&self, t: u64, n: usize) -> Batch {
        let d = self.cfg.dense_dim;
        let mut dense = Array2::zeros((n, d));
        let mut categorical: Vec<CategoricalFeature> = self.cfg.table_rows.iter().map(|_| CategoricalFeature::new()).collect();
        let mut labels = Vec::with_capacity(n);
        let mut bags: Vec<Vec<u32>> = self.cfg.multiplicity.iter().map(|&m| Vec::with_capacity(m)).collect();
        for i in 0..n {
            let idx = t + i as u64;
            let mut rng = self.example_rng.clone();
            rng.set_stream(idx);
            let (j, u) = self.schedule().locate(idx);
            let mut row = dense.row_mut(i);
            for v in row.iter_mut() {
                *v = rng.sample(StandardNormal);
            }
            for (f, bag) in bags.iter_mut().enumerate() {
                bag.clear();
                for _ in 0..self.cfg.multiplicity[f] {
                    let rank = self.zipf[f].sample(&mut rng) as usize - 1;
                    let anchor = if u > 0.0 && rng.random::<f64>() < u { j + 1 } else { j };
                    bag.push(self.popularity.orders[anchor][f][rank]);
                }
                categorical[f].push_bag(bag);
            }
            let refs: Vec<&[u32]> = bags.iter().map(|b| b.as_slice()).collect();
            let logit = self.teacher.logit_at(idx, dense.row(i), &refs);
            let p = crate::nn::sigmoid(logit);
            let mut y = rng.random::<f64>() < p;
            if rng.random::<f64>() < self.cfg.label_noise {
                y = !y;
            }
            labels.push(y as u8);
        }
        Batch { dense, categorical, labels, virtual_time: t }
    }

    /// Splits `[start, end)` into consecutive batches of the configured size.
    pub fn batches(&self, start: u64, end: u64) -> impl Iterator<Item = Batch> + '_ {
        let size = self.cfg.batch_size as u64;
        (start..end).step_by(self.cfg.batch_size).map(move |s| self.sample_batch(s, (end - s).min(size) as usize))
    }

    /// Teacher click probability (before label noise) for every example of `batch`.
    pub fn teacher_probabilities(&self, batch: &Batch) -> Vec<f64> {
        (0..batch.len())
            .map(|i| {
                let refs: Vec<&[u32]> = batch.categorical.iter().map(|c| c.bag(i)).collect();
                let logit = self.teacher.logit_at(batch.virtual_time + i as u64, batch.dense.row(i), &refs);
                crate::nn::sigmoid(logit)
            })
            .collect()
    }

    pub fn drift_distance(&self, t1: u64, t2: u64) -> f64 {
        self.teacher.drift_distance(t1, t2)
    }
}

/// One-shot form of [`DataStream::sample_batch`].
pub fn sample_batch(cfg: &StreamConfig, schedule: &DriftSchedule, t: u64, n: usize) -> Result<Batch> {
    if n == 0 {
        return Err(Error::Data("batch size must be at least 1".into()));
    }
    Ok(DataStream::new(cfg.clone(), schedule.clone())?.sample_batch(t, n))
}
