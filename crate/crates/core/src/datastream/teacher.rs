//! Ground-truth teacher whose parameters drift between anchor states.

use ndarray::{Array1, Array2, ArrayView1, Zip};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::schedule::DriftSchedule;
use super::{mix_seed, StreamConfig, TEACHER_DOMAIN};
use crate::error::{Error, Result};
use crate::nn::interaction;

/// Shape and output scaling of the teacher network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TeacherConfig {
    /// Bottom MLP widths; the last must equal `embedding_dim`.
    pub bottom_widths: Vec<usize>,
    pub embedding_dim: usize,
    /// Top MLP widths ending in 1.
    pub top_widths: Vec<usize>,
    /// Probability that an interaction feature carries signal in a fresh draw.
    pub gain_density: f64,
    /// Probability that a dense input feature feeds the teacher in a fresh draw.
    pub input_density: f64,
    /// Rescale every anchor so its raw output has zero mean and unit
    /// variance on a fixed reference sample; keeps signal strength level as
    /// the teacher drifts.
    pub standardize: bool,
    pub logit_scale: f64,
    /// Added to every logit; sets the base click rate.
    pub logit_offset: f64,
}

impl Default for TeacherConfig {
    fn default() -> Self {
        Self {
            bottom_widths: vec![8],
            embedding_dim: 8,
            top_widths: vec![16, 1],
            gain_density: 0.3,
            input_density: 1.0,
            standardize: true,
            logit_scale: 1.0,
            logit_offset: -0.5,
        }
    }
}

impl TeacherConfig {
    pub fn validate(&self) -> Result<()> {
        if self.bottom_widths.last() != Some(&self.embedding_dim) {
            return Err(Error::Config("teacher bottom output must equal its embedding_dim".into()));
        }
        if self.top_widths.last() != Some(&1) {
            return Err(Error::Config("teacher top MLP must end in width 1".into()));
        }
        if self.bottom_widths.iter().chain(&self.top_widths).any(|&w| w == 0) || self.embedding_dim == 0 {
            return Err(Error::Config("teacher widths must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.gain_density) {
            return Err(Error::Config("teacher gain_density must lie in [0, 1]".into()));
        }
        if !(self.input_density > 0.0 && self.input_density <= 1.0) {
            return Err(Error::Config("teacher input_density must lie in (0, 1]".into()));
        }
        Ok(())
    }
}

/// One complete set of teacher parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct TeacherParams {
    pub bottom: Vec<(Array2<f64>, Array1<f64>)>,
    pub tables: Vec<Array2<f64>>,
    /// Per-feature multiplier on the interaction output.
    pub gains: Array1<f64>,
    pub top: Vec<(Array2<f64>, Array1<f64>)>,
    /// Raw output is mapped to `(raw - output_shift) * output_scale` before
    /// `logit_scale` and `logit_offset` apply. Not part of the drifting
    /// parameter vector.
    pub output_shift: f64,
    pub output_scale: f64,
}

fn normal<R: Rng>(rng: &mut R, std: f64) -> f64 {
    let z: f64 = rng.sample(StandardNormal);
    z * std
}

impl TeacherParams {
    /// Draws a fresh parameter set from the teacher prior.
    pub fn draw<R: Rng>(cfg: &TeacherConfig, dense_dim: usize, table_rows: &[usize], rng: &mut R) -> Self {
        let mlp = |widths: &[usize], mut inp: usize, rng: &mut R| {
            widths
                .iter()
                .map(|&w| {
                    let std = (2.0 / inp as f64).sqrt();
                    let weights = Array2::from_shape_simple_fn((w, inp), || normal(rng, std));
                    let bias = Array1::from_shape_simple_fn(w, || normal(rng, 0.1));
                    inp = w;
                    (weights, bias)
                })
                .collect::<Vec<_>>()
        };
        let mut bottom = mlp(&cfg.bottom_widths, dense_dim, rng);
        if cfg.input_density < 1.0 {
            let keep: Vec<bool> = (0..dense_dim).map(|_| rng.random::<f64>() < cfg.input_density).collect();
            let first = &mut bottom[0].0;
            for (j, &on) in keep.iter().enumerate() {
                if !on {
                    first.column_mut(j).fill(0.0);
                }
            }
        }
        let emb_std = (cfg.embedding_dim as f64).powf(-0.25);
        let tables = table_rows
            .iter()
            .map(|&rows| Array2::from_shape_simple_fn((rows, cfg.embedding_dim), || normal(rng, emb_std)))
            .collect();
        let width = interaction::output_width(cfg.embedding_dim, table_rows.len() + 1);
        let gains = Array1::from_shape_simple_fn(width, || {
            let on = rng.random::<f64>() < cfg.gain_density;
            let g = normal(rng, 1.0);
            if on {
                g
            } else {
                0.0
            }
        });
        let top = mlp(&cfg.top_widths, width, rng);
        Self { bottom, tables, gains, top, output_shift: 0.0, output_scale: 1.0 }
    }

    fn tensors(&self) -> Vec<&[f64]> {
        let mut v: Vec<&[f64]> = Vec::new();
        for (w, b) in &self.bottom {
            v.push(w.as_slice().unwrap());
            v.push(b.as_slice().unwrap());
        }
        for t in &self.tables {
            v.push(t.as_slice().unwrap());
        }
        v.push(self.gains.as_slice().unwrap());
        for (w, b) in &self.top {
            v.push(w.as_slice().unwrap());
            v.push(b.as_slice().unwrap());
        }
        v
    }

    fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        let mut v: Vec<&mut [f64]> = Vec::new();
        for (w, b) in &mut self.bottom {
            v.push(w.as_slice_mut().unwrap());
            v.push(b.as_slice_mut().unwrap());
        }
        for t in &mut self.tables {
            v.push(t.as_slice_mut().unwrap());
        }
        v.push(self.gains.as_slice_mut().unwrap());
        for (w, b) in &mut self.top {
            v.push(w.as_slice_mut().unwrap());
            v.push(b.as_slice_mut().unwrap());
        }
        v
    }

    /// Same shapes with every entry set to zero.
    pub fn zeroed(&self) -> Self {
        let mut out = self.clone();
        for t in out.tensors_mut() {
            t.fill(0.0);
        }
        out.output_shift = 0.0;
        out.output_scale = 1.0;
        out
    }

    /// All parameters concatenated in a fixed order.
    pub fn flatten(&self) -> Vec<f64> {
        self.tensors().concat()
    }

    pub fn norm(&self) -> f64 {
        self.tensors().iter().flat_map(|t| t.iter()).map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn distance(&self, other: &Self) -> f64 {
        self.tensors()
            .iter()
            .zip(other.tensors())
            .flat_map(|(a, b)| a.iter().zip(b.iter()))
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    }

    /// `a + u·(b − a)`, exact at `u = 0` and when `a = b`.
    pub fn lerp(a: &Self, b: &Self, u: f64) -> Self {
        let mut out = a.clone();
        if u == 0.0 {
            return out;
        }
        for (o, bt) in out.tensors_mut().into_iter().zip(b.tensors()) {
            for (x, &y) in o.iter_mut().zip(bt) {
                *x += u * (y - *x);
            }
        }
        out.output_shift += u * (b.output_shift - out.output_shift);
        out.output_scale += u * (b.output_scale - out.output_scale);
        out
    }

    /// Parameter groups that drift as one unit: each layer's weights with its
    /// bias, each table, and the gains.
    fn groups_mut(&mut self) -> Vec<Vec<&mut [f64]>> {
        let mut g: Vec<Vec<&mut [f64]>> = Vec::new();
        for (w, b) in &mut self.bottom {
            g.push(vec![w.as_slice_mut().unwrap(), b.as_slice_mut().unwrap()]);
        }
        for t in &mut self.tables {
            g.push(vec![t.as_slice_mut().unwrap()]);
        }
        g.push(vec![self.gains.as_slice_mut().unwrap()]);
        for (w, b) in &mut self.top {
            g.push(vec![w.as_slice_mut().unwrap(), b.as_slice_mut().unwrap()]);
        }
        g
    }

    fn group_vectors(&self) -> Vec<Vec<f64>> {
        let mut copy = self.clone();
        copy.groups_mut().into_iter().map(|g| g.iter().flat_map(|t| t.iter().copied()).collect()).collect()
    }

    /// Rotates every parameter group by angle `phi` toward the part of
    /// `direction` orthogonal to the same group of `self` and of every entry
    /// of `past`. Each group keeps its norm and moves by `2·sin(φ/2)·‖θ‖`, and
    /// its cosine similarity to any earlier anchor shrinks by `cos φ`.
    fn rotate_toward(&mut self, direction: &Self, past: &[Self], phi: f64) {
        let (c, s) = (phi.cos(), phi.sin());
        let dirs = direction.group_vectors();
        let pasts: Vec<Vec<Vec<f64>>> = past.iter().map(|p| p.group_vectors()).collect();
        let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
        for (g, theta) in self.groups_mut().into_iter().enumerate() {
            let theta_vals: Vec<f64> = theta.iter().flat_map(|t| t.iter().copied()).collect();
            let tn2 = dot(&theta_vals, &theta_vals);
            if tn2 == 0.0 {
                continue;
            }
            let mut basis: Vec<Vec<f64>> = Vec::new();
            for v in std::iter::once(&theta_vals).chain(pasts.iter().map(|p| &p[g])) {
                let mut u = v.clone();
                for b in &basis {
                    let k = dot(&u, b);
                    u.iter_mut().zip(b).for_each(|(x, y)| *x -= k * y);
                }
                let n = dot(&u, &u).sqrt();
                if n > 1e-9 * dot(v, v).sqrt() {
                    u.iter_mut().for_each(|x| *x /= n);
                    basis.push(u);
                }
            }
            let mut ortho = dirs[g].clone();
            for b in &basis {
                let k = dot(&ortho, b);
                ortho.iter_mut().zip(b).for_each(|(x, y)| *x -= k * y);
            }
            let on = dot(&ortho, &ortho).sqrt();
            if on == 0.0 {
                continue;
            }
            let scale = s * tn2.sqrt() / on;
            for (t, o) in theta.into_iter().flat_map(|t| t.iter_mut()).zip(&ortho) {
                *t = c * *t + scale * o;
            }
        }
    }

    /// Teacher logit for one example.
    pub fn logit(&self, cfg: &TeacherConfig, dense: ArrayView1<'_, f64>, bags: &[&[u32]]) -> f64 {
        teacher_logit(
            cfg,
            dense,
            bags,
            self.tables.len(),
            |tower, l, x| {
                let (w, b) = if tower == 0 { &self.bottom[l] } else { &self.top[l] };
                let mut z = w.dot(&x);
                z += b;
                z
            },
            |f, id| self.tables[f].row(id).to_owned(),
            |k| self.gains[k],
            (self.output_shift, self.output_scale),
        )
    }
}

#[allow(clippy::too_many_arguments)]
fn teacher_logit(
    cfg: &TeacherConfig,
    dense: ArrayView1<'_, f64>,
    bags: &[&[u32]],
    tables: usize,
    affine: impl Fn(u8, usize, ArrayView1<'_, f64>) -> Array1<f64>,
    row: impl Fn(usize, usize) -> Array1<f64>,
    gain: impl Fn(usize) -> f64,
    (shift, scale): (f64, f64),
) -> f64 {
    let relu = |v: &mut Array1<f64>| v.mapv_inplace(|x| x.max(0.0));
    let mut h = dense.to_owned();
    for l in 0..cfg.bottom_widths.len() {
        h = affine(0, l, h.view());
        relu(&mut h);
    }
    let mut vectors = Vec::with_capacity(tables + 1);
    vectors.push(h);
    for (f, bag) in bags.iter().enumerate().take(tables) {
        let mut pooled = Array1::zeros(cfg.embedding_dim);
        for &id in bag.iter() {
            pooled += &row(f, id as usize);
        }
        if !bag.is_empty() {
            pooled /= bag.len() as f64;
        }
        vectors.push(pooled);
    }
    let views: Vec<_> = vectors.iter().map(|v| v.view()).collect();
    let mut x = interaction::dot_interaction(&views).expect("teacher widths validated");
    for (k, v) in x.iter_mut().enumerate() {
        *v *= gain(k);
    }
    let last = cfg.top_widths.len() - 1;
    for l in 0..cfg.top_widths.len() {
        x = affine(1, l, x.view());
        if l != last {
            relu(&mut x);
        }
    }
    cfg.logit_scale * (x[0] - shift) * scale + cfg.logit_offset
}

const STANDARDIZE_SAMPLES: usize = 4096;
const STANDARDIZE_DOMAIN: u64 = 0x7374_6e64;

/// Teacher parameters as a piecewise-linear function of stream position.
#[derive(Debug, Clone)]
pub struct TeacherModel {
    cfg: TeacherConfig,
    schedule: DriftSchedule,
    anchors: Vec<TeacherParams>,
}

impl TeacherModel {
    pub fn new(stream: &StreamConfig, schedule: &DriftSchedule) -> Result<Self> {
        stream.teacher.validate()?;
        schedule.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(schedule.seed, TEACHER_DOMAIN));
        let cfg = &stream.teacher;
        let first = TeacherParams::draw(cfg, stream.dense_dim, &stream.table_rows, &mut rng);
        let phi = 2.0 * (schedule.drift_magnitude / 2.0).asin();
        let mut anchors = vec![first];
        for _ in 1..schedule.anchor_times.len() {
            let direction = TeacherParams::draw(cfg, stream.dense_dim, &stream.table_rows, &mut rng);
            let mut next = anchors.last().unwrap().clone();
            if phi != 0.0 {
                next.rotate_toward(&direction, &anchors, phi);
            }
            anchors.push(next);
        }
        if cfg.standardize {
            let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(schedule.seed, STANDARDIZE_DOMAIN));
            let dense = Array2::from_shape_simple_fn((STANDARDIZE_SAMPLES, stream.dense_dim), || normal(&mut rng, 1.0));
            let bags: Vec<Vec<Vec<u32>>> = (0..STANDARDIZE_SAMPLES)
                .map(|_| {
                    stream
                        .table_rows
                        .iter()
                        .zip(&stream.multiplicity)
                        .map(|(&rows, &m)| (0..m).map(|_| rng.random_range(0..rows as u32)).collect())
                        .collect()
                })
                .collect();
            for a in &mut anchors {
                let raw: Vec<f64> = bags
                    .iter()
                    .enumerate()
                    .map(|(i, b)| {
                        let refs: Vec<&[u32]> = b.iter().map(|v| v.as_slice()).collect();
                        let unit = TeacherConfig { logit_scale: 1.0, logit_offset: 0.0, ..cfg.clone() };
                        a.logit(&unit, dense.row(i), &refs)
                    })
                    .collect();
                let n = raw.len() as f64;
                let mean = raw.iter().sum::<f64>() / n;
                let std = (raw.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n).sqrt();
                if std > 0.0 {
                    a.output_shift = mean;
                    a.output_scale = 1.0 / std;
                }
            }
        }
        Ok(Self { cfg: cfg.clone(), schedule: schedule.clone(), anchors })
    }

    /// Builds a teacher from explicit anchor parameter sets.
    pub fn from_anchors(cfg: TeacherConfig, schedule: DriftSchedule, anchors: Vec<TeacherParams>) -> Result<Self> {
        cfg.validate()?;
        schedule.validate()?;
        if anchors.len() != schedule.anchor_times.len() {
            return Err(Error::Config(format!(
                "{} anchor parameter sets for {} anchor times",
                anchors.len(),
                schedule.anchor_times.len()
            )));
        }
        Ok(Self { cfg, schedule, anchors })
    }

    pub fn config(&self) -> &TeacherConfig {
        &self.cfg
    }

    pub fn anchors(&self) -> &[TeacherParams] {
        &self.anchors
    }

    pub fn schedule(&self) -> &DriftSchedule {
        &self.schedule
    }

    /// Piecewise-linear interpolation between the surrounding anchors; held
    /// constant after the last anchor.
    pub fn teacher_at(&self, t: u64) -> TeacherParams {
        let (j, u) = self.schedule.locate(t);
        if u == 0.0 {
            return self.anchors[j].clone();
        }
        TeacherParams::lerp(&self.anchors[j], &self.anchors[j + 1], u)
    }

    /// ‖teacher_at(t1) − teacher_at(t2)‖₂ over all flattened parameters.
    pub fn drift_distance(&self, t1: u64, t2: u64) -> f64 {
        self.teacher_at(t1).distance(&self.teacher_at(t2))
    }

    /// Teacher logit at stream position `t` without materializing the full
    /// interpolated parameter set.
    pub fn logit_at(&self, t: u64, dense: ArrayView1<'_, f64>, bags: &[&[u32]]) -> f64 {
        let (j, u) = self.schedule.locate(t);
        let a = &self.anchors[j];
        if u == 0.0 {
            return a.logit(&self.cfg, dense, bags);
        }
        let b = &self.anchors[j + 1];
        teacher_logit(
            &self.cfg,
            dense,
            bags,
            a.tables.len(),
            |tower, l, x| {
                let ((wa, ba), (wb, bb)) =
                    if tower == 0 { (&a.bottom[l], &b.bottom[l]) } else { (&a.top[l], &b.top[l]) };
                let mut za = wa.dot(&x);
                za += ba;
                let mut zb = wb.dot(&x);
                zb += bb;
                Zip::from(&mut za).and(&zb).for_each(|p, &q| *p += u * (q - *p));
                za
            },
            |f, id| {
                let (ra, rb) = (a.tables[f].row(id), b.tables[f].row(id));
                Zip::from(&ra).and(&rb).map_collect(|&p, &q| p + u * (q - p))
            },
            |k| a.gains[k] + u * (b.gains[k] - a.gains[k]),
            (
                a.output_shift + u * (b.output_shift - a.output_shift),
                a.output_scale + u * (b.output_scale - a.output_scale),
            ),
        )
    }
}
