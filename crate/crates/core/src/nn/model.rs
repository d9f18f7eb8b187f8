use ndarray::{Array1, Array2, ArrayView2};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::batch::Batch;
use super::embedding::EmbeddingTable;
use super::interaction;
use super::layer::{Activation, DenseParam, Layer, MaskedLayer};
use super::loss::ce_loss;
use super::optim::Adagrad;
use crate::error::{Error, Result};

/// Widths of the DLRM-style model.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    pub dense_dim: usize,
    /// Bottom MLP output widths; the last must equal `embedding_dim`.
    pub bottom_widths: Vec<usize>,
    pub table_rows: Vec<usize>,
    pub embedding_dim: usize,
    /// Top MLP output widths; the last must be 1 (the logit).
    pub top_widths: Vec<usize>,
    #[serde(default)]
    pub activation: Activation,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            dense_dim: 16,
            bottom_widths: vec![32, 16],
            table_rows: vec![1000; 4],
            embedding_dim: 16,
            top_widths: vec![64, 32, 1],
            activation: Activation::Relu,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        let cfg = |msg: String| Err(Error::Config(msg));
        if self.dense_dim == 0 || self.embedding_dim == 0 {
            return cfg("dense_dim and embedding_dim must be positive".into());
        }
        if self.bottom_widths.is_empty() || self.top_widths.is_empty() {
            return cfg("bottom and top MLPs need at least one layer".into());
        }
        if self.bottom_widths.iter().chain(&self.top_widths).any(|&w| w == 0) {
            return cfg("layer widths must be positive".into());
        }
        if self.bottom_widths.last() != Some(&self.embedding_dim) {
            return cfg(format!(
                "bottom MLP output width {} must equal embedding_dim {}",
                self.bottom_widths.last().unwrap(),
                self.embedding_dim
            ));
        }
        if self.top_widths.last() != Some(&1) {
            return cfg("top MLP must end in a single logit".into());
        }
        if self.table_rows.is_empty() || self.table_rows.contains(&0) {
            return cfg("need at least one embedding table, each with rows".into());
        }
        Ok(())
    }

    /// Width fed to the top MLP: the bottom output plus one dot product per
    /// unordered pair among the `tables + 1` interacting vectors.
    pub fn interaction_width(&self) -> usize {
        interaction::output_width(self.embedding_dim, self.table_rows.len() + 1)
    }

    pub fn fc_shapes(&self) -> Vec<(usize, usize)> {
        let mut shapes = Vec::new();
        let mut inp = self.dense_dim;
        for &w in &self.bottom_widths {
            shapes.push((w, inp));
            inp = w;
        }
        inp = self.interaction_width();
        for &w in &self.top_widths {
            shapes.push((w, inp));
            inp = w;
        }
        shapes
    }
}

/// Which half of the model a fully-connected layer lives in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Tower {
    Bottom,
    Top,
}

/// Addresses one parameter tensor of the model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ParamSlot {
    Weight(Tower, usize),
    Bias(Tower, usize),
    Table(usize),
}

#[derive(Debug, Clone)]
struct ForwardCache {
    key: (u64, usize),
    bottom_in: Vec<Array2<f64>>,
    bottom_pre: Vec<Array2<f64>>,
    vectors: Vec<Array2<f64>>,
    top_in: Vec<Array2<f64>>,
    top_pre: Vec<Array2<f64>>,
    probs: Array1<f64>,
}

/// Miniature DLRM: bottom MLP over dense features, mean-pooled embeddings,
/// dot interaction, top MLP to one logit.
#[derive(Debug, Clone)]
pub struct RecModel {
    config: ModelConfig,
    pub bottom: Vec<Layer>,
    pub tables: Vec<EmbeddingTable>,
    pub top: Vec<Layer>,
    /// Virtual time up to which this model has consumed training data.
    pub time: i64,
    cache: Option<ForwardCache>,
}

impl PartialEq for RecModel {
    fn eq(&self, other: &Self) -> bool {
        self.config == other.config
            && self.bottom == other.bottom
            && self.tables == other.tables
            && self.top == other.top
            && self.time == other.time
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

impl RecModel {
    /// Seeded Glorot-uniform initialization of every layer and table.
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut layers: Vec<Layer> = config
            .fc_shapes()
            .into_iter()
            .map(|(o, i)| Layer::Dense(DenseParam::glorot(o, i, &mut rng)))
            .collect();
        let tables = config
            .table_rows
            .iter()
            .map(|&rows| EmbeddingTable::random(rows, config.embedding_dim, &mut rng))
            .collect();
        let top = layers.split_off(config.bottom_widths.len());
        Ok(Self { config, bottom: layers, tables, top, time: 0, cache: None })
    }

    /// Builds a model from explicit parts, checking every shape against `config`.
    pub fn from_parts(
        config: ModelConfig,
        bottom: Vec<Layer>,
        tables: Vec<EmbeddingTable>,
        top: Vec<Layer>,
        time: i64,
    ) -> Result<Self> {
        config.validate()?;
        let shapes = config.fc_shapes();
        let got: Vec<(usize, usize)> = bottom.iter().chain(&top).map(|l| (l.out_dim(), l.in_dim())).collect();
        if got != shapes || bottom.len() != config.bottom_widths.len() {
            return Err(Error::Config(format!("layer shapes {got:?} do not match config {shapes:?}")));
        }
        if tables.len() != config.table_rows.len()
            || tables
                .iter()
                .zip(&config.table_rows)
                .any(|(t, &r)| t.rows() != r || t.dim() != config.embedding_dim)
        {
            return Err(Error::Config("embedding tables do not match config".into()));
        }
        Ok(Self { config, bottom, tables, top, time, cache: None })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    /// Replaces every dense FC layer with a masked one (all entries alive).
    pub fn into_masked(mut self) -> Self {
        self.cache = None;
        self.bottom = self.bottom.into_iter().map(Layer::into_masked).collect();
        self.top = self.top.into_iter().map(Layer::into_masked).collect();
        self
    }

    pub fn fc_layers(&self) -> impl Iterator<Item = &Layer> {
        self.bottom.iter().chain(self.top.iter())
    }

    pub fn fc_layers_mut(&mut self) -> impl Iterator<Item = &mut Layer> {
        self.bottom.iter_mut().chain(self.top.iter_mut())
    }

    pub fn masked_layers(&self) -> impl Iterator<Item = &MaskedLayer> {
        self.fc_layers().filter_map(Layer::as_masked)
    }

    pub fn masked_layers_mut(&mut self) -> impl Iterator<Item = &mut MaskedLayer> {
        self.fc_layers_mut().filter_map(Layer::as_masked_mut)
    }

    /// Names like `bottom.0`, `top.2`, in the same order as `fc_layers`.
    pub fn layer_names(&self) -> Vec<String> {
        (0..self.bottom.len())
            .map(|i| format!("bottom.{i}"))
            .chain((0..self.top.len()).map(|i| format!("top.{i}")))
            .collect()
    }

    fn check_batch(&self, batch: &Batch) -> Result<()> {
        batch.validate()?;
        if batch.dense.ncols() != self.config.dense_dim {
            return Err(Error::Config(format!(
                "batch has {} dense features, model expects {}",
                batch.dense.ncols(),
                self.config.dense_dim
            )));
        }
        if batch.categorical.len() != self.tables.len() {
            return Err(Error::Config(format!(
                "batch has {} categorical features, model has {} tables",
                batch.categorical.len(),
                self.tables.len()
            )));
        }
        for (t, f) in self.tables.iter().zip(&batch.categorical) {
            t.check_ids(f)?;
        }
        Ok(())
    }

    fn run<F>(&self, batch: &Batch, keep: bool, linear: F) -> Result<(Array1<f64>, Option<ForwardCache>)>
    where
        F: Fn(Tower, usize, &Layer, ArrayView2<'_, f64>) -> Array2<f64>,
    {
        self.check_batch(batch)?;
        let act = self.config.activation;
        let mut bottom_in = Vec::new();
        let mut bottom_pre = Vec::new();
        let mut h = batch.dense.clone();
        for (l, layer) in self.bottom.iter().enumerate() {
            let z = linear(Tower::Bottom, l, layer, h.view());
            let next = act.apply(&z);
            if keep {
                bottom_in.push(std::mem::replace(&mut h, next));
                bottom_pre.push(z);
            } else {
                h = next;
            }
        }
        let mut vectors = Vec::with_capacity(self.tables.len() + 1);
        vectors.push(h);
        for (t, f) in self.tables.iter().zip(&batch.categorical) {
            vectors.push(t.pool(f));
        }
        let mut h = interaction::forward(&vectors);
        let mut top_in = Vec::new();
        let mut top_pre = Vec::new();
        let last = self.top.len() - 1;
        for (l, layer) in self.top.iter().enumerate() {
            let z = linear(Tower::Top, l, layer, h.view());
            let next = if l == last { z.clone() } else { act.apply(&z) };
            if keep {
                top_in.push(std::mem::replace(&mut h, next));
                top_pre.push(z);
            } else {
                h = next;
            }
        }
        let probs = h.column(0).mapv(sigmoid);
        let cache = keep.then(|| ForwardCache {
            key: (batch.virtual_time, batch.len()),
            bottom_in,
            bottom_pre,
            vectors,
            top_in,
            top_pre,
            probs: probs.clone(),
        });
        Ok((probs, cache))
    }

    /// Forward pass that keeps activations for a following `backward`.
    pub fn forward(&mut self, batch: &Batch) -> Result<Array1<f64>> {
        let (probs, cache) = self.run(batch, true, |_, _, layer, h| layer.linear(h))?;
        self.cache = cache;
        Ok(probs)
    }

    /// Forward pass on a frozen model; keeps no state.
    pub fn predict(&self, batch: &Batch) -> Result<Array1<f64>> {
        self.run(batch, false, |_, _, layer, h| layer.linear(h)).map(|(p, _)| p)
    }

    /// Forward pass with a caller-supplied affine map per FC layer
    /// (e.g. a sparse kernel). The map must return `h · Wᵀ + b`.
    pub fn predict_with<F>(&self, batch: &Batch, linear: F) -> Result<Array1<f64>>
    where
        F: Fn(Tower, usize, &Layer, ArrayView2<'_, f64>) -> Array2<f64>,
    {
        self.run(batch, false, linear).map(|(p, _)| p)
    }

    /// Fills every gradient with ∂CE/∂parameter for the batch of the last `forward`.
    pub fn backward(&mut self, batch: &Batch) -> Result<()> {
        let cache = match self.cache.take() {
            Some(c) if c.key == (batch.virtual_time, batch.len()) => c,
            Some(_) => return Err(Error::State("backward batch differs from the last forward".into())),
            None => return Err(Error::State("backward called without a forward pass".into())),
        };
        let act = self.config.activation;
        let n = batch.len() as f64;
        let mut dz = Array2::from_shape_fn((batch.len(), 1), |(i, _)| {
            (cache.probs[i] - batch.labels[i] as f64) / n
        });
        let last = self.top.len() - 1;
        let mut dh = Array2::zeros((0, 0));
        for l in (0..self.top.len()).rev() {
            if l != last {
                dz = dh;
                act.backprop(&mut dz, &cache.top_pre[l], &cache.top_in[l + 1]);
            }
            dh = self.top[l].backprop(&cache.top_in[l], &dz);
        }
        let grads = interaction::backward(&cache.vectors, &dh);
        let mut grads = grads.into_iter();
        let mut dh = grads.next().expect("bottom vector gradient");
        for ((table, feature), g) in self.tables.iter_mut().zip(&batch.categorical).zip(grads) {
            table.backprop(feature, g.view());
        }
        for l in (0..self.bottom.len()).rev() {
            let out = if l + 1 < self.bottom.len() { &cache.bottom_in[l + 1] } else { &cache.vectors[0] };
            let mut dz = dh;
            act.backprop(&mut dz, &cache.bottom_pre[l], out);
            dh = self.bottom[l].backprop(&cache.bottom_in[l], &dz);
        }
        Ok(())
    }

    pub fn apply_adagrad(&mut self, opt: &Adagrad) {
        for layer in self.fc_layers_mut() {
            opt.step_dense(layer.param_mut());
        }
        for table in &mut self.tables {
            opt.step_embedding(table);
        }
    }

    /// Forward, backward and one Adagrad step. Pruned θ entries receive a zero
    /// gradient and are left bit-identical. Returns the batch CE.
    pub fn train_step(&mut self, batch: &Batch, opt: &Adagrad) -> Result<f64> {
        let loss = self.compute_gradients(batch)?;
        self.apply_adagrad(opt);
        Ok(loss)
    }

    /// Forward and backward without updating anything; returns the batch CE.
    pub fn compute_gradients(&mut self, batch: &Batch) -> Result<f64> {
        let probs = self.forward(batch)?;
        let loss = ce_loss(probs.as_slice().expect("contiguous"), &batch.labels)?;
        self.backward(batch)?;
        Ok(loss)
    }

    pub fn param_slots(&self) -> Vec<ParamSlot> {
        let mut slots = Vec::new();
        for l in 0..self.bottom.len() {
            slots.push(ParamSlot::Weight(Tower::Bottom, l));
            slots.push(ParamSlot::Bias(Tower::Bottom, l));
        }
        for t in 0..self.tables.len() {
            slots.push(ParamSlot::Table(t));
        }
        for l in 0..self.top.len() {
            slots.push(ParamSlot::Weight(Tower::Top, l));
            slots.push(ParamSlot::Bias(Tower::Top, l));
        }
        slots
    }

    fn tower_mut(&mut self, tower: Tower) -> &mut Vec<Layer> {
        match tower {
            Tower::Bottom => &mut self.bottom,
            Tower::Top => &mut self.top,
        }
    }

    fn tower(&self, tower: Tower) -> &Vec<Layer> {
        match tower {
            Tower::Bottom => &self.bottom,
            Tower::Top => &self.top,
        }
    }

    /// Mutable values of one parameter tensor (θ for masked layers).
    pub fn param_values_mut(&mut self, slot: ParamSlot) -> &mut [f64] {
        let v = match slot {
            ParamSlot::Weight(t, l) => self.tower_mut(t)[l].param_mut().values.as_slice_mut(),
            ParamSlot::Bias(t, l) => self.tower_mut(t)[l].param_mut().bias.as_slice_mut(),
            ParamSlot::Table(t) => self.tables[t].table.as_slice_mut(),
        };
        v.expect("parameters are stored contiguously")
    }

    /// Gradient of one parameter tensor from the last backward (θ-gradient for masked layers).
    pub fn param_grad(&self, slot: ParamSlot) -> &[f64] {
        let g = match slot {
            ParamSlot::Weight(t, l) => self.tower(t)[l].param().grad.as_slice(),
            ParamSlot::Bias(t, l) => self.tower(t)[l].param().bias_grad.as_slice(),
            ParamSlot::Table(t) => self.tables[t].grad.as_slice(),
        };
        g.expect("gradients are stored contiguously")
    }

    /// Zeroes every gradient buffer and drops any cached forward pass.
    pub fn clear_gradients(&mut self) {
        self.cache = None;
        for layer in self.fc_layers_mut() {
            let p = layer.param_mut();
            p.grad.fill(0.0);
            p.bias_grad.fill(0.0);
            if let Some(m) = layer.as_masked_mut() {
                m.grad_masked.fill(0.0);
            }
        }
        for t in &mut self.tables {
            t.clear_grad();
        }
    }

    pub fn parameter_count(&self) -> usize {
        self.fc_layers().map(|l| l.param().values.len() + l.param().bias.len()).sum::<usize>()
            + self.tables.iter().map(|t| t.table.len()).sum::<usize>()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::embedding::CategoricalFeature;
    use ndarray::array;

    fn tiny_config() -> ModelConfig {
        ModelConfig {
            dense_dim: 3,
            bottom_widths: vec![4, 2],
            table_rows: vec![5, 7],
            embedding_dim: 2,
            top_widths: vec![3, 1],
            activation: Activation::Relu,
        }
    }

    fn tiny_batch() -> Batch {
        Batch {
            dense: array![[0.5, -1.0, 2.0], [0.1, 0.2, 0.3], [-1.5, 0.0, 1.0], [1.0, 1.0, -1.0]],
            categorical: vec![
                CategoricalFeature::from_bags([vec![0u32], vec![1, 2], vec![4], vec![3, 3]]),
                CategoricalFeature::from_bags([vec![6u32], vec![0], vec![1, 5], vec![2]]),
            ],
            labels: vec![1, 0, 0, 1],
            virtual_time: 0,
        }
    }

    #[test]
    fn interaction_width_matches_pairs() {
        let cfg = ModelConfig::default();
        assert_eq!(cfg.interaction_width(), 16 + 10);
        assert_eq!(tiny_config().interaction_width(), 2 + 3);
    }

    #[test]
    fn bad_bottom_width_is_rejected() {
        let mut cfg = tiny_config();
        cfg.bottom_widths = vec![4, 3];
        assert!(matches!(RecModel::new(cfg, 0), Err(Error::Config(_))));
    }

    #[test]
    fn zero_model_predicts_one_half() {
        let cfg = tiny_config();
        let mut m = RecModel::new(cfg, 1).unwrap();
        for l in m.fc_layers_mut() {
            l.param_mut().values.fill(0.0);
            l.param_mut().bias.fill(0.0);
        }
        let p = m.predict(&tiny_batch()).unwrap();
        assert!(p.iter().all(|&v| v == 0.5));
    }

    #[test]
    fn fully_pruned_last_layer_leaves_bias_only() {
        let mut m = RecModel::new(tiny_config(), 3).unwrap().into_masked();
        let last = m.top.last_mut().unwrap().as_masked_mut().unwrap();
        last.aux.fill(-1.0);
        last.param.bias[0] = 0.3;
        let p = m.predict(&tiny_batch()).unwrap();
        assert!(p.iter().all(|&v| v == sigmoid(0.3)));
    }

    #[test]
    fn shape_and_id_errors() {
        let m = RecModel::new(tiny_config(), 0).unwrap();
        let mut b = tiny_batch();
        b.dense = Array2::zeros((4, 2));
        assert!(matches!(m.predict(&b), Err(Error::Config(_))));
        let mut b = tiny_batch();
        b.categorical[0] = CategoricalFeature::from_bags([vec![9u32], vec![0], vec![0], vec![0]]);
        assert!(matches!(m.predict(&b), Err(Error::Data(_))));
    }

    #[test]
    fn backward_requires_matching_forward() {
        let mut m = RecModel::new(tiny_config(), 0).unwrap();
        let b = tiny_batch();
        assert!(matches!(m.backward(&b), Err(Error::State(_))));
        m.forward(&b).unwrap();
        let mut other = b.clone();
        other.virtual_time = 99;
        assert!(matches!(m.backward(&other), Err(Error::State(_))));
        m.forward(&b).unwrap();
        m.backward(&b).unwrap();
        assert!(matches!(m.backward(&b), Err(Error::State(_))));
    }

    #[test]
    fn same_seed_same_training() {
        let opt = Adagrad::default();
        let run = || {
            let mut m = RecModel::new(tiny_config(), 42).unwrap();
            for _ in 0..5 {
                m.train_step(&tiny_batch(), &opt).unwrap();
            }
            m
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn all_alive_masked_step_equals_dense_step() {
        let opt = Adagrad::default();
        let mut dense = RecModel::new(tiny_config(), 8).unwrap();
        let mut masked = dense.clone().into_masked();
        for _ in 0..3 {
            dense.train_step(&tiny_batch(), &opt).unwrap();
            masked.train_step(&tiny_batch(), &opt).unwrap();
        }
        for (d, m) in dense.fc_layers().zip(masked.fc_layers()) {
            assert_eq!(d.param().values, m.param().values);
            assert_eq!(d.param().bias, m.param().bias);
        }
        assert_eq!(dense.tables, masked.tables);
    }
}
