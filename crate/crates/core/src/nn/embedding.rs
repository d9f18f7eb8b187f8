use ndarray::{Array2, ArrayView2};
use rand::Rng;

use crate::error::{Error, Result};

/// Variable-length bags of entity ids for one categorical feature over a batch,
/// stored as offsets into a flat id list.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct CategoricalFeature {
    pub offsets: Vec<usize>,
    pub ids: Vec<u32>,
}

impl CategoricalFeature {
    pub fn new() -> Self {
        Self { offsets: vec![0], ids: Vec::new() }
    }

    pub fn from_bags<I, B>(bags: I) -> Self
    where
        I: IntoIterator<Item = B>,
        B: AsRef<[u32]>,
    {
        let mut f = Self::new();
        for bag in bags {
            f.push_bag(bag.as_ref());
        }
        f
    }

    pub fn push_bag(&mut self, bag: &[u32]) {
        if self.offsets.is_empty() {
            self.offsets.push(0);
        }
        self.ids.extend_from_slice(bag);
        self.offsets.push(self.ids.len());
    }

    pub fn len(&self) -> usize {
        self.offsets.len().saturating_sub(1)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn bag(&self, i: usize) -> &[u32] {
        &self.ids[self.offsets[i]..self.offsets[i + 1]]
    }
}

/// Embedding lookup table with mean pooling and row-sparse Adagrad state.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable {
    pub table: Array2<f64>,
    pub grad: Array2<f64>,
    pub acc: Array2<f64>,
    touched: Vec<usize>,
}

impl EmbeddingTable {
    /// Uniform(−1/√dim, 1/√dim) initialization.
    pub fn random<R: Rng + ?Sized>(rows: usize, dim: usize, rng: &mut R) -> Self {
        let limit = 1.0 / (dim as f64).sqrt();
        Self::from_table(Array2::from_shape_simple_fn((rows, dim), || {
            rng.random_range(-limit..limit)
        }))
    }

    pub fn from_table(table: Array2<f64>) -> Self {
        let dim = table.dim();
        Self {
            grad: Array2::zeros(dim),
            acc: Array2::zeros(dim),
            touched: Vec::new(),
            table,
        }
    }

    pub(crate) fn clear_grad(&mut self) {
        for &r in &self.touched {
            self.grad.row_mut(r).fill(0.0);
        }
        self.touched.clear();
    }

    pub fn rows(&self) -> usize {
        self.table.nrows()
    }

    pub fn dim(&self) -> usize {
        self.table.ncols()
    }

    /// Rows with a gradient from the last backward pass, ascending.
    pub fn touched(&self) -> &[usize] {
        &self.touched
    }

    pub fn check_ids(&self, feature: &CategoricalFeature) -> Result<()> {
        if let Some(&bad) = feature.ids.iter().find(|&&id| id as usize >= self.rows()) {
            return Err(Error::Data(format!(
                "entity id {bad} out of range for table with {} rows",
                self.rows()
            )));
        }
        Ok(())
    }

    /// Mean-pooled embedding per example (n × dim). Empty bags pool to zero.
    pub fn pool(&self, feature: &CategoricalFeature) -> Array2<f64> {
        let mut out = Array2::zeros((feature.len(), self.dim()));
        for (i, mut row) in out.rows_mut().into_iter().enumerate() {
            let bag = feature.bag(i);
            if bag.is_empty() {
                continue;
            }
            for &id in bag {
                row += &self.table.row(id as usize);
            }
            row /= bag.len() as f64;
        }
        out
    }

    /// Clears the previous gradient rows and scatters `d_pooled` (n × dim).
    pub(crate) fn backprop(&mut self, feature: &CategoricalFeature, d_pooled: ArrayView2<'_, f64>) {
        for &row in &self.touched {
            self.grad.row_mut(row).fill(0.0);
        }
        self.touched.clear();
        for i in 0..feature.len() {
            let bag = feature.bag(i);
            if bag.is_empty() {
                continue;
            }
            let scale = 1.0 / bag.len() as f64;
            for &id in bag {
                let mut g = self.grad.row_mut(id as usize);
                g.scaled_add(scale, &d_pooled.row(i));
                self.touched.push(id as usize);
            }
        }
        self.touched.sort_unstable();
        self.touched.dedup();
    }
}
