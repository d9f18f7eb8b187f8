use ndarray::{Array1, Array2, ArrayView1, ArrayView2};

use crate::error::{Error, Result};
use crate::nn::{Layer, MaskedLayer, RecModel};

/// Compressed sparse rows of an `out × in` weight matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    pub rows: usize,
    pub cols: usize,
    pub offsets: Vec<usize>,
    pub indices: Vec<usize>,
    pub values: Vec<f64>,
}

impl CsrMatrix {
    /// Keeps the entries where `keep` is true.
    pub fn from_dense_filtered(values: ArrayView2<'_, f64>, keep: impl Fn(usize, usize) -> bool) -> Self {
        let (rows, cols) = values.dim();
        let mut offsets = Vec::with_capacity(rows + 1);
        let mut indices = Vec::new();
        let mut vals = Vec::new();
        offsets.push(0);
        for i in 0..rows {
            for j in 0..cols {
                if keep(i, j) {
                    indices.push(j);
                    vals.push(values[(i, j)]);
                }
            }
            offsets.push(indices.len());
        }
        Self { rows, cols, offsets, indices, values: vals }
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    /// Fraction of logical entries not stored.
    pub fn sparsity(&self) -> f64 {
        let total = self.rows * self.cols;
        if total == 0 {
            0.0
        } else {
            1.0 - self.nnz() as f64 / total as f64
        }
    }

    pub fn to_dense(&self) -> Array2<f64> {
        let mut out = Array2::zeros((self.rows, self.cols));
        for i in 0..self.rows {
            for k in self.offsets[i]..self.offsets[i + 1] {
                out[(i, self.indices[k])] = self.values[k];
            }
        }
        out
    }

    /// Checks the structural invariants.
    pub fn validate(&self) -> Result<()> {
        let ok = self.offsets.len() == self.rows + 1
            && self.offsets[0] == 0
            && self.offsets.windows(2).all(|w| w[0] <= w[1])
            && *self.offsets.last().unwrap() == self.nnz()
            && self.indices.len() == self.nnz()
            && (0..self.rows).all(|i| {
                let row = &self.indices[self.offsets[i]..self.offsets[i + 1]];
                row.windows(2).all(|w| w[0] < w[1]) && row.iter().all(|&j| j < self.cols)
            });
        if ok {
            Ok(())
        } else {
            Err(Error::Format("malformed CSR structure".into()))
        }
    }
}

/// Entries with `a > 0`, values taken from θ.
pub fn to_csr(layer: &MaskedLayer) -> CsrMatrix {
    CsrMatrix::from_dense_filtered(layer.theta().view(), |i, j| layer.aux[(i, j)] > 0.0)
}

/// `y = M·x`.
pub fn spmv(m: &CsrMatrix, x: ArrayView1<'_, f64>) -> Result<Array1<f64>> {
    if x.len() != m.cols {
        return Err(Error::Config(format!("spmv: matrix has {} columns, vector has {}", m.cols, x.len())));
    }
    let x = x.as_slice().map(|s| s.to_vec()).unwrap_or_else(|| x.to_vec());
    let mut y = Array1::zeros(m.rows);
    for (i, yi) in y.iter_mut().enumerate() {
        let mut acc = 0.0;
        for k in m.offsets[i]..m.offsets[i + 1] {
            acc += m.values[k] * x[m.indices[k]];
        }
        *yi = acc;
    }
    Ok(y)
}

/// `Y = X·Mᵀ` for a batch `X` of shape `n × cols`.
pub fn spmm(m: &CsrMatrix, x: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
    if x.ncols() != m.cols {
        return Err(Error::Config(format!("spmm: matrix has {} columns, input has {}", m.cols, x.ncols())));
    }
    let mut y = Array2::zeros((x.nrows(), m.rows));
    for (xr, mut yr) in x.outer_iter().zip(y.outer_iter_mut()) {
        for i in 0..m.rows {
            let mut acc = 0.0;
            for k in m.offsets[i]..m.offsets[i + 1] {
                acc += m.values[k] * xr[m.indices[k]];
            }
            yr[i] = acc;
        }
    }
    Ok(y)
}

/// Dense row-major `y = W·x` written the same way as [`spmv`], for timing.
pub fn dense_matvec(w: ArrayView2<'_, f64>, x: &[f64]) -> Vec<f64> {
    w.outer_iter().map(|row| row.iter().zip(x).map(|(a, b)| a * b).sum()).collect()
}

/// Multiply-adds for one input vector: dense counts every weight, sparse only stored ones.
pub fn flops(m: &CsrMatrix) -> (u64, u64) {
    ((m.rows * m.cols) as u64, m.nnz() as u64)
}

/// Model whose masked FC layers run through CSR kernels at inference.
#[derive(Debug, Clone)]
pub struct SparseModel {
    pub model: RecModel,
    bottom: Vec<Option<CsrMatrix>>,
    top: Vec<Option<CsrMatrix>>,
}

impl SparseModel {
    pub fn new(model: RecModel) -> Self {
        let conv = |layers: &[Layer]| layers.iter().map(|l| l.as_masked().map(to_csr)).collect();
        let bottom = conv(&model.bottom);
        let top = conv(&model.top);
        Self { model, bottom, top }
    }

    pub fn predict(&self, batch: &crate::nn::Batch) -> Result<Array1<f64>> {
        use crate::nn::Tower;
        self.model.predict_with(batch, |tower, l, layer, h| {
            let csr = match tower {
                Tower::Bottom => &self.bottom[l],
                Tower::Top => &self.top[l],
            };
            match csr {
                Some(m) => {
                    let mut z = spmm(m, h).expect("layer widths are validated by the model");
                    z += &layer.param().bias;
                    z
                }
                None => layer.linear(h),
            }
        })
    }

    /// (dense, sparse) multiply-adds per example over all FC layers.
    pub fn flops(&self) -> (u64, u64) {
        self.bottom.iter().chain(&self.top).zip(self.model.fc_layers()).fold((0, 0), |(d, s), (c, l)| {
            let dense = l.param().values.len() as u64;
            (d + dense, s + c.as_ref().map_or(dense, |m| m.nnz() as u64))
        })
    }
}
