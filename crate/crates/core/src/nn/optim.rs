use ndarray::{ArrayViewD, ArrayViewMutD, Zip};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::embedding::EmbeddingTable;
use super::layer::DenseParam;

/// Adagrad hyperparameters: `acc += g²; value −= lr·g/(√acc + eps)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Adagrad {
    pub lr: f64,
    pub eps: f64,
}

impl Default for Adagrad {
    fn default() -> Self {
        Self { lr: 0.05, eps: 1e-8 }
    }
}

impl Adagrad {
    pub fn new(lr: f64, eps: f64) -> Result<Self> {
        let opt = Self { lr, eps };
        opt.validate()?;
        Ok(opt)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0) || !self.lr.is_finite() {
            return Err(Error::Config(format!("learning rate must be positive, got {}", self.lr)));
        }
        if !(self.eps > 0.0) {
            return Err(Error::Config(format!("adagrad eps must be positive, got {}", self.eps)));
        }
        Ok(())
    }

    /// Elementwise update of `values` in place.
    pub fn update(&self, values: ArrayViewMutD<'_, f64>, grads: ArrayViewD<'_, f64>, acc: ArrayViewMutD<'_, f64>) {
        let (lr, eps) = (self.lr, self.eps);
        Zip::from(values).and(&grads).and(acc).for_each(|v, &g, a| {
            *a += g * g;
            *v -= lr * g / (a.sqrt() + eps);
        });
    }

    pub fn step_dense(&self, param: &mut DenseParam) {
        self.update(param.values.view_mut().into_dyn(), param.grad.view().into_dyn(), param.acc.view_mut().into_dyn());
        self.update(
            param.bias.view_mut().into_dyn(),
            param.bias_grad.view().into_dyn(),
            param.bias_acc.view_mut().into_dyn(),
        );
    }

    /// Updates only the rows touched by the last backward pass.
    pub fn step_embedding(&self, table: &mut EmbeddingTable) {
        let (lr, eps) = (self.lr, self.eps);
        let rows = table.touched().to_vec();
        for row in rows {
            let g = table.grad.row(row);
            let mut acc = table.acc.row_mut(row);
            let mut vals = table.table.row_mut(row);
            for ((v, a), &gi) in vals.iter_mut().zip(acc.iter_mut()).zip(g.iter()) {
                *a += gi * gi;
                *v -= lr * gi / (a.sqrt() + eps);
            }
        }
    }
}

/// Single Adagrad step on a dense parameter; rejects a nonpositive learning rate.
pub fn adagrad_step(param: &mut DenseParam, lr: f64, eps: f64) -> Result<()> {
    Adagrad::new(lr, eps)?.step_dense(param);
    Ok(())
}
