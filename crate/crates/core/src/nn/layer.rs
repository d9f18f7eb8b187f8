use std::borrow::Cow;

use ndarray::{Array1, Array2, ArrayView2, Zip};
use rand::Rng;
use serde::{Deserialize, Serialize};

/// Hidden-layer nonlinearity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    #[default]
    Relu,
    Tanh,
    Identity,
}

impl Activation {
    pub fn apply(self, z: &Array2<f64>) -> Array2<f64> {
        match self {
            Activation::Relu => z.mapv(|v| if v > 0.0 { v } else { 0.0 }),
            Activation::Tanh => z.mapv(f64::tanh),
            Activation::Identity => z.clone(),
        }
    }

    /// Multiplies `upstream` in place by the derivative, given pre-activation `z`
    /// and output `h`.
    pub(crate) fn backprop(self, upstream: &mut Array2<f64>, z: &Array2<f64>, h: &Array2<f64>) {
        match self {
            Activation::Relu => Zip::from(upstream).and(z).for_each(|g, &zv| {
                if zv <= 0.0 {
                    *g = 0.0;
                }
            }),
            Activation::Tanh => Zip::from(upstream)
                .and(h)
                .for_each(|g, &hv| *g *= 1.0 - hv * hv),
            Activation::Identity => {}
        }
    }
}

/// Plain fully-connected weights with gradients and Adagrad accumulators.
///
/// `values` is stored `out × in`, so a batch `h` (n × in) maps to `h · valuesᵀ + bias`.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseParam {
    pub values: Array2<f64>,
    pub bias: Array1<f64>,
    pub grad: Array2<f64>,
    pub bias_grad: Array1<f64>,
    pub acc: Array2<f64>,
    pub bias_acc: Array1<f64>,
}

impl DenseParam {
    pub fn zeros(out: usize, inp: usize) -> Self {
        Self::from_values(Array2::zeros((out, inp)), Array1::zeros(out))
    }

    /// Uniform(−√(6/(in+out)), +√(6/(in+out))) weights, zero bias.
    pub fn glorot<R: Rng + ?Sized>(out: usize, inp: usize, rng: &mut R) -> Self {
        let limit = (6.0 / (inp + out) as f64).sqrt();
        let values = Array2::from_shape_simple_fn((out, inp), || rng.random_range(-limit..limit));
        Self::from_values(values, Array1::zeros(out))
    }

    pub fn from_values(values: Array2<f64>, bias: Array1<f64>) -> Self {
        let (out, inp) = values.dim();
        assert_eq!(bias.len(), out, "bias length must equal output width");
        Self {
            grad: Array2::zeros((out, inp)),
            bias_grad: Array1::zeros(out),
            acc: Array2::zeros((out, inp)),
            bias_acc: Array1::zeros(out),
            values,
            bias,
        }
    }

    pub fn out_dim(&self) -> usize {
        self.values.nrows()
    }

    pub fn in_dim(&self) -> usize {
        self.values.ncols()
    }
}

/// Fully-connected weights θ gated by a latent auxiliary mask `a`.
///
/// The effective weight is `θ_i · 𝕀(a_i > 0)`. Pruned entries keep their θ so
/// that a later revival restores the stored value.
#[derive(Debug, Clone, PartialEq)]
pub struct MaskedLayer {
    /// θ, bias, θ-gradients (already multiplied by the mask) and Adagrad state.
    pub param: DenseParam,
    pub aux: Array2<f64>,
    /// Exponential moving average of `grad_masked`, used by momentum pruning.
    pub momentum: Array2<f64>,
    /// ∂L/∂(θ∘𝕀(a>0)), filled by backward for every entry including pruned ones.
    pub grad_masked: Array2<f64>,
}

impl MaskedLayer {
    /// Initial auxiliary value: every weight starts alive.
    pub const AUX_INIT: f64 = 0.5;

    pub fn from_dense(param: DenseParam) -> Self {
        Self::with_aux_init(param, Self::AUX_INIT)
    }

    pub fn with_aux_init(param: DenseParam, aux_init: f64) -> Self {
        let dim = param.values.dim();
        Self {
            aux: Array2::from_elem(dim, aux_init),
            momentum: Array2::zeros(dim),
            grad_masked: Array2::zeros(dim),
            param,
        }
    }

    pub fn theta(&self) -> &Array2<f64> {
        &self.param.values
    }

    pub fn effective_weight(&self) -> Array2<f64> {
        apply_mask(self.param.values.view(), self.aux.view())
    }

    pub fn len(&self) -> usize {
        self.aux.len()
    }

    pub fn is_empty(&self) -> bool {
        self.aux.is_empty()
    }

    pub fn pruned_count(&self) -> usize {
        self.aux.iter().filter(|&&a| a <= 0.0).count()
    }

    pub fn active_mask(&self) -> Array2<bool> {
        self.aux.mapv(|a| a > 0.0)
    }

    /// Fraction of entries with `a ≤ 0`.
    pub fn sparsity(&self) -> f64 {
        if self.aux.is_empty() {
            return 0.0;
        }
        self.pruned_count() as f64 / self.aux.len() as f64
    }
}

/// θ ∘ 𝕀(a > 0). The boundary `a = 0` is pruned.
pub fn apply_mask(theta: ArrayView2<'_, f64>, aux: ArrayView2<'_, f64>) -> Array2<f64> {
    assert_eq!(theta.dim(), aux.dim(), "θ and aux must share a shape");
    Zip::from(&theta)
        .and(&aux)
        .map_collect(|&t, &a| if a > 0.0 { t } else { 0.0 })
}

/// One fully-connected layer of the model.
#[derive(Debug, Clone, PartialEq)]
pub enum Layer {
    Dense(DenseParam),
    Masked(MaskedLayer),
}

impl Layer {
    pub fn param(&self) -> &DenseParam {
        match self {
            Layer::Dense(p) => p,
            Layer::Masked(m) => &m.param,
        }
    }

    pub fn param_mut(&mut self) -> &mut DenseParam {
        match self {
            Layer::Dense(p) => p,
            Layer::Masked(m) => &mut m.param,
        }
    }

    pub fn as_masked(&self) -> Option<&MaskedLayer> {
        match self {
            Layer::Masked(m) => Some(m),
            Layer::Dense(_) => None,
        }
    }

    pub fn as_masked_mut(&mut self) -> Option<&mut MaskedLayer> {
        match self {
            Layer::Masked(m) => Some(m),
            Layer::Dense(_) => None,
        }
    }

    pub fn effective_weight(&self) -> Cow<'_, Array2<f64>> {
        match self {
            Layer::Dense(p) => Cow::Borrowed(&p.values),
            Layer::Masked(m) => Cow::Owned(m.effective_weight()),
        }
    }

    pub fn in_dim(&self) -> usize {
        self.param().in_dim()
    }

    pub fn out_dim(&self) -> usize {
        self.param().out_dim()
    }

    /// `h · Wᵀ + b` with the effective weight.
    pub fn linear(&self, h: ArrayView2<'_, f64>) -> Array2<f64> {
        let w = self.effective_weight();
        let mut z = h.dot(&w.t());
        z += &self.param().bias;
        z
    }

    /// Stores gradients for upstream `dz` and returns ∂L/∂h.
    pub(crate) fn backprop(&mut self, h: &Array2<f64>, dz: &Array2<f64>) -> Array2<f64> {
        let grad_eff = dz.t().dot(h);
        let bias_grad = dz.sum_axis(ndarray::Axis(0));
        let w = self.effective_weight().into_owned();
        let dh = dz.dot(&w);
        match self {
            Layer::Dense(p) => {
                p.grad = grad_eff;
                p.bias_grad = bias_grad;
            }
            Layer::Masked(m) => {
                m.param.grad = Zip::from(&grad_eff)
                    .and(&m.aux)
                    .map_collect(|&g, &a| if a > 0.0 { g } else { 0.0 });
                m.grad_masked = grad_eff;
                m.param.bias_grad = bias_grad;
            }
        }
        dh
    }

    pub fn into_masked(self) -> Layer {
        match self {
            Layer::Dense(p) => Layer::Masked(MaskedLayer::from_dense(p)),
            masked => masked,
        }
    }
}
