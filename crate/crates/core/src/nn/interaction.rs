//! Dot-product feature interaction.
//!
//! Output layout for vectors `v_0 … v_{F-1}` (where `v_0` is the bottom-MLP
//! output): first `v_0` itself, then the dot products `v_i · v_j` for all
//! `i < j`, in row-major order `(0,1), (0,2), …, (0,F-1), (1,2), …`.

use ndarray::{s, Array1, Array2, ArrayView1};

use crate::error::{Error, Result};

/// Number of pairwise terms for `count` interacting vectors.
pub fn pair_count(count: usize) -> usize {
    count * count.saturating_sub(1) / 2
}

/// Output width: the first vector's width plus one slot per unordered pair.
pub fn output_width(dim: usize, count: usize) -> usize {
    dim + pair_count(count)
}

pub fn pairs(count: usize) -> impl Iterator<Item = (usize, usize)> {
    (0..count).flat_map(move |i| ((i + 1)..count).map(move |j| (i, j)))
}

/// Single-example interaction.
pub fn dot_interaction(vectors: &[ArrayView1<'_, f64>]) -> Result<Array1<f64>> {
    if vectors.len() < 2 {
        return Err(Error::Config("interaction needs at least two vectors".into()));
    }
    let dim = vectors[0].len();
    if let Some(v) = vectors.iter().find(|v| v.len() != dim) {
        return Err(Error::Config(format!(
            "interaction vectors must share a width: {} vs {dim}",
            v.len()
        )));
    }
    let mut out = Array1::zeros(output_width(dim, vectors.len()));
    out.slice_mut(s![..dim]).assign(&vectors[0]);
    for (k, (i, j)) in pairs(vectors.len()).enumerate() {
        out[dim + k] = vectors[i].dot(&vectors[j]);
    }
    Ok(out)
}

/// Batched interaction: each input is n × dim, output is n × (dim + pairs).
pub(crate) fn forward(vectors: &[Array2<f64>]) -> Array2<f64> {
    let (n, dim) = vectors[0].dim();
    let mut out = Array2::zeros((n, output_width(dim, vectors.len())));
    out.slice_mut(s![.., ..dim]).assign(&vectors[0]);
    for (k, (i, j)) in pairs(vectors.len()).enumerate() {
        let (a, b) = (&vectors[i], &vectors[j]);
        for r in 0..n {
            out[[r, dim + k]] = a.row(r).dot(&b.row(r));
        }
    }
    out
}

/// Gradients with respect to each input vector given ∂L/∂output.
pub(crate) fn backward(vectors: &[Array2<f64>], d_out: &Array2<f64>) -> Vec<Array2<f64>> {
    let (n, dim) = vectors[0].dim();
    let mut grads: Vec<Array2<f64>> = vectors.iter().map(|v| Array2::zeros(v.dim())).collect();
    grads[0].assign(&d_out.slice(s![.., ..dim]));
    for (k, (i, j)) in pairs(vectors.len()).enumerate() {
        for r in 0..n {
            let g = d_out[[r, dim + k]];
            if g == 0.0 {
                continue;
            }
            let (vi, vj) = (vectors[i].row(r), vectors[j].row(r));
            grads[i].row_mut(r).scaled_add(g, &vj);
            grads[j].row_mut(r).scaled_add(g, &vi);
        }
    }
    grads
}
