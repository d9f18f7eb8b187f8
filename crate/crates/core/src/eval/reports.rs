use serde::{Deserialize, Serialize};

use crate::nn::RecModel;

pub const HISTOGRAM_BINS: usize = 64;

/// |θ| histograms of one layer, split by mask state, over shared bins.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerHistogram {
    pub layer: String,
    /// `bins + 1` edges from 0 to the largest |θ| of the layer.
    pub edges: Vec<f64>,
    pub pruned: Vec<usize>,
    pub active: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistogramReport {
    pub layers: Vec<LayerHistogram>,
}

/// Fixed 64-bin |θ| histograms per masked layer.
pub fn histogram_report(model: &RecModel) -> HistogramReport {
    let names = model.layer_names();
    let layers = model
        .fc_layers()
        .zip(names)
        .filter_map(|(l, name)| l.as_masked().map(|m| (m, name)))
        .map(|(m, name)| {
            let max = m.theta().iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
            let width = if max > 0.0 { max / HISTOGRAM_BINS as f64 } else { 1.0 };
            let edges = (0..=HISTOGRAM_BINS).map(|i| i as f64 * width).collect();
            let mut pruned = vec![0; HISTOGRAM_BINS];
            let mut active = vec![0; HISTOGRAM_BINS];
            for (&t, &a) in m.theta().iter().zip(&m.aux) {
                let bin = ((t.abs() / width) as usize).min(HISTOGRAM_BINS - 1);
                if a > 0.0 {
                    active[bin] += 1;
                } else {
                    pruned[bin] += 1;
                }
            }
            LayerHistogram { layer: name, edges, pruned, active }
        })
        .collect();
    HistogramReport { layers }
}

impl LayerHistogram {
    /// Largest |θ| bin index holding a pruned weight and smallest holding an
    /// active one; pruned-below-active means the two groups do not overlap.
    pub fn supports_overlap(&self) -> bool {
        let last_pruned = self.pruned.iter().rposition(|&c| c > 0);
        let first_active = self.active.iter().position(|&c| c > 0);
        match (last_pruned, first_active) {
            (Some(p), Some(a)) => p > a,
            _ => false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StructureRow {
    pub layer: String,
    /// Position in forward order over all FC layers.
    pub depth: usize,
    pub size: usize,
    pub sparsity: f64,
}

/// One row per maskable layer: depth, size and achieved sparsity.
pub fn sparsity_vs_structure_report(model: &RecModel) -> Vec<StructureRow> {
    model
        .fc_layers()
        .zip(model.layer_names())
        .enumerate()
        .filter_map(|(depth, (l, name))| {
            l.as_masked().map(|m| StructureRow { layer: name, depth, size: m.len(), sparsity: m.sparsity() })
        })
        .collect()
}
