use serde::{Deserialize, Serialize};

use crate::datastream::DataStream;
use crate::error::{Error, Result};
use crate::nn::{ce_sum, Batch, RecModel};

/// One evaluation point of one model lineage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub variant: String,
    pub seed: u64,
    /// Experiment time of the boundary; 0 is the first deployment.
    pub virtual_time: i64,
    pub lookahead_ce: f64,
    /// Dense model's look-ahead CE on the same window.
    pub dense_ce: f64,
    pub relative_ce: f64,
    pub normalized_ce: f64,
    pub overall_sparsity: f64,
    pub per_layer_sparsity: Vec<f64>,
    /// Entries whose alive/pruned state changed since the previous record.
    pub mask_changes: usize,
}

/// Frozen evaluation after the horizon.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FinalEval {
    pub variant: String,
    pub seed: u64,
    pub start: i64,
    pub samples: u64,
    pub eval_ce: f64,
    pub dense_eval_ce: f64,
    pub relative_ce: f64,
}

/// Mean CE of a frozen model over already materialized batches.
pub fn window_ce(model: &RecModel, batches: &[Batch]) -> Result<f64> {
    let mut total = 0.0;
    let mut n = 0usize;
    for b in batches {
        let p = model.predict(b)?;
        total += ce_sum(p.as_slice().expect("contiguous"), &b.labels)?;
        n += b.len();
    }
    if n == 0 {
        return Err(Error::Data("empty evaluation window".into()));
    }
    Ok(total / n as f64)
}

/// Mean CE of the frozen model over stream positions `[t, t+w)`. The model
/// must not have trained on any of that data.
pub fn lookahead_window_ce(model: &RecModel, stream: &DataStream, t: u64, w: u64) -> Result<f64> {
    if model.time > t as i64 {
        return Err(Error::Protocol(format!(
            "model has consumed data up to {} but the window starts at {t}",
            model.time
        )));
    }
    let batches: Vec<Batch> = stream.batches(t, t + w).collect();
    window_ce(model, &batches)
}

/// `ce_pruned / ce_full − 1`.
pub fn relative_ce(ce_pruned: f64, ce_full: f64) -> Result<f64> {
    if !(ce_full > 0.0) {
        return Err(Error::Data(format!("reference CE {ce_full} must be positive")));
    }
    Ok(ce_pruned / ce_full - 1.0)
}

/// Entropy in nats of a Bernoulli(q) label.
pub fn binary_entropy(q: f64) -> f64 {
    -q * q.ln() - (1.0 - q) * (1.0 - q).ln()
}

/// CE divided by the CE of always predicting the background rate.
pub fn normalized_ce(ce: f64, prevalence: f64) -> Result<f64> {
    if !(prevalence > 0.0 && prevalence < 1.0) {
        return Err(Error::Data(format!("prevalence {prevalence} must lie strictly inside (0, 1)")));
    }
    Ok(ce / binary_entropy(prevalence))
}
