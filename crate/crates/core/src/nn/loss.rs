use crate::error::{Error, Result};

/// Probabilities are kept this far from {0, 1} so the loss stays finite.
pub const PROB_CLAMP: f64 = 1e-7;

pub fn clamp_prob(p: f64) -> f64 {
    p.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP)
}

/// Binary cross-entropy of one prediction.
pub fn example_ce(p: f64, y: u8) -> f64 {
    let p = clamp_prob(p);
    if y == 1 {
        -p.ln()
    } else {
        -(1.0 - p).ln()
    }
}

/// Sum of per-example CE; callers divide by the count.
pub fn ce_sum(probs: &[f64], labels: &[u8]) -> Result<f64> {
    if probs.len() != labels.len() {
        return Err(Error::Data(format!("{} probabilities for {} labels", probs.len(), labels.len())));
    }
    Ok(probs.iter().zip(labels).map(|(&p, &y)| example_ce(p, y)).sum())
}

/// Mean binary cross-entropy `−[y ln p + (1−y) ln(1−p)]`.
pub fn ce_loss(probs: &[f64], labels: &[u8]) -> Result<f64> {
    if labels.is_empty() {
        return Err(Error::Data("cross-entropy of an empty batch".into()));
    }
    Ok(ce_sum(probs, labels)? / labels.len() as f64)
}
