use crate::error::{Error, Result};
use crate::eval::MetricsRecord;

/// Requests a refresh when the sparse model's relative CE against the dense
/// model exceeded `threshold` in each of the last two aligned windows.
pub fn divergence_monitor(dense: &[MetricsRecord], sparse: &[MetricsRecord], threshold: f64) -> Result<bool> {
    if dense.len() != sparse.len() {
        return Err(Error::Data(format!("{} dense windows vs {} sparse windows", dense.len(), sparse.len())));
    }
    if let Some((d, s)) = dense.iter().zip(sparse).find(|(d, s)| d.virtual_time != s.virtual_time) {
        return Err(Error::Data(format!("windows misaligned at {} vs {}", d.virtual_time, s.virtual_time)));
    }
    if dense.len() < 2 {
        return Ok(false);
    }
    let above = |i: usize| -> Result<bool> {
        Ok(crate::eval::relative_ce(sparse[i].lookahead_ce, dense[i].lookahead_ce)? > threshold)
    };
    let n = dense.len();
    Ok(above(n - 2)? && above(n - 1)?)
}
