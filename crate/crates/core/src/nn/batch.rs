use ndarray::{s, Array2};

use super::embedding::CategoricalFeature;
use crate::error::{Error, Result};

/// A block of labelled examples drawn from consecutive stream positions.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    /// n × dense_dim.
    pub dense: Array2<f64>,
    /// One entry per embedding table.
    pub categorical: Vec<CategoricalFeature>,
    /// 0 or 1 per example.
    pub labels: Vec<u8>,
    /// Stream position of the first example.
    pub virtual_time: u64,
}

impl Batch {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.labels.len();
        if self.dense.nrows() != n {
            return Err(Error::Data(format!("{} dense rows for {n} labels", self.dense.nrows())));
        }
        if let Some(f) = self.categorical.iter().find(|f| f.len() != n) {
            return Err(Error::Data(format!("categorical feature has {} bags for {n} labels", f.len())));
        }
        if let Some(&y) = self.labels.iter().find(|&&y| y > 1) {
            return Err(Error::Data(format!("label {y} is not binary")));
        }
        Ok(())
    }

    /// Examples `[start, end)` as a new batch.
    pub fn slice(&self, start: usize, end: usize) -> Batch {
        Batch {
            dense: self.dense.slice(s![start..end, ..]).to_owned(),
            categorical: self
                .categorical
                .iter()
                .map(|f| CategoricalFeature::from_bags((start..end).map(|i| f.bag(i))))
                .collect(),
            labels: self.labels[start..end].to_vec(),
            virtual_time: self.virtual_time + start as u64,
        }
    }

    /// Concatenates consecutive batches.
    pub fn concat(parts: &[Batch]) -> Result<Batch> {
        let first = parts.first().ok_or_else(|| Error::Data("nothing to concatenate".into()))?;
        let mut expected = first.virtual_time;
        for p in parts {
            if p.virtual_time != expected {
                return Err(Error::Data(format!(
                    "batch at {} does not follow position {expected}",
                    p.virtual_time
                )));
            }
            expected += p.len() as u64;
        }
        let views: Vec<_> = parts.iter().map(|p| p.dense.view()).collect();
        let dense = ndarray::concatenate(ndarray::Axis(0), &views)
            .map_err(|e| Error::Data(format!("dense widths differ: {e}")))?;
        let categorical = (0..first.categorical.len())
            .map(|f| CategoricalFeature::from_bags(parts.iter().flat_map(|p| (0..p.len()).map(move |i| p.categorical[f].bag(i)))))
            .collect();
        Ok(Batch {
            dense,
            categorical,
            labels: parts.iter().flat_map(|p| p.labels.iter().copied()).collect(),
            virtual_time: first.virtual_time,
        })
    }

    pub fn positive_rate(&self) -> f64 {
        if self.is_empty() {
            return 0.0;
        }
        self.labels.iter().map(|&y| y as f64).sum::<f64>() / self.len() as f64
    }
}
