use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// When and how strongly the ground-truth teacher drifts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DriftSchedule {
    /// Stream positions of the anchors; strictly increasing, first = 0.
    pub anchor_times: Vec<u64>,
    /// ‖θ_{j+1} − θ_j‖ / ‖θ_j‖ for every teacher tensor, in [0, 2].
    pub drift_magnitude: f64,
    /// Fraction of popularity ranks reshuffled between consecutive anchors.
    pub popularity_drift: f64,
    pub seed: u64,
}

impl DriftSchedule {
    /// `count` anchors spread evenly over `[0, span]`.
    pub fn evenly_spaced(count: usize, span: u64, drift_magnitude: f64, popularity_drift: f64, seed: u64) -> Result<Self> {
        if count == 0 {
            return Err(Error::Config("need at least one anchor".into()));
        }
        let anchor_times = if count == 1 {
            vec![0]
        } else {
            (0..count).map(|j| span * j as u64 / (count as u64 - 1)).collect()
        };
        let s = Self { anchor_times, drift_magnitude, popularity_drift, seed };
        s.validate()?;
        Ok(s)
    }

    pub fn stationary(seed: u64) -> Self {
        Self { anchor_times: vec![0], drift_magnitude: 0.0, popularity_drift: 0.0, seed }
    }

    pub fn validate(&self) -> Result<()> {
        if self.anchor_times.first() != Some(&0) {
            return Err(Error::Config("first anchor time must be 0".into()));
        }
        if self.anchor_times.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Config("anchor times must be strictly increasing".into()));
        }
        if !(0.0..=2.0).contains(&self.drift_magnitude) {
            return Err(Error::Config(format!("drift_magnitude {} outside [0, 2]", self.drift_magnitude)));
        }
        if !(0.0..=1.0).contains(&self.popularity_drift) {
            return Err(Error::Config(format!("popularity_drift {} outside [0, 1]", self.popularity_drift)));
        }
        Ok(())
    }

    /// Anchor segment `(j, u)` so that the state at `t` is `(1−u)·anchor_j + u·anchor_{j+1}`.
    /// Beyond the last anchor `u = 0` and `j` is the last index.
    pub fn locate(&self, t: u64) -> (usize, f64) {
        let last = self.anchor_times.len() - 1;
        let j = self.anchor_times.partition_point(|&a| a <= t) - 1;
        if j >= last {
            return (last, 0.0);
        }
        let (a, b) = (self.anchor_times[j], self.anchor_times[j + 1]);
        (j, (t - a) as f64 / (b - a) as f64)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn evenly_spaced_anchors() {
        let s = DriftSchedule::evenly_spaced(6, 2_000_000, 1.0, 0.2, 0).unwrap();
        assert_eq!(s.anchor_times, vec![0, 400_000, 800_000, 1_200_000, 1_600_000, 2_000_000]);
    }

    #[test]
    fn locate_interpolates_and_clamps() {
        let s = DriftSchedule::evenly_spaced(3, 100, 1.0, 0.0, 0).unwrap();
        assert_eq!(s.locate(0), (0, 0.0));
        assert_eq!(s.locate(25), (0, 0.5));
        assert_eq!(s.locate(50), (1, 0.0));
        assert_eq!(s.locate(100), (2, 0.0));
        assert_eq!(s.locate(10_000), (2, 0.0));
    }

    #[test]
    fn rejects_bad_anchors() {
        let mut s = DriftSchedule::stationary(0);
        s.anchor_times = vec![1, 5];
        assert!(s.validate().is_err());
        s.anchor_times = vec![0, 5, 5];
        assert!(s.validate().is_err());
        s.anchor_times = vec![0];
        s.drift_magnitude = -0.1;
        assert!(s.validate().is_err());
    }
}
