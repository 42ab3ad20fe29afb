use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

/// Cosine ramp that fades encoding bands in between `start` and `end` steps.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AnnealSchedule {
    pub start: u64,
    pub end: u64,
    pub bands: usize,
    pub enabled: bool,
}

impl AnnealSchedule {
    pub fn disabled(bands: usize) -> Self {
        Self { start: 0, end: 1, bands, enabled: false }
    }

    /// Band weights `w_1..w_K` at step `n`.
    pub fn weights(&self, n: u64) -> Vec<f64> {
        if !self.enabled {
            return vec![1.0; self.bands];
        }
        let k_total = self.bands as f64;
        let progress = (n as f64 - self.start as f64) / (self.end as f64 - self.start as f64);
        (1..=self.bands)
            .map(|k| {
                let alpha = (progress * k_total - k as f64).clamp(0.0, 1.0);
                0.5 * (1.0 - (alpha * PI).cos())
            })
            .collect()
    }
}
