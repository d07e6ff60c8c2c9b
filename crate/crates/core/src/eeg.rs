use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A multi-channel window of EEG, channel-major (`samples[channel][t]`), in µV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EegEpoch {
    pub samples: Vec<Vec<f64>>,
    pub sample_rate_hz: f64,
    /// Offset of the first sample from the start of the stimulus code cycle.
    pub stimulus_phase_offset: i64,
}

impl EegEpoch {
    pub fn new(samples: Vec<Vec<f64>>, sample_rate_hz: f64) -> Result<Self> {
        let epoch = Self {
            samples,
            sample_rate_hz,
            stimulus_phase_offset: 0,
        };
        epoch.check()?;
        Ok(epoch)
    }

    pub fn zeros(channels: usize, len: usize, sample_rate_hz: f64) -> Self {
        Self {
            samples: vec![vec![0.0; len]; channels],
            sample_rate_hz,
            stimulus_phase_offset: 0,
        }
    }

    pub fn check(&self) -> Result<()> {
        if !(self.sample_rate_hz > 0.0) {
            return Err(Error::InvalidArgument(
                "sample rate must be positive".into(),
            ));
        }
        let len = self.len();
        if self.samples.iter().any(|c| c.len() != len) {
            return Err(Error::DimensionMismatch("ragged channels in epoch".into()));
        }
        if self.samples.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument(
                "epoch contains non-finite samples".into(),
            ));
        }
        Ok(())
    }

    pub fn channels(&self) -> usize {
        self.samples.len()
    }

    pub fn len(&self) -> usize {
        self.samples.first().map_or(0, Vec::len)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn duration_s(&self) -> f64 {
        self.len() as f64 / self.sample_rate_hz
    }

    /// Channels × samples matrix.
    pub fn to_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.channels(), self.len(), |c, t| self.samples[c][t])
    }

    /// Same metadata, new samples.
    pub fn with_samples(&self, samples: Vec<Vec<f64>>) -> Self {
        Self {
            samples,
            sample_rate_hz: self.sample_rate_hz,
            stimulus_phase_offset: self.stimulus_phase_offset,
        }
    }

    /// Weighted sum of channels, `Σ_c w_c · x_c(t)`.
    pub fn spatially_filter(&self, w: &[f64]) -> Vec<f64> {
        assert_eq!(
            w.len(),
            self.channels(),
            "filter length must match channel count"
        );
        let mut out = vec![0.0; self.len()];
        for (wc, ch) in w.iter().zip(&self.samples) {
            for (o, x) in out.iter_mut().zip(ch) {
                *o += wc * x;
            }
        }
        out
    }

    pub fn scaled(&self, k: f64) -> Self {
        self.with_samples(
            self.samples
                .iter()
                .map(|c| c.iter().map(|x| x * k).collect())
                .collect(),
        )
    }
}
