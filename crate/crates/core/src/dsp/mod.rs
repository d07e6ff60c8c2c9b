//! Preprocessing chain (decimation, line-noise removal, band-pass) and the
//! filter bank.

mod filter;

pub use filter::{BandType, Biquad, Sos};

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::eeg::EegEpoch;
use crate::error::{Error, Result};

/// Layout of the preprocessing chain and the nested sub-bands.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FilterBankSpec {
    pub n_subbands: usize,
    pub band_edges_hz: Vec<(f64, f64)>,
    /// Line frequency removed by least-squares regression (with harmonics
    /// below Nyquist).
    pub notch_hz: f64,
    pub bandpass_hz: (f64, f64),
    /// Butterworth order of every high-pass and low-pass stage.
    pub filter_order: usize,
    pub decimation_factor: usize,
    /// Rate after preprocessing.
    pub target_rate_hz: f64,
}

impl Default for FilterBankSpec {
    fn default() -> Self {
        let band_edges_hz = vec![
            (4.0, 30.0),
            (8.0, 30.0),
            (12.0, 30.0),
            (16.0, 30.0),
            (20.0, 30.0),
        ];
        Self {
            n_subbands: band_edges_hz.len(),
            band_edges_hz,
            notch_hz: 50.0,
            bandpass_hz: (4.0, 100.0),
            filter_order: 4,
            decimation_factor: 4,
            target_rate_hz: 250.0,
        }
    }
}

impl FilterBankSpec {
    pub fn validate(&self, rate_hz: f64) -> Result<()> {
        let nyquist = rate_hz / 2.0;
        if self.n_subbands != self.band_edges_hz.len() || self.n_subbands == 0 {
            return Err(Error::InvalidConfig(
                "n_subbands must equal the number of band edges and be ≥ 1".into(),
            ));
        }
        if (self.target_rate_hz - rate_hz).abs() > 1e-9 {
            return Err(Error::InvalidConfig(format!(
                "filter bank targets {} Hz but the processing rate is {rate_hz} Hz",
                self.target_rate_hz
            )));
        }
        let bands = self
            .band_edges_hz
            .iter()
            .chain(std::iter::once(&self.bandpass_hz));
        for &(lo, hi) in bands {
            // the low-pass stage needs a cutoff strictly below Nyquist
            if !(lo > 0.0 && lo < hi && hi < nyquist) {
                return Err(Error::InvalidConfig(format!(
                    "band ({lo}, {hi}) Hz must satisfy 0 < low < high < {nyquist}"
                )));
            }
        }
        if !(self.notch_hz > 0.0 && self.notch_hz < nyquist) {
            return Err(Error::InvalidConfig(
                "notch frequency must lie below Nyquist".into(),
            ));
        }
        if self.filter_order == 0 || self.decimation_factor == 0 {
            return Err(Error::InvalidConfig(
                "filter order and decimation factor must be ≥ 1".into(),
            ));
        }
        Ok(())
    }
}

/// Filter-bank weight `a(m) = m^(−1.25) + 0.25` for 1-based sub-band index `m`.
pub fn subband_weight(m: usize) -> Result<f64> {
    if m < 1 {
        return Err(Error::InvalidArgument("sub-band index is 1-based".into()));
    }
    Ok((m as f64).powf(-1.25) + 0.25)
}

/// Removes a line frequency and its harmonics by projecting them out.
///
/// The sinusoids are fitted together with an intercept over the whole window
/// and only the sinusoidal part is subtracted, so a steady tone disappears
/// exactly. The operation is linear and introduces no phase shift.
#[derive(Debug, Clone)]
pub struct LineNoiseRegression {
    freqs_hz: Vec<f64>,
    rate_hz: f64,
}

impl LineNoiseRegression {
    pub fn new(line_hz: f64, rate_hz: f64) -> Self {
        let nyquist = rate_hz / 2.0;
        let freqs_hz = (1..)
            .map(|k| k as f64 * line_hz)
            .take_while(|f| *f < nyquist - 1e-9)
            .collect();
        Self { freqs_hz, rate_hz }
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let n = x.len();
        let cols = 1 + 2 * self.freqs_hz.len();
        let design = DMatrix::from_fn(n, cols, |t, c| {
            if c == 0 {
                return 1.0;
            }
            let f = self.freqs_hz[(c - 1) / 2];
            let phase = 2.0 * PI * f * t as f64 / self.rate_hz;
            if c % 2 == 1 {
                phase.cos()
            } else {
                phase.sin()
            }
        });
        let y = DVector::from_column_slice(x);
        let gram = design.tr_mul(&design);
        let rhs = design.tr_mul(&y);
        let coef = match gram.clone().cholesky() {
            Some(ch) => ch.solve(&rhs),
            // degenerate windows (e.g. sampling exactly at the zeros of a sine)
            None => gram.svd(true, true).solve(&rhs, 1e-12).expect("svd solve"),
        };
        let mut out = x.to_vec();
        for (t, o) in out.iter_mut().enumerate() {
            let fit: f64 = (1..cols).map(|c| design[(t, c)] * coef[c]).sum();
            *o -= fit;
        }
        out
    }
}

/// Designed filters for one input rate.
#[derive(Debug, Clone)]
pub struct FilterChain {
    decimate: Option<(Sos, usize)>,
    line: LineNoiseRegression,
    bandpass: Sos,
    subbands: Vec<Sos>,
}

impl FilterChain {
    pub fn design(spec: &FilterBankSpec, input_rate_hz: f64) -> Result<Self> {
        spec.validate(spec.target_rate_hz)?;
        let fs = spec.target_rate_hz;
        let decimate = if (input_rate_hz - fs).abs() < 1e-9 {
            None
        } else if (input_rate_hz - fs * spec.decimation_factor as f64).abs() < 1e-9 {
            // anti-aliasing: 8th order at 80 % of the output Nyquist
            let aa = Sos::butterworth(8, 0.8 * fs / 2.0, input_rate_hz, BandType::Lowpass);
            Some((aa, spec.decimation_factor))
        } else {
            return Err(Error::InvalidArgument(format!(
                "input rate {input_rate_hz} Hz is neither {fs} Hz nor {fs} × {}",
                spec.decimation_factor
            )));
        };
        let (lo, hi) = spec.bandpass_hz;
        let subbands = spec
            .band_edges_hz
            .iter()
            .map(|&(lo, hi)| Sos::butterworth_bandpass(spec.filter_order, lo, hi, fs))
            .collect();
        Ok(Self {
            decimate,
            line: LineNoiseRegression::new(spec.notch_hz, fs),
            bandpass: Sos::butterworth_bandpass(spec.filter_order, lo, hi, fs),
            subbands,
        })
    }

    pub fn n_subbands(&self) -> usize {
        self.subbands.len()
    }

    /// Minimum input length (at the input rate) the chain accepts.
    pub fn min_input_len(&self) -> usize {
        match &self.decimate {
            Some((aa, factor)) => (aa.min_len() + 1).max(factor * (self.bandpass.min_len() + 1)),
            None => self.bandpass.min_len() + 1,
        }
    }

    fn check_len(&self, len: usize) -> Result<()> {
        let min = self.min_input_len();
        if len < min {
            return Err(Error::EpochTooShort { len, min: min - 1 });
        }
        Ok(())
    }

    /// Decimate (if needed), remove line noise and band-pass one channel.
    pub fn preprocess_series(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_len(x.len())?;
        let x = match &self.decimate {
            Some((aa, factor)) => aa.filtfilt(x).into_iter().step_by(*factor).collect(),
            None => x.to_vec(),
        };
        let x = self.line.apply(&x);
        Ok(self.bandpass.filtfilt(&x))
    }

    /// Sub-band `m` (0-based) of an already preprocessed channel.
    pub fn subband_series(&self, m: usize, x: &[f64]) -> Result<Vec<f64>> {
        let sos = &self.subbands[m];
        if x.len() <= sos.min_len() {
            return Err(Error::EpochTooShort {
                len: x.len(),
                min: sos.min_len(),
            });
        }
        Ok(sos.filtfilt(x))
    }
}

/// Anti-aliased decimation to the target rate (when needed), line-noise
/// removal and zero-phase band-pass, channel by channel.
pub fn preprocess(raw: &EegEpoch, spec: &FilterBankSpec) -> Result<EegEpoch> {
    let chain = FilterChain::design(spec, raw.sample_rate_hz)?;
    preprocess_with(&chain, raw, spec.target_rate_hz)
}

pub fn preprocess_with(
    chain: &FilterChain,
    raw: &EegEpoch,
    target_rate_hz: f64,
) -> Result<EegEpoch> {
    let samples = raw
        .samples
        .iter()
        .map(|ch| chain.preprocess_series(ch))
        .collect::<Result<Vec<_>>>()?;
    let factor = raw.sample_rate_hz / target_rate_hz;
    Ok(EegEpoch {
        samples,
        sample_rate_hz: target_rate_hz,
        stimulus_phase_offset: (raw.stimulus_phase_offset as f64 / factor).round() as i64,
    })
}

/// Split a preprocessed epoch into the configured sub-bands.
pub fn subband_decompose(epoch: &EegEpoch, spec: &FilterBankSpec) -> Result<Vec<EegEpoch>> {
    if (epoch.sample_rate_hz - spec.target_rate_hz).abs() > 1e-9 {
        return Err(Error::InvalidArgument(format!(
            "sub-band decomposition expects {} Hz input, got {}",
            spec.target_rate_hz, epoch.sample_rate_hz
        )));
    }
    let chain = FilterChain::design(spec, spec.target_rate_hz)?;
    subband_decompose_with(&chain, epoch)
}

pub fn subband_decompose_with(chain: &FilterChain, epoch: &EegEpoch) -> Result<Vec<EegEpoch>> {
    (0..chain.n_subbands())
        .map(|m| {
            let samples = epoch
                .samples
                .iter()
                .map(|ch| chain.subband_series(m, ch))
                .collect::<Result<Vec<_>>>()?;
            Ok(epoch.with_samples(samples))
        })
        .collect()
}
