//! Synthetic EEG: a linear forward model from weighted flicker codes to
//! multi-channel recordings with 1/f background noise.
//!
//! Each region's code is held for one display frame per sample, made
//! zero-mean and circularly convolved with the subject's VEP kernel. Since
//! the code repeats every step, the noiseless response is periodic and the
//! circular convolution is the steady-state response. The weighted sum of
//! region responses is the single evoked source, projected to the channels
//! by a unit-norm mixing vector.

use std::sync::Mutex;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::config::SessionConfig;
use crate::eeg::EegEpoch;
use crate::error::{Error, Result};
use crate::stimulus::{VisualFieldWeights, WnSequence};

pub const N_CHANNELS: usize = 21;

/// Length of the VEP kernel in seconds (125 taps at 250 Hz).
pub const KERNEL_SECONDS: f64 = 0.5;

/// Fraction of the noise standard deviation common to all channels.
pub const SHARED_NOISE_FRACTION: f64 = 0.3;

/// Gamma shape parameter of both kernel lobes.
const GAMMA_SHAPE: f64 = 6.0;

/// Variance of a uniform [0, 1] code value.
const CODE_VARIANCE: f64 = 1.0 / 12.0;

/// Generative parameters of one synthetic subject.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SubjectParams {
    /// Peak time of the positive kernel lobe.
    pub early_peak_s: f64,
    /// Peak time of the negative kernel lobe.
    pub late_peak_s: f64,
    /// Amplitude of the negative lobe relative to the positive one.
    pub late_ratio: f64,
    pub attention_sigma_px: f64,
    /// Standard deviation of the background noise on every channel.
    pub noise_amplitude: f64,
    pub latency_samples: usize,
    pub seed: u64,
}

impl Default for SubjectParams {
    fn default() -> Self {
        Self {
            early_peak_s: 0.1,
            late_peak_s: 0.2,
            late_ratio: 0.7,
            attention_sigma_px: 100.0,
            noise_amplitude: DEFAULT_NOISE_AMPLITUDE,
            latency_samples: 10,
            seed: 0,
        }
    }
}

/// Noise level of the default subject (calibrated against the closed-loop
/// success and throughput bands).
pub const DEFAULT_NOISE_AMPLITUDE: f64 = 0.09;

/// Ranges the cohort generator draws from.
pub mod cohort_ranges {
    pub const EARLY_PEAK_S: (f64, f64) = (0.085, 0.115);
    pub const LATE_PEAK_S: (f64, f64) = (0.17, 0.23);
    pub const LATE_RATIO: (f64, f64) = (0.5, 0.9);
    /// As a fraction of the screen width.
    pub const ATTENTION_SIGMA: (f64, f64) = (0.1, 0.15);
    pub const LATENCY_SAMPLES: (usize, usize) = (5, 15);
    /// Noise amplitude; the ratio spans 12 dB.
    pub const NOISE_AMPLITUDE: (f64, f64) = (0.05, 0.2);
}

/// A stand-in for one person's visual cortex and recording.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSubject {
    pub params: SubjectParams,
    /// Unit-energy impulse response at the processing rate.
    pub vep_kernel: Vec<f64>,
    /// Unit-norm projection of the source to the channels.
    pub channel_mixing: Vec<f64>,
}

impl SyntheticSubject {
    pub fn new(params: SubjectParams, sample_rate_hz: f64) -> Result<Self> {
        let p = &params;
        if !(p.early_peak_s > 0.0 && p.late_peak_s > p.early_peak_s) {
            return Err(Error::InvalidArgument(
                "kernel peaks must satisfy 0 < early < late".into(),
            ));
        }
        if !(p.late_ratio >= 0.0 && p.attention_sigma_px > 0.0) {
            return Err(Error::InvalidArgument(
                "late_ratio ≥ 0 and attention_sigma_px > 0 required".into(),
            ));
        }
        if !(p.noise_amplitude >= 0.0 && p.noise_amplitude.is_finite()) {
            return Err(Error::InvalidArgument(
                "noise_amplitude must be finite and ≥ 0".into(),
            ));
        }
        let vep_kernel = vep_kernel(p.early_peak_s, p.late_peak_s, p.late_ratio, sample_rate_hz);
        let channel_mixing = channel_mixing(p.seed, N_CHANNELS);
        Ok(Self {
            params,
            vep_kernel,
            channel_mixing,
        })
    }

    /// The subject the closed-loop bands are calibrated on.
    pub fn default_for(config: &SessionConfig) -> Self {
        let params = SubjectParams {
            attention_sigma_px: config.width() / 8.0,
            ..SubjectParams::default()
        };
        Self::new(params, config.processing_rate_hz).expect("default subject parameters are valid")
    }

    /// A subject whose recordings carry no noise.
    pub fn noiseless(&self) -> Self {
        let mut s = self.clone();
        s.params.noise_amplitude = 0.0;
        s
    }

    pub fn attention_sigma_px(&self) -> f64 {
        self.params.attention_sigma_px
    }

    pub fn n_channels(&self) -> usize {
        self.channel_mixing.len()
    }

    /// Nominal per-channel SNR in dB: the mean evoked power per channel for a
    /// single attended code over the noise power.
    pub fn snr_db(&self) -> f64 {
        let signal = CODE_VARIANCE / self.n_channels() as f64;
        10.0 * (signal / self.params.noise_amplitude.powi(2)).log10()
    }
}

/// Difference of two gamma densities peaking at `early` and `late` seconds,
/// normalized to unit energy.
pub fn vep_kernel(early_peak_s: f64, late_peak_s: f64, late_ratio: f64, rate_hz: f64) -> Vec<f64> {
    let taps = (KERNEL_SECONDS * rate_hz).round() as usize;
    let lobe = |t: f64, peak: f64| {
        // gamma density with mode at `peak`, scaled to unit maximum
        let theta = peak / (GAMMA_SHAPE - 1.0);
        let x = t / theta;
        let xm = GAMMA_SHAPE - 1.0;
        ((GAMMA_SHAPE - 1.0) * (x / xm).ln() - (x - xm)).exp()
    };
    let mut h: Vec<f64> = (0..taps)
        .map(|k| {
            let t = k as f64 / rate_hz;
            if t == 0.0 {
                0.0
            } else {
                lobe(t, early_peak_s) - late_ratio * lobe(t, late_peak_s)
            }
        })
        .collect();
    let energy = h.iter().map(|v| v * v).sum::<f64>().sqrt();
    for v in &mut h {
        *v /= energy;
    }
    h
}

/// Positive, occipitally biased channel weights drawn from `seed`, unit norm.
fn channel_mixing(seed: u64, n: usize) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(1);
    // channel index as a stand-in for scalp position, strongest at the end
    let mut a: Vec<f64> = (0..n)
        .map(|c| {
            let posterior = (c as f64 + 1.0) / n as f64;
            posterior * posterior + 0.25 * rng.random::<f64>()
        })
        .collect();
    let norm = a.iter().map(|v| v * v).sum::<f64>().sqrt();
    for v in &mut a {
        *v /= norm;
    }
    a
}

/// A deterministic cohort of `n` subjects.
///
/// The noise amplitude is stratified on a log scale so the cohort covers the
/// whole SNR range; the other parameters are drawn uniformly.
pub fn make_cohort(n: usize, seed: u64, config: &SessionConfig) -> Result<Vec<SyntheticSubject>> {
    use cohort_ranges::*;
    if n == 0 {
        return Err(Error::InvalidArgument(
            "cohort needs at least one subject".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut strata: Vec<usize> = (0..n).collect();
    // shuffled so subject index does not predict noise level
    strata.shuffle(&mut rng);
    let uniform = |rng: &mut ChaCha8Rng, (lo, hi): (f64, f64)| lo + (hi - lo) * rng.random::<f64>();
    let w = config.width();
    (0..n)
        .map(|i| {
            let u = (strata[i] as f64 + rng.random::<f64>()) / n as f64;
            let (lo, hi) = NOISE_AMPLITUDE;
            let params = SubjectParams {
                early_peak_s: uniform(&mut rng, EARLY_PEAK_S),
                late_peak_s: uniform(&mut rng, LATE_PEAK_S),
                late_ratio: uniform(&mut rng, LATE_RATIO),
                attention_sigma_px: w * uniform(&mut rng, ATTENTION_SIGMA),
                noise_amplitude: lo * (hi / lo).powf(u),
                latency_samples: rng.random_range(LATENCY_SAMPLES.0..=LATENCY_SAMPLES.1),
                seed: rng.random(),
            };
            SyntheticSubject::new(params, config.processing_rate_hz)
        })
        .collect()
}

/// Precomputed per-region responses of one subject to one code bank.
///
/// Cheap to share between threads; every call to [`Simulator::epoch`] owns
/// its noise generator.
pub struct Simulator {
    subject: SyntheticSubject,
    /// `basis[i][t]`: source response to region i's code over one period.
    basis: Vec<Vec<f64>>,
    rate_hz: f64,
    planner: Mutex<FftPlanner<f64>>,
}

impl std::fmt::Debug for Simulator {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Simulator")
            .field("subject", &self.subject)
            .field("period", &self.period())
            .field("rate_hz", &self.rate_hz)
            .finish()
    }
}

impl Simulator {
    /// `samples_per_step` is the length of one code period at `rate_hz`.
    pub fn new(
        subject: &SyntheticSubject,
        bank: &[WnSequence],
        samples_per_step: usize,
        rate_hz: f64,
    ) -> Result<Self> {
        if bank.is_empty() {
            return Err(Error::InvalidArgument("empty code bank".into()));
        }
        if samples_per_step == 0 {
            return Err(Error::InvalidArgument("step must contain samples".into()));
        }
        let basis = bank
            .iter()
            .map(|code| {
                region_response(
                    code,
                    &subject.vep_kernel,
                    subject.params.latency_samples,
                    samples_per_step,
                )
            })
            .collect();
        Ok(Self {
            subject: subject.clone(),
            basis,
            rate_hz,
            planner: Mutex::new(FftPlanner::new()),
        })
    }

    pub fn for_config(
        subject: &SyntheticSubject,
        bank: &[WnSequence],
        config: &SessionConfig,
    ) -> Result<Self> {
        Self::new(
            subject,
            bank,
            config.samples_per_step(),
            config.processing_rate_hz,
        )
    }

    pub fn subject(&self) -> &SyntheticSubject {
        &self.subject
    }

    pub fn period(&self) -> usize {
        self.basis[0].len()
    }

    pub fn n_regions(&self) -> usize {
        self.basis.len()
    }

    /// Evoked source for `n_steps` code periods.
    pub fn source(&self, weights: &VisualFieldWeights, n_steps: usize) -> Result<Vec<f64>> {
        if weights.len() != self.basis.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} weights for {} regions",
                weights.len(),
                self.basis.len()
            )));
        }
        let period = self.period();
        let mut one = vec![0.0; period];
        for (w, b) in weights.weights.iter().zip(&self.basis) {
            if *w != 0.0 {
                for (o, v) in one.iter_mut().zip(b) {
                    *o += w * v;
                }
            }
        }
        Ok(one.iter().copied().cycle().take(period * n_steps).collect())
    }

    /// One code period while the weights change: segment j of
    /// `segments` equal slices of the period uses `segments[j]`.
    pub fn varying_source(&self, segments: &[VisualFieldWeights]) -> Result<Vec<f64>> {
        if segments.is_empty() {
            return Err(Error::InvalidArgument("no weight segments".into()));
        }
        if let Some(w) = segments.iter().find(|w| w.len() != self.basis.len()) {
            return Err(Error::DimensionMismatch(format!(
                "{} weights for {} regions",
                w.len(),
                self.basis.len()
            )));
        }
        let period = self.period();
        Ok((0..period)
            .map(|t| {
                let w = &segments[t * segments.len() / period].weights;
                w.iter().zip(&self.basis).map(|(w, b)| w * b[t]).sum()
            })
            .collect())
    }

    /// One recording of `n_steps` periods; `noise_key` selects the noise
    /// realization (e.g. a running step counter).
    pub fn epoch(
        &self,
        weights: &VisualFieldWeights,
        n_steps: usize,
        noise_key: u64,
    ) -> Result<EegEpoch> {
        self.record(self.source(weights, n_steps)?, noise_key)
    }

    /// One period recorded while the weights change, see [`Simulator::varying_source`].
    pub fn varying_epoch(
        &self,
        segments: &[VisualFieldWeights],
        noise_key: u64,
    ) -> Result<EegEpoch> {
        self.record(self.varying_source(segments)?, noise_key)
    }

    /// Mix the source to the channels and add noise.
    fn record(&self, source: Vec<f64>, noise_key: u64) -> Result<EegEpoch> {
        let len = source.len();
        let amp = self.subject.params.noise_amplitude;
        let mut samples: Vec<Vec<f64>> = self
            .subject
            .channel_mixing
            .iter()
            .map(|a| source.iter().map(|s| a * s).collect())
            .collect();
        if amp > 0.0 {
            let mut rng = ChaCha8Rng::seed_from_u64(self.subject.params.seed);
            rng.set_stream(noise_key.wrapping_add(2));
            let shared = self.pink_noise(len, &mut rng);
            let own = (1.0 - SHARED_NOISE_FRACTION * SHARED_NOISE_FRACTION).sqrt();
            for ch in samples.iter_mut() {
                let private = self.pink_noise(len, &mut rng);
                for ((x, p), s) in ch.iter_mut().zip(&private).zip(&shared) {
                    *x += amp * (own * p + SHARED_NOISE_FRACTION * s);
                }
            }
        }
        // stored as 32-bit floats in session files; quantize here so files
        // round-trip exactly
        for ch in samples.iter_mut() {
            for x in ch.iter_mut() {
                *x = *x as f32 as f64;
            }
        }
        EegEpoch::new(samples, self.rate_hz)
    }

    /// Unit-variance Gaussian noise with a 1/f power spectrum and no DC.
    fn pink_noise(&self, n: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
        if n < 2 {
            return vec![0.0; n];
        }
        let ifft = self
            .planner
            .lock()
            .expect("fft planner lock")
            .plan_fft_inverse(n);
        let mut spec = vec![Complex::new(0.0, 0.0); n];
        let mut power = 0.0;
        for k in 1..=n / 2 {
            let amp = 1.0 / (k as f64).sqrt();
            let re: f64 = rng.sample(StandardNormal);
            if 2 * k == n {
                spec[k] = Complex::new(amp * re, 0.0);
                power += amp * amp;
            } else {
                let im: f64 = rng.sample(StandardNormal);
                spec[k] = Complex::new(amp * re, amp * im);
                spec[n - k] = spec[k].conj();
                power += 4.0 * amp * amp;
            }
        }
        ifft.process(&mut spec);
        // inverse transform is unnormalized: x = Σ X_k e^{…}, var = power
        let scale = 1.0 / power.sqrt();
        spec.iter().map(|c| c.re * scale).collect()
    }
}

/// Zero-mean sample-and-hold code, circularly convolved with the kernel and
/// delayed by `latency` samples.
fn region_response(code: &WnSequence, kernel: &[f64], latency: usize, period: usize) -> Vec<f64> {
    let frames = code.frames();
    let mean = code.mean();
    let held: Vec<f64> = (0..period)
        .map(|t| code.values[t * frames / period] - mean)
        .collect();
    (0..period)
        .map(|t| {
            kernel
                .iter()
                .enumerate()
                .map(|(k, h)| {
                    h * held[(t as i64 - (k + latency) as i64).rem_euclid(period as i64) as usize]
                })
                .sum()
        })
        .collect()
}

/// Simulate one recording of `duration_s` while the subject attends with
/// `weights`. `noise_key` picks the noise realization.
pub fn simulate_epoch(
    subject: &SyntheticSubject,
    weights: &VisualFieldWeights,
    bank: &[WnSequence],
    duration_s: f64,
    config: &SessionConfig,
    noise_key: u64,
) -> Result<EegEpoch> {
    let steps = duration_s / config.step_seconds;
    if !(steps >= 1.0 && (steps - steps.round()).abs() < 1e-9) {
        return Err(Error::InvalidArgument(format!(
            "duration {duration_s} s is not a whole number of {} s steps",
            config.step_seconds
        )));
    }
    if weights.len() != bank.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} weights for {} codes",
            weights.len(),
            bank.len()
        )));
    }
    Simulator::for_config(subject, bank, config)?.epoch(weights, steps.round() as usize, noise_key)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stimulus::generate_wn_bank;
    use approx::assert_abs_diff_eq;

    fn setup() -> (SessionConfig, SyntheticSubject, Vec<WnSequence>) {
        let config = SessionConfig::default();
        let subject = SyntheticSubject::default_for(&config);
        let bank = generate_wn_bank(8, 60, 3).unwrap();
        (config, subject, bank)
    }

    #[test]
    fn kernel_is_unit_energy_with_two_lobes() {
        let h = vep_kernel(0.1, 0.2, 0.7, 250.0);
        assert_eq!(h.len(), 125);
        assert_abs_diff_eq!(h.iter().map(|v| v * v).sum::<f64>(), 1.0, epsilon = 1e-12);
        let argmax = (0..h.len()).max_by(|&a, &b| h[a].total_cmp(&h[b])).unwrap();
        let argmin = (0..h.len()).min_by(|&a, &b| h[a].total_cmp(&h[b])).unwrap();
        assert!(
            (20..=27).contains(&argmax),
            "positive peak at sample {argmax}"
        );
        assert!(
            argmin > argmax && argmin <= 65,
            "negative peak at sample {argmin}"
        );
    }

    #[test]
    fn mixing_has_unit_norm() {
        let (_, s, _) = setup();
        assert_eq!(s.n_channels(), 21);
        assert_abs_diff_eq!(
            s.channel_mixing.iter().map(|v| v * v).sum::<f64>(),
            1.0,
            epsilon = 1e-12
        );
    }

    #[test]
    fn noiseless_one_hot_is_mixing_times_convolution() {
        let (config, subject, bank) = setup();
        let subject = subject.noiseless();
        let k = 3;
        let epoch = simulate_epoch(
            &subject,
            &VisualFieldWeights::one_hot(8, k),
            &bank,
            1.0,
            &config,
            0,
        )
        .unwrap();
        // direct linear convolution of three periods of the code, middle period kept
        let code = &bank[k];
        let m = code.mean();
        let u: Vec<f64> = (0..750)
            .map(|t| code.values[(t % 250) * 60 / 250] - m)
            .collect();
        let lat = subject.params.latency_samples;
        for t in 0..250 {
            let tt = 250 + t;
            let mut y = 0.0;
            for (j, h) in subject.vep_kernel.iter().enumerate() {
                y += h * u[tt - j - lat];
            }
            for c in 0..21 {
                let expected = (subject.channel_mixing[c] * y) as f32 as f64;
                assert_eq!(epoch.samples[c][t], expected);
            }
        }
    }

    #[test]
    fn equal_weights_respond_to_mean_code() {
        let (config, subject, bank) = setup();
        let subject = subject.noiseless();
        let epoch = simulate_epoch(
            &subject,
            &VisualFieldWeights::uniform(8),
            &bank,
            1.0,
            &config,
            0,
        )
        .unwrap();
        let values: Vec<f64> = (0..60)
            .map(|f| bank.iter().map(|s| s.values[f]).sum::<f64>() / 8.0)
            .collect();
        let mean_code = [WnSequence {
            region_index: 0,
            values,
        }];
        let single = simulate_epoch(
            &subject,
            &VisualFieldWeights::one_hot(1, 0),
            &mean_code,
            1.0,
            &config,
            0,
        )
        .unwrap();
        for c in 0..21 {
            for t in 0..250 {
                assert_abs_diff_eq!(epoch.samples[c][t], single.samples[c][t], epsilon = 1e-6);
            }
        }
    }

    #[test]
    fn epochs_repeat_each_step_and_are_seeded() {
        let (config, subject, bank) = setup();
        let w = VisualFieldWeights::one_hot(8, 1);
        let a = simulate_epoch(&subject, &w, &bank, 2.0, &config, 5).unwrap();
        assert_eq!(a.len(), 500);
        let b = simulate_epoch(&subject, &w, &bank, 2.0, &config, 5).unwrap();
        assert_eq!(a, b);
        let c = simulate_epoch(&subject, &w, &bank, 2.0, &config, 6).unwrap();
        assert_ne!(a, c);
        let quiet = simulate_epoch(&subject.noiseless(), &w, &bank, 2.0, &config, 5).unwrap();
        assert_eq!(&quiet.samples[4][..250], &quiet.samples[4][250..]);
    }

    #[test]
    fn noise_has_requested_power() {
        let (config, subject, bank) = setup();
        let mut s = subject.clone();
        s.params.noise_amplitude = 2.0;
        let sim = Simulator::for_config(&s, &bank, &config).unwrap();
        let mut acc = 0.0;
        let mut n = 0.0;
        for key in 0..40 {
            let e = sim.epoch(&VisualFieldWeights::zeros(8), 1, key).unwrap();
            for ch in &e.samples {
                acc += ch.iter().map(|v| v * v).sum::<f64>();
                n += ch.len() as f64;
            }
        }
        let rms = (acc / n).sqrt();
        assert!((rms - 2.0).abs() < 0.1, "rms {rms}");
    }

    #[test]
    fn rejects_bad_inputs() {
        let (config, subject, bank) = setup();
        let w = VisualFieldWeights::uniform(8);
        assert!(simulate_epoch(&subject, &w, &[], 1.0, &config, 0).is_err());
        assert!(simulate_epoch(
            &subject,
            &VisualFieldWeights::uniform(7),
            &bank,
            1.0,
            &config,
            0
        )
        .is_err());
        assert!(simulate_epoch(&subject, &w, &bank, 1.5, &config, 0).is_err());
    }

    #[test]
    fn cohort_is_reproducible_and_spans_snr() {
        let config = SessionConfig::default();
        let a = make_cohort(17, 11, &config).unwrap();
        let b = make_cohort(17, 11, &config).unwrap();
        assert_eq!(a, b);
        let c = make_cohort(17, 12, &config).unwrap();
        assert_ne!(a[0].vep_kernel, c[0].vep_kernel);
        for i in 0..17 {
            for j in 0..i {
                assert_ne!(a[i], a[j]);
            }
        }
        let snr: Vec<f64> = a.iter().map(SyntheticSubject::snr_db).collect();
        let span = snr.iter().cloned().fold(f64::MIN, f64::max)
            - snr.iter().cloned().fold(f64::MAX, f64::min);
        assert!(span >= 10.0, "span {span} dB");
        let (lo, hi) = cohort_ranges::NOISE_AMPLITUDE;
        assert!(20.0 * (hi / lo).log10() >= 12.0);
        assert!(make_cohort(0, 1, &config).is_err());
    }
}
