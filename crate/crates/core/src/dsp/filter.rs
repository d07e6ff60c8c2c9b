//! Butterworth IIR design as second-order sections, and zero-phase
//! forward-backward application.

use std::f64::consts::PI;

/// One biquad, normalized so that `a0 = 1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Biquad {
    pub b: [f64; 3],
    pub a: [f64; 3],
}

impl Biquad {
    /// Gain for a constant input.
    pub fn dc_gain(&self) -> f64 {
        (self.b[0] + self.b[1] + self.b[2]) / (self.a[0] + self.a[1] + self.a[2])
    }

    fn pole_radius(&self) -> f64 {
        let (a1, a2) = (self.a[1], self.a[2]);
        let disc = a1 * a1 - 4.0 * a2;
        if disc < 0.0 {
            a2.sqrt()
        } else {
            let s = disc.sqrt();
            ((-a1 + s) / 2.0).abs().max(((-a1 - s) / 2.0).abs())
        }
    }

    /// Complex gain at normalized angular frequency `w` (radians/sample).
    pub fn response(&self, w: f64) -> (f64, f64) {
        let eval = |c: &[f64; 3]| {
            let re = c[0] + c[1] * w.cos() + c[2] * (2.0 * w).cos();
            let im = -c[1] * w.sin() - c[2] * (2.0 * w).sin();
            (re, im)
        };
        let (nr, ni) = eval(&self.b);
        let (dr, di) = eval(&self.a);
        let den = dr * dr + di * di;
        ((nr * dr + ni * di) / den, (ni * dr - nr * di) / den)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BandType {
    Lowpass,
    Highpass,
}

/// Cascade of biquads.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Sos {
    pub sections: Vec<Biquad>,
}

impl Sos {
    /// Digital Butterworth via the bilinear transform with pre-warped cutoff.
    pub fn butterworth(order: usize, cutoff_hz: f64, fs: f64, band: BandType) -> Self {
        assert!(order >= 1, "filter order must be ≥ 1");
        assert!(
            cutoff_hz > 0.0 && cutoff_hz < fs / 2.0,
            "cutoff must lie inside (0, Nyquist)"
        );
        let k = (PI * cutoff_hz / fs).tan();
        let mut sections = Vec::with_capacity(order.div_ceil(2));
        for i in 0..order / 2 {
            // s² + c·s + 1 for each conjugate pole pair of the analog prototype
            let c = 2.0 * (PI * (2 * i + 1) as f64 / (2 * order) as f64).sin();
            let a0 = 1.0 + c * k + k * k;
            let a = [1.0, (2.0 * k * k - 2.0) / a0, (1.0 - c * k + k * k) / a0];
            let b = match band {
                BandType::Lowpass => {
                    let g = k * k / a0;
                    [g, 2.0 * g, g]
                }
                BandType::Highpass => {
                    let g = 1.0 / a0;
                    [g, -2.0 * g, g]
                }
            };
            sections.push(Biquad { b, a });
        }
        if order % 2 == 1 {
            let a = [1.0, (k - 1.0) / (k + 1.0), 0.0];
            let b = match band {
                BandType::Lowpass => [k / (1.0 + k), k / (1.0 + k), 0.0],
                BandType::Highpass => [1.0 / (1.0 + k), -1.0 / (1.0 + k), 0.0],
            };
            sections.push(Biquad { b, a });
        }
        Self { sections }
    }

    /// Band-pass as a high-pass/low-pass cascade of the given order each.
    pub fn butterworth_bandpass(order: usize, low_hz: f64, high_hz: f64, fs: f64) -> Self {
        let mut sos = Self::butterworth(order, low_hz, fs, BandType::Highpass);
        sos.sections
            .extend(Self::butterworth(order, high_hz, fs, BandType::Lowpass).sections);
        sos
    }

    pub fn then(mut self, other: Sos) -> Self {
        self.sections.extend(other.sections);
        self
    }

    /// |H(f)| of the cascade for a single pass.
    pub fn magnitude(&self, freq_hz: f64, fs: f64) -> f64 {
        let w = 2.0 * PI * freq_hz / fs;
        self.sections
            .iter()
            .map(|s| {
                let (re, im) = s.response(w);
                re.hypot(im)
            })
            .product()
    }

    /// Shortest input that `filtfilt` accepts: more than three times the
    /// equivalent tap count `2·sections + 1`.
    pub fn min_len(&self) -> usize {
        3 * (2 * self.sections.len() + 1)
    }

    /// Number of state variables of the cascade.
    pub fn state_len(&self) -> usize {
        2 * self.sections.len()
    }

    /// Causal filtering from an explicit initial state (two values per
    /// section, transposed direct form II).
    pub fn run(&self, x: &[f64], state: &[f64]) -> Vec<f64> {
        debug_assert_eq!(state.len(), self.state_len());
        let mut y = x.to_vec();
        for (s, z) in self.sections.iter().zip(state.chunks_exact(2)) {
            let [b0, b1, b2] = s.b;
            let [_, a1, a2] = s.a;
            let (mut z1, mut z2) = (z[0], z[1]);
            for v in y.iter_mut() {
                let input = *v;
                let out = b0 * input + z1;
                z1 = b1 * input - a1 * out + z2;
                z2 = b2 * input - a2 * out;
                *v = out;
            }
        }
        y
    }

    /// Causal filtering. `level` selects the initial state: the steady
    /// state for a constant input of that value, or rest when `None`.
    pub fn filter(&self, x: &[f64], level: Option<f64>) -> Vec<f64> {
        let mut state = Vec::with_capacity(self.state_len());
        let mut u = level.unwrap_or(0.0);
        for s in &self.sections {
            let out = s.dc_gain() * u;
            let z2 = s.b[2] * u - s.a[2] * out;
            state.push(s.b[1] * u - s.a[1] * out + z2);
            state.push(z2);
            u = out;
        }
        self.run(x, &state)
    }

    /// Reflection length: enough samples for the slowest pole to decay to
    /// 1e-4, limited by the signal length.
    pub fn pad_len(&self, n: usize) -> usize {
        let r = self
            .sections
            .iter()
            .map(Biquad::pole_radius)
            .fold(0.0f64, f64::max);
        let settle = if r <= 0.0 {
            1
        } else if r >= 1.0 {
            usize::MAX
        } else {
            ((1e-4f64).ln() / r.ln()).ceil() as usize
        };
        settle.max(self.min_len()).min(n - 1)
    }

    /// Zero-phase forward-backward filtering with odd-reflection padding and
    /// steady-state initial conditions at both passes.
    ///
    /// Panics if `x.len() <= self.min_len()`; callers validate lengths first.
    pub fn filtfilt(&self, x: &[f64]) -> Vec<f64> {
        let n = x.len();
        assert!(
            n > self.min_len(),
            "signal too short for zero-phase filtering"
        );
        if self.sections.is_empty() {
            return x.to_vec();
        }
        let pad = self.pad_len(n);
        let mut ext = Vec::with_capacity(n + 2 * pad);
        ext.extend((1..=pad).rev().map(|i| 2.0 * x[0] - x[i]));
        ext.extend_from_slice(x);
        ext.extend((1..=pad).map(|i| 2.0 * x[n - 1] - x[n - 1 - i]));

        let mut y = self.filter(&ext, Some(ext[0]));
        y.reverse();
        let mut y = self.filter(&y, Some(y[0]));
        y.reverse();
        y.drain(..pad);
        y.truncate(n);
        y
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    /// Analytic Butterworth magnitude after bilinear warping.
    fn butter_oracle(order: usize, fc: f64, f: f64, fs: f64, band: BandType) -> f64 {
        let ratio = (PI * f / fs).tan() / (PI * fc / fs).tan();
        let x = match band {
            BandType::Lowpass => ratio,
            BandType::Highpass => 1.0 / ratio,
        };
        1.0 / (1.0 + x.powi(2 * order as i32)).sqrt()
    }

    #[test]
    fn butterworth_magnitude_matches_closed_form() {
        for (order, band) in [
            (4, BandType::Lowpass),
            (4, BandType::Highpass),
            (3, BandType::Lowpass),
            (8, BandType::Lowpass),
            (5, BandType::Highpass),
        ] {
            let sos = Sos::butterworth(order, 30.0, 250.0, band);
            for f in [1.0, 5.0, 20.0, 29.0, 30.0, 31.0, 50.0, 100.0, 120.0] {
                assert_abs_diff_eq!(
                    sos.magnitude(f, 250.0),
                    butter_oracle(order, 30.0, f, 250.0, band),
                    epsilon = 1e-10
                );
            }
        }
    }

    #[test]
    fn filtfilt_of_constant_through_highpass_is_zero() {
        let sos = Sos::butterworth(4, 4.0, 250.0, BandType::Highpass);
        let y = sos.filtfilt(&vec![3.5; 250]);
        assert!(y.iter().all(|v| v.abs() < 1e-9));
    }

    #[test]
    fn filtfilt_preserves_symmetry() {
        let sos = Sos::butterworth_bandpass(4, 4.0, 30.0, 250.0);
        let n = 251;
        let x: Vec<f64> = (0..n)
            .map(|i| {
                let t = (i as f64 - 125.0) / 6.0;
                (-t * t).exp()
            })
            .collect();
        let y = sos.filtfilt(&x);
        let peak = y
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
            .unwrap()
            .0;
        assert!((peak as i64 - 125).abs() <= 1);
        for k in 0..60 {
            assert_abs_diff_eq!(y[125 - k], y[125 + k], epsilon = 1e-6);
        }
    }

    #[test]
    fn filtfilt_squares_the_magnitude() {
        let fs = 250.0;
        let sos = Sos::butterworth(4, 30.0, fs, BandType::Lowpass);
        let f = 35.0;
        let n = 5000;
        let x: Vec<f64> = (0..n)
            .map(|i| (2.0 * PI * f * i as f64 / fs).sin())
            .collect();
        let y = sos.filtfilt(&x);
        let amp = |v: &[f64]| (v[1000..4000].iter().map(|s| s * s).sum::<f64>() / 3000.0).sqrt();
        let gain = amp(&y) / amp(&x);
        assert_abs_diff_eq!(gain, sos.magnitude(f, fs).powi(2), epsilon = 1e-3);
    }
}
