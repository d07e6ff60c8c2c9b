//! Stability of the cursor while the subject keeps gazing at a point it
//! already sits on.

use serde::{Deserialize, Serialize};

use crate::config::SessionConfig;
use crate::error::Result;
use crate::layout::TargetSpec;
use crate::vec2::Vec2;

use super::{noise_key, Decoder, Engine, LoopState, TaskKind};

/// Circle sizes (width, height in cm) whose diagonal is the threshold diameter.
pub const FILTERED_BOX_CM: (f64, f64) = (1.9, 2.35);
pub const RAW_BOX_CM: (f64, f64) = (3.28, 3.78);

/// Proportion of trials within each threshold circle over time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JitterReport {
    pub times_s: Vec<f64>,
    pub within_raw: Vec<f64>,
    pub within_filtered: Vec<f64>,
    pub raw_diameter_px: f64,
    pub filtered_diameter_px: f64,
    pub n_trials: usize,
}

impl JitterReport {
    /// Proportions at the sample nearest to `t_s`.
    pub fn at(&self, t_s: f64) -> (f64, f64) {
        let i = (0..self.times_s.len())
            .min_by(|&a, &b| {
                (self.times_s[a] - t_s)
                    .abs()
                    .total_cmp(&(self.times_s[b] - t_s).abs())
            })
            .expect("non-empty report");
        (self.within_raw[i], self.within_filtered[i])
    }
}

fn diagonal_px((w, h): (f64, f64), px_per_cm: f64) -> f64 {
    w.hypot(h) * px_per_cm
}

/// A 3 × 3 grid spaced a quarter screen apart, centered on the screen.
pub fn jitter_targets(config: &SessionConfig) -> Vec<TargetSpec> {
    let (dx, dy) = (config.width() / 4.0, config.height() / 4.0);
    let mut out = Vec::with_capacity(9);
    for j in [1.0, 0.0, -1.0] {
        for i in [-1.0, 0.0, 1.0] {
            out.push(TargetSpec::free(
                Vec2::new(i * dx, j * dy),
                config.target_radius_px,
            ));
        }
    }
    out
}

/// Cursor starts on each target and stays under gaze for the configured
/// duration; positions are sampled every 0.1 s.
pub fn run_jitter_inspection(engine: &Engine, decoder: &Decoder) -> Result<JitterReport> {
    let config = &engine.config;
    let frames = config.frames_per_step();
    let frame_s = config.step_seconds / frames as f64;
    let steps = (config.task.jitter_seconds / config.step_seconds).ceil() as usize;
    let stride = ((0.1 / frame_s).round() as usize).max(1);
    let raw_d = diagonal_px(RAW_BOX_CM, config.px_per_cm);
    let filt_d = diagonal_px(FILTERED_BOX_CM, config.px_per_cm);

    let targets = jitter_targets(config);
    let n_samples = steps * frames / stride;
    let mut raw = vec![0usize; n_samples];
    let mut filt = vec![0usize; n_samples];
    let mut n_trials = 0;
    for rep in 0..config.task.jitter_reps {
        for (t_idx, target) in targets.iter().enumerate() {
            let trial = rep * targets.len() + t_idx;
            let mut state = LoopState::new(target.position_px, config);
            let mut path = Vec::with_capacity(steps * frames);
            for step in 0..steps {
                let key = noise_key(TaskKind::Jitter, trial, step);
                let gaze = engine.gaze_for(target.position_px, key);
                path.extend(
                    engine
                        .closed_loop_step(decoder, &mut state, Some(gaze), key)?
                        .frames,
                );
            }
            for s in 0..n_samples {
                let d = path[(s + 1) * stride - 1].distance(target.position_px);
                raw[s] += usize::from(d <= raw_d / 2.0);
                filt[s] += usize::from(d <= filt_d / 2.0);
            }
            n_trials += 1;
        }
    }
    let frac = |v: Vec<usize>| {
        v.into_iter()
            .map(|c| c as f64 / n_trials.max(1) as f64)
            .collect()
    };
    Ok(JitterReport {
        times_s: (0..n_samples)
            .map(|s| ((s + 1) * stride) as f64 * frame_s)
            .collect(),
        within_raw: frac(raw),
        within_filtered: frac(filt),
        raw_diameter_px: raw_d,
        filtered_diameter_px: filt_d,
        n_trials,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn thresholds_convert_from_cm() {
        assert_abs_diff_eq!(
            diagonal_px(RAW_BOX_CM, 32.0),
            32.0 * 5.00467781,
            epsilon = 1e-6
        );
        assert_abs_diff_eq!(
            diagonal_px(FILTERED_BOX_CM, 32.0),
            32.0 * 3.02200265,
            epsilon = 1e-6
        );
        let t = jitter_targets(&SessionConfig::default());
        assert_eq!(t.len(), 9);
        assert_eq!(t[4].position_px, Vec2::ZERO);
    }
}
