//! Session configuration shared by every stage of the pipeline.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dsp::FilterBankSpec;
use crate::error::{Error, Result};

/// Top-level settings for one experimental session.
///
/// All geometry is in pixels with the origin at the screen center.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SessionConfig {
    pub screen_width_px: u32,
    pub screen_height_px: u32,
    pub n_regions: usize,
    pub target_radius_px: f64,
    pub cursor_radius_px: f64,
    pub step_seconds: f64,
    pub trial_timeout_seconds: f64,
    /// Rate of the (real or simulated) amplifier.
    pub acquisition_rate_hz: f64,
    /// Rate everything downstream of preprocessing runs at.
    pub processing_rate_hz: f64,
    pub refresh_rate_hz: f64,
    /// Display density, used to convert the jitter thresholds from cm.
    pub px_per_cm: f64,
    pub rng_seed: u64,
    pub filter_bank: FilterBankSpec,
    pub decoder: DecoderOptions,
    pub task: TaskOptions,
}

/// Knobs of the velocity decoder.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DecoderOptions {
    /// Significance level of the dynamic-stopping test.
    pub confidence_alpha: f64,
    /// Rectify ρ before multiplying by a least-squares corrected weight.
    pub relu_before_corrected: bool,
    /// Clamp |v| to half the screen width per step.
    pub cap_velocity: bool,
}

/// Protocol sizes and simulation options of the task engine.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TaskOptions {
    /// Repetitions of each training target (Stage I and Stage II).
    pub training_reps: usize,
    /// Blocks of the fixed tracking task, each covering all 32 positions.
    pub fixed_blocks: usize,
    pub random_trials: usize,
    /// Random-task targets keep at least this distance from the screen edge.
    pub random_margin_px: f64,
    /// Standard deviation of Gaussian gaze scatter around the target.
    pub gaze_noise_px: f64,
    /// How long a trial keeps running after the first hit, for hold-rate analysis.
    pub post_hit_seconds: f64,
    pub jitter_seconds: f64,
    pub jitter_reps: usize,
}

impl Default for SessionConfig {
    fn default() -> Self {
        Self {
            screen_width_px: 800,
            screen_height_px: 800,
            n_regions: 8,
            target_radius_px: 40.0,
            cursor_radius_px: 5.0,
            step_seconds: 1.0,
            trial_timeout_seconds: 15.0,
            acquisition_rate_hz: 1000.0,
            processing_rate_hz: 250.0,
            refresh_rate_hz: 60.0,
            px_per_cm: 32.0,
            rng_seed: 0,
            filter_bank: FilterBankSpec::default(),
            decoder: DecoderOptions::default(),
            task: TaskOptions::default(),
        }
    }
}

impl Default for DecoderOptions {
    fn default() -> Self {
        Self {
            confidence_alpha: 0.05,
            relu_before_corrected: true,
            cap_velocity: true,
        }
    }
}

impl Default for TaskOptions {
    fn default() -> Self {
        Self {
            training_reps: 6,
            fixed_blocks: 3,
            random_trials: 12,
            random_margin_px: 40.0,
            gaze_noise_px: 0.0,
            post_hit_seconds: 1.0,
            jitter_seconds: 10.0,
            jitter_reps: 3,
        }
    }
}

impl SessionConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidConfig(msg.to_string()));
        if self.n_regions < 2 {
            return bad("n_regions must be at least 2");
        }
        if self.screen_width_px == 0 || self.screen_height_px == 0 {
            return bad("screen dimensions must be positive");
        }
        let positive = [
            ("target_radius_px", self.target_radius_px),
            ("cursor_radius_px", self.cursor_radius_px),
            ("step_seconds", self.step_seconds),
            ("trial_timeout_seconds", self.trial_timeout_seconds),
            ("acquisition_rate_hz", self.acquisition_rate_hz),
            ("processing_rate_hz", self.processing_rate_hz),
            ("refresh_rate_hz", self.refresh_rate_hz),
            ("px_per_cm", self.px_per_cm),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidConfig(format!(
                    "{name} must be finite and > 0"
                )));
            }
        }
        let frames = self.step_seconds * self.refresh_rate_hz;
        if (frames - frames.round()).abs() > 1e-9 {
            return bad("step_seconds × refresh_rate_hz must be an integer");
        }
        let samples = self.step_seconds * self.processing_rate_hz;
        if (samples - samples.round()).abs() > 1e-9 {
            return bad("step_seconds × processing_rate_hz must be an integer");
        }
        let a = self.decoder.confidence_alpha;
        if !(a > 0.0 && a < 1.0) {
            return bad("decoder.confidence_alpha must lie in (0, 1)");
        }
        if self.task.training_reps < 2 {
            return bad("task.training_reps must be at least 2");
        }
        if self.task.gaze_noise_px < 0.0 || self.task.post_hit_seconds < 0.0 {
            return bad("task noise and durations must be non-negative");
        }
        let half = f64::from(self.screen_width_px.min(self.screen_height_px)) / 2.0;
        if self.task.random_margin_px < 0.0 || self.task.random_margin_px >= half {
            return bad("task.random_margin_px must leave room on screen");
        }
        self.filter_bank.validate(self.processing_rate_hz)?;
        Ok(())
    }

    /// Display frames per decoding step.
    pub fn frames_per_step(&self) -> usize {
        (self.step_seconds * self.refresh_rate_hz).round() as usize
    }

    /// Processed EEG samples per decoding step.
    pub fn samples_per_step(&self) -> usize {
        (self.step_seconds * self.processing_rate_hz).round() as usize
    }

    pub fn max_steps(&self) -> usize {
        (self.trial_timeout_seconds / self.step_seconds).ceil() as usize
    }

    pub fn width(&self) -> f64 {
        f64::from(self.screen_width_px)
    }

    pub fn height(&self) -> f64 {
        f64::from(self.screen_height_px)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: SessionConfig = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// Apply a `key=value` override, where `key` is a dotted path into the
    /// JSON document (`task.gaze_noise_px=5`). The value is parsed as JSON and
    /// falls back to a plain string.
    pub fn apply_override(&mut self, assignment: &str) -> Result<()> {
        let (key, raw) = assignment.split_once('=').ok_or_else(|| {
            Error::InvalidConfig(format!("override `{assignment}` is not key=value"))
        })?;
        let value: serde_json::Value = serde_json::from_str(raw.trim())
            .unwrap_or_else(|_| serde_json::Value::String(raw.trim().to_string()));
        let mut doc = serde_json::to_value(&*self)?;
        let mut slot = &mut doc;
        for part in key.trim().split('.') {
            slot = slot
                .get_mut(part)
                .ok_or_else(|| Error::InvalidConfig(format!("unknown config key `{key}`")))?;
        }
        *slot = value;
        let updated: SessionConfig = serde_json::from_value(doc)?;
        updated.validate()?;
        *self = updated;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate() {
        let cfg = SessionConfig::default();
        cfg.validate().unwrap();
        assert_eq!(cfg.frames_per_step(), 60);
        assert_eq!(cfg.samples_per_step(), 250);
        assert_eq!(cfg.max_steps(), 15);
    }

    #[test]
    fn shipped_defaults_file_matches() {
        let text = include_str!("../../../config/default_session.json");
        assert_eq!(
            SessionConfig::from_json(text).unwrap(),
            SessionConfig::default()
        );
    }

    #[test]
    fn json_round_trip() {
        let cfg = SessionConfig::default();
        let back = SessionConfig::from_json(&cfg.to_json_pretty()).unwrap();
        assert_eq!(cfg, back);
    }

    #[test]
    fn rejects_fractional_frames_per_step() {
        let cfg = SessionConfig {
            step_seconds: 0.51,
            ..Default::default()
        };
        assert!(matches!(cfg.validate(), Err(Error::InvalidConfig(_))));
    }

    #[test]
    fn rejects_single_region() {
        let cfg = SessionConfig {
            n_regions: 1,
            ..Default::default()
        };
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn dotted_overrides() {
        let mut cfg = SessionConfig::default();
        cfg.apply_override("task.gaze_noise_px=5.5").unwrap();
        cfg.apply_override("rng_seed=9").unwrap();
        cfg.apply_override("decoder.relu_before_corrected=false")
            .unwrap();
        assert_eq!(cfg.task.gaze_noise_px, 5.5);
        assert_eq!(cfg.rng_seed, 9);
        assert!(!cfg.decoder.relu_before_corrected);
        assert!(cfg.apply_override("nope=1").is_err());
        assert!(cfg.apply_override("step_seconds=-1").is_err());
    }
}
