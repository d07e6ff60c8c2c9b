//! Throughput, accuracy and stability metrics over trial logs.

use serde::{Deserialize, Serialize};

use crate::config::SessionConfig;
use crate::error::{Error, Result};
use crate::layout::StimulusLayout;
use crate::layout::{hit_test, Alignment, Ring, TargetSpec};
use crate::stats::{mean, Summary};
use crate::trca::RhoVector;
use crate::vec2::Vec2;
use crate::velocity::{project, VelocityDecoder};

use super::{TaskKind, TrialRecord};

/// Fitts throughput `log₂((D + S)/S) / T` in bits per second; `size_px` is
/// the target diameter.
pub fn fitts_itr(distance_px: f64, size_px: f64, time_s: f64) -> Result<f64> {
    if !(size_px > 0.0) || !(time_s > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "target size and time must be positive, got S = {size_px}, T = {time_s}"
        )));
    }
    if !(distance_px >= 0.0) {
        return Err(Error::InvalidArgument(format!(
            "distance must be ≥ 0, got {distance_px}"
        )));
    }
    Ok(((distance_px + size_px) / size_px).log2() / time_s)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VelocityErrors {
    /// Angle between decoded and intended velocity; undefined for v = 0.
    pub angular_deg: Option<f64>,
    /// `|I − v| / |I|`.
    pub vector: f64,
}

/// Errors of a decoded velocity against the intended one.
pub fn velocity_error(v: Vec2, intended: Vec2) -> Result<VelocityErrors> {
    let ni = intended.norm();
    if !(ni > 0.0) {
        return Err(Error::InvalidArgument("intended velocity is zero".into()));
    }
    let nv = v.norm();
    let angular_deg = (nv > 0.0).then(|| {
        (v.dot(intended) / (nv * ni))
            .clamp(-1.0, 1.0)
            .acos()
            .to_degrees()
    });
    Ok(VelocityErrors {
        angular_deg,
        vector: (intended - v).norm() / ni,
    })
}

/// Errors of the first decoded step of a trial, with the intended velocity
/// from the start to the target in one step.
pub fn velocity_errors(record: &TrialRecord, step_seconds: f64) -> Result<VelocityErrors> {
    let first = record
        .steps
        .first()
        .ok_or_else(|| Error::InvalidArgument("trial has no steps".into()))?;
    let intended = (record.target.position_px - record.start_px) * (1.0 / step_seconds);
    velocity_error(first.velocity, intended)
}

/// First-step errors over many trials, tagged with target geometry.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FirstStepErrors {
    pub ring: Vec<Ring>,
    pub alignment: Vec<Alignment>,
    pub angular_deg: Vec<Option<f64>>,
    pub vector: Vec<f64>,
    pub projection_length: Vec<f64>,
    /// Trials left out because their first ρ was all zero.
    pub degenerate: usize,
}

impl FirstStepErrors {
    fn push(
        &mut self,
        target: &TargetSpec,
        rho: &RhoVector,
        v: Vec2,
        intended: Vec2,
        layout: &StimulusLayout,
    ) -> Result<()> {
        if rho.is_degenerate() {
            self.degenerate += 1;
            return Ok(());
        }
        let e = velocity_error(v, intended)?;
        self.ring.push(target.ring);
        self.alignment.push(target.alignment);
        self.angular_deg.push(e.angular_deg);
        self.vector.push(e.vector);
        self.projection_length.push(project(rho, layout).norm());
        Ok(())
    }

    /// From the fixed-task records of a log.
    pub fn from_records(
        records: &[TrialRecord],
        step_seconds: f64,
        layout: &StimulusLayout,
    ) -> Result<Self> {
        let mut out = Self::default();
        for r in records.iter().filter(|r| r.task == TaskKind::Fixed) {
            let Some(first) = r.steps.first() else {
                continue;
            };
            let intended = (r.target.position_px - r.start_px) * (1.0 / step_seconds);
            out.push(&r.target, &first.rho, first.velocity, intended, layout)?;
        }
        Ok(out)
    }

    /// Re-decode first-step ρ (from the screen center) with another weight.
    pub fn from_decodes(
        decodes: &[(TargetSpec, RhoVector)],
        decoder: &VelocityDecoder,
        step_seconds: f64,
        layout: &StimulusLayout,
    ) -> Result<Self> {
        let mut out = Self::default();
        for (target, rho) in decodes {
            let intended = target.position_px * (1.0 / step_seconds);
            out.push(target, rho, decoder.decode(rho), intended, layout)?;
        }
        Ok(out)
    }

    fn select(&self, ring: Option<Ring>) -> impl Iterator<Item = usize> + '_ {
        (0..self.vector.len()).filter(move |&i| ring.is_none_or(|r| self.ring[i] == r))
    }

    /// Mean vector error, optionally restricted to one ring.
    pub fn mean_vector(&self, ring: Option<Ring>) -> f64 {
        let xs: Vec<f64> = self.select(ring).map(|i| self.vector[i]).collect();
        mean(&xs)
    }

    /// Mean angular error over trials where it is defined.
    pub fn mean_angular(&self, ring: Option<Ring>) -> f64 {
        let xs: Vec<f64> = self
            .select(ring)
            .filter_map(|i| self.angular_deg[i])
            .collect();
        mean(&xs)
    }
}

/// Fraction of hit trials whose cursor stayed inside the target for `dt_s`
/// after the first hit. `frame_s` is the display frame period.
pub fn post_hit_hold_rate(records: &[TrialRecord], dt_s: f64, frame_s: f64) -> Result<f64> {
    if !(dt_s >= 0.0) || !(frame_s > 0.0) {
        return Err(Error::InvalidArgument(
            "dt must be ≥ 0 and the frame period > 0".into(),
        ));
    }
    let hits: Vec<&TrialRecord> = records.iter().filter(|r| r.is_hit()).collect();
    if hits.is_empty() {
        return Err(Error::InvalidArgument("no hit trials".into()));
    }
    let frames = (dt_s / frame_s).round() as usize;
    let mut held = 0usize;
    for r in &hits {
        if r.post_hit.len() < frames {
            return Err(Error::InvalidArgument(format!(
                "trial {} was simulated for {} frames after the hit, {frames} needed",
                r.trial,
                r.post_hit.len()
            )));
        }
        if r.post_hit[..frames].iter().all(|p| hit_test(*p, &r.target)) {
            held += 1;
        }
    }
    Ok(held as f64 / hits.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HoldPoint {
    pub dt_s: f64,
    pub rate: f64,
}

/// Aggregate performance of a set of trials.
///
/// Timeouts count against the success rate but are left out of the
/// throughput and time-to-target statistics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub n_trials: usize,
    pub n_hits: usize,
    pub success_rate: f64,
    /// Per-trial Fitts throughput, averaged over hit trials.
    pub fitts_itr_bps: Summary,
    pub time_to_target_s: Summary,
    pub time_to_target_inner_s: Summary,
    pub time_to_target_outer_s: Summary,
    /// First step of fixed-task trials.
    pub angular_error_deg: Summary,
    pub vector_error: Summary,
    pub projection_length: Summary,
    pub degenerate_first_steps: usize,
    pub post_hit_hold_rate: Vec<HoldPoint>,
}

impl MetricsReport {
    pub fn compute(
        records: &[TrialRecord],
        step_seconds: f64,
        frame_s: f64,
        layout: &StimulusLayout,
    ) -> Result<Self> {
        let hits: Vec<&TrialRecord> = records.iter().filter(|r| r.is_hit()).collect();
        let itr = hits
            .iter()
            .map(|r| {
                fitts_itr(
                    r.distance_px(),
                    2.0 * r.target.radius_px,
                    r.time_to_target_s,
                )
            })
            .collect::<Result<Vec<_>>>()?;
        let times = |ring: Option<Ring>| -> Vec<f64> {
            hits.iter()
                .filter(|r| ring.is_none_or(|g| r.target.ring == g))
                .map(|r| r.time_to_target_s)
                .collect()
        };
        let first = FirstStepErrors::from_records(records, step_seconds, layout)?;
        let angular: Vec<f64> = first.angular_deg.iter().flatten().copied().collect();

        let mut hold = Vec::new();
        if !hits.is_empty() {
            let available = hits.iter().map(|r| r.post_hit.len()).min().unwrap_or(0);
            // every 0.1 s (in whole frames) the logs cover
            let stride = ((0.1 / frame_s).round() as usize).max(1);
            let mut frames = 0;
            while frames <= available {
                let dt = frames as f64 * frame_s;
                hold.push(HoldPoint {
                    dt_s: dt,
                    rate: post_hit_hold_rate(records, dt, frame_s)?,
                });
                frames += stride;
            }
        }
        Ok(Self {
            n_trials: records.len(),
            n_hits: hits.len(),
            success_rate: if records.is_empty() {
                0.0
            } else {
                hits.len() as f64 / records.len() as f64
            },
            fitts_itr_bps: Summary::of(&itr),
            time_to_target_s: Summary::of(&times(None)),
            time_to_target_inner_s: Summary::of(&times(Some(Ring::Inner))),
            time_to_target_outer_s: Summary::of(&times(Some(Ring::Outer))),
            angular_error_deg: Summary::of(&angular),
            vector_error: Summary::of(&first.vector),
            projection_length: Summary::of(&first.projection_length),
            degenerate_first_steps: first.degenerate,
            post_hit_hold_rate: hold,
        })
    }

    /// [`MetricsReport::compute`] with the timing and layout of `config`.
    pub fn for_config(records: &[TrialRecord], config: &SessionConfig) -> Result<Self> {
        let frame_s = config.step_seconds / config.frames_per_step() as f64;
        Self::compute(records, config.step_seconds, frame_s, &StimulusLayout::for_config(config))
    }

    /// Flat `metric,value` rows.
    pub fn to_csv(&self) -> String {
        let mut rows = vec![
            ("n_trials".to_string(), self.n_trials as f64),
            ("n_hits".to_string(), self.n_hits as f64),
            ("success_rate".to_string(), self.success_rate),
        ];
        for (name, s) in [
            ("fitts_itr_bps", &self.fitts_itr_bps),
            ("time_to_target_s", &self.time_to_target_s),
            ("time_to_target_inner_s", &self.time_to_target_inner_s),
            ("time_to_target_outer_s", &self.time_to_target_outer_s),
            ("angular_error_deg", &self.angular_error_deg),
            ("vector_error", &self.vector_error),
            ("projection_length", &self.projection_length),
        ] {
            rows.push((format!("{name}.n"), s.n as f64));
            rows.push((format!("{name}.mean"), s.mean));
            rows.push((format!("{name}.sd"), s.sd));
        }
        rows.push((
            "degenerate_first_steps".to_string(),
            self.degenerate_first_steps as f64,
        ));
        for h in &self.post_hit_hold_rate {
            rows.push((format!("post_hit_hold_rate@{:.2}", h.dt_s), h.rate));
        }
        let mut out = String::from("metric,value\n");
        for (k, v) in rows {
            if v.is_finite() {
                out.push_str(&format!("{k},{v}\n"));
            } else {
                out.push_str(&format!("{k},\n"));
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::task::{Outcome, StepRecord};
    use approx::assert_abs_diff_eq;

    #[test]
    fn fitts_examples() {
        assert_eq!(fitts_itr(0.0, 80.0, 3.0).unwrap(), 0.0);
        assert_eq!(fitts_itr(80.0, 80.0, 1.0).unwrap(), 1.0);
        assert_abs_diff_eq!(
            fitts_itr(266.67, 80.0, 5.03).unwrap(),
            0.4206,
            epsilon = 1e-4
        );
        assert!(fitts_itr(10.0, 0.0, 1.0).is_err());
        assert!(fitts_itr(10.0, 80.0, 0.0).is_err());
        assert!(fitts_itr(-1.0, 80.0, 1.0).is_err());
    }

    #[test]
    fn velocity_error_examples() {
        let i = Vec2::new(100.0, 0.0);
        let e = velocity_error(i, i).unwrap();
        assert_eq!(e.angular_deg, Some(0.0));
        assert_eq!(e.vector, 0.0);
        let e = velocity_error(Vec2::new(0.0, 100.0), i).unwrap();
        assert_abs_diff_eq!(e.angular_deg.unwrap(), 90.0, epsilon = 1e-12);
        assert_abs_diff_eq!(e.vector, 2f64.sqrt(), epsilon = 1e-12);
        let e = velocity_error(Vec2::ZERO, i).unwrap();
        assert_eq!(e.angular_deg, None);
        assert_eq!(e.vector, 1.0);
        assert!(velocity_error(i, Vec2::ZERO).is_err());
    }

    fn record(outcome: Outcome, time: f64, ring: Ring, post_hit: Vec<Vec2>) -> TrialRecord {
        let mut target = TargetSpec::free(Vec2::new(80.0, 0.0), 40.0);
        target.ring = ring;
        TrialRecord {
            subject: 0,
            task: TaskKind::Fixed,
            trial: 0,
            target,
            start_px: Vec2::ZERO,
            steps: vec![StepRecord {
                rho: RhoVector::new(vec![1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0]),
                velocity: Vec2::new(80.0, 0.0),
                cursor: Vec2::new(80.0, 0.0),
            }],
            outcome,
            time_to_target_s: time,
            end_px: Vec2::new(80.0, 0.0),
            post_hit,
        }
    }

    #[test]
    fn timeouts_are_excluded_from_throughput_only() {
        let layout = StimulusLayout::new(8, Vec2::ZERO);
        let inside = vec![Vec2::new(80.0, 0.0); 60];
        let records = vec![
            record(Outcome::Hit, 1.0, Ring::Inner, inside.clone()),
            record(Outcome::Hit, 2.0, Ring::Outer, inside),
            record(Outcome::Timeout, 15.0, Ring::Outer, vec![]),
        ];
        let m = MetricsReport::compute(&records, 1.0, 1.0 / 60.0, &layout).unwrap();
        assert_eq!(m.n_trials, 3);
        assert_abs_diff_eq!(m.success_rate, 2.0 / 3.0);
        assert_eq!(m.fitts_itr_bps.n, 2);
        assert_abs_diff_eq!(m.fitts_itr_bps.mean, (1.0 + 0.5) / 2.0, epsilon = 1e-12);
        assert_abs_diff_eq!(m.time_to_target_s.mean, 1.5);
        assert_eq!(m.time_to_target_inner_s.n, 1);
        assert_eq!(m.time_to_target_outer_s.n, 1);
        assert_eq!(m.post_hit_hold_rate[0].rate, 1.0);
        // first-step errors include the timeout
        assert_eq!(m.vector_error.n, 3);
        assert!(m.to_csv().contains("success_rate,0.6666666666666666\n"));
    }

    #[test]
    fn hold_rate_counts_continuous_stay() {
        let mut leaving = vec![Vec2::new(80.0, 0.0); 60];
        leaving[20] = Vec2::new(200.0, 0.0);
        let records = vec![
            record(
                Outcome::Hit,
                1.0,
                Ring::Outer,
                vec![Vec2::new(80.0, 0.0); 60],
            ),
            record(Outcome::Hit, 1.0, Ring::Outer, leaving),
        ];
        let f = 1.0 / 60.0;
        assert_eq!(post_hit_hold_rate(&records, 0.0, f).unwrap(), 1.0);
        assert_eq!(post_hit_hold_rate(&records, 0.2, f).unwrap(), 1.0);
        assert_eq!(post_hit_hold_rate(&records, 0.5, f).unwrap(), 0.5);
        assert!(post_hit_hold_rate(&records, 2.0, f).is_err());
    }
}
