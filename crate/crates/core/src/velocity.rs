//! From ρ to screen velocity: projection, velocity weights (initial and
//! least-squares corrected), the within-step decay and the confidence gate.

use std::f64::consts::FRAC_1_SQRT_2;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::config::SessionConfig;
use crate::error::{Error, Result};
use crate::layout::StimulusLayout;
use crate::stats::{mean, sample_sd, student_t_sf, CompensatedSum};
use crate::trca::RhoVector;
use crate::vec2::Vec2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WeightKind {
    Initial,
    Corrected,
}

/// N_r × 2 map from ρ-space to px per step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VelocityWeight {
    /// One `[x, y]` row per region.
    pub matrix: Vec<[f64; 2]>,
    pub kind: WeightKind,
}

impl VelocityWeight {
    pub fn n_regions(&self) -> usize {
        self.matrix.len()
    }

    pub fn row(&self, region: usize) -> Vec2 {
        Vec2::new(self.matrix[region][0], self.matrix[region][1])
    }
}

/// Sum of the rectified ρ along each region's direction.
pub fn project(rho: &RhoVector, layout: &StimulusLayout) -> Vec2 {
    assert_eq!(rho.len(), layout.n_regions(), "one ρ per region");
    rho.rho.iter().enumerate().fold(Vec2::ZERO, |acc, (i, r)| {
        acc + layout.unit_direction(i) * r.max(0.0)
    })
}

/// Unit vectors at the region angles, scaled to w_s/6.
///
/// For eight regions the rows are the exact matrix with ±√2/2 entries.
pub fn initial_velocity_weight(config: &SessionConfig) -> VelocityWeight {
    let scale = config.width() / 6.0;
    let h = FRAC_1_SQRT_2;
    let unit: Vec<[f64; 2]> = if config.n_regions == 8 {
        vec![
            [1.0, 0.0],
            [h, h],
            [0.0, 1.0],
            [-h, h],
            [-1.0, 0.0],
            [-h, -h],
            [0.0, -1.0],
            [h, -h],
        ]
    } else {
        let layout = StimulusLayout::for_config(config);
        (0..config.n_regions)
            .map(|i| {
                let d = layout.unit_direction(i);
                [d.x, d.y]
            })
            .collect()
    };
    VelocityWeight {
        matrix: unit
            .into_iter()
            .map(|[x, y]| [x * scale, y * scale])
            .collect(),
        kind: WeightKind::Initial,
    }
}

/// `vᵀ = P·V_w`; ρ is rectified first for the initial weight, and for the
/// corrected weight only when `relu_corrected` is set.
pub fn decode_velocity_with(rho: &RhoVector, vw: &VelocityWeight, relu_corrected: bool) -> Vec2 {
    assert_eq!(
        rho.len(),
        vw.n_regions(),
        "ρ and velocity weight disagree on region count"
    );
    let relu = vw.kind == WeightKind::Initial || relu_corrected;
    rho.rho.iter().enumerate().fold(Vec2::ZERO, |acc, (i, r)| {
        let p = if relu { r.max(0.0) } else { *r };
        acc + vw.row(i) * p
    })
}

/// Corrected weights see unrectified ρ here.
pub fn decode_velocity(rho: &RhoVector, vw: &VelocityWeight) -> Vec2 {
    decode_velocity_with(rho, vw, false)
}

/// Limit |v| to `max`.
pub fn cap_velocity(v: Vec2, max: f64) -> Vec2 {
    let n = v.norm();
    if n > max {
        log::debug!("velocity {n:.1} px/step capped to {max:.1}");
        v * (max / n)
    } else {
        v
    }
}

/// Decoded ρ rows with the velocities the subject intended.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RegressionSet {
    /// N_t × N_r.
    pub d: Vec<Vec<f64>>,
    /// N_t intended velocities in px per step.
    pub i: Vec<Vec2>,
}

impl RegressionSet {
    pub fn push(&mut self, rho: &RhoVector, intended: Vec2) {
        self.d.push(rho.rho.clone());
        self.i.push(intended);
    }

    pub fn len(&self) -> usize {
        self.d.len()
    }

    pub fn is_empty(&self) -> bool {
        self.d.is_empty()
    }
}

/// Ordinary least squares `V_w* = (DᵀD)⁻¹DᵀI`, computed through the SVD.
pub fn train_velocity_weight(data: &RegressionSet) -> Result<VelocityWeight> {
    if data.d.len() != data.i.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} ρ rows but {} intended velocities",
            data.d.len(),
            data.i.len()
        )));
    }
    let nt = data.d.len();
    let nr = data.d.first().map_or(0, Vec::len);
    if nr == 0 || data.d.iter().any(|r| r.len() != nr) {
        return Err(Error::DimensionMismatch(
            "ρ rows must be non-empty and equally long".into(),
        ));
    }
    let d = DMatrix::from_fn(nt, nr, |t, r| data.d[t][r]);
    let i = DMatrix::from_fn(nt, 2, |t, c| if c == 0 { data.i[t].x } else { data.i[t].y });
    let svd = d.svd(true, true);
    let smax = svd.singular_values.max();
    let tol = smax * nt.max(nr) as f64 * f64::EPSILON;
    let rank = svd.singular_values.iter().filter(|s| **s > tol).count();
    if rank < nr {
        let v_t = svd.v_t.as_ref().expect("right singular vectors requested");
        let weakest = svd.singular_values.imin();
        let null = v_t.row(weakest);
        let region = (0..nr)
            .max_by(|&a, &b| null[a].abs().total_cmp(&null[b].abs()))
            .unwrap_or(0);
        return Err(Error::SingularRegression {
            rank,
            cols: nr,
            region,
        });
    }
    let w = svd
        .solve(&i, tol)
        .map_err(|e| Error::Numerical(e.to_string()))?;
    if w.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical("non-finite regression weights".into()));
    }
    Ok(VelocityWeight {
        matrix: (0..nr).map(|r| [w[(r, 0)], w[(r, 1)]]).collect(),
        kind: WeightKind::Corrected,
    })
}

/// Per-frame displacements for one step: the instantaneous velocity falls
/// linearly from 2v to 0, so frame j moves `v·(2F − 2j − 1)/F²`.
///
/// The last frame absorbs rounding so that the compensated sum of all
/// displacements is `v`.
pub fn decay_profile(v: Vec2, frames: usize) -> Vec<Vec2> {
    assert!(frames >= 1, "a step has at least one frame");
    let f = frames as f64;
    let mut out: Vec<Vec2> = (0..frames - 1)
        .map(|j| v * ((2.0 * f - 2.0 * j as f64 - 1.0) / (f * f)))
        .collect();
    let last_x = closing_term(out.iter().map(|d| d.x), v.x);
    let last_y = closing_term(out.iter().map(|d| d.y), v.y);
    out.push(Vec2::new(last_x, last_y));
    out
}

/// The value `r` for which the compensated sum of `parts` then `r` equals
/// `target` exactly. `target − sum` is only right to within an ulp or two
/// after rounding, so the residual is walked one ulp at a time.
fn closing_term(parts: impl Iterator<Item = f64> + Clone, target: f64) -> f64 {
    let total = |r: f64| {
        let mut s = CompensatedSum::default();
        parts.clone().for_each(|p| s.add(p));
        s.add(r);
        s.value()
    };
    let mut base = CompensatedSum::default();
    parts.clone().for_each(|p| base.add(p));
    let mut r = target - base.value();
    for _ in 0..64 {
        let t = total(r);
        if t == target {
            break;
        }
        r = if t < target {
            r.next_up()
        } else {
            r.next_down()
        };
    }
    r
}

/// Compensated sum of displacements.
pub fn total_displacement(displacements: &[Vec2]) -> Vec2 {
    let (mut sx, mut sy) = (CompensatedSum::default(), CompensatedSum::default());
    for d in displacements {
        sx.add(d.x);
        sy.add(d.y);
    }
    Vec2::new(sx.value(), sy.value())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "decision", content = "region", rename_all = "lowercase")]
pub enum GateDecision {
    Move(usize),
    Hold,
}

/// One-sided test of the largest ρ against the others.
///
/// `t = (ρ_max − mean(rest)) / sd(rest)` with N_r − 2 degrees of freedom;
/// moves toward the argmax when `P(T > t) < alpha`.
pub fn confidence_gate(rho: &RhoVector, alpha: f64) -> Result<GateDecision> {
    if rho.len() < 3 {
        return Err(Error::InvalidArgument(
            "confidence test needs at least 3 regions".into(),
        ));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "alpha must lie in (0, 1), got {alpha}"
        )));
    }
    let k = rho.argmax();
    let best = rho.rho[k];
    let rest: Vec<f64> = rho
        .rho
        .iter()
        .enumerate()
        .filter(|(i, _)| *i != k)
        .map(|(_, r)| *r)
        .collect();
    let m = mean(&rest);
    let sd = sample_sd(&rest);
    if sd == 0.0 {
        return Ok(if best > m {
            GateDecision::Move(k)
        } else {
            GateDecision::Hold
        });
    }
    let t = (best - m) / sd;
    let p = student_t_sf(t, (rho.len() - 2) as f64);
    Ok(if p < alpha {
        GateDecision::Move(k)
    } else {
        GateDecision::Hold
    })
}

/// A velocity weight with the decoding options applied.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VelocityDecoder {
    pub weight: VelocityWeight,
    pub relu_before_corrected: bool,
    /// Largest |v| per step, if capped.
    pub max_speed: Option<f64>,
}

impl VelocityDecoder {
    pub fn new(weight: VelocityWeight, config: &SessionConfig) -> Self {
        Self {
            weight,
            relu_before_corrected: config.decoder.relu_before_corrected,
            max_speed: config.decoder.cap_velocity.then(|| config.width() / 2.0),
        }
    }

    pub fn decode(&self, rho: &RhoVector) -> Vec2 {
        let v = decode_velocity_with(rho, &self.weight, self.relu_before_corrected);
        match self.max_speed {
            Some(max) => cap_velocity(v, max),
            None => v,
        }
    }
}
