//! Radial stimulus geometry and the training/testing target sets.

use std::f64::consts::{PI, TAU};

use serde::{Deserialize, Serialize};

use crate::config::SessionConfig;
use crate::vec2::Vec2;

/// Radial arrangement of the stimulus regions around the cursor.
///
/// Region `i` is centered on angle `2πi/N`, counter-clockwise from +x, and
/// covers the half-open sector `[θ_i − π/N, θ_i + π/N)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StimulusLayout {
    pub region_center_angles_rad: Vec<f64>,
    pub region_boundary_angles_rad: Vec<f64>,
    pub cursor_position_px: Vec2,
}

impl StimulusLayout {
    pub fn new(n_regions: usize, cursor: Vec2) -> Self {
        assert!(n_regions >= 2, "a radial layout needs at least two regions");
        let n = n_regions as f64;
        let centers: Vec<f64> = (0..n_regions).map(|i| TAU * i as f64 / n).collect();
        // boundary k sits between region k and region k+1
        let boundaries = centers.iter().map(|c| c + PI / n).collect();
        Self {
            region_center_angles_rad: centers,
            region_boundary_angles_rad: boundaries,
            cursor_position_px: cursor,
        }
    }

    pub fn for_config(config: &SessionConfig) -> Self {
        Self::new(config.n_regions, Vec2::ZERO)
    }

    pub fn n_regions(&self) -> usize {
        self.region_center_angles_rad.len()
    }

    /// The same layout re-centered on a new cursor position; stimulus
    /// geometry moves rigidly with the cursor.
    pub fn shifted_to(&self, cursor: Vec2) -> Self {
        Self {
            cursor_position_px: cursor,
            ..self.clone()
        }
    }

    pub fn sector_width(&self) -> f64 {
        TAU / self.n_regions() as f64
    }

    /// Region containing the direction `angle` (radians, any branch).
    pub fn region_of_angle(&self, angle: f64) -> usize {
        let width = self.sector_width();
        let shifted = (angle + width / 2.0).rem_euclid(TAU);
        ((shifted / width).floor() as usize) % self.n_regions()
    }

    /// Region that a screen point falls into, relative to the cursor.
    pub fn region_of_point(&self, p: Vec2) -> usize {
        self.region_of_angle((p - self.cursor_position_px).angle())
    }

    pub fn unit_direction(&self, region: usize) -> Vec2 {
        Vec2::from_polar(1.0, self.region_center_angles_rad[region])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Ring {
    Inner,
    Outer,
    None,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Alignment {
    Center,
    Cross,
    None,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TargetSpec {
    pub position_px: Vec2,
    pub radius_px: f64,
    pub ring: Ring,
    pub alignment: Alignment,
    /// Region whose center line (center targets) or counter-clockwise
    /// boundary (cross targets) the target sits on.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub region: Option<usize>,
}

impl TargetSpec {
    pub fn free(position_px: Vec2, radius_px: f64) -> Self {
        Self {
            position_px,
            radius_px,
            ring: Ring::None,
            alignment: Alignment::None,
            region: None,
        }
    }
}

pub fn inner_radius(config: &SessionConfig) -> f64 {
    config.width() / 6.0
}

pub fn outer_radius(config: &SessionConfig) -> f64 {
    config.width() / 3.0
}

/// Stage I: one target per region center line at a third of the screen width.
pub fn stage1_targets(config: &SessionConfig) -> Vec<TargetSpec> {
    let layout = StimulusLayout::for_config(config);
    let r = outer_radius(config);
    layout
        .region_center_angles_rad
        .iter()
        .enumerate()
        .map(|(i, &a)| TargetSpec {
            position_px: Vec2::from_polar(r, a),
            radius_px: config.target_radius_px,
            ring: Ring::Outer,
            alignment: Alignment::Center,
            region: Some(i),
        })
        .collect()
}

/// Stage II: center lines and region boundaries, each at the inner (w/6) and
/// outer (w/3) radius. Ordered inner ring first, then by angle.
pub fn stage2_targets(config: &SessionConfig) -> Vec<TargetSpec> {
    let layout = StimulusLayout::for_config(config);
    let mut out = Vec::with_capacity(4 * layout.n_regions());
    for (ring, r) in [
        (Ring::Inner, inner_radius(config)),
        (Ring::Outer, outer_radius(config)),
    ] {
        for i in 0..layout.n_regions() {
            for (alignment, angle) in [
                (Alignment::Center, layout.region_center_angles_rad[i]),
                (Alignment::Cross, layout.region_boundary_angles_rad[i]),
            ] {
                out.push(TargetSpec {
                    position_px: Vec2::from_polar(r, angle),
                    radius_px: config.target_radius_px,
                    ring,
                    alignment,
                    region: Some(i),
                });
            }
        }
    }
    out
}

/// Point-in-circle hit test; the boundary counts as a hit.
pub fn hit_test(cursor: Vec2, target: &TargetSpec) -> bool {
    cursor.distance(target.position_px) <= target.radius_px
}
