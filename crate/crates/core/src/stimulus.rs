//! White-noise flicker codes and the receptive-field weighting of regions.

use std::f64::consts::TAU;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::layout::StimulusLayout;
use crate::stats::pearson;
use crate::vec2::Vec2;

/// Pairwise |correlation| at or above this is redrawn.
pub const MAX_CODE_CORRELATION: f64 = 0.5;

const RADIAL_CELLS: usize = 64;
const ANGULAR_CELLS: usize = 256;
const WINDOW_SIGMAS: f64 = 4.0;

/// One region's luminance code: a value in `[0, 1]` per display frame of a
/// step. The code repeats every step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WnSequence {
    pub region_index: usize,
    pub values: Vec<f64>,
}

impl WnSequence {
    pub fn frames(&self) -> usize {
        self.values.len()
    }

    pub fn value_at(&self, frame_index: usize) -> f64 {
        self.values[frame_index % self.values.len()]
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }
}

/// Draw `n_regions` i.i.d. uniform codes of `frames` values each.
///
/// A code correlated with an earlier one at |r| ≥ 0.5 is redrawn from a
/// fresh sub-stream, so the result is deterministic in `seed`.
pub fn generate_wn_bank(n_regions: usize, frames: i64, seed: u64) -> Result<Vec<WnSequence>> {
    if frames <= 0 {
        return Err(Error::InvalidArgument(format!(
            "frames must be ≥ 1, got {frames}"
        )));
    }
    let frames = frames as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut bank: Vec<WnSequence> = Vec::with_capacity(n_regions);
    for region_index in 0..n_regions {
        let mut attempt = 0u64;
        let values = loop {
            let candidate: Vec<f64> = (0..frames).map(|_| rng.random::<f64>()).collect();
            let distinct = bank.iter().all(|prev| {
                let r = pearson(&prev.values, &candidate);
                // a single frame has no defined correlation
                frames < 2 || r.abs() < MAX_CODE_CORRELATION
            });
            if distinct {
                break candidate;
            }
            attempt += 1;
            rng = ChaCha8Rng::seed_from_u64(
                seed ^ (region_index as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15)
                    ^ attempt.rotate_left(32),
            );
        };
        bank.push(WnSequence {
            region_index,
            values,
        });
    }
    Ok(bank)
}

/// Gray levels shown on every region for one display frame.
pub fn luminance_frame(bank: &[WnSequence], frame_index: usize) -> Vec<u8> {
    bank.iter()
        .map(|s| gray_level(s.value_at(frame_index)))
        .collect()
}

/// `round(127·v)` with halves rounded up; values outside `[0, 1]` are clipped.
pub fn gray_level(value: f64) -> u8 {
    (127.0 * value.clamp(0.0, 1.0) + 0.5).floor() as u8
}

/// Share of the attention window that falls inside each region's sector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VisualFieldWeights {
    pub weights: Vec<f64>,
}

impl VisualFieldWeights {
    pub fn one_hot(n: usize, k: usize) -> Self {
        let mut weights = vec![0.0; n];
        weights[k] = 1.0;
        Self { weights }
    }

    pub fn uniform(n: usize) -> Self {
        Self {
            weights: vec![1.0 / n as f64; n],
        }
    }

    pub fn zeros(n: usize) -> Self {
        Self {
            weights: vec![0.0; n],
        }
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }
}

/// Integrate an isotropic Gaussian attention window centered on the gaze
/// point over each region's angular sector around the cursor.
///
/// The integral runs on a fixed 64 × 256 polar grid out to 4σ, so results are
/// bit-reproducible. The weights are normalized to sum to one.
pub fn visual_field_weights(
    gaze_px: Vec2,
    cursor_px: Vec2,
    layout: &StimulusLayout,
    attention_sigma_px: f64,
) -> VisualFieldWeights {
    assert!(
        attention_sigma_px > 0.0,
        "attention window must have positive width"
    );
    let layout = layout.shifted_to(cursor_px);
    let n = layout.n_regions();
    let mut weights = vec![0.0; n];

    let dr = WINDOW_SIGMAS * attention_sigma_px / RADIAL_CELLS as f64;
    let dphi = TAU / ANGULAR_CELLS as f64;
    let directions: Vec<Vec2> = (0..ANGULAR_CELLS)
        .map(|j| Vec2::from_polar(1.0, (j as f64 + 0.5) * dphi))
        .collect();

    for k in 0..RADIAL_CELLS {
        let r = (k as f64 + 0.5) * dr;
        let z = r / attention_sigma_px;
        let mass = (-0.5 * z * z).exp() * r;
        for dir in &directions {
            let p = gaze_px + *dir * r;
            weights[layout.region_of_point(p)] += mass;
        }
    }
    let total: f64 = weights.iter().sum();
    for w in &mut weights {
        *w /= total;
    }
    VisualFieldWeights { weights }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use std::f64::consts::PI;

    #[test]
    fn bank_is_deterministic() {
        let a = generate_wn_bank(8, 60, 42).unwrap();
        let b = generate_wn_bank(8, 60, 42).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, generate_wn_bank(8, 60, 43).unwrap());
    }

    #[test]
    fn bank_statistics() {
        // uniform mean over 60 draws has sd sqrt(1/(12·60)) ≈ 0.0373; 3σ ≈ 0.112
        let three_sigma = 3.0 * (1.0f64 / (12.0 * 60.0)).sqrt();
        assert!(three_sigma < 0.13);
        for seed in 0..20 {
            let bank = generate_wn_bank(8, 60, seed).unwrap();
            assert_eq!(bank.len(), 8);
            for s in &bank {
                assert_eq!(s.frames(), 60);
                assert!(s.values.iter().all(|v| (0.0..=1.0).contains(v)));
                assert!(
                    (s.mean() - 0.5).abs() < 0.13,
                    "seed {seed}: mean {}",
                    s.mean()
                );
            }
            for i in 0..8 {
                for j in 0..i {
                    let r = pearson(&bank[i].values, &bank[j].values);
                    assert!(r.abs() < 0.5);
                }
            }
        }
    }

    #[test]
    fn rejects_non_positive_frames() {
        assert!(generate_wn_bank(8, 0, 1).is_err());
        assert!(generate_wn_bank(8, -3, 1).is_err());
    }

    #[test]
    fn gray_levels() {
        assert_eq!(gray_level(1.0), 127);
        assert_eq!(gray_level(0.0), 0);
        assert_eq!(gray_level(0.5), 64);
        let bank = vec![WnSequence {
            region_index: 0,
            values: vec![0.0, 0.5, 1.0],
        }];
        assert_eq!(luminance_frame(&bank, 1), vec![64]);
        // periodic in the code length
        assert_eq!(luminance_frame(&bank, 5), luminance_frame(&bank, 2));
    }

    #[test]
    fn far_gaze_selects_one_region() {
        let layout = StimulusLayout::new(8, Vec2::ZERO);
        let w = visual_field_weights(Vec2::new(5000.0, 0.0), Vec2::ZERO, &layout, 100.0);
        assert!(w.weights[0] > 0.999);
        assert!(w.weights[1..].iter().all(|&x| x < 1e-3));
    }

    #[test]
    fn centered_gaze_is_uniform() {
        let layout = StimulusLayout::new(8, Vec2::ZERO);
        let c = Vec2::new(13.0, -7.0);
        let w = visual_field_weights(c, c, &layout, 100.0);
        for x in &w.weights {
            assert_abs_diff_eq!(*x, 0.125, epsilon = 1e-12);
        }
    }

    /// Independent oracle: plain Cartesian midpoint rule at 10× the
    /// resolution of the polar grid, sector found with atan2.
    fn cartesian_weights(gaze: Vec2, sigma: f64, n: usize) -> Vec<f64> {
        let cells = 2 * 640;
        let half = WINDOW_SIGMAS * sigma;
        let h = 2.0 * half / cells as f64;
        let mut w = vec![0.0; n];
        for a in 0..cells {
            for b in 0..cells {
                let dx = -half + (a as f64 + 0.5) * h;
                let dy = -half + (b as f64 + 0.5) * h;
                let r2 = dx * dx + dy * dy;
                if r2 > half * half {
                    continue;
                }
                let p = gaze + Vec2::new(dx, dy);
                let sector = ((p.y.atan2(p.x) + PI / n as f64).rem_euclid(TAU) / (TAU / n as f64))
                    as usize
                    % n;
                w[sector] += (-0.5 * r2 / (sigma * sigma)).exp();
            }
        }
        let t: f64 = w.iter().sum();
        w.iter().map(|x| x / t).collect()
    }

    #[test]
    fn boundary_gaze_splits_between_neighbours() {
        let layout = StimulusLayout::new(8, Vec2::ZERO);
        let sigma = 100.0;
        let gaze = Vec2::from_polar(sigma, PI / 8.0);
        let w = visual_field_weights(gaze, Vec2::ZERO, &layout, sigma);
        assert_abs_diff_eq!(w.weights[0], w.weights[1], epsilon = 1e-9);
        for k in 2..8 {
            assert!(w.weights[0] > w.weights[k]);
        }
        let oracle = cartesian_weights(gaze, sigma, 8);
        for (a, b) in w.weights.iter().zip(&oracle) {
            assert_abs_diff_eq!(*a, *b, epsilon = 5e-3);
        }
    }

    #[test]
    fn matches_cartesian_oracle_off_axis() {
        let layout = StimulusLayout::new(8, Vec2::ZERO);
        let gaze = Vec2::new(140.0, 60.0);
        let w = visual_field_weights(gaze, Vec2::ZERO, &layout, 100.0);
        let oracle = cartesian_weights(gaze, 100.0, 8);
        for (a, b) in w.weights.iter().zip(&oracle) {
            assert_abs_diff_eq!(*a, *b, epsilon = 5e-3);
        }
    }

    #[test]
    fn rotation_permutes_weights() {
        let layout = StimulusLayout::new(8, Vec2::ZERO);
        let gaze = Vec2::new(120.0, 35.0);
        let base = visual_field_weights(gaze, Vec2::ZERO, &layout, 90.0);
        let rotated = visual_field_weights(gaze.rotate(TAU / 8.0), Vec2::ZERO, &layout, 90.0);
        for i in 0..8 {
            assert_abs_diff_eq!(
                base.weights[i],
                rotated.weights[(i + 1) % 8],
                epsilon = 1e-9
            );
        }
    }

    #[test]
    fn aligned_weight_grows_with_distance() {
        let layout = StimulusLayout::new(8, Vec2::ZERO);
        let mut prev = 0.0;
        for d in [0.0, 25.0, 50.0, 100.0, 133.0, 200.0, 266.0, 400.0, 800.0] {
            let w = visual_field_weights(Vec2::new(d, 0.0), Vec2::ZERO, &layout, 100.0).weights[0];
            assert!(w >= prev - 1e-12, "weight dropped at {d}");
            prev = w;
        }
    }
}
