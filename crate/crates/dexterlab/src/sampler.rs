//! Target sampling per curriculum stage.
//!
//! Stages 1 and 2 use a fixed target. Stage 3 discretizes the surface into
//! arclength cells, tracks an EMA of per-cell success, and samples
//! low-performing cells more often with an exploration floor. Stage 4 adds
//! a minimum movement amplitude from the current fingertip position and
//! carries the arm state over between targets.

use crate::arm::{Surface, Target};
use crate::curriculum::Stage;
use rand::Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellStats {
    pub ema_success: Vec<f64>,
    pub counts: Vec<u64>,
    /// EMA decay toward the newest outcome.
    pub beta: f64,
}

impl CellStats {
    pub fn new(n_cells: usize, beta: f64) -> Self {
        CellStats {
            ema_success: vec![0.0; n_cells],
            counts: vec![0; n_cells],
            beta,
        }
    }

    pub fn n_cells(&self) -> usize {
        self.ema_success.len()
    }

    /// Cell containing arclength `s` on a surface of length `surface_len`.
    pub fn cell_of(&self, s: f64, surface_len: f64) -> usize {
        let c = (s / surface_len * self.n_cells() as f64) as isize;
        c.clamp(0, self.n_cells() as isize - 1) as usize
    }

    /// Unnormalized sampling weight per cell: (1 - ema) + epsilon.
    pub fn weights(&self, epsilon: f64) -> Vec<f64> {
        self.ema_success
            .iter()
            .map(|s| (1.0 - s) + epsilon)
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SamplerConfig {
    pub n_cells: usize,
    pub ema_beta: f64,
    pub radius_min: f64,
    pub radius_max: f64,
    /// Exploration floor added to every cell weight.
    pub epsilon: f64,
    /// Target used during stages 1 and 2 (arclength center, radius).
    pub fixed_center_s: f64,
    pub fixed_radius: f64,
    /// Minimum arclength offset between consecutive stage-4 targets.
    pub s4_min_offset: f64,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        SamplerConfig {
            n_cells: 16,
            ema_beta: 0.99,
            radius_min: 0.0015,
            radius_max: 0.007,
            epsilon: 0.1,
            fixed_center_s: 0.06, // screen midpoint
            fixed_radius: 0.006,
            s4_min_offset: 0.01,
        }
    }
}

/// Folds an episode outcome into the cell's success EMA.
pub fn update_cell(stats: &mut CellStats, cell: usize, success: bool) {
    let x = if success { 1.0 } else { 0.0 };
    stats.ema_success[cell] = stats.beta * stats.ema_success[cell] + (1.0 - stats.beta) * x;
    stats.counts[cell] += 1;
}

fn weighted_cell_draw<R: Rng>(stats: &CellStats, epsilon: f64, rng: &mut R) -> usize {
    let weights = stats.weights(epsilon);
    let total: f64 = weights.iter().sum();
    let mut u = rng.random_range(0.0..total);
    for (i, w) in weights.iter().enumerate() {
        if u < *w {
            return i;
        }
        u -= w;
    }
    weights.len() - 1
}

fn draw_in_cell<R: Rng>(
    stats: &CellStats,
    cell: usize,
    radius: f64,
    surface_len: f64,
    rng: &mut R,
) -> f64 {
    let cell_len = surface_len / stats.n_cells() as f64;
    let lo = cell as f64 * cell_len;
    let center = rng.random_range(lo..lo + cell_len);
    // clip so the full interval fits on the segment
    center.clamp(radius, surface_len - radius)
}

/// Draws the next target for the given curriculum stage.
///
/// `current_s` is the arclength projection of the current fingertip; it only
/// matters in stage 4, where consecutive targets must be at least
/// `s4_min_offset` apart.
pub fn sample_target<R: Rng>(
    stats: &CellStats,
    stage: Stage,
    rng: &mut R,
    current_s: f64,
    config: &SamplerConfig,
    extrusion: f64,
    surface: &Surface,
) -> Target {
    let surface_len = surface.length();
    match stage {
        Stage::S1TaskComplexity | Stage::S2DynamicReward => Target {
            center_s: config.fixed_center_s,
            radius: config.fixed_radius,
            extrusion_depth: extrusion,
        },
        Stage::S3AdaptiveSampling => {
            let cell = weighted_cell_draw(stats, config.epsilon, rng);
            let radius = rng.random_range(config.radius_min..=config.radius_max);
            let center_s = draw_in_cell(stats, cell, radius, surface_len, rng);
            Target {
                center_s,
                radius,
                extrusion_depth: extrusion,
            }
        }
        Stage::S4ContinuousSequences => {
            let mut target = None;
            for _ in 0..100 {
                let cell = weighted_cell_draw(stats, config.epsilon, rng);
                let radius = rng.random_range(config.radius_min..=config.radius_max);
                let center_s = draw_in_cell(stats, cell, radius, surface_len, rng);
                if (center_s - current_s).abs() >= config.s4_min_offset {
                    target = Some(Target {
                        center_s,
                        radius,
                        extrusion_depth: extrusion,
                    });
                    break;
                }
                target = Some(Target {
                    center_s,
                    radius,
                    extrusion_depth: extrusion,
                });
            }
            target.unwrap()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::arm::ArmConfig;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn surface() -> Surface {
        ArmConfig::default().surface
    }

    #[test]
    fn ema_arithmetic() {
        let mut stats = CellStats::new(16, 0.99);
        stats.ema_success[3] = 0.5;
        update_cell(&mut stats, 3, true);
        assert!((stats.ema_success[3] - 0.505).abs() < 1e-15);
        stats.ema_success[4] = 0.0;
        update_cell(&mut stats, 4, false);
        assert_eq!(stats.ema_success[4], 0.0);
        assert_eq!(stats.counts[3], 1);
    }

    #[test]
    fn ema_geometric_limit() {
        let mut stats = CellStats::new(16, 0.99);
        for _ in 0..1000 {
            update_cell(&mut stats, 0, true);
        }
        let expect = 1.0 - 0.99f64.powi(1000);
        assert!((stats.ema_success[0] - expect).abs() < 1e-12);
    }

    #[test]
    fn weight_arithmetic() {
        let mut stats = CellStats::new(16, 0.99);
        for c in 1..16 {
            stats.ema_success[c] = 1.0;
        }
        let w = stats.weights(0.1);
        let total: f64 = w.iter().sum();
        let p0 = w[0] / total;
        assert!((p0 - 1.1 / (1.1 + 15.0 * 0.1)).abs() < 1e-12);
    }

    #[test]
    fn uniform_cells_when_ema_equal() {
        let mut stats = CellStats::new(16, 0.99);
        for c in 0..16 {
            stats.ema_success[c] = 0.5;
        }
        let w = stats.weights(0.1);
        assert!(w.windows(2).all(|p| (p[0] - p[1]).abs() < 1e-15));
    }

    #[test]
    fn empirical_cell_frequencies_match_weights() {
        let mut stats = CellStats::new(16, 0.99);
        // arbitrary uneven success profile
        for c in 0..16 {
            stats.ema_success[c] = (c as f64 / 15.0) * 0.9;
        }
        let config = SamplerConfig::default();
        let surf = surface();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut counts = [0usize; 16];
        const N: usize = 100_000;
        for _ in 0..N {
            let t = sample_target(
                &stats,
                Stage::S3AdaptiveSampling,
                &mut rng,
                0.0,
                &config,
                0.0,
                &surf,
            );
            // recover the drawn cell from the unclipped part of the draw;
            // clipping only moves centers within the end cells
            counts[stats.cell_of(t.center_s, surf.length())] += 1;
        }
        let w = stats.weights(config.epsilon);
        let total: f64 = w.iter().sum();
        for c in 0..16 {
            let expect = w[c] / total;
            let got = counts[c] as f64 / N as f64;
            assert!(
                (got - expect).abs() < 0.01,
                "cell {}: got {:.4} expected {:.4}",
                c,
                got,
                expect
            );
        }
    }

    #[test]
    fn radii_uniform_and_in_range() {
        let stats = CellStats::new(16, 0.99);
        let config = SamplerConfig::default();
        let surf = surface();
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        const N: usize = 100_000;
        let mut bins = [0usize; 11];
        for _ in 0..N {
            let t = sample_target(
                &stats,
                Stage::S3AdaptiveSampling,
                &mut rng,
                0.0,
                &config,
                0.0,
                &surf,
            );
            assert!(t.radius >= config.radius_min && t.radius <= config.radius_max);
            assert!(t.center_s - t.radius >= -1e-12);
            assert!(t.center_s + t.radius <= surf.length() + 1e-12);
            let b = (((t.radius - config.radius_min) / (config.radius_max - config.radius_min))
                * 11.0) as usize;
            bins[b.min(10)] += 1;
        }
        for b in bins {
            let frac = b as f64 / N as f64;
            assert!((frac - 1.0 / 11.0).abs() < 0.01, "radius bin fraction {}", frac);
        }
    }

    #[test]
    fn fixed_target_in_early_stages() {
        let stats = CellStats::new(16, 0.99);
        let config = SamplerConfig::default();
        let surf = surface();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let t = sample_target(
            &stats,
            Stage::S1TaskComplexity,
            &mut rng,
            0.0,
            &config,
            0.015,
            &surf,
        );
        assert_eq!(t.center_s, 0.06);
        assert_eq!(t.radius, 0.006);
        assert_eq!(t.extrusion_depth, 0.015);
    }

    #[test]
    fn s4_min_offset_honored() {
        let stats = CellStats::new(16, 0.99);
        let config = SamplerConfig::default();
        let surf = surface();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let current = 0.06; // middle of the screen
        for _ in 0..1000 {
            let t = sample_target(
                &stats,
                Stage::S4ContinuousSequences,
                &mut rng,
                current,
                &config,
                0.0,
                &surf,
            );
            assert!((t.center_s - current).abs() >= config.s4_min_offset - 1e-12);
        }
    }

    #[test]
    fn lowering_ema_never_lowers_weight() {
        let mut stats = CellStats::new(16, 0.99);
        stats.ema_success[5] = 0.8;
        let w_before = stats.weights(0.1)[5];
        stats.ema_success[5] = 0.3;
        let w_after = stats.weights(0.1)[5];
        assert!(w_after >= w_before);
    }
}
