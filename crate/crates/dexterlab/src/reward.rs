//! Per-step scalar reward from environment diagnostics and the curriculum's
//! current weights. Progress shaping is potential-based (distance decrease),
//! so episode returns telescope to the net distance covered.

use crate::arm::{StepDiagnostics, TouchEvent, N_MUSCLES};
use crate::curriculum::RewardWeights;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RewardBreakdown {
    pub r_progress: f64,
    pub r_touch: f64,
    pub r_jerk: f64,
    pub r_effort: f64,
    pub total: f64,
}

/// `prev_action` is the command applied on the previous control step; pass
/// `None` on the first step of an episode (the jerk term uses a zero delta).
pub fn compute_reward(
    diag: &StepDiagnostics,
    prev_action: Option<&[f64; N_MUSCLES]>,
    action: &[f64; N_MUSCLES],
    touch: &TouchEvent,
    weights: &RewardWeights,
) -> RewardBreakdown {
    let r_progress = weights.w_d * (diag.dist_prev - diag.dist_now);
    let r_touch = match touch {
        TouchEvent::Success { .. } => weights.bonus,
        TouchEvent::Error { .. } => -weights.penalty,
        TouchEvent::None => 0.0,
    };
    let jerk_sq = match prev_action {
        Some(prev) => action
            .iter()
            .zip(prev.iter())
            .map(|(a, p)| (a - p) * (a - p))
            .sum::<f64>(),
        None => 0.0,
    };
    let r_jerk = -weights.w_j * jerk_sq;
    let r_effort = -weights.w_e * diag.effort;
    RewardBreakdown {
        r_progress,
        r_touch,
        r_jerk,
        r_effort,
        total: r_progress + r_touch + r_jerk + r_effort,
    }
}
