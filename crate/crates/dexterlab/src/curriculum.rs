//! Four-stage training curriculum.
//!
//! Stage 1 shrinks the target's extrusion until the volumetric button is a
//! flat patch on the surface. Stage 2 ramps in the jerk and effort reward
//! penalties. Stage 3 switches to adaptive target sampling, Stage 4 to
//! continuous movement sequences. Advancement requires the windowed success
//! rate to clear a threshold in the final sub-stage check.

use serde::{Deserialize, Serialize};
use std::collections::VecDeque;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Stage {
    S1TaskComplexity,
    S2DynamicReward,
    S3AdaptiveSampling,
    S4ContinuousSequences,
}

impl Stage {
    pub fn index(self) -> usize {
        match self {
            Stage::S1TaskComplexity => 0,
            Stage::S2DynamicReward => 1,
            Stage::S3AdaptiveSampling => 2,
            Stage::S4ContinuousSequences => 3,
        }
    }

    fn next(self) -> Option<Stage> {
        match self {
            Stage::S1TaskComplexity => Some(Stage::S2DynamicReward),
            Stage::S2DynamicReward => Some(Stage::S3AdaptiveSampling),
            Stage::S3AdaptiveSampling => Some(Stage::S4ContinuousSequences),
            Stage::S4ContinuousSequences => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RewardWeights {
    /// Progress-shaping weight on the per-step distance decrease.
    pub w_d: f64,
    /// Bonus on a Success touch.
    pub bonus: f64,
    /// Penalty on an Error touch (wrong press).
    pub penalty: f64,
    /// Jerk penalty weight (squared action change).
    pub w_j: f64,
    /// Effort penalty weight (summed squared activations).
    pub w_e: f64,
}

impl Default for RewardWeights {
    fn default() -> Self {
        RewardWeights {
            w_d: 1.0,
            bonus: 10.0,
            penalty: 1.0,
            w_j: 0.1,
            w_e: 0.05,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RewardMode {
    /// Stage-2 ramp: penalties fade in across S2 sub-stages.
    Dynamic,
    /// Ablation: full final weights from the very first timestep.
    Early,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CurriculumConfig {
    pub sub_stages_per_stage: [usize; 4],
    pub advance_threshold: f64,
    pub window: usize,
    /// Stage-1 initial extrusion depth in meters.
    pub extrusion_start: f64,
    pub final_weights: RewardWeights,
    pub reward_mode: RewardMode,
}

impl Default for CurriculumConfig {
    fn default() -> Self {
        CurriculumConfig {
            sub_stages_per_stage: [4, 4, 4, 1],
            advance_threshold: 0.70,
            window: 500,
            extrusion_start: 0.020,
            final_weights: RewardWeights::default(),
            reward_mode: RewardMode::Dynamic,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurriculumState {
    pub stage: Stage,
    pub sub_stage: usize,
    pub success_window: VecDeque<bool>,
    pub episodes_in_substage: u64,
}

impl CurriculumState {
    pub fn new() -> Self {
        CurriculumState {
            stage: Stage::S1TaskComplexity,
            sub_stage: 0,
            success_window: VecDeque::new(),
            episodes_in_substage: 0,
        }
    }

    pub fn windowed_success_rate(&self) -> f64 {
        if self.success_window.is_empty() {
            return 0.0;
        }
        let s = self.success_window.iter().filter(|x| **x).count();
        s as f64 / self.success_window.len() as f64
    }
}

impl Default for CurriculumState {
    fn default() -> Self {
        Self::new()
    }
}

/// Stage-1 extrusion depth for the current sub-stage; zero from the final
/// S1 sub-stage onward.
pub fn target_extrusion(state: &CurriculumState, config: &CurriculumConfig) -> f64 {
    if state.stage != Stage::S1TaskComplexity {
        return 0.0;
    }
    let k = config.sub_stages_per_stage[0];
    if k <= 1 {
        return 0.0;
    }
    config.extrusion_start * (1.0 - state.sub_stage as f64 / (k - 1) as f64)
}

/// Reward weights for the current curriculum position.
pub fn reward_weights(state: &CurriculumState, config: &CurriculumConfig) -> RewardWeights {
    let final_w = config.final_weights;
    if config.reward_mode == RewardMode::Early {
        return final_w;
    }
    match state.stage {
        Stage::S1TaskComplexity => RewardWeights {
            w_j: 0.0,
            w_e: 0.0,
            ..final_w
        },
        Stage::S2DynamicReward => {
            let k = config.sub_stages_per_stage[1];
            let ramp = if k <= 1 {
                1.0
            } else {
                state.sub_stage as f64 / (k - 1) as f64
            };
            RewardWeights {
                w_j: final_w.w_j * ramp,
                w_e: final_w.w_e * ramp,
                ..final_w
            }
        }
        Stage::S3AdaptiveSampling | Stage::S4ContinuousSequences => final_w,
    }
}

/// Pushes an episode outcome into the trailing window.
pub fn record_episode(state: &mut CurriculumState, success: bool, config: &CurriculumConfig) {
    state.success_window.push_back(success);
    while state.success_window.len() > config.window {
        state.success_window.pop_front();
    }
    state.episodes_in_substage += 1;
}

/// Advances the sub-stage (or stage, at the last sub-stage) when the window
/// is full and the success rate clears the threshold. The window is cleared
/// on every advancement. Returns whether an advancement fired.
pub fn try_advance(state: &mut CurriculumState, config: &CurriculumConfig) -> bool {
    if state.success_window.len() < config.window {
        return false;
    }
    if state.windowed_success_rate() < config.advance_threshold {
        return false;
    }
    let k = config.sub_stages_per_stage[state.stage.index()];
    if state.sub_stage + 1 < k {
        state.sub_stage += 1;
    } else {
        match state.stage.next() {
            Some(next) => {
                state.stage = next;
                state.sub_stage = 0;
            }
            None => return false, // terminal stage, terminal sub-stage
        }
    }
    state.success_window.clear();
    state.episodes_in_substage = 0;
    true
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg() -> CurriculumConfig {
        CurriculumConfig::default()
    }

    #[test]
    fn extrusion_schedule() {
        let config = cfg();
        let mut state = CurriculumState::new();
        assert_eq!(target_extrusion(&state, &config), 0.020);
        state.sub_stage = 3;
        assert_eq!(target_extrusion(&state, &config), 0.0);
        state.sub_stage = 1;
        assert!((target_extrusion(&state, &config) - 0.020 * (2.0 / 3.0)).abs() < 1e-15);
        state.stage = Stage::S3AdaptiveSampling;
        assert_eq!(target_extrusion(&state, &config), 0.0);
    }

    #[test]
    fn dynamic_weights_ramp() {
        let config = cfg();
        let mut state = CurriculumState::new();
        let w = reward_weights(&state, &config);
        assert_eq!(w.w_j, 0.0);
        assert_eq!(w.w_e, 0.0);
        assert_eq!(w.penalty, 1.0);

        state.stage = Stage::S2DynamicReward;
        state.sub_stage = 2;
        let w = reward_weights(&state, &config);
        assert!((w.w_j - 0.1 * (2.0 / 3.0)).abs() < 1e-15);
        assert!((w.w_e - 0.05 * (2.0 / 3.0)).abs() < 1e-15);

        state.stage = Stage::S4ContinuousSequences;
        let w = reward_weights(&state, &config);
        assert_eq!(w.w_j, 0.1);
        assert_eq!(w.w_e, 0.05);
    }

    #[test]
    fn early_mode_uses_final_weights_from_start() {
        let mut config = cfg();
        config.reward_mode = RewardMode::Early;
        let state = CurriculumState::new();
        assert_eq!(reward_weights(&state, &config), config.final_weights);
    }

    #[test]
    fn window_eviction_and_rate() {
        let config = cfg();
        let mut state = CurriculumState::new();
        record_episode(&mut state, true, &config);
        assert_eq!(state.windowed_success_rate(), 1.0);
        for i in 0..500 {
            record_episode(&mut state, i % 2 == 0, &config);
        }
        assert_eq!(state.success_window.len(), 500);
        assert!((state.windowed_success_rate() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn threshold_boundary() {
        let config = cfg();
        let mut state = CurriculumState::new();
        // 345/500 = 0.69 < 0.70: no advance
        for i in 0..500 {
            record_episode(&mut state, i < 345, &config);
        }
        assert!(!try_advance(&mut state, &config));
        assert_eq!(state.sub_stage, 0);
        // one more success tips the window to 346/500 = 0.692, still short
        record_episode(&mut state, true, &config);
        assert!(!try_advance(&mut state, &config));
        // refill with exactly 350/500 = 0.70
        state.success_window.clear();
        for i in 0..500 {
            record_episode(&mut state, i < 350, &config);
        }
        assert!(try_advance(&mut state, &config));
        assert_eq!(state.sub_stage, 1);
        assert!(state.success_window.is_empty());
    }

    #[test]
    fn never_advances_on_partial_window() {
        let config = cfg();
        let mut state = CurriculumState::new();
        for _ in 0..499 {
            record_episode(&mut state, true, &config);
            assert!(!try_advance(&mut state, &config));
        }
        record_episode(&mut state, true, &config);
        assert!(try_advance(&mut state, &config));
    }

    #[test]
    fn stage_boundary_and_terminal() {
        let config = cfg();
        let mut state = CurriculumState::new();
        state.sub_stage = 3; // final S1 sub-stage
        for _ in 0..500 {
            record_episode(&mut state, true, &config);
        }
        assert!(try_advance(&mut state, &config));
        assert_eq!(state.stage, Stage::S2DynamicReward);
        assert_eq!(state.sub_stage, 0);

        state.stage = Stage::S4ContinuousSequences;
        state.sub_stage = 0; // S4 has one sub-stage: terminal
        for _ in 0..500 {
            record_episode(&mut state, true, &config);
        }
        let before = state.clone();
        assert!(!try_advance(&mut state, &config));
        assert_eq!(state.stage, before.stage);
        assert_eq!(state.sub_stage, before.sub_stage);
    }

    #[test]
    fn full_progression_is_monotone() {
        let config = cfg();
        let mut state = CurriculumState::new();
        let mut last = (state.stage.index(), state.sub_stage);
        let mut extrusions = vec![target_extrusion(&state, &config)];
        // drive all the way to terminal with constant successes
        for _ in 0..(13 * 500 + 100) {
            record_episode(&mut state, true, &config);
            try_advance(&mut state, &config);
            let now = (state.stage.index(), state.sub_stage);
            assert!(now >= last, "curriculum went backward: {:?} -> {:?}", last, now);
            last = now;
            extrusions.push(target_extrusion(&state, &config));
        }
        assert_eq!(state.stage, Stage::S4ContinuousSequences);
        assert!(extrusions.windows(2).all(|w| w[1] <= w[0] + 1e-15));
        assert_eq!(*extrusions.last().unwrap(), 0.0);
    }
}
