//! Action masking and linear hyperparameter decay schedules.
//!
//! The policy always emits all 11 channels; masking overwrites disabled
//! channels with a neutral command before the environment sees them, and
//! the PPO objective skips them entirely.

use crate::arm::N_MUSCLES;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ActionMask {
    pub enabled: [bool; N_MUSCLES],
    pub neutral_value: f64,
}

impl Default for ActionMask {
    /// Arm and index-finger channels on, the three "other finger"
    /// channels forced to the neutral command.
    fn default() -> Self {
        let mut enabled = [true; N_MUSCLES];
        enabled[8] = false;
        enabled[9] = false;
        enabled[10] = false;
        ActionMask {
            enabled,
            neutral_value: 0.0,
        }
    }
}

impl ActionMask {
    pub fn all_enabled() -> Self {
        ActionMask {
            enabled: [true; N_MUSCLES],
            neutral_value: 0.0,
        }
    }

    pub fn n_enabled(&self) -> usize {
        self.enabled.iter().filter(|e| **e).count()
    }
}

/// Overwrites masked channels with the mask's neutral value.
pub fn apply_mask(action: &[f64; N_MUSCLES], mask: &ActionMask) -> [f64; N_MUSCLES] {
    std::array::from_fn(|i| {
        if mask.enabled[i] {
            action[i]
        } else {
            mask.neutral_value
        }
    })
}

/// Linear decay from `p0` at t = 0 to zero at t = T, clamped at zero beyond.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScheduleSpec {
    pub p0: f64,
    pub total_timesteps: u64,
}

pub fn schedule_value(spec: &ScheduleSpec, t: u64) -> f64 {
    debug_assert!(spec.total_timesteps > 0);
    let r = (1.0 - t as f64 / spec.total_timesteps as f64).max(0.0);
    spec.p0 * r
}
