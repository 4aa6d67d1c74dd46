//! Experiment configuration: a single TOML file covering every ablation
//! axis. Unknown keys are rejected so a typo can never silently fall back
//! to a default.

use crate::arm::ArmConfig;
use crate::curriculum::CurriculumConfig;
use crate::ppo::PpoConfig;
use crate::rollout::RolloutConfig;
use crate::sampler::SamplerConfig;
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("config parse error: {0}")]
    Parse(#[from] toml::de::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub total_timesteps: u64,
    /// Toggles the default action mask (index finger only). Off means all
    /// 11 channels are learned.
    pub mask_enabled: bool,
    /// Off runs the final task (flat, randomly placed targets, full reward
    /// weights) from the first timestep.
    pub curriculum_enabled: bool,
    pub output_dir: PathBuf,
    /// Checkpoint cadence in updates (a final checkpoint is always written).
    pub checkpoint_every: u64,
    pub arm: ArmConfig,
    pub ppo: PpoConfig,
    pub rollout: RolloutConfig,
    pub curriculum: CurriculumConfig,
    pub sampler: SamplerConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            seed: 0,
            total_timesteps: 1_000_000,
            mask_enabled: true,
            curriculum_enabled: true,
            output_dir: PathBuf::from("runs/default"),
            checkpoint_every: 50,
            arm: ArmConfig::default(),
            ppo: PpoConfig::default(),
            rollout: RolloutConfig::default(),
            curriculum: CurriculumConfig::default(),
            sampler: SamplerConfig::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        Ok(toml::from_str(text)?)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_round_trip_is_fixed_point() {
        let config = ExperimentConfig::default();
        let text = config.to_toml();
        let parsed = ExperimentConfig::from_toml(&text).unwrap();
        assert_eq!(config, parsed);
        assert_eq!(parsed.to_toml(), text);
    }

    #[test]
    fn unknown_key_is_rejected_by_name() {
        let err = ExperimentConfig::from_toml("seeed = 3\n").unwrap_err();
        assert!(err.to_string().contains("seeed"), "{err}");
        let err =
            ExperimentConfig::from_toml("[ppo]\nlearning_rate = 0.001\n").unwrap_err();
        assert!(err.to_string().contains("learning_rate"), "{err}");
    }

    #[test]
    fn partial_config_uses_defaults() {
        let config = ExperimentConfig::from_toml(
            "seed = 9\n[ppo]\nhidden = 512\n[rollout]\nn_envs = 4\n",
        )
        .unwrap();
        assert_eq!(config.seed, 9);
        assert_eq!(config.ppo.hidden, 512);
        assert_eq!(config.ppo.lr0, 6e-4);
        assert_eq!(config.rollout.n_envs, 4);
        assert_eq!(config.rollout.horizon, 2048);
    }
}
