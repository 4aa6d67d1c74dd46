//! The training loop: rollouts, advantage estimation, PPO updates,
//! curriculum/sampler bookkeeping, logging, and checkpointing.

use crate::arm::{ArmError, N_MUSCLES, OBS_DIM};
use crate::checkpoint::{
    load_checkpoint, save_checkpoint, CheckpointError, CheckpointMeta, FORMAT_VERSION,
};
use crate::config::ExperimentConfig;
use crate::curriculum::{
    record_episode, reward_weights, target_extrusion, try_advance, CurriculumState,
    Stage,
};
use crate::logging::JsonlLogger;
use crate::mask::{schedule_value, ActionMask, ScheduleSpec};
use crate::nn::AdamState;
use crate::ppo::{
    compute_gae, normalize_advantages, ppo_update, PolicyParams, PpoError, UpdateStats,
};
use crate::rollout::{collect_rollout, EnvRunner, RolloutSummary, TaskSnapshot};
use crate::sampler::{update_cell, CellStats};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use std::path::{Path, PathBuf};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error(transparent)]
    Arm(#[from] ArmError),
    #[error(transparent)]
    Ppo(#[from] PpoError),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
    #[error("log write failed: {0}")]
    Log(#[from] std::io::Error),
}

/// One JSONL record per update.
#[derive(Debug, Serialize)]
pub struct UpdateRecord {
    pub event: &'static str,
    pub update: u64,
    pub timestep: u64,
    pub stage: usize,
    pub sub_stage: usize,
    pub windowed_success_rate: f64,
    pub episodes_finished: u64,
    pub mean_reward_progress: f64,
    pub mean_reward_touch: f64,
    pub mean_reward_jerk: f64,
    pub mean_reward_effort: f64,
    pub success_touches: u64,
    pub error_touches: u64,
    pub lr: f64,
    pub clip: f64,
    pub policy_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
    pub clip_fraction: f64,
    pub approx_kl: f64,
    pub grad_norm: f64,
    pub sampler_ema: Vec<f64>,
}

#[derive(Debug, Serialize)]
struct StageRecord {
    event: &'static str,
    update: u64,
    timestep: u64,
    stage: usize,
    sub_stage: usize,
}

pub struct Trainer {
    pub config: ExperimentConfig,
    pub params: PolicyParams<f32>,
    pub adam: AdamState<f32>,
    pub mask: ActionMask,
    pub curriculum: CurriculumState,
    pub sampler_stats: CellStats,
    pub runners: Vec<EnvRunner>,
    pub learner_rng: ChaCha8Rng,
    pub global_timestep: u64,
    pub update_index: u64,
}

impl Trainer {
    pub fn new(config: ExperimentConfig) -> Result<Self, TrainError> {
        let mask = if config.mask_enabled {
            ActionMask::default()
        } else {
            ActionMask::all_enabled()
        };
        let mut learner_rng = ChaCha8Rng::seed_from_u64(config.seed);
        learner_rng.set_stream(0);
        let params = PolicyParams::init(
            OBS_DIM,
            config.ppo.hidden,
            config.ppo.init_log_std,
            &mut learner_rng,
        );
        let adam = AdamState::new(&params.tensors());
        let curriculum = CurriculumState::new();
        let sampler_stats = CellStats::new(config.sampler.n_cells, config.sampler.ema_beta);
        let snapshot = snapshot_for(&config, &curriculum);
        let runners = (0..config.rollout.n_envs)
            .map(|e| {
                EnvRunner::new(
                    config.seed,
                    e,
                    &snapshot,
                    &sampler_stats,
                    &config.arm,
                    &config.sampler,
                    config.rollout.episode_limit,
                )
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Trainer {
            config,
            params,
            adam,
            mask,
            curriculum,
            sampler_stats,
            runners,
            learner_rng,
            global_timestep: 0,
            update_index: 0,
        })
    }

    /// Rebuilds the full trainer from a checkpoint; the run continues
    /// exactly as if it had never stopped.
    pub fn resume(path: &Path) -> Result<Self, TrainError> {
        let loaded = load_checkpoint(path)?;
        let meta = loaded.meta;
        let mask = if meta.config.mask_enabled {
            ActionMask::default()
        } else {
            ActionMask::all_enabled()
        };
        let mut adam = loaded.adam;
        adam.step = meta.adam_step;
        Ok(Trainer {
            config: meta.config,
            params: loaded.params,
            adam,
            mask,
            curriculum: meta.curriculum,
            sampler_stats: meta.sampler_stats,
            runners: meta.runners,
            learner_rng: meta.learner_rng,
            global_timestep: meta.global_timestep,
            update_index: meta.update_index,
        })
    }

    fn meta(&self) -> CheckpointMeta {
        CheckpointMeta {
            format_version: FORMAT_VERSION,
            config: self.config.clone(),
            global_timestep: self.global_timestep,
            update_index: self.update_index,
            curriculum: self.curriculum.clone(),
            sampler_stats: self.sampler_stats.clone(),
            learner_rng: self.learner_rng.clone(),
            runners: self.runners.clone(),
            adam_step: self.adam.step,
        }
    }

    pub fn checkpoint_path(&self, update: u64) -> PathBuf {
        self.config
            .output_dir
            .join("checkpoints")
            .join(format!("ckpt-{update:06}.ckpt"))
    }

    pub fn save(&self, path: &Path) -> Result<(), CheckpointError> {
        save_checkpoint(path, &self.meta(), &self.params, &self.adam)
    }

    /// One rollout + PPO update. Returns the update statistics and summary.
    pub fn step(&mut self) -> Result<(UpdateStats, RolloutSummary, bool), TrainError> {
        let lr_spec = ScheduleSpec {
            p0: self.config.ppo.lr0,
            total_timesteps: self.config.total_timesteps,
        };
        let clip_spec = ScheduleSpec {
            p0: self.config.ppo.clip0,
            total_timesteps: self.config.total_timesteps,
        };
        let lr = schedule_value(&lr_spec, self.global_timestep);
        let clip = schedule_value(&clip_spec, self.global_timestep);

        let snapshot = snapshot_for(&self.config, &self.curriculum);
        let (mut batch, gae_inputs, outcomes, summary) = collect_rollout(
            &self.params,
            &mut self.runners,
            &snapshot,
            &self.sampler_stats,
            &self.mask,
            &self.config.arm,
            &self.config.sampler,
            &self.config.rollout,
        )?;

        let mut advanced = false;
        if self.config.curriculum_enabled {
            for o in &outcomes {
                record_episode(&mut self.curriculum, o.success, &self.config.curriculum);
                if self.curriculum.stage >= Stage::S3AdaptiveSampling {
                    update_cell(&mut self.sampler_stats, o.cell, o.success);
                }
                advanced |= try_advance(&mut self.curriculum, &self.config.curriculum);
            }
        }

        let (mut advantages, returns) =
            compute_gae(&gae_inputs, self.config.ppo.gamma, self.config.ppo.gae_lambda);
        normalize_advantages(&mut advantages);
        batch.advantages = advantages.iter().map(|a| *a as f32).collect();
        batch.returns = returns.iter().map(|r| *r as f32).collect();

        let stats = ppo_update(
            &mut self.params,
            &mut self.adam,
            &batch,
            &self.config.ppo,
            &self.mask.enabled,
            lr,
            clip,
            &mut self.learner_rng,
        )?;

        self.global_timestep +=
            (self.config.rollout.n_envs * self.config.rollout.horizon) as u64;
        self.update_index += 1;
        Ok((stats, summary, advanced))
    }

    /// Runs until `total_timesteps`, writing JSONL logs and periodic
    /// checkpoints under `output_dir`. A final checkpoint is always written;
    /// its path is returned.
    pub fn run(&mut self) -> Result<PathBuf, TrainError> {
        std::fs::create_dir_all(&self.config.output_dir)?;
        let mut logger = JsonlLogger::append(&self.config.output_dir.join("train.jsonl"))?;

        while self.global_timestep < self.config.total_timesteps {
            let lr = schedule_value(
                &ScheduleSpec {
                    p0: self.config.ppo.lr0,
                    total_timesteps: self.config.total_timesteps,
                },
                self.global_timestep,
            );
            let clip = schedule_value(
                &ScheduleSpec {
                    p0: self.config.ppo.clip0,
                    total_timesteps: self.config.total_timesteps,
                },
                self.global_timestep,
            );
            let (stats, summary, advanced) = self.step()?;
            let n = (self.config.rollout.n_envs * self.config.rollout.horizon) as f64;
            logger.log(&UpdateRecord {
                event: "update",
                update: self.update_index,
                timestep: self.global_timestep,
                stage: self.curriculum.stage.index(),
                sub_stage: self.curriculum.sub_stage,
                windowed_success_rate: self.curriculum.windowed_success_rate(),
                episodes_finished: summary.episodes_finished,
                mean_reward_progress: summary.sum_progress / n,
                mean_reward_touch: summary.sum_touch / n,
                mean_reward_jerk: summary.sum_jerk / n,
                mean_reward_effort: summary.sum_effort / n,
                success_touches: summary.n_success_touches,
                error_touches: summary.n_error_touches,
                lr,
                clip,
                policy_loss: stats.policy_loss,
                value_loss: stats.value_loss,
                entropy: stats.entropy,
                clip_fraction: stats.clip_fraction,
                approx_kl: stats.approx_kl,
                grad_norm: stats.grad_norm,
                sampler_ema: self.sampler_stats.ema_success.clone(),
            })?;
            if advanced {
                logger.log(&StageRecord {
                    event: "stage_advance",
                    update: self.update_index,
                    timestep: self.global_timestep,
                    stage: self.curriculum.stage.index(),
                    sub_stage: self.curriculum.sub_stage,
                })?;
            }
            if self.config.checkpoint_every > 0
                && self.update_index % self.config.checkpoint_every == 0
            {
                self.save(&self.checkpoint_path(self.update_index))?;
            }
        }
        let final_path = self.checkpoint_path(self.update_index);
        self.save(&final_path)?;
        Ok(final_path)
    }
}

/// Task parameters for the next rollout. With the curriculum disabled the
/// run starts (and stays) on the final task: flat targets over the whole
/// screen with full reward weights, uniform sampling.
pub fn snapshot_for(config: &ExperimentConfig, curriculum: &CurriculumState) -> TaskSnapshot {
    if config.curriculum_enabled {
        TaskSnapshot {
            stage: curriculum.stage,
            extrusion: target_extrusion(curriculum, &config.curriculum),
            weights: reward_weights(curriculum, &config.curriculum),
        }
    } else {
        TaskSnapshot {
            stage: Stage::S3AdaptiveSampling,
            extrusion: 0.0,
            weights: config.curriculum.final_weights,
        }
    }
}

/// Neutral-policy action dimension check used by the binary at startup.
pub const ACTION_DIM: usize = N_MUSCLES;

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rollout::RolloutConfig;

    fn tiny_config(dir: &Path) -> ExperimentConfig {
        ExperimentConfig {
            seed: 3,
            total_timesteps: 4 * 2 * 32,
            output_dir: dir.to_path_buf(),
            checkpoint_every: 2,
            ppo: crate::ppo::PpoConfig {
                hidden: 16,
                epochs_per_update: 2,
                minibatch_size: 32,
                ..Default::default()
            },
            rollout: RolloutConfig {
                n_envs: 2,
                horizon: 32,
                ..Default::default()
            },
            ..Default::default()
        }
    }

    #[test]
    fn run_writes_logs_and_checkpoints() {
        let dir = tempfile::tempdir().unwrap();
        let mut trainer = Trainer::new(tiny_config(dir.path())).unwrap();
        let final_path = trainer.run().unwrap();
        assert!(final_path.exists());
        assert_eq!(trainer.update_index, 4);
        let log = std::fs::read_to_string(dir.path().join("train.jsonl")).unwrap();
        let lines: Vec<&str> = log.lines().collect();
        assert!(lines.len() >= 4);
        let first: serde_json::Value = serde_json::from_str(lines[0]).unwrap();
        assert_eq!(first["event"], "update");
        assert_eq!(first["timestep"], 64);
        assert!(dir.path().join("checkpoints/ckpt-000002.ckpt").exists());
    }

    #[test]
    fn resume_matches_uninterrupted_run_bitwise() {
        let dir_a = tempfile::tempdir().unwrap();
        let dir_b = tempfile::tempdir().unwrap();

        // uninterrupted: 4 updates
        let mut full = Trainer::new(tiny_config(dir_a.path())).unwrap();
        for _ in 0..4 {
            full.step().unwrap();
        }

        // interrupted: 2 updates, checkpoint, resume, 2 more
        let mut half = Trainer::new(tiny_config(dir_b.path())).unwrap();
        for _ in 0..2 {
            half.step().unwrap();
        }
        let ckpt = dir_b.path().join("mid.ckpt");
        half.save(&ckpt).unwrap();
        drop(half);
        let mut resumed = Trainer::resume(&ckpt).unwrap();
        for _ in 0..2 {
            resumed.step().unwrap();
        }

        assert_eq!(full.global_timestep, resumed.global_timestep);
        for (a, b) in full.params.tensors().iter().zip(resumed.params.tensors()) {
            assert_eq!(
                a.as_slice().unwrap(),
                b.as_slice().unwrap(),
                "parameters diverged after resume"
            );
        }
        for (a, b) in full.adam.m.iter().zip(resumed.adam.m.iter()) {
            assert_eq!(a.as_slice().unwrap(), b.as_slice().unwrap());
        }
        assert_eq!(full.curriculum, resumed.curriculum);
        assert_eq!(full.runners, resumed.runners);
    }

    #[test]
    fn curriculum_disabled_uses_final_task() {
        let config = ExperimentConfig {
            curriculum_enabled: false,
            ..Default::default()
        };
        let snap = snapshot_for(&config, &CurriculumState::new());
        assert_eq!(snap.stage, Stage::S3AdaptiveSampling);
        assert_eq!(snap.extrusion, 0.0);
        assert_eq!(snap.weights, config.curriculum.final_weights);
    }
}
