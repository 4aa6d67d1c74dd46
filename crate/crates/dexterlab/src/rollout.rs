//! Rollout collection across parallel environments and the evaluation
//! harness producing the headline pointing metrics.
//!
//! Each environment owns its RNG stream, so trajectories are independent
//! of how many environments run alongside and of the worker thread count.
//! `DEXTERLAB_THREADS` caps the stepping parallelism.

use crate::arm::{
    build_observation, env_step, init_state, ArmConfig, ArmError, ArmState, Target, Termination,
    TouchEvent, N_MUSCLES,
};
use crate::curriculum::{RewardWeights, Stage};
use crate::mask::{apply_mask, ActionMask};
use crate::ppo::{
    deterministic_action, sample_action, GaeInputs, PolicyParams, TrainBatch,
};
use crate::reward::compute_reward;
use crate::sampler::{sample_target, CellStats, SamplerConfig};
use ndarray::{Array1, Array2};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RolloutConfig {
    pub n_envs: usize,
    /// Control steps per environment per update.
    pub horizon: usize,
    pub frameskip: usize,
    /// Episode duration cap in seconds.
    pub episode_limit: f64,
}

impl Default for RolloutConfig {
    fn default() -> Self {
        RolloutConfig {
            n_envs: 16,
            horizon: 2048,
            frameskip: 3,
            episode_limit: 10.0,
        }
    }
}

/// Worker thread cap from `DEXTERLAB_THREADS` (default 1).
pub fn rollout_threads() -> usize {
    std::env::var("DEXTERLAB_THREADS")
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
        .filter(|n| *n >= 1)
        .unwrap_or(1)
}

/// Read-only task parameters handed to the rollout for one update.
#[derive(Debug, Clone, Copy)]
pub struct TaskSnapshot {
    pub stage: Stage,
    pub extrusion: f64,
    pub weights: RewardWeights,
}

/// One finished task attempt (an episode, or one target of a stage-4
/// sequence), in completion order.
#[derive(Debug, Clone, Copy)]
pub struct EpisodeOutcome {
    pub success: bool,
    /// Sampler cell containing the attempted target's center.
    pub cell: usize,
}

/// Mutable per-environment state carried across rollouts (and through
/// checkpoints: resuming must continue mid-episode exactly).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvRunner {
    pub state: ArmState,
    pub target: Target,
    pub prev_action: Option<[f64; N_MUSCLES]>,
    pub rng: ChaCha8Rng,
    /// Observation the policy will act on next (current state + target).
    pub current_obs: Vec<f64>,
    /// True when a touch event fired on the previous control step
    /// (press-and-hold debounce of one control step).
    pub debounce: bool,
}

impl EnvRunner {
    /// Environment `index` of a run seeded with `seed`; RNG streams are
    /// independent per index, so an env behaves identically whether it runs
    /// alone or inside a vector of environments.
    pub fn new(
        seed: u64,
        index: usize,
        snapshot: &TaskSnapshot,
        stats: &CellStats,
        arm: &ArmConfig,
        sampler_cfg: &SamplerConfig,
        episode_limit: f64,
    ) -> Result<Self, ArmError> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(1 + index as u64);
        let state = init_state(&mut rng, arm)?;
        let tip_s = arm.surface.arclength_of(state.prev_fingertip);
        let target = sample_target(
            stats,
            snapshot.stage,
            &mut rng,
            tip_s,
            sampler_cfg,
            snapshot.extrusion,
            &arm.surface,
        );
        let current_obs = build_observation(&state, &target, arm, episode_limit);
        Ok(EnvRunner {
            state,
            target,
            prev_action: None,
            rng,
            current_obs,
            debounce: false,
        })
    }

    fn reset(
        &mut self,
        snapshot: &TaskSnapshot,
        stats: &CellStats,
        arm: &ArmConfig,
        sampler_cfg: &SamplerConfig,
        episode_limit: f64,
    ) -> Result<(), ArmError> {
        self.state = init_state(&mut self.rng, arm)?;
        let tip_s = arm.surface.arclength_of(self.state.prev_fingertip);
        self.target = sample_target(
            stats,
            snapshot.stage,
            &mut self.rng,
            tip_s,
            sampler_cfg,
            snapshot.extrusion,
            &arm.surface,
        );
        self.prev_action = None;
        self.debounce = false;
        self.current_obs = build_observation(&self.state, &self.target, arm, episode_limit);
        Ok(())
    }
}

/// Reward term sums and touch counts over one rollout, for logging.
#[derive(Debug, Clone, Default, Serialize)]
pub struct RolloutSummary {
    pub sum_progress: f64,
    pub sum_touch: f64,
    pub sum_jerk: f64,
    pub sum_effort: f64,
    pub n_success_touches: u64,
    pub n_error_touches: u64,
    pub episodes_finished: u64,
}

struct StepRecord {
    action_raw: Vec<f32>,
    logp: f32,
    reward: f64,
    /// Some(_) when the episode ended on this step; true = bootstrap the
    /// value of `bootstrap_obs` (timeout), false = true terminal.
    ended: Option<bool>,
    bootstrap_obs: Option<Vec<f64>>,
    outcomes: Vec<EpisodeOutcome>,
    touch_success: bool,
    touch_error: bool,
    terms: [f64; 4],
}

#[allow(clippy::too_many_arguments)]
fn step_one_env(
    runner: &mut EnvRunner,
    mean_row: &[f32],
    log_std: &Array1<f32>,
    mask: &ActionMask,
    snapshot: &TaskSnapshot,
    stats: &CellStats,
    arm: &ArmConfig,
    sampler_cfg: &SamplerConfig,
    rc: &RolloutConfig,
) -> Result<StepRecord, ArmError> {
    let enabled = mask.enabled;
    let mean = Array1::from_vec(mean_row.to_vec());
    let (raw, env_action_unmasked, logp) =
        sample_action(mean.view(), log_std.view(), &enabled, &mut runner.rng);
    let env_action = apply_mask(&env_action_unmasked, mask);

    let outcome = env_step(
        &mut runner.state,
        &env_action,
        rc.frameskip,
        &runner.target,
        arm,
        rc.episode_limit,
    );

    // one-control-step debounce of touch events
    let touch = if runner.debounce {
        TouchEvent::None
    } else {
        outcome.touch
    };
    runner.debounce = !touch.is_none();

    let breakdown = compute_reward(
        &outcome.diagnostics,
        runner.prev_action.as_ref(),
        &env_action,
        &touch,
        &snapshot.weights,
    );
    runner.prev_action = Some(env_action);

    let cell = stats.cell_of(runner.target.center_s, arm.surface.length());
    let mut outcomes = Vec::new();
    let mut ended: Option<bool> = None;
    let mut bootstrap_obs = None;

    let success = touch.is_success();
    if success && snapshot.stage == Stage::S4ContinuousSequences {
        // swap targets without resetting the arm
        outcomes.push(EpisodeOutcome {
            success: true,
            cell,
        });
        let tip_s = arm
            .surface
            .arclength_of(crate::arm::forward_kinematics(runner.state.q, arm));
        runner.target = sample_target(
            stats,
            snapshot.stage,
            &mut runner.rng,
            tip_s,
            sampler_cfg,
            snapshot.extrusion,
            &arm.surface,
        );
        runner.current_obs =
            build_observation(&runner.state, &runner.target, arm, rc.episode_limit);
        if outcome.terminated != Termination::Running {
            // ran out of time in the same step; the sequence episode ends
            ended = Some(outcome.terminated == Termination::Timeout);
            if outcome.terminated == Termination::Timeout {
                bootstrap_obs = Some(runner.current_obs.clone());
            }
        }
    } else if success {
        outcomes.push(EpisodeOutcome {
            success: true,
            cell,
        });
        ended = Some(false); // true terminal: target acquired
    } else {
        match outcome.terminated {
            Termination::Running => {
                runner.current_obs = outcome.observation.clone();
            }
            Termination::Timeout => {
                outcomes.push(EpisodeOutcome {
                    success: false,
                    cell,
                });
                ended = Some(true);
                bootstrap_obs = Some(outcome.observation.clone());
            }
            Termination::OutOfBounds => {
                outcomes.push(EpisodeOutcome {
                    success: false,
                    cell,
                });
                ended = Some(false);
            }
        }
    }

    if matches!(ended, Some(_)) {
        runner.reset(snapshot, stats, arm, sampler_cfg, rc.episode_limit)?;
    }

    Ok(StepRecord {
        action_raw: raw.iter().map(|v| *v as f32).collect(),
        logp: logp as f32,
        reward: breakdown.total,
        ended,
        bootstrap_obs,
        outcomes,
        touch_success: touch.is_success(),
        touch_error: touch.is_error(),
        terms: [
            breakdown.r_progress,
            breakdown.r_touch,
            breakdown.r_jerk,
            breakdown.r_effort,
        ],
    })
}

/// Advances every environment `horizon` control steps against a fixed
/// parameter snapshot. Rows are fragment-ordered per environment
/// (env-major), `n_envs * horizon` transitions total.
#[allow(clippy::too_many_arguments)]
pub fn collect_rollout(
    params: &PolicyParams<f32>,
    runners: &mut [EnvRunner],
    snapshot: &TaskSnapshot,
    stats: &CellStats,
    mask: &ActionMask,
    arm: &ArmConfig,
    sampler_cfg: &SamplerConfig,
    rc: &RolloutConfig,
) -> Result<(TrainBatch<f32>, GaeInputs, Vec<EpisodeOutcome>, RolloutSummary), ArmError> {
    let n_envs = runners.len();
    let horizon = rc.horizon;
    let n = n_envs * horizon;
    let obs_dim = params.obs_dim();
    let threads = rollout_threads();

    let mut obs_mat = Array2::<f32>::zeros((n, obs_dim));
    let mut actions_raw = Array2::<f32>::zeros((n, N_MUSCLES));
    let mut old_logp = vec![0.0f32; n];
    let mut gae = GaeInputs {
        rewards: vec![0.0; n],
        values: vec![0.0; n],
        episode_end: vec![false; n],
        next_value: vec![0.0; n],
    };
    // row for env e at step t
    let row = |e: usize, t: usize| e * horizon + t;

    let mut outcomes = Vec::new();
    let mut summary = RolloutSummary::default();
    let log_std: Array1<f32> = params.log_std.row(0).to_owned();
    let mut step_obs = Array2::<f32>::zeros((n_envs, obs_dim));

    for t in 0..horizon {
        for (e, runner) in runners.iter().enumerate() {
            for (k, v) in runner.current_obs.iter().enumerate() {
                step_obs[[e, k]] = *v as f32;
            }
        }
        let (means, _) = params.policy.forward(&step_obs);
        let values = params.value.forward_only(&step_obs);

        let records: Vec<Result<StepRecord, ArmError>> = if threads <= 1 || n_envs == 1 {
            runners
                .iter_mut()
                .enumerate()
                .map(|(e, runner)| {
                    step_one_env(
                        runner,
                        means.row(e).as_slice().unwrap(),
                        &log_std,
                        mask,
                        snapshot,
                        stats,
                        arm,
                        sampler_cfg,
                        rc,
                    )
                })
                .collect()
        } else {
            let chunk = n_envs.div_ceil(threads);
            let mut out: Vec<Option<Result<StepRecord, ArmError>>> =
                (0..n_envs).map(|_| None).collect();
            std::thread::scope(|scope| {
                let mut handles = Vec::new();
                for (ci, (rs, os)) in runners
                    .chunks_mut(chunk)
                    .zip(out.chunks_mut(chunk))
                    .enumerate()
                {
                    let means = &means;
                    let log_std = &log_std;
                    handles.push(scope.spawn(move || {
                        for (k, (runner, slot)) in rs.iter_mut().zip(os.iter_mut()).enumerate() {
                            let e = ci * chunk + k;
                            *slot = Some(step_one_env(
                                runner,
                                means.row(e).as_slice().unwrap(),
                                log_std,
                                mask,
                                snapshot,
                                stats,
                                arm,
                                sampler_cfg,
                                rc,
                            ));
                        }
                    }));
                }
                for h in handles {
                    h.join().expect("rollout worker panicked");
                }
            });
            out.into_iter().map(|o| o.unwrap()).collect()
        };

        let mut bootstrap_rows: Vec<(usize, Vec<f64>)> = Vec::new();
        for (e, rec) in records.into_iter().enumerate() {
            let rec = rec?;
            let i = row(e, t);
            obs_mat.row_mut(i).assign(&step_obs.row(e));
            for j in 0..N_MUSCLES {
                actions_raw[[i, j]] = rec.action_raw[j];
            }
            old_logp[i] = rec.logp;
            gae.rewards[i] = rec.reward;
            gae.values[i] = values[[e, 0]] as f64;
            if let Some(bootstraps) = rec.ended {
                gae.episode_end[i] = true;
                if bootstraps {
                    bootstrap_rows.push((i, rec.bootstrap_obs.clone().unwrap()));
                }
                summary.episodes_finished += 1;
            }
            summary.sum_progress += rec.terms[0];
            summary.sum_touch += rec.terms[1];
            summary.sum_jerk += rec.terms[2];
            summary.sum_effort += rec.terms[3];
            summary.n_success_touches += rec.touch_success as u64;
            summary.n_error_touches += rec.touch_error as u64;
            outcomes.extend(rec.outcomes);
        }
        if !bootstrap_rows.is_empty() {
            let mut bobs = Array2::<f32>::zeros((bootstrap_rows.len(), obs_dim));
            for (k, (_, o)) in bootstrap_rows.iter().enumerate() {
                for (j, v) in o.iter().enumerate() {
                    bobs[[k, j]] = *v as f32;
                }
            }
            let bv = params.value.forward_only(&bobs);
            for (k, (i, _)) in bootstrap_rows.iter().enumerate() {
                gae.next_value[*i] = bv[[k, 0]] as f64;
            }
        }
    }

    // wire up next_value for continuing steps and bootstrap the horizon cut
    for (e, runner) in runners.iter().enumerate() {
        for (k, v) in runner.current_obs.iter().enumerate() {
            step_obs[[e, k]] = *v as f32;
        }
    }
    let final_values = params.value.forward_only(&step_obs);
    for e in 0..n_envs {
        for t in 0..horizon {
            let i = row(e, t);
            if gae.episode_end[i] {
                continue; // already 0 or a timeout bootstrap
            }
            gae.next_value[i] = if t + 1 < horizon {
                gae.values[row(e, t + 1)]
            } else {
                final_values[[e, 0]] as f64
            };
        }
    }

    let batch = TrainBatch {
        obs: obs_mat,
        actions_raw,
        old_logp,
        advantages: Vec::new(),
        returns: Vec::new(),
    };
    Ok((batch, gae, outcomes, summary))
}

/// Evaluation metrics over a set of episodes (the three headline columns).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalMetrics {
    pub n_episodes: usize,
    pub success_rate: f64,
    /// Mean Error-touch count over successful episodes; absent when no
    /// episode succeeded.
    pub avg_errors_per_success_episode: Option<f64>,
    /// Mean time of the first Success touch over successful episodes (s).
    pub avg_time_per_success_episode: Option<f64>,
}

/// Outcome of one evaluation episode.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpisodeResult {
    /// Time of the first Success touch, when the episode succeeded.
    pub success_time: Option<f64>,
    /// Error touches before the episode ended.
    pub errors: u64,
}

impl EvalMetrics {
    pub fn from_episodes(episodes: &[EpisodeResult]) -> EvalMetrics {
        let n = episodes.len();
        let successes: Vec<&EpisodeResult> =
            episodes.iter().filter(|e| e.success_time.is_some()).collect();
        let k = successes.len();
        let (avg_err, avg_time) = if k == 0 {
            (None, None)
        } else {
            (
                Some(successes.iter().map(|e| e.errors as f64).sum::<f64>() / k as f64),
                Some(
                    successes
                        .iter()
                        .map(|e| e.success_time.unwrap())
                        .sum::<f64>()
                        / k as f64,
                ),
            )
        };
        EvalMetrics {
            n_episodes: n,
            success_rate: if n == 0 { 0.0 } else { k as f64 / n as f64 },
            avg_errors_per_success_episode: avg_err,
            avg_time_per_success_episode: avg_time,
        }
    }
}

/// Uniform-cell evaluation target with a fixed radius.
pub fn sample_eval_target<R: rand::Rng>(
    rng: &mut R,
    radius: f64,
    n_cells: usize,
    surface: &crate::arm::Surface,
) -> Target {
    let surface_len = surface.length();
    let cell_len = surface_len / n_cells as f64;
    let cell = rng.random_range(0..n_cells);
    let lo = cell as f64 * cell_len;
    let center = rng
        .random_range(lo..lo + cell_len)
        .clamp(radius, surface_len - radius);
    Target {
        center_s: center,
        radius,
        extrusion_depth: 0.0,
    }
}

/// Runs `n_episodes` with deterministic actions (clamped policy means) on
/// flat, uniformly placed targets of the given radius. An episode succeeds
/// at its first Success touch and ends there; Error touches are counted
/// with a one-control-step debounce.
#[allow(clippy::too_many_arguments)]
pub fn evaluate(
    params: &PolicyParams<f32>,
    mask: &ActionMask,
    arm: &ArmConfig,
    rc: &RolloutConfig,
    radius: f64,
    n_cells: usize,
    n_episodes: usize,
    seed: u64,
) -> Result<EvalMetrics, ArmError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(0xEBA1);
    let mut episodes = Vec::with_capacity(n_episodes);
    let obs_dim = params.obs_dim();

    for _ in 0..n_episodes {
        let mut state = init_state(&mut rng, arm)?;
        let target = sample_eval_target(&mut rng, radius, n_cells, &arm.surface);
        let mut errors = 0u64;
        let mut success_time = None;
        let mut debounce = false;
        let mut obs = build_observation(&state, &target, arm, rc.episode_limit);

        loop {
            let mut x = Array2::<f32>::zeros((1, obs_dim));
            for (k, v) in obs.iter().enumerate() {
                x[[0, k]] = *v as f32;
            }
            let mean = params.policy.forward_only(&x);
            let action = apply_mask(&deterministic_action(mean.row(0)), mask);
            let outcome = env_step(
                &mut state,
                &action,
                rc.frameskip,
                &target,
                arm,
                rc.episode_limit,
            );
            let touch = if debounce {
                TouchEvent::None
            } else {
                outcome.touch
            };
            debounce = !touch.is_none();
            match touch {
                TouchEvent::Success { time, .. } => {
                    success_time = Some(time);
                }
                TouchEvent::Error { .. } => errors += 1,
                TouchEvent::None => {}
            }
            if success_time.is_some() || outcome.terminated != Termination::Running {
                break;
            }
            obs = outcome.observation;
        }
        episodes.push(EpisodeResult {
            success_time,
            errors,
        });
    }
    Ok(EvalMetrics::from_episodes(&episodes))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::curriculum::RewardWeights;

    fn snapshot(stage: Stage) -> TaskSnapshot {
        TaskSnapshot {
            stage,
            extrusion: 0.0,
            weights: RewardWeights::default(),
        }
    }

    fn small_setup() -> (
        PolicyParams<f32>,
        CellStats,
        ActionMask,
        ArmConfig,
        SamplerConfig,
        RolloutConfig,
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let params = PolicyParams::init(crate::arm::OBS_DIM, 16, (0.3f64).ln(), &mut rng);
        (
            params,
            CellStats::new(16, 0.99),
            ActionMask::default(),
            ArmConfig::default(),
            SamplerConfig::default(),
            RolloutConfig {
                n_envs: 4,
                horizon: 64,
                frameskip: 3,
                episode_limit: 10.0,
            },
        )
    }

    fn make_runners(
        n: usize,
        seed: u64,
        snap: &TaskSnapshot,
        stats: &CellStats,
        arm: &ArmConfig,
        sc: &SamplerConfig,
        rc: &RolloutConfig,
    ) -> Vec<EnvRunner> {
        (0..n)
            .map(|e| EnvRunner::new(seed, e, snap, stats, arm, sc, rc.episode_limit).unwrap())
            .collect()
    }

    #[test]
    fn batch_has_exactly_n_envs_times_horizon_rows() {
        let (params, stats, mask, arm, sc, rc) = small_setup();
        let snap = snapshot(Stage::S3AdaptiveSampling);
        let mut runners = make_runners(4, 7, &snap, &stats, &arm, &sc, &rc);
        let (batch, gae, _, _) =
            collect_rollout(&params, &mut runners, &snap, &stats, &mask, &arm, &sc, &rc).unwrap();
        assert_eq!(batch.obs.nrows(), 4 * 64);
        assert_eq!(gae.rewards.len(), 4 * 64);
    }

    #[test]
    fn env_zero_is_invariant_to_vector_size() {
        let (params, stats, mask, arm, sc, rc) = small_setup();
        let snap = snapshot(Stage::S3AdaptiveSampling);
        let rc1 = RolloutConfig { n_envs: 1, ..rc.clone() };
        let mut solo = make_runners(1, 7, &snap, &stats, &arm, &sc, &rc1);
        let mut vec16 = make_runners(16, 7, &snap, &stats, &arm, &sc, &rc);
        let (b1, g1, _, _) =
            collect_rollout(&params, &mut solo, &snap, &stats, &mask, &arm, &sc, &rc1).unwrap();
        let (b16, g16, _, _) =
            collect_rollout(&params, &mut vec16, &snap, &stats, &mask, &arm, &sc, &rc).unwrap();
        // env 0 occupies rows 0..horizon in both layouts
        for t in 0..rc.horizon {
            assert_eq!(b1.obs.row(t), b16.obs.row(t));
            assert_eq!(b1.actions_raw.row(t), b16.actions_raw.row(t));
            assert_eq!(g1.rewards[t], g16.rewards[t]);
            assert_eq!(g1.episode_end[t], g16.episode_end[t]);
        }
    }

    #[test]
    fn rollout_is_deterministic_and_thread_invariant() {
        let (params, stats, mask, arm, sc, rc) = small_setup();
        let snap = snapshot(Stage::S3AdaptiveSampling);
        let run = || {
            let mut runners = make_runners(4, 3, &snap, &stats, &arm, &sc, &rc);
            collect_rollout(&params, &mut runners, &snap, &stats, &mask, &arm, &sc, &rc).unwrap()
        };
        let (b1, g1, _, _) = run();
        std::env::set_var("DEXTERLAB_THREADS", "3");
        let (b2, g2, _, _) = run();
        std::env::remove_var("DEXTERLAB_THREADS");
        assert_eq!(b1.obs, b2.obs);
        assert_eq!(b1.actions_raw, b2.actions_raw);
        assert_eq!(g1.rewards, g2.rewards);
        assert_eq!(g1.next_value, g2.next_value);
    }

    #[test]
    fn masked_channels_do_not_change_trajectories() {
        let (params, stats, mask, arm, sc, rc) = small_setup();
        let snap = snapshot(Stage::S3AdaptiveSampling);
        let mut a = make_runners(2, 11, &snap, &stats, &arm, &sc, &rc);
        let (ba, ga, _, _) =
            collect_rollout(&params, &mut a, &snap, &stats, &mask, &arm, &sc, &rc).unwrap();

        // wildly perturb the policy outputs on masked channels
        let mut perturbed = params.clone();
        let last = perturbed.policy.layers.len() - 1;
        for j in 8..N_MUSCLES {
            perturbed.policy.layers[last].w.column_mut(j).fill(5.0);
            perturbed.policy.layers[last].b[[0, j]] = 2.0;
        }
        let mut b = make_runners(2, 11, &snap, &stats, &arm, &sc, &rc);
        let (bb, gb, _, _) =
            collect_rollout(&perturbed, &mut b, &snap, &stats, &mask, &arm, &sc, &rc).unwrap();

        assert_eq!(ba.obs, bb.obs);
        assert_eq!(ga.rewards, gb.rewards);
        assert_eq!(ba.old_logp, bb.old_logp);
        for (ra, rb) in a.iter().zip(b.iter()) {
            assert_eq!(ra.state, rb.state);
        }
    }

    #[test]
    fn s4_success_swaps_target_without_reset() {
        let (params, stats, mask, arm, sc, _) = small_setup();
        let snap = TaskSnapshot {
            stage: Stage::S4ContinuousSequences,
            extrusion: 0.0,
            weights: RewardWeights::default(),
        };
        let rc = RolloutConfig {
            n_envs: 1,
            horizon: 2000,
            frameskip: 3,
            episode_limit: 10.0,
        };
        // scripted runner: drive the arm into the surface repeatedly by
        // overriding the policy with a strong reach; we emulate that by a
        // biased policy (positive means on the shoulder flexor).
        let mut pushy = params.clone();
        let last = pushy.policy.layers.len() - 1;
        pushy.policy.layers[last].b[[0, 0]] = 1.0; // shoulder flexor on
        let mut runners = make_runners(1, 5, &snap, &stats, &arm, &sc, &rc);
        let (_, gae, outcomes, _) =
            collect_rollout(&pushy, &mut runners, &snap, &stats, &mask, &arm, &sc, &rc).unwrap();
        let successes = outcomes.iter().filter(|o| o.success).count();
        if successes >= 2 {
            // at least one swap happened without an episode boundary between
            // the first two successes
            let mut ends_before_second = 0;
            let mut seen = 0;
            for i in 0..gae.rewards.len() {
                if gae.rewards[i] > 5.0 {
                    seen += 1;
                    if seen == 2 {
                        break;
                    }
                }
                if seen >= 1 && gae.episode_end[i] {
                    ends_before_second += 1;
                }
            }
            assert_eq!(ends_before_second, 0);
        }
    }

    #[test]
    fn metrics_from_canned_log() {
        let episodes = [
            EpisodeResult {
                success_time: Some(1.0),
                errors: 2,
            },
            EpisodeResult {
                success_time: Some(2.0),
                errors: 0,
            },
            EpisodeResult {
                success_time: None,
                errors: 5,
            },
        ];
        let m = EvalMetrics::from_episodes(&episodes);
        assert!((m.success_rate - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(m.avg_errors_per_success_episode, Some(1.0));
        assert_eq!(m.avg_time_per_success_episode, Some(1.5));
    }

    #[test]
    fn metrics_absent_when_no_success() {
        let episodes = [EpisodeResult {
            success_time: None,
            errors: 3,
        }];
        let m = EvalMetrics::from_episodes(&episodes);
        assert_eq!(m.success_rate, 0.0);
        assert_eq!(m.avg_errors_per_success_episode, None);
        assert_eq!(m.avg_time_per_success_episode, None);
    }

    #[test]
    fn evaluation_is_deterministic() {
        let (params, _, mask, arm, _, rc) = small_setup();
        let m1 = evaluate(&params, &mask, &arm, &rc, 0.005, 16, 10, 42).unwrap();
        let m2 = evaluate(&params, &mask, &arm, &rc, 0.005, 16, 10, 42).unwrap();
        assert_eq!(m1, m2);
        for _ in 0..3 {
            // metrics bounded and well-formed
            assert!(m1.success_rate >= 0.0 && m1.success_rate <= 1.0);
            if let Some(t) = m1.avg_time_per_success_episode {
                assert!(t <= rc.episode_limit);
            }
        }
    }

}
