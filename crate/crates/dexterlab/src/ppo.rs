//! PPO with a Gaussian policy over the 11 muscle channels.
//!
//! Separate tanh MLPs for policy mean and value, a state-independent
//! log-std vector, GAE, and the clipped surrogate objective. Log
//! probabilities, entropy and ratios run over the mask-enabled channels
//! only, so masked channels never influence the learning signal.

use crate::arm::N_MUSCLES;
use crate::nn::{clip_global_norm, AdamState, Mlp};
use ndarray::{Array1, Array2, ArrayView1, NdFloat};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const LN_2PI: f64 = 1.8378770664093453;

#[derive(Debug, Error)]
pub enum PpoError {
    #[error("non-finite {what} in PPO update at optimizer step {step}: {value}")]
    NonFinite {
        what: &'static str,
        step: u64,
        value: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PpoConfig {
    /// Width of the two equal hidden layers (128 / 256 / 512 in the ablations).
    pub hidden: usize,
    pub lr0: f64,
    pub clip0: f64,
    pub gamma: f64,
    pub gae_lambda: f64,
    pub epochs_per_update: usize,
    pub minibatch_size: usize,
    pub entropy_coef: f64,
    pub value_coef: f64,
    pub max_grad_norm: f64,
    pub init_log_std: f64,
}

impl Default for PpoConfig {
    fn default() -> Self {
        PpoConfig {
            hidden: 256,
            lr0: 6e-4,
            clip0: 0.2,
            gamma: 0.99,
            gae_lambda: 0.95,
            epochs_per_update: 10,
            minibatch_size: 256,
            entropy_coef: 0.001,
            value_coef: 0.5,
            max_grad_norm: 0.5,
            init_log_std: (0.3f64).ln(),
        }
    }
}

/// Policy mean MLP, state-independent log-std row, and value MLP.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyParams<F> {
    pub policy: Mlp<F>,
    pub log_std: Array2<F>,
    pub value: Mlp<F>,
}

impl<F: NdFloat> PolicyParams<F> {
    pub fn init<R: Rng>(obs_dim: usize, hidden: usize, init_log_std: f64, rng: &mut R) -> Self {
        let policy = Mlp::init(&[obs_dim, hidden, hidden, N_MUSCLES], 0.01, rng);
        let value = Mlp::init(&[obs_dim, hidden, hidden, 1], 1.0, rng);
        PolicyParams {
            policy,
            log_std: Array2::from_elem((1, N_MUSCLES), F::from(init_log_std).unwrap()),
            value,
        }
    }

    pub fn zeros_like(&self) -> Self {
        PolicyParams {
            policy: self.policy.zeros_like(),
            log_std: Array2::zeros(self.log_std.raw_dim()),
            value: self.value.zeros_like(),
        }
    }

    /// Fixed tensor ordering shared by Adam and the checkpoint format:
    /// policy layers (w, b each), log_std, value layers (w, b each).
    pub fn tensors(&self) -> Vec<&Array2<F>> {
        let mut t = self.policy.tensors();
        t.push(&self.log_std);
        t.extend(self.value.tensors());
        t
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Array2<F>> {
        let mut t = self.policy.tensors_mut();
        t.push(&mut self.log_std);
        t.extend(self.value.tensors_mut());
        t
    }

    pub fn all_finite(&self) -> bool {
        self.tensors()
            .iter()
            .all(|t| t.iter().all(|v| v.is_finite()))
    }

    pub fn obs_dim(&self) -> usize {
        self.policy.in_dim()
    }
}

/// Gaussian log-density of `raw` under (mean, log_std), summed over the
/// enabled channels only.
pub fn log_prob_row<F: NdFloat>(
    mean: ArrayView1<F>,
    log_std: ArrayView1<F>,
    raw: ArrayView1<F>,
    enabled: &[bool; N_MUSCLES],
) -> F {
    let half = F::from(0.5).unwrap();
    let ln2pi = F::from(LN_2PI).unwrap();
    let mut lp = F::zero();
    for j in 0..N_MUSCLES {
        if !enabled[j] {
            continue;
        }
        let std = log_std[j].exp();
        let z = (raw[j] - mean[j]) / std;
        lp = lp - half * z * z - log_std[j] - half * ln2pi;
    }
    lp
}

/// Policy entropy (per sample; it only depends on log_std) over enabled
/// channels: sum of 0.5 * ln(2*pi*e*sigma^2).
pub fn entropy<F: NdFloat>(log_std: ArrayView1<F>, enabled: &[bool; N_MUSCLES]) -> F {
    let half = F::from(0.5).unwrap();
    let c = F::from(1.0 + LN_2PI).unwrap();
    let mut e = F::zero();
    for j in 0..N_MUSCLES {
        if enabled[j] {
            e = e + log_std[j] + half * c;
        }
    }
    e
}

/// Draws a raw Gaussian action, its clamped environment command, and the
/// log-probability of the raw sample over enabled channels. All 11 channels
/// consume RNG draws regardless of the mask, so RNG streams do not depend
/// on the mask configuration.
pub fn sample_action<F: NdFloat, R: Rng>(
    mean: ArrayView1<F>,
    log_std: ArrayView1<F>,
    enabled: &[bool; N_MUSCLES],
    rng: &mut R,
) -> (Array1<F>, [f64; N_MUSCLES], F) {
    let mut raw = Array1::zeros(N_MUSCLES);
    for j in 0..N_MUSCLES {
        let n: f64 = StandardNormal.sample(rng);
        raw[j] = mean[j] + log_std[j].exp() * F::from(n).unwrap();
    }
    let env_action =
        std::array::from_fn(|j| raw[j].to_f64().unwrap().clamp(0.0, 1.0));
    let lp = log_prob_row(mean.view(), log_std, raw.view(), enabled);
    (raw, env_action, lp)
}

/// Deterministic evaluation action: the clamped policy mean.
pub fn deterministic_action<F: NdFloat>(mean: ArrayView1<F>) -> [f64; N_MUSCLES] {
    std::array::from_fn(|j| mean[j].to_f64().unwrap().clamp(0.0, 1.0))
}

/// Per-step GAE inputs for one contiguous fragment-ordered batch.
///
/// `episode_end[t]` cuts the advantage recursion after step t;
/// `next_value[t]` is the value used in the TD error at t: V(s_{t+1}) for a
/// continuing step or a horizon cut, the bootstrap value on a Timeout end,
/// and 0 on a true terminal (Success or OutOfBounds).
#[derive(Debug, Clone, Default)]
pub struct GaeInputs {
    pub rewards: Vec<f64>,
    pub values: Vec<f64>,
    pub episode_end: Vec<bool>,
    pub next_value: Vec<f64>,
}

/// Recursive GAE over a fragment-ordered batch; returns (advantages, returns).
pub fn compute_gae(inputs: &GaeInputs, gamma: f64, lambda: f64) -> (Vec<f64>, Vec<f64>) {
    let n = inputs.rewards.len();
    let mut advantages = vec![0.0; n];
    let mut returns = vec![0.0; n];
    let mut acc = 0.0;
    for t in (0..n).rev() {
        if inputs.episode_end[t] {
            acc = 0.0;
        }
        let delta = inputs.rewards[t] + gamma * inputs.next_value[t] - inputs.values[t];
        acc = delta + gamma * lambda * acc;
        advantages[t] = acc;
        returns[t] = acc + inputs.values[t];
    }
    (advantages, returns)
}

/// One minibatch of training data (rows aligned across all arrays).
pub struct Minibatch<'a, F> {
    pub obs: ndarray::ArrayView2<'a, F>,
    pub actions_raw: ndarray::ArrayView2<'a, F>,
    pub old_logp: &'a [F],
    pub advantages: &'a [F],
    pub returns: &'a [F],
}

#[derive(Debug, Clone, Copy, Default)]
pub struct LossStats {
    pub total: f64,
    pub policy_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
    pub clip_fraction: f64,
    pub approx_kl: f64,
}

/// Clipped-surrogate PPO loss and its parameter gradients.
pub fn loss_and_grads<F: NdFloat>(
    params: &PolicyParams<F>,
    mb: &Minibatch<F>,
    enabled: &[bool; N_MUSCLES],
    clip: f64,
    value_coef: f64,
    entropy_coef: f64,
) -> (LossStats, PolicyParams<F>) {
    let b = mb.obs.nrows();
    assert!(b > 0);
    let inv_b = F::from(1.0 / b as f64).unwrap();
    let clip_f = F::from(clip).unwrap();
    let one = F::one();

    let (mean, pol_cache) = params.policy.forward(&mb.obs.to_owned());
    let (values, val_cache) = params.value.forward(&mb.obs.to_owned());
    let log_std = params.log_std.row(0);

    let mut grads = params.zeros_like();
    let mut d_mean: Array2<F> = Array2::zeros(mean.raw_dim());
    let mut d_value: Array2<F> = Array2::zeros(values.raw_dim());

    let mut policy_loss = F::zero();
    let mut value_loss = F::zero();
    let mut n_clipped = 0usize;
    let mut kl_acc = 0.0f64;

    for i in 0..b {
        let mean_i = mean.row(i);
        let raw_i = mb.actions_raw.row(i);
        let logp = log_prob_row(mean_i, log_std, raw_i, enabled);
        let adv = mb.advantages[i];
        let ratio = (logp - mb.old_logp[i]).exp();
        let clamped = ratio.max(one - clip_f).min(one + clip_f);
        let s1 = ratio * adv;
        let s2 = clamped * adv;
        let surr = s1.min(s2);
        policy_loss = policy_loss - surr * inv_b;

        let r = ratio.to_f64().unwrap();
        if (r - 1.0).abs() > clip {
            n_clipped += 1;
        }
        kl_acc += (r - 1.0) - r.ln();

        // dL/d ratio: the min picks the unclipped branch unless the clipped
        // surrogate is strictly smaller, in which case the gradient is zero
        // (the clamp is flat wherever the branches differ).
        if s1 <= s2 {
            let d_logp = -adv * inv_b * ratio; // chain through ratio = exp(...)
            for j in 0..N_MUSCLES {
                if !enabled[j] {
                    continue;
                }
                let std = log_std[j].exp();
                let z = (raw_i[j] - mean_i[j]) / std;
                // d logp / d mean_j = z / std ; d logp / d log_std_j = z^2 - 1
                d_mean[[i, j]] = d_mean[[i, j]] + d_logp * z / std;
                grads.log_std[[0, j]] = grads.log_std[[0, j]] + d_logp * (z * z - one);
            }
        }

        let v = values[[i, 0]];
        let err = v - mb.returns[i];
        value_loss = value_loss + err * err * inv_b;
        d_value[[i, 0]] = F::from(value_coef).unwrap()
            * F::from(2.0).unwrap()
            * err
            * inv_b;
    }

    let ent = entropy(log_std, enabled);
    // entropy bonus: d(-ec * ent)/d log_std_j = -ec per enabled channel
    let ec = F::from(entropy_coef).unwrap();
    for j in 0..N_MUSCLES {
        if enabled[j] {
            grads.log_std[[0, j]] = grads.log_std[[0, j]] - ec;
        }
    }

    params.policy.backward(&pol_cache, &d_mean, &mut grads.policy);
    params.value.backward(&val_cache, &d_value, &mut grads.value);

    let vc = F::from(value_coef).unwrap();
    let total = policy_loss + vc * value_loss - ec * ent;
    let stats = LossStats {
        total: total.to_f64().unwrap(),
        policy_loss: policy_loss.to_f64().unwrap(),
        value_loss: value_loss.to_f64().unwrap(),
        entropy: ent.to_f64().unwrap(),
        clip_fraction: n_clipped as f64 / b as f64,
        approx_kl: kl_acc / b as f64,
    };
    (stats, grads)
}

/// Full training batch after GAE (all rows fragment-ordered).
pub struct TrainBatch<F> {
    pub obs: Array2<F>,
    pub actions_raw: Array2<F>,
    pub old_logp: Vec<F>,
    pub advantages: Vec<F>,
    pub returns: Vec<F>,
}

#[derive(Debug, Clone, Copy, Default, Serialize)]
pub struct UpdateStats {
    pub policy_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
    pub clip_fraction: f64,
    pub approx_kl: f64,
    pub grad_norm: f64,
}

/// Normalizes advantages in place to mean 0, std 1 (std floor 1e-8).
pub fn normalize_advantages(adv: &mut [f64]) {
    let n = adv.len() as f64;
    let mean = adv.iter().sum::<f64>() / n;
    let var = adv.iter().map(|a| (a - mean) * (a - mean)).sum::<f64>() / n;
    let std = var.sqrt().max(1e-8);
    for a in adv.iter_mut() {
        *a = (*a - mean) / std;
    }
}

/// Runs `epochs` of shuffled minibatch updates over the batch. Minibatches
/// are processed sequentially in shuffle order so results are reproducible.
#[allow(clippy::too_many_arguments)]
pub fn ppo_update<F: NdFloat, R: Rng>(
    params: &mut PolicyParams<F>,
    adam: &mut AdamState<F>,
    batch: &TrainBatch<F>,
    config: &PpoConfig,
    enabled: &[bool; N_MUSCLES],
    lr: f64,
    clip: f64,
    rng: &mut R,
) -> Result<UpdateStats, PpoError> {
    let n = batch.obs.nrows();
    let mut indices: Vec<usize> = (0..n).collect();
    let mut agg = UpdateStats::default();
    let mut n_batches = 0usize;

    for _ in 0..config.epochs_per_update {
        // Fisher-Yates with the run RNG
        for i in (1..n).rev() {
            let j = rng.random_range(0..=i);
            indices.swap(i, j);
        }
        for chunk in indices.chunks(config.minibatch_size) {
            let obs = gather_rows(&batch.obs, chunk);
            let actions = gather_rows(&batch.actions_raw, chunk);
            let old_logp: Vec<F> = chunk.iter().map(|&i| batch.old_logp[i]).collect();
            let advantages: Vec<F> = chunk.iter().map(|&i| batch.advantages[i]).collect();
            let returns: Vec<F> = chunk.iter().map(|&i| batch.returns[i]).collect();
            let mb = Minibatch {
                obs: obs.view(),
                actions_raw: actions.view(),
                old_logp: &old_logp,
                advantages: &advantages,
                returns: &returns,
            };
            let (stats, mut grads) = loss_and_grads(
                params,
                &mb,
                enabled,
                clip,
                config.value_coef,
                config.entropy_coef,
            );
            if !stats.total.is_finite() {
                return Err(PpoError::NonFinite {
                    what: "loss",
                    step: adam.step,
                    value: stats.total,
                });
            }
            let mut gt = grads.tensors_mut();
            let norm = clip_global_norm(&mut gt, config.max_grad_norm);
            if !norm.is_finite() {
                return Err(PpoError::NonFinite {
                    what: "gradient norm",
                    step: adam.step,
                    value: norm,
                });
            }
            let grads_ref = grads.tensors();
            adam.update(&mut params.tensors_mut(), &grads_ref, lr);

            agg.policy_loss += stats.policy_loss;
            agg.value_loss += stats.value_loss;
            agg.entropy += stats.entropy;
            agg.clip_fraction += stats.clip_fraction;
            agg.approx_kl += stats.approx_kl;
            agg.grad_norm += norm;
            n_batches += 1;
        }
    }
    if !params.all_finite() {
        return Err(PpoError::NonFinite {
            what: "parameters",
            step: adam.step,
            value: f64::NAN,
        });
    }
    let k = n_batches.max(1) as f64;
    agg.policy_loss /= k;
    agg.value_loss /= k;
    agg.entropy /= k;
    agg.clip_fraction /= k;
    agg.approx_kl /= k;
    agg.grad_norm /= k;
    Ok(agg)
}

fn gather_rows<F: NdFloat>(src: &Array2<F>, rows: &[usize]) -> Array2<F> {
    let mut out = Array2::zeros((rows.len(), src.ncols()));
    for (k, &i) in rows.iter().enumerate() {
        out.row_mut(k).assign(&src.row(i));
    }
    out
}
