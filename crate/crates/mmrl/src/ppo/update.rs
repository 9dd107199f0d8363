//! Clipped-surrogate PPO update with hand-derived gradients.
//!
//! The loss over a minibatch is
//! `mean(-min(r A, clip(r, 1-eps, 1+eps) A)) + value_coef * mean((V - R)^2)
//!  - entropy_coef * H`,
//! with `r` the probability ratio to the behavior policy, `A` the
//! standardized advantage, `R` the GAE return target, and `H` the
//! (state-independent) Gaussian entropy. Gradients flow through the policy
//! mean's tanh squash, the diagonal Gaussian log-density, and both MLPs.
//!
//! Minibatch gradients accumulate over fixed 64-row chunks that are summed
//! in chunk order, so the parallel and sequential paths are bitwise equal.

use crate::net::{adam_step, gaussian_entropy, AdamState, Grads, PolicyParams};
use crate::ppo::rollout::RolloutBatch;
use crate::ppo::PpoError;
use rand::seq::SliceRandom;
use rand_chacha::ChaCha8Rng;
#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Rows per gradient-accumulation chunk. Fixed so the chunk decomposition,
/// and therefore the summation order, never depends on thread count.
const GRAD_CHUNK: usize = 64;

#[derive(Debug, Clone, Copy)]
pub struct UpdateConfig {
    pub clip_eps: f64,
    pub value_coef: f64,
    pub entropy_coef: f64,
    pub grad_clip_norm: f64,
    pub epochs: usize,
    pub minibatch_size: usize,
}

/// Averages over every minibatch of one update call.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UpdateStats {
    pub policy_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
    pub clip_fraction: f64,
    pub grad_norm: f64,
    pub minibatches: usize,
}

/// Clipped surrogate objective for a single sample (the quantity PPO
/// maximizes, before negation into a loss).
pub fn clipped_surrogate(ratio: f64, advantage: f64, clip_eps: f64) -> f64 {
    let unclipped = ratio * advantage;
    let clipped = ratio.clamp(1.0 - clip_eps, 1.0 + clip_eps) * advantage;
    unclipped.min(clipped)
}

/// Standardizes advantages in place to zero mean and unit (population)
/// standard deviation. Degenerate batches (std below 1e-12) are only
/// centered.
pub fn standardize_advantages(advantages: &mut [f64]) {
    let n = advantages.len();
    if n == 0 {
        return;
    }
    let mean = advantages.iter().sum::<f64>() / n as f64;
    let var = advantages.iter().map(|a| (a - mean) * (a - mean)).sum::<f64>() / n as f64;
    let std = var.sqrt();
    if std > 1e-12 {
        for a in advantages.iter_mut() {
            *a = (*a - mean) / std;
        }
    } else {
        for a in advantages.iter_mut() {
            *a -= mean;
        }
    }
}

#[derive(Debug, Clone, Copy, Default)]
struct LossSums {
    policy: f64,
    value: f64,
    clipped: usize,
}

/// Scalar PPO loss over `rows` (forward only). This is the function the
/// finite-difference gradient checker probes; [`loss_and_grads`] must agree
/// with its derivative.
pub fn ppo_loss(
    params: &PolicyParams,
    batch: &RolloutBatch,
    rows: &[usize],
    advantages: &[f64],
    returns: &[f64],
    cfg: &UpdateConfig,
) -> f64 {
    let mut policy_sum = 0.0;
    let mut value_sum = 0.0;
    for &row in rows {
        let obs = batch.observation(row);
        let action = batch.action(row);
        let mean = params.policy_mean(obs);
        let log_prob = crate::net::gaussian_log_prob(&mean, &params.log_std, action);
        let ratio = (log_prob - batch.log_probs[row]).exp();
        policy_sum += -clipped_surrogate(ratio, advantages[row], cfg.clip_eps);
        let v = params.value(obs);
        let err = v - returns[row];
        value_sum += err * err;
    }
    let n = rows.len() as f64;
    policy_sum / n + cfg.value_coef * value_sum / n
        - cfg.entropy_coef * gaussian_entropy(&params.log_std)
}

fn chunk_loss_and_grads(
    params: &PolicyParams,
    batch: &RolloutBatch,
    rows: &[usize],
    advantages: &[f64],
    returns: &[f64],
    cfg: &UpdateConfig,
) -> (LossSums, Grads) {
    let mut grads = Grads::zeros_like(params);
    let mut sums = LossSums::default();
    let act_dim = params.action_dim();
    for &row in rows {
        let obs = batch.observation(row);
        let action = batch.action(row);
        let advantage = advantages[row];

        // Policy head.
        let cache = params.policy.forward_cached(obs);
        let mut mean = cache.output.clone();
        for m in mean.iter_mut() {
            *m = m.tanh();
        }
        let mut log_prob = 0.0;
        let mut z = vec![0.0; act_dim];
        for j in 0..act_dim {
            let std = params.log_std[j].exp();
            z[j] = (action[j] - mean[j]) / std;
            log_prob += -0.5 * z[j] * z[j] - params.log_std[j]
                - 0.5 * (2.0 * std::f64::consts::PI).ln();
        }
        let ratio = (log_prob - batch.log_probs[row]).exp();
        let unclipped = ratio * advantage;
        let clipped = ratio.clamp(1.0 - cfg.clip_eps, 1.0 + cfg.clip_eps) * advantage;
        sums.policy += -unclipped.min(clipped);
        if (ratio - 1.0).abs() > cfg.clip_eps {
            sums.clipped += 1;
        }
        // d(-surrogate)/dratio: the clipped branch is active exactly when it
        // is strictly smaller, and there the clamp is flat, so the gradient
        // vanishes.
        let d_ratio = if unclipped <= clipped { -advantage } else { 0.0 };
        if d_ratio != 0.0 {
            // dratio/dlogp = ratio; dlogp/dmean_j = z_j / std_j;
            // dmean/dout = 1 - mean^2 (tanh).
            let d_logp = d_ratio * ratio;
            let mut d_out = vec![0.0; act_dim];
            for j in 0..act_dim {
                let std = params.log_std[j].exp();
                d_out[j] = d_logp * (z[j] / std) * (1.0 - mean[j] * mean[j]);
                // dlogp/dlog_std_j = z_j^2 - 1.
                grads.log_std_mut()[j] += d_logp * (z[j] * z[j] - 1.0);
            }
            params
                .policy
                .backward(&cache, &d_out, grads.policy_blocks_mut(params));
        }
        // Entropy bonus: dH/dlog_std_j = 1 per sample.
        if cfg.entropy_coef != 0.0 {
            for j in 0..act_dim {
                grads.log_std_mut()[j] -= cfg.entropy_coef;
            }
        }

        // Value head.
        let vcache = params.value.forward_cached(obs);
        let err = vcache.output[0] - returns[row];
        sums.value += err * err;
        let d_v = [cfg.value_coef * 2.0 * err];
        params
            .value
            .backward(&vcache, &d_v, grads.value_blocks_mut(params));
    }
    (sums, grads)
}

fn reduce_pieces(
    params: &PolicyParams,
    pieces: Vec<(LossSums, Grads)>,
    rows: usize,
) -> (LossParts, Grads) {
    let mut grads = Grads::zeros_like(params);
    let mut sums = LossSums::default();
    for (piece_sums, piece_grads) in &pieces {
        sums.policy += piece_sums.policy;
        sums.value += piece_sums.value;
        sums.clipped += piece_sums.clipped;
        grads.add_assign(piece_grads);
    }
    let n = rows.max(1) as f64;
    grads.scale(1.0 / n);
    let entropy = gaussian_entropy(&params.log_std);
    (
        LossParts {
            policy_loss: sums.policy / n,
            value_loss: sums.value / n,
            entropy,
            clip_fraction: sums.clipped as f64 / n,
        },
        grads,
    )
}

/// Mean loss terms and their gradient over `rows`. Chunked accumulation in
/// fixed order; see the module docs. With the `parallel` feature the chunks
/// run on the rayon pool, otherwise this is [`loss_and_grads_sequential`].
pub fn loss_and_grads(
    params: &PolicyParams,
    batch: &RolloutBatch,
    rows: &[usize],
    advantages: &[f64],
    returns: &[f64],
    cfg: &UpdateConfig,
) -> (LossParts, Grads) {
    #[cfg(feature = "parallel")]
    {
        let pieces: Vec<(LossSums, Grads)> = rows
            .par_chunks(GRAD_CHUNK)
            .map(|chunk| chunk_loss_and_grads(params, batch, chunk, advantages, returns, cfg))
            .collect();
        reduce_pieces(params, pieces, rows.len())
    }
    #[cfg(not(feature = "parallel"))]
    loss_and_grads_sequential(params, batch, rows, advantages, returns, cfg)
}

/// Single-threaded gradient path with the identical chunk decomposition.
/// Reference implementation for the parallel path and the baseline in the
/// benchmark suite.
pub fn loss_and_grads_sequential(
    params: &PolicyParams,
    batch: &RolloutBatch,
    rows: &[usize],
    advantages: &[f64],
    returns: &[f64],
    cfg: &UpdateConfig,
) -> (LossParts, Grads) {
    let pieces: Vec<(LossSums, Grads)> = rows
        .chunks(GRAD_CHUNK)
        .map(|chunk| chunk_loss_and_grads(params, batch, chunk, advantages, returns, cfg))
        .collect();
    reduce_pieces(params, pieces, rows.len())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossParts {
    pub policy_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
    pub clip_fraction: f64,
}

/// Runs the full PPO update on one rollout batch: standardizes advantages,
/// then for each epoch shuffles row order and steps Adam per minibatch.
/// `log_std` is re-clamped after every step.
pub fn ppo_update(
    params: &mut PolicyParams,
    adam: &mut AdamState,
    batch: &RolloutBatch,
    advantages: &mut [f64],
    returns: &[f64],
    cfg: &UpdateConfig,
    shuffle_rng: &mut ChaCha8Rng,
) -> Result<UpdateStats, PpoError> {
    if cfg.minibatch_size == 0 || cfg.epochs == 0 {
        return Err(PpoError::Config(
            "epochs and minibatch_size must be positive",
        ));
    }
    standardize_advantages(advantages);
    let n = batch.total_steps();
    let mut order: Vec<usize> = (0..n).collect();
    let mut acc = UpdateStats {
        policy_loss: 0.0,
        value_loss: 0.0,
        entropy: 0.0,
        clip_fraction: 0.0,
        grad_norm: 0.0,
        minibatches: 0,
    };
    for _ in 0..cfg.epochs {
        order.shuffle(shuffle_rng);
        for mb in order.chunks(cfg.minibatch_size) {
            let (parts, mut grads) = loss_and_grads(params, batch, mb, advantages, returns, cfg);
            let norm = grads.clip_global_norm(cfg.grad_clip_norm);
            adam_step(params, &grads, adam)?;
            params.clamp_log_std();
            acc.policy_loss += parts.policy_loss;
            acc.value_loss += parts.value_loss;
            acc.entropy += parts.entropy;
            acc.clip_fraction += parts.clip_fraction;
            acc.grad_norm += norm;
            acc.minibatches += 1;
        }
    }
    let m = acc.minibatches.max(1) as f64;
    acc.policy_loss /= m;
    acc.value_loss /= m;
    acc.entropy /= m;
    acc.clip_fraction /= m;
    acc.grad_norm /= m;
    Ok(acc)
}
