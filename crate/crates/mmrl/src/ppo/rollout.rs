//! Experience collection across an environment pool.
//!
//! Each environment owns a persistent action-sampling RNG stream, so the
//! collected batch depends only on the seeds and configuration, never on
//! scheduling. The parallel path hands one worker per environment to rayon
//! and merges traces in pool order; [`collect_rollout_sequential`] runs the
//! identical per-environment code in a plain loop and produces bitwise
//! identical batches.

use crate::env::{EnvError, TaskEnv};
use crate::net::{gaussian_log_prob, sample_action, PolicyParams};
use crate::rng::{mix, salt, stream};
use rand_chacha::ChaCha8Rng;
#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// One pooled environment plus its private sampling stream and episode
/// accumulators.
pub struct EnvSlot {
    pub env: Box<dyn TaskEnv>,
    pub rng: ChaCha8Rng,
    last_obs: Vec<f64>,
    needs_reset: bool,
    episode_reward: f64,
    episode_distance: f64,
    episode_steps: u32,
}

impl EnvSlot {
    /// Wraps an environment; the sampling stream derives from
    /// `(run_seed, env_index)`.
    pub fn new(env: Box<dyn TaskEnv>, run_seed: u64, env_index: usize) -> Self {
        Self {
            env,
            rng: stream(mix(run_seed, env_index as u64), salt::ACTION),
            last_obs: Vec::new(),
            needs_reset: true,
            episode_reward: 0.0,
            episode_distance: 0.0,
            episode_steps: 0,
        }
    }

    /// Discards any in-progress episode so the next collection starts fresh.
    /// Used when a trainer resumes from a checkpoint.
    pub fn force_reset(&mut self) {
        self.needs_reset = true;
        self.last_obs.clear();
        self.episode_reward = 0.0;
        self.episode_distance = 0.0;
        self.episode_steps = 0;
    }
}

/// Flat experience batch in environment-major layout: the record for
/// environment `e` at step `t` lives at row `e * steps_per_env + t`.
#[derive(Debug, Clone, PartialEq)]
pub struct RolloutBatch {
    pub n_envs: usize,
    pub steps_per_env: usize,
    pub obs_dim: usize,
    pub act_dim: usize,
    pub observations: Vec<f64>,
    pub actions: Vec<f64>,
    pub log_probs: Vec<f64>,
    pub values: Vec<f64>,
    pub rewards: Vec<f64>,
    pub dones: Vec<bool>,
    /// Task identifier per row (constant within an environment).
    pub task_ids: Vec<usize>,
    /// Critic estimate of the post-rollout state, one per environment.
    pub bootstrap_values: Vec<f64>,
    /// Returns of episodes that finished inside this rollout.
    pub episode_returns: Vec<f64>,
    /// Mean per-step gripper-object distance of those episodes.
    pub episode_distances: Vec<f64>,
    /// Grasp successes among those episodes.
    pub grasp_successes: usize,
    /// Mean distance over every step in the batch.
    pub mean_distance: f64,
}

impl RolloutBatch {
    pub fn total_steps(&self) -> usize {
        self.n_envs * self.steps_per_env
    }

    pub fn observation(&self, row: usize) -> &[f64] {
        &self.observations[row * self.obs_dim..(row + 1) * self.obs_dim]
    }

    pub fn action(&self, row: usize) -> &[f64] {
        &self.actions[row * self.act_dim..(row + 1) * self.act_dim]
    }

    /// Row range belonging to environment `e`.
    pub fn env_rows(&self, e: usize) -> std::ops::Range<usize> {
        e * self.steps_per_env..(e + 1) * self.steps_per_env
    }
}

struct EnvTrace {
    observations: Vec<f64>,
    actions: Vec<f64>,
    log_probs: Vec<f64>,
    values: Vec<f64>,
    rewards: Vec<f64>,
    dones: Vec<bool>,
    task_id: usize,
    bootstrap_value: f64,
    episode_returns: Vec<f64>,
    episode_distances: Vec<f64>,
    grasp_successes: usize,
    distance_sum: f64,
}

/// Steps one environment for `steps` transitions under the current policy,
/// resetting whenever an episode ends.
fn collect_env(
    params: &PolicyParams,
    slot: &mut EnvSlot,
    steps: usize,
) -> Result<EnvTrace, EnvError> {
    let obs_dim = slot.env.obs_dim();
    let act_dim = slot.env.action_dim();
    let mut trace = EnvTrace {
        observations: Vec::with_capacity(steps * obs_dim),
        actions: Vec::with_capacity(steps * act_dim),
        log_probs: Vec::with_capacity(steps),
        values: Vec::with_capacity(steps),
        rewards: Vec::with_capacity(steps),
        dones: Vec::with_capacity(steps),
        task_id: slot.env.task_id(),
        bootstrap_value: 0.0,
        episode_returns: Vec::new(),
        episode_distances: Vec::new(),
        grasp_successes: 0,
        distance_sum: 0.0,
    };
    for _ in 0..steps {
        if slot.needs_reset {
            slot.last_obs = slot.env.reset()?;
            slot.needs_reset = false;
            slot.episode_reward = 0.0;
            slot.episode_distance = 0.0;
            slot.episode_steps = 0;
        }
        let mean = params.policy_mean(&slot.last_obs);
        let value = params.value(&slot.last_obs);
        let action = sample_action(&mean, &params.log_std, &mut slot.rng);
        let log_prob = gaussian_log_prob(&mean, &params.log_std, &action);
        let result = slot.env.step(&action)?;
        trace.observations.extend_from_slice(&slot.last_obs);
        trace.actions.extend_from_slice(&action);
        trace.log_probs.push(log_prob);
        trace.values.push(value);
        trace.rewards.push(result.reward);
        trace.dones.push(result.done);
        trace.distance_sum += result.info.distance;
        slot.episode_reward += result.reward;
        slot.episode_distance += result.info.distance;
        slot.episode_steps += 1;
        if result.info.grasp_success {
            trace.grasp_successes += 1;
        }
        if result.done {
            trace.episode_returns.push(slot.episode_reward);
            trace
                .episode_distances
                .push(slot.episode_distance / slot.episode_steps.max(1) as f64);
            slot.needs_reset = true;
        }
        slot.last_obs = result.observation;
    }
    trace.bootstrap_value = params.value(&slot.last_obs);
    Ok(trace)
}

fn merge_traces(traces: Vec<EnvTrace>, steps: usize) -> RolloutBatch {
    let n_envs = traces.len();
    let obs_dim = traces.first().map_or(0, |t| t.observations.len() / steps);
    let act_dim = traces.first().map_or(0, |t| t.actions.len() / steps);
    let mut batch = RolloutBatch {
        n_envs,
        steps_per_env: steps,
        obs_dim,
        act_dim,
        observations: Vec::with_capacity(n_envs * steps * obs_dim),
        actions: Vec::with_capacity(n_envs * steps * act_dim),
        log_probs: Vec::with_capacity(n_envs * steps),
        values: Vec::with_capacity(n_envs * steps),
        rewards: Vec::with_capacity(n_envs * steps),
        dones: Vec::with_capacity(n_envs * steps),
        task_ids: Vec::with_capacity(n_envs * steps),
        bootstrap_values: Vec::with_capacity(n_envs),
        episode_returns: Vec::new(),
        episode_distances: Vec::new(),
        grasp_successes: 0,
        mean_distance: 0.0,
    };
    let mut distance_sum = 0.0;
    for trace in traces {
        batch.observations.extend_from_slice(&trace.observations);
        batch.actions.extend_from_slice(&trace.actions);
        batch.log_probs.extend_from_slice(&trace.log_probs);
        batch.values.extend_from_slice(&trace.values);
        batch.rewards.extend_from_slice(&trace.rewards);
        batch.dones.extend_from_slice(&trace.dones);
        batch.task_ids.extend(std::iter::repeat_n(trace.task_id, steps));
        batch.bootstrap_values.push(trace.bootstrap_value);
        batch.episode_returns.extend_from_slice(&trace.episode_returns);
        batch
            .episode_distances
            .extend_from_slice(&trace.episode_distances);
        batch.grasp_successes += trace.grasp_successes;
        distance_sum += trace.distance_sum;
    }
    batch.mean_distance = distance_sum / (n_envs * steps).max(1) as f64;
    batch
}

/// Collects `steps` transitions from every slot. With the `parallel` feature
/// (default) environments run on the rayon pool; traces merge in slot order
/// either way, so the result is bitwise independent of thread count.
pub fn collect_rollout(
    params: &PolicyParams,
    slots: &mut [EnvSlot],
    steps: usize,
) -> Result<RolloutBatch, EnvError> {
    #[cfg(feature = "parallel")]
    let traces: Result<Vec<EnvTrace>, EnvError> = slots
        .par_iter_mut()
        .map(|slot| collect_env(params, slot, steps))
        .collect();
    #[cfg(not(feature = "parallel"))]
    let traces: Result<Vec<EnvTrace>, EnvError> = slots
        .iter_mut()
        .map(|slot| collect_env(params, slot, steps))
        .collect();
    Ok(merge_traces(traces?, steps))
}

/// Single-threaded collection, always available. Reference implementation
/// for the parallel path and the baseline in the benchmark suite.
pub fn collect_rollout_sequential(
    params: &PolicyParams,
    slots: &mut [EnvSlot],
    steps: usize,
) -> Result<RolloutBatch, EnvError> {
    let traces: Result<Vec<EnvTrace>, EnvError> = slots
        .iter_mut()
        .map(|slot| collect_env(params, slot, steps))
        .collect();
    Ok(merge_traces(traces?, steps))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{Env, EnvConfig, PointMassEnv, POINT_MASS_OBS_DIM};
    use crate::traj::TrajectoryFamily;

    fn point_mass_slots(run_seed: u64, n: usize) -> Vec<EnvSlot> {
        (0..n)
            .map(|i| {
                let family = TrajectoryFamily::BASIC[i % TrajectoryFamily::BASIC.len()];
                let env = PointMassEnv::new(family, mix(run_seed, i as u64));
                EnvSlot::new(Box::new(env), run_seed, i)
            })
            .collect()
    }

    #[test]
    fn batch_layout_and_bookkeeping() {
        let params = PolicyParams::init(POINT_MASS_OBS_DIM, 3, &[16], 1);
        let mut slots = point_mass_slots(5, 3);
        let batch = collect_rollout(&params, &mut slots, 50).unwrap();
        assert_eq!(batch.total_steps(), 150);
        assert_eq!(batch.observations.len(), 150 * POINT_MASS_OBS_DIM);
        assert_eq!(batch.actions.len(), 150 * 3);
        assert_eq!(batch.bootstrap_values.len(), 3);
        assert_eq!(batch.env_rows(1), 50..100);
        // Point-mass episodes are 200 steps; no episode finishes in 50.
        assert!(batch.episode_returns.is_empty());
        assert!(batch.dones.iter().all(|d| !d));
        // Rows carry their environment's task id.
        assert_eq!(batch.task_ids[0], 0);
        assert_eq!(batch.task_ids[50], 1);
    }

    #[test]
    fn episodes_roll_over_and_report_returns() {
        let params = PolicyParams::init(POINT_MASS_OBS_DIM, 3, &[8], 2);
        let mut slots = point_mass_slots(9, 2);
        let batch = collect_rollout(&params, &mut slots, 450).unwrap();
        // 450 steps cover two full 200-step episodes per environment.
        assert_eq!(batch.episode_returns.len(), 4);
        assert_eq!(batch.dones.iter().filter(|d| **d).count(), 4);
        assert!(batch.mean_distance > 0.0);
    }

    #[test]
    fn parallel_and_sequential_collect_identically() {
        let params = PolicyParams::init(POINT_MASS_OBS_DIM, 3, &[16], 3);
        let mut a = point_mass_slots(11, 4);
        let mut b = point_mass_slots(11, 4);
        let ba = collect_rollout(&params, &mut a, 120).unwrap();
        let bb = collect_rollout_sequential(&params, &mut b, 120).unwrap();
        assert_eq!(ba, bb);
        // And the pools stay in lockstep for the next rollout.
        let ba2 = collect_rollout(&params, &mut a, 120).unwrap();
        let bb2 = collect_rollout_sequential(&params, &mut b, 120).unwrap();
        assert_eq!(ba2, bb2);
    }

    #[test]
    fn collection_is_reproducible_for_manipulator_envs() {
        let params = PolicyParams::init(23, 4, &[32], 4);
        let build = |run: u64| -> Vec<EnvSlot> {
            (0..2)
                .map(|i| {
                    let env = Env::new(
                        EnvConfig::default(),
                        TrajectoryFamily::Circle,
                        mix(run, i as u64),
                    )
                    .unwrap();
                    EnvSlot::new(Box::new(env), run, i)
                })
                .collect()
        };
        let mut a = build(21);
        let mut b = build(21);
        let ba = collect_rollout(&params, &mut a, 64).unwrap();
        let bb = collect_rollout(&params, &mut b, 64).unwrap();
        assert_eq!(ba, bb);
    }
}
