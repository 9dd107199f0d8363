//! Deterministic policy evaluation and episode replay capture.
//!
//! Evaluation rolls out the policy mean (no action sampling) over a fixed
//! grid of episode seeds, so two evaluations of the same parameters agree
//! bitwise, with or without the `parallel` feature. Steady-state tracking
//! error averages the gripper-target distance from a configured step
//! onward, skipping the initial approach transient.
//!
//! A [`Replay`] records one episode's pre-noise actions together with the
//! resulting states. Feeding those actions back through a fresh environment
//! reset to the same episode seed reproduces the episode exactly, which is
//! what [`Replay::verify`] checks.

use crate::config::EvalSettings;
use crate::env::{Env, EnvConfig, EnvError, TaskEnv};
use crate::net::PolicyParams;
use crate::rng::{mix, salt};
use crate::traj::TrajectoryFamily;
#[cfg(feature = "parallel")]
use rayon::prelude::*;
use std::fmt::Write as _;
use thiserror::Error;

/// Aggregate metrics for one trajectory family.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FamilyEval {
    pub family: TrajectoryFamily,
    pub episodes: usize,
    /// Mean gripper-target distance over steps at or past `steady_start`
    /// (zero-based), meters.
    pub steady_error: f64,
    /// Mean distance over all steps, meters.
    pub overall_error: f64,
    /// Fraction of episodes that ended in a successful grasp.
    pub grasp_rate: f64,
    pub mean_return: f64,
}

#[derive(Debug, Clone, Copy, Default)]
struct EpisodeOutcome {
    steady_sum: f64,
    steady_count: usize,
    total_sum: f64,
    total_count: usize,
    reward: f64,
    grasped: bool,
}

fn run_episode<F>(
    policy: &F,
    cfg: &EnvConfig,
    family: TrajectoryFamily,
    episode_seed: u64,
    steady_start: usize,
) -> Result<EpisodeOutcome, EnvError>
where
    F: Fn(&[f64]) -> Vec<f64> + Sync,
{
    let mut env = Env::new(cfg.clone(), family, 0)?;
    let mut obs = env.reset_to(episode_seed)?;
    let mut out = EpisodeOutcome::default();
    for step in 0.. {
        let action = policy(&obs);
        let result = env.step(&action)?;
        out.total_sum += result.info.distance;
        out.total_count += 1;
        if step >= steady_start {
            out.steady_sum += result.info.distance;
            out.steady_count += 1;
        }
        out.reward += result.reward;
        out.grasped |= result.info.grasp_success;
        obs = result.observation;
        if result.done {
            break;
        }
    }
    Ok(out)
}

/// Evaluates an arbitrary deterministic policy over every family in
/// `families`. Episode `e` of family index `f` runs under seed
/// `mix(mix(eval_seed, f), mix(e, salt::EVAL))`.
pub fn evaluate_with_policy<F>(
    policy: &F,
    env_cfg: &EnvConfig,
    families: &[TrajectoryFamily],
    settings: &EvalSettings,
    eval_seed: u64,
) -> Result<Vec<FamilyEval>, EnvError>
where
    F: Fn(&[f64]) -> Vec<f64> + Sync,
{
    let mut cfg = env_cfg.clone();
    if settings.widen_factor > 0.0 {
        cfg.randomization = cfg.randomization.widened(1.0 + settings.widen_factor);
    }
    let mut rows = Vec::with_capacity(families.len());
    for (f, &family) in families.iter().enumerate() {
        let episode_seed =
            |e: usize| mix(mix(eval_seed, f as u64), mix(e as u64, salt::EVAL));
        #[cfg(feature = "parallel")]
        let outcomes: Result<Vec<EpisodeOutcome>, EnvError> = (0..settings.episodes_per_family)
            .into_par_iter()
            .map(|e| run_episode(policy, &cfg, family, episode_seed(e), settings.steady_start))
            .collect();
        #[cfg(not(feature = "parallel"))]
        let outcomes: Result<Vec<EpisodeOutcome>, EnvError> = (0..settings.episodes_per_family)
            .map(|e| run_episode(policy, &cfg, family, episode_seed(e), settings.steady_start))
            .collect();
        let outcomes = outcomes?;
        let n = outcomes.len();
        let steady_sum: f64 = outcomes.iter().map(|o| o.steady_sum).sum();
        let steady_count: usize = outcomes.iter().map(|o| o.steady_count).sum();
        let total_sum: f64 = outcomes.iter().map(|o| o.total_sum).sum();
        let total_count: usize = outcomes.iter().map(|o| o.total_count).sum();
        rows.push(FamilyEval {
            family,
            episodes: n,
            steady_error: steady_sum / steady_count.max(1) as f64,
            overall_error: total_sum / total_count.max(1) as f64,
            grasp_rate: outcomes.iter().filter(|o| o.grasped).count() as f64 / n.max(1) as f64,
            mean_return: outcomes.iter().map(|o| o.reward).sum::<f64>() / n.max(1) as f64,
        });
    }
    Ok(rows)
}

/// Evaluates trained parameters with the policy mean as the action.
pub fn evaluate(
    params: &PolicyParams,
    env_cfg: &EnvConfig,
    families: &[TrajectoryFamily],
    settings: &EvalSettings,
    eval_seed: u64,
) -> Result<Vec<FamilyEval>, EnvError> {
    let policy = |obs: &[f64]| params.policy_mean(obs);
    evaluate_with_policy(&policy, env_cfg, families, settings, eval_seed)
}

#[derive(Debug, Error)]
pub enum ReplayError {
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error("malformed replay: {0}")]
    Parse(String),
    #[error("replay diverged at step {step}, field {field}: stored {stored}, resimulated {resimulated}")]
    Diverged {
        step: usize,
        field: &'static str,
        stored: f64,
        resimulated: f64,
    },
}

/// One recorded step: the action handed to the environment (before actuator
/// noise) and the resulting poses.
#[derive(Debug, Clone, PartialEq)]
pub struct ReplayRow {
    pub step: usize,
    pub action: Vec<f64>,
    pub gripper: [f64; 3],
    pub target: [f64; 3],
    pub distance: f64,
    pub reward: f64,
}

/// A fully re-simulatable episode record.
#[derive(Debug, Clone, PartialEq)]
pub struct Replay {
    pub family: TrajectoryFamily,
    pub episode_seed: u64,
    pub action_dim: usize,
    pub rows: Vec<ReplayRow>,
    pub episode_return: f64,
    pub grasped: bool,
}

/// Rolls out one episode under the policy mean and records it.
pub fn record_episode(
    params: &PolicyParams,
    env_cfg: &EnvConfig,
    family: TrajectoryFamily,
    episode_seed: u64,
) -> Result<Replay, EnvError> {
    let mut env = Env::new(env_cfg.clone(), family, 0)?;
    let mut obs = env.reset_to(episode_seed)?;
    let mut replay = Replay {
        family,
        episode_seed,
        action_dim: env.action_dim(),
        rows: Vec::with_capacity(env_cfg.episode_len as usize),
        episode_return: 0.0,
        grasped: false,
    };
    for step in 0.. {
        let action = params.policy_mean(&obs);
        let result = env.step(&action)?;
        replay.rows.push(ReplayRow {
            step,
            action,
            gripper: env.state().gripper_pos,
            target: env.state().object_pos,
            distance: result.info.distance,
            reward: result.reward,
        });
        replay.episode_return += result.reward;
        replay.grasped |= result.info.grasp_success;
        obs = result.observation;
        if result.done {
            break;
        }
    }
    Ok(replay)
}

impl Replay {
    /// CSV dump: `#` metadata lines, a header row, one row per step. Floats
    /// print in shortest round-trip form, so parsing back is lossless.
    pub fn to_csv(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "# family = {}", self.family.name());
        let _ = writeln!(s, "# episode_seed = {}", self.episode_seed);
        let _ = writeln!(s, "# episode_return = {}", self.episode_return);
        let _ = writeln!(s, "# grasped = {}", self.grasped);
        let actions: Vec<String> = (0..self.action_dim).map(|i| format!("action_{i}")).collect();
        let _ = writeln!(
            s,
            "step,{},gripper_x,gripper_y,gripper_z,target_x,target_y,target_z,distance,reward",
            actions.join(",")
        );
        for row in &self.rows {
            let mut fields = vec![row.step.to_string()];
            fields.extend(row.action.iter().map(ToString::to_string));
            fields.extend(row.gripper.iter().map(ToString::to_string));
            fields.extend(row.target.iter().map(ToString::to_string));
            fields.push(row.distance.to_string());
            fields.push(row.reward.to_string());
            let _ = writeln!(s, "{}", fields.join(","));
        }
        s
    }

    /// Parses a dump produced by [`Replay::to_csv`].
    pub fn from_csv(text: &str) -> Result<Self, ReplayError> {
        let mut family = None;
        let mut episode_seed = None;
        let mut episode_return = 0.0;
        let mut grasped = false;
        let mut action_dim = None;
        let mut rows = Vec::new();
        let parse_f64 = |v: &str| {
            v.parse::<f64>()
                .map_err(|e| ReplayError::Parse(format!("bad float `{v}`: {e}")))
        };
        for line in text.lines() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            if let Some(meta) = line.strip_prefix('#') {
                let Some((key, value)) = meta.split_once('=') else {
                    continue;
                };
                let (key, value) = (key.trim(), value.trim());
                match key {
                    "family" => {
                        family = Some(TrajectoryFamily::from_name(value).ok_or_else(|| {
                            ReplayError::Parse(format!("unknown family `{value}`"))
                        })?);
                    }
                    "episode_seed" => {
                        episode_seed = Some(value.parse::<u64>().map_err(|e| {
                            ReplayError::Parse(format!("bad episode_seed `{value}`: {e}"))
                        })?);
                    }
                    "episode_return" => episode_return = parse_f64(value)?,
                    "grasped" => grasped = value == "true",
                    _ => {}
                }
                continue;
            }
            if line.starts_with("step,") {
                let dim = line.split(',').filter(|c| c.starts_with("action_")).count();
                if dim == 0 {
                    return Err(ReplayError::Parse("header names no action columns".into()));
                }
                action_dim = Some(dim);
                continue;
            }
            let dim =
                action_dim.ok_or_else(|| ReplayError::Parse("data before header row".into()))?;
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != 1 + dim + 8 {
                return Err(ReplayError::Parse(format!(
                    "expected {} fields, got {}",
                    1 + dim + 8,
                    fields.len()
                )));
            }
            let step = fields[0]
                .parse::<usize>()
                .map_err(|e| ReplayError::Parse(format!("bad step `{}`: {e}", fields[0])))?;
            let action = fields[1..1 + dim]
                .iter()
                .map(|v| parse_f64(v))
                .collect::<Result<Vec<f64>, _>>()?;
            let mut rest = [0.0; 8];
            for (slot, v) in rest.iter_mut().zip(&fields[1 + dim..]) {
                *slot = parse_f64(v)?;
            }
            rows.push(ReplayRow {
                step,
                action,
                gripper: [rest[0], rest[1], rest[2]],
                target: [rest[3], rest[4], rest[5]],
                distance: rest[6],
                reward: rest[7],
            });
        }
        Ok(Replay {
            family: family.ok_or_else(|| ReplayError::Parse("missing family metadata".into()))?,
            episode_seed: episode_seed
                .ok_or_else(|| ReplayError::Parse("missing episode_seed metadata".into()))?,
            action_dim: action_dim
                .ok_or_else(|| ReplayError::Parse("missing header row".into()))?,
            rows,
            episode_return,
            grasped,
        })
    }

    /// Re-simulates the recorded actions through a fresh environment and
    /// demands bitwise agreement with the stored poses.
    pub fn verify(&self, env_cfg: &EnvConfig) -> Result<(), ReplayError> {
        let mut env = Env::new(env_cfg.clone(), self.family, 0)?;
        env.reset_to(self.episode_seed)?;
        for row in &self.rows {
            let result = env.step(&row.action)?;
            let state = env.state();
            let checks: [(&'static str, f64, f64); 8] = [
                ("gripper_x", row.gripper[0], state.gripper_pos[0]),
                ("gripper_y", row.gripper[1], state.gripper_pos[1]),
                ("gripper_z", row.gripper[2], state.gripper_pos[2]),
                ("target_x", row.target[0], state.object_pos[0]),
                ("target_y", row.target[1], state.object_pos[1]),
                ("target_z", row.target[2], state.object_pos[2]),
                ("distance", row.distance, result.info.distance),
                ("reward", row.reward, result.reward),
            ];
            for (field, stored, resimulated) in checks {
                if stored.to_bits() != resimulated.to_bits() {
                    return Err(ReplayError::Diverged {
                        step: row.step,
                        field,
                        stored,
                        resimulated,
                    });
                }
            }
        }
        Ok(())
    }
}
