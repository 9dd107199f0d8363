//! Run configuration: a flat `key = value` text format.
//!
//! Lines hold one assignment each; `#` starts a comment anywhere and blank
//! lines are skipped. Unknown keys are errors, later assignments win, and
//! every key has a default, so the empty string parses to the default
//! configuration. [`RunConfig::to_text`] emits every key in a fixed order
//! and round-trips bitwise through [`parse`].
//!
//! [`RunConfig::semantic_hash`] fingerprints only the keys that change what
//! a run computes (`env.*` and `ppo.*`); cosmetic keys like the run name do
//! not disturb it. Checkpoints embed the hash to refuse resumes under a
//! different semantic configuration.

use crate::env::{EnvConfig, TaskKind};
use crate::ppo::PpoConfig;
use crate::traj::TrajectoryFamily;
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("line {line}: expected `key = value`")]
    MissingEquals { line: usize },
    #[error("line {line}: unknown key `{key}`")]
    UnknownKey { line: usize, key: String },
    #[error("line {line}: bad value `{value}` for `{key}`: {reason}")]
    BadValue {
        line: usize,
        key: String,
        value: String,
        reason: String,
    },
    #[error("invalid configuration: {0}")]
    Invalid(String),
    #[error("cannot read config: {0}")]
    Io(#[from] std::io::Error),
}

/// Evaluation settings shared by the eval and report commands.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalSettings {
    /// Deterministic episodes rolled out per trajectory family.
    pub episodes_per_family: usize,
    /// First step counted toward steady-state tracking error, skipping the
    /// initial approach transient.
    pub steady_start: usize,
    /// Widens every dynamics-randomization interval by this fraction at
    /// evaluation time; zero evaluates the training ranges.
    pub widen_factor: f64,
}

impl Default for EvalSettings {
    fn default() -> Self {
        Self {
            episodes_per_family: 40,
            steady_start: 50,
            widen_factor: 0.0,
        }
    }
}

/// Everything one run needs: environment, optimizer, and evaluation
/// settings plus bookkeeping.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    /// Label used in output file names; `[A-Za-z0-9_-]+`.
    pub name: String,
    /// Checkpoint every this many iterations; zero disables checkpoints.
    pub checkpoint_every: usize,
    /// Print progress every this many iterations.
    pub log_every: usize,
    /// Families cycled across the environment pool: slot `i` trains family
    /// `families[i % families.len()]`.
    pub families: Vec<TrajectoryFamily>,
    pub env: EnvConfig,
    pub ppo: PpoConfig,
    pub eval: EvalSettings,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            name: "run".to_string(),
            checkpoint_every: 0,
            log_every: 1,
            families: TrajectoryFamily::BASIC.to_vec(),
            env: EnvConfig::default(),
            ppo: PpoConfig::default(),
            eval: EvalSettings::default(),
        }
    }
}

/// FNV-1a over `bytes`, 64-bit variant.
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        hash ^= b as u64;
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    hash
}

fn join<T: ToString>(items: &[T]) -> String {
    items
        .iter()
        .map(ToString::to_string)
        .collect::<Vec<_>>()
        .join(",")
}

fn family_list(families: &[TrajectoryFamily]) -> String {
    families
        .iter()
        .map(|f| f.name().to_string())
        .collect::<Vec<_>>()
        .join(",")
}

impl RunConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.name.is_empty()
            || !self
                .name
                .bytes()
                .all(|b| b.is_ascii_alphanumeric() || b == b'_' || b == b'-')
        {
            return Err(ConfigError::Invalid(
                "run.name must match [A-Za-z0-9_-]+".to_string(),
            ));
        }
        if self.log_every == 0 {
            return Err(ConfigError::Invalid(
                "run.log_every must be positive".to_string(),
            ));
        }
        if self.families.is_empty() {
            return Err(ConfigError::Invalid(
                "env.families must name at least one family".to_string(),
            ));
        }
        self.env
            .validate()
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        self.ppo
            .validate()
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        if self.eval.episodes_per_family == 0 {
            return Err(ConfigError::Invalid(
                "eval.episodes_per_family must be positive".to_string(),
            ));
        }
        if self.eval.steady_start >= self.env.episode_len as usize {
            return Err(ConfigError::Invalid(
                "eval.steady_start must fall inside the episode".to_string(),
            ));
        }
        if !(self.eval.widen_factor >= 0.0 && self.eval.widen_factor.is_finite()) {
            return Err(ConfigError::Invalid(
                "eval.widen_factor must be nonnegative".to_string(),
            ));
        }
        Ok(())
    }

    /// Trajectory family assigned to environment pool slot `i`.
    pub fn family_for_slot(&self, slot: usize) -> TrajectoryFamily {
        self.families[slot % self.families.len()]
    }

    /// The `env.*` and `ppo.*` assignments in canonical order; the domain
    /// of [`RunConfig::semantic_hash`].
    pub fn core_text(&self) -> String {
        let mut s = String::new();
        let e = &self.env;
        let p = &self.ppo;
        let _ = writeln!(s, "env.task = {}", e.task.name());
        let _ = writeln!(s, "env.families = {}", family_list(&self.families));
        let _ = writeln!(s, "env.task_onehot = {}", e.task_onehot);
        let _ = writeln!(s, "env.dt = {}", e.dt);
        let _ = writeln!(s, "env.episode_len = {}", e.episode_len);
        let _ = writeln!(s, "env.workspace.lo = {}", join(&e.workspace.lo));
        let _ = writeln!(s, "env.workspace.hi = {}", join(&e.workspace.hi));
        let _ = writeln!(s, "env.home = {}", join(&e.home_target));
        let _ = writeln!(s, "env.grasp_reward = {}", e.grasp_reward);
        let _ = writeln!(s, "env.randomize_dynamics = {}", e.randomize_dynamics);
        let _ = writeln!(s, "env.noise.action_std = {}", e.noise.sigma_action);
        let _ = writeln!(s, "env.noise.obs_std = {}", e.noise.sigma_obs);
        let _ = writeln!(s, "env.noise.clip = {}", e.noise.clip_k);
        let _ = writeln!(s, "env.dynamics.gain = {}", join(&e.randomization.actuation_gain));
        let _ = writeln!(s, "env.dynamics.lag = {}", join(&e.randomization.lag_alpha));
        let _ = writeln!(
            s,
            "env.dynamics.base_speed = {}",
            join(&e.randomization.base_speed_scale)
        );
        let _ = writeln!(
            s,
            "env.dynamics.arm_speed = {}",
            join(&e.randomization.arm_speed_scale)
        );
        let _ = writeln!(s, "ppo.gamma = {}", p.gamma);
        let _ = writeln!(s, "ppo.lambda = {}", p.lambda);
        let _ = writeln!(s, "ppo.clip_eps = {}", p.clip_eps);
        let _ = writeln!(s, "ppo.learning_rate = {}", p.learning_rate);
        let _ = writeln!(s, "ppo.n_envs = {}", p.n_envs);
        let _ = writeln!(s, "ppo.rollout_len = {}", p.rollout_len);
        let _ = writeln!(s, "ppo.epochs = {}", p.epochs);
        let _ = writeln!(s, "ppo.minibatch_size = {}", p.minibatch_size);
        let _ = writeln!(s, "ppo.value_coef = {}", p.value_coef);
        let _ = writeln!(s, "ppo.entropy_coef = {}", p.entropy_coef);
        let _ = writeln!(s, "ppo.grad_clip_norm = {}", p.grad_clip_norm);
        let _ = writeln!(s, "ppo.total_env_steps = {}", p.total_env_steps);
        let _ = writeln!(s, "ppo.hidden = {}", join(&p.hidden));
        let _ = writeln!(s, "ppo.seeds = {}", join(&p.seeds));
        s
    }

    /// Fingerprint of the semantic configuration; see the module docs.
    pub fn semantic_hash(&self) -> u64 {
        fnv1a64(self.core_text().as_bytes())
    }

    /// Canonical dump of every key. Parses back to an equal configuration.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "# run bookkeeping");
        let _ = writeln!(s, "run.name = {}", self.name);
        let _ = writeln!(s, "run.checkpoint_every = {}", self.checkpoint_every);
        let _ = writeln!(s, "run.log_every = {}", self.log_every);
        let _ = writeln!(s, "\n# environment and optimizer");
        s.push_str(&self.core_text());
        let _ = writeln!(s, "\n# evaluation");
        let _ = writeln!(s, "eval.episodes_per_family = {}", self.eval.episodes_per_family);
        let _ = writeln!(s, "eval.steady_start = {}", self.eval.steady_start);
        let _ = writeln!(s, "eval.widen_factor = {}", self.eval.widen_factor);
        s
    }
}

fn bad(line: usize, key: &str, value: &str, reason: impl ToString) -> ConfigError {
    ConfigError::BadValue {
        line,
        key: key.to_string(),
        value: value.to_string(),
        reason: reason.to_string(),
    }
}

fn parse_f64(line: usize, key: &str, value: &str) -> Result<f64, ConfigError> {
    value
        .parse::<f64>()
        .map_err(|e| bad(line, key, value, e))
        .and_then(|v| {
            if v.is_finite() {
                Ok(v)
            } else {
                Err(bad(line, key, value, "must be finite"))
            }
        })
}

fn parse_usize(line: usize, key: &str, value: &str) -> Result<usize, ConfigError> {
    value.parse::<usize>().map_err(|e| bad(line, key, value, e))
}

fn parse_u32(line: usize, key: &str, value: &str) -> Result<u32, ConfigError> {
    value.parse::<u32>().map_err(|e| bad(line, key, value, e))
}

fn parse_bool(line: usize, key: &str, value: &str) -> Result<bool, ConfigError> {
    match value {
        "true" => Ok(true),
        "false" => Ok(false),
        _ => Err(bad(line, key, value, "expected true or false")),
    }
}

fn parse_fixed<const N: usize>(
    line: usize,
    key: &str,
    value: &str,
) -> Result<[f64; N], ConfigError> {
    let parts: Vec<&str> = value.split(',').map(str::trim).collect();
    if parts.len() != N {
        return Err(bad(line, key, value, format!("expected {N} numbers")));
    }
    let mut out = [0.0; N];
    for (slot, part) in out.iter_mut().zip(&parts) {
        *slot = parse_f64(line, key, part)?;
    }
    Ok(out)
}

fn parse_list<T: std::str::FromStr>(
    line: usize,
    key: &str,
    value: &str,
) -> Result<Vec<T>, ConfigError>
where
    T::Err: ToString,
{
    value
        .split(',')
        .map(str::trim)
        .map(|part| part.parse::<T>().map_err(|e| bad(line, key, part, e.to_string())))
        .collect()
}

fn parse_families(
    line: usize,
    key: &str,
    value: &str,
) -> Result<Vec<TrajectoryFamily>, ConfigError> {
    value
        .split(',')
        .map(str::trim)
        .map(|name| {
            TrajectoryFamily::from_name(name)
                .ok_or_else(|| bad(line, key, name, "unknown trajectory family"))
        })
        .collect()
}

fn apply(cfg: &mut RunConfig, line: usize, key: &str, value: &str) -> Result<(), ConfigError> {
    match key {
        "run.name" => cfg.name = value.to_string(),
        "run.checkpoint_every" => cfg.checkpoint_every = parse_usize(line, key, value)?,
        "run.log_every" => cfg.log_every = parse_usize(line, key, value)?,
        "env.task" => {
            cfg.env.task = TaskKind::from_name(value)
                .ok_or_else(|| bad(line, key, value, "expected tracking or grasping"))?;
        }
        "env.families" => cfg.families = parse_families(line, key, value)?,
        "env.task_onehot" => cfg.env.task_onehot = parse_bool(line, key, value)?,
        "env.dt" => cfg.env.dt = parse_f64(line, key, value)?,
        "env.episode_len" => cfg.env.episode_len = parse_u32(line, key, value)?,
        "env.workspace.lo" => cfg.env.workspace.lo = parse_fixed::<3>(line, key, value)?,
        "env.workspace.hi" => cfg.env.workspace.hi = parse_fixed::<3>(line, key, value)?,
        "env.home" => cfg.env.home_target = parse_fixed::<3>(line, key, value)?,
        "env.grasp_reward" => cfg.env.grasp_reward = parse_f64(line, key, value)?,
        "env.randomize_dynamics" => cfg.env.randomize_dynamics = parse_bool(line, key, value)?,
        "env.noise.action_std" => cfg.env.noise.sigma_action = parse_f64(line, key, value)?,
        "env.noise.obs_std" => cfg.env.noise.sigma_obs = parse_f64(line, key, value)?,
        "env.noise.clip" => cfg.env.noise.clip_k = parse_f64(line, key, value)?,
        "env.dynamics.gain" => {
            cfg.env.randomization.actuation_gain = parse_fixed::<2>(line, key, value)?;
        }
        "env.dynamics.lag" => cfg.env.randomization.lag_alpha = parse_fixed::<2>(line, key, value)?,
        "env.dynamics.base_speed" => {
            cfg.env.randomization.base_speed_scale = parse_fixed::<2>(line, key, value)?;
        }
        "env.dynamics.arm_speed" => {
            cfg.env.randomization.arm_speed_scale = parse_fixed::<2>(line, key, value)?;
        }
        "ppo.gamma" => cfg.ppo.gamma = parse_f64(line, key, value)?,
        "ppo.lambda" => cfg.ppo.lambda = parse_f64(line, key, value)?,
        "ppo.clip_eps" => cfg.ppo.clip_eps = parse_f64(line, key, value)?,
        "ppo.learning_rate" => cfg.ppo.learning_rate = parse_f64(line, key, value)?,
        "ppo.n_envs" => cfg.ppo.n_envs = parse_usize(line, key, value)?,
        "ppo.rollout_len" => cfg.ppo.rollout_len = parse_usize(line, key, value)?,
        "ppo.epochs" => cfg.ppo.epochs = parse_usize(line, key, value)?,
        "ppo.minibatch_size" => cfg.ppo.minibatch_size = parse_usize(line, key, value)?,
        "ppo.value_coef" => cfg.ppo.value_coef = parse_f64(line, key, value)?,
        "ppo.entropy_coef" => cfg.ppo.entropy_coef = parse_f64(line, key, value)?,
        "ppo.grad_clip_norm" => cfg.ppo.grad_clip_norm = parse_f64(line, key, value)?,
        "ppo.total_env_steps" => cfg.ppo.total_env_steps = parse_usize(line, key, value)?,
        "ppo.hidden" => cfg.ppo.hidden = parse_list::<usize>(line, key, value)?,
        "ppo.seeds" => cfg.ppo.seeds = parse_list::<u64>(line, key, value)?,
        "eval.episodes_per_family" => {
            cfg.eval.episodes_per_family = parse_usize(line, key, value)?;
        }
        "eval.steady_start" => cfg.eval.steady_start = parse_usize(line, key, value)?,
        "eval.widen_factor" => cfg.eval.widen_factor = parse_f64(line, key, value)?,
        _ => {
            return Err(ConfigError::UnknownKey {
                line,
                key: key.to_string(),
            })
        }
    }
    Ok(())
}

/// Parses and validates a configuration, starting from the defaults.
pub fn parse(text: &str) -> Result<RunConfig, ConfigError> {
    let mut cfg = RunConfig::default();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let Some((key, value)) = content.split_once('=') else {
            return Err(ConfigError::MissingEquals { line });
        };
        apply(&mut cfg, line, key.trim(), value.trim())?;
    }
    cfg.validate()?;
    Ok(cfg)
}

/// Reads and parses a configuration file.
pub fn load(path: &Path) -> Result<RunConfig, ConfigError> {
    parse(&std::fs::read_to_string(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_text_parses_to_defaults() {
        let cfg = parse("").unwrap();
        assert_eq!(cfg, RunConfig::default());
        assert_eq!(cfg.family_for_slot(0), TrajectoryFamily::HorizontalLine);
        assert_eq!(cfg.family_for_slot(8), TrajectoryFamily::Circle);
    }

    #[test]
    fn canonical_dump_round_trips() {
        let mut cfg = RunConfig::default();
        cfg.name = "multi-task_3".to_string();
        cfg.checkpoint_every = 25;
        cfg.families = vec![TrajectoryFamily::Circle, TrajectoryFamily::RandomComposite];
        cfg.env.task = TaskKind::Grasping;
        cfg.env.task_onehot = true;
        cfg.env.dt = 0.02;
        cfg.env.noise.sigma_obs = 0.0;
        cfg.env.randomization.lag_alpha = [0.55, 1.0];
        cfg.ppo.learning_rate = 5e-5;
        cfg.ppo.hidden = vec![128, 64];
        cfg.ppo.seeds = vec![7];
        cfg.eval.widen_factor = 0.5;
        let reparsed = parse(&cfg.to_text()).unwrap();
        assert_eq!(reparsed, cfg);
    }

    #[test]
    fn comments_blanks_and_repeats_follow_the_rules() {
        let text = "
            # full-line comment
            ppo.gamma = 0.9   # trailing comment

            ppo.gamma = 0.95
        ";
        let cfg = parse(text).unwrap();
        assert_eq!(cfg.ppo.gamma, 0.95);
    }

    #[test]
    fn unknown_keys_and_malformed_lines_are_rejected() {
        let err = parse("ppo.gamme = 0.9").unwrap_err();
        match err {
            ConfigError::UnknownKey { line, key } => {
                assert_eq!(line, 1);
                assert_eq!(key, "ppo.gamme");
            }
            other => panic!("unexpected error {other}"),
        }
        assert!(matches!(
            parse("just some words").unwrap_err(),
            ConfigError::MissingEquals { line: 1 }
        ));
        let err = parse("env.home = 1.0,2.0").unwrap_err();
        assert!(matches!(err, ConfigError::BadValue { .. }));
        assert!(err.to_string().contains("env.home"));
    }

    #[test]
    fn out_of_range_settings_fail_validation() {
        assert!(matches!(
            parse("ppo.gamma = 1.5").unwrap_err(),
            ConfigError::Invalid(_)
        ));
        assert!(matches!(
            parse("run.name = has space").unwrap_err(),
            ConfigError::Invalid(_)
        ));
        assert!(matches!(
            parse("eval.steady_start = 200").unwrap_err(),
            ConfigError::Invalid(_)
        ));
    }

    #[test]
    fn semantic_hash_tracks_core_keys_only() {
        let base = RunConfig::default();
        let mut cosmetic = base.clone();
        cosmetic.name = "other".to_string();
        cosmetic.checkpoint_every = 10;
        cosmetic.eval.widen_factor = 0.5;
        assert_eq!(base.semantic_hash(), cosmetic.semantic_hash());

        let mut semantic = base.clone();
        semantic.env.dt = 0.05;
        assert_ne!(base.semantic_hash(), semantic.semantic_hash());
        let mut seeds = base.clone();
        seeds.ppo.seeds = vec![1];
        assert_ne!(base.semantic_hash(), seeds.semantic_hash());
    }

    #[test]
    fn fnv_hash_matches_reference_values() {
        // Published FNV-1a test vectors.
        assert_eq!(fnv1a64(b""), 0xcbf29ce484222325);
        assert_eq!(fnv1a64(b"a"), 0xaf63dc4c8601ec8c);
        assert_eq!(fnv1a64(b"foobar"), 0x85944171f73967e8);
    }
}
