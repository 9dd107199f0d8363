//! RL environments: the mobile-manipulator tasks and a point-mass toy.
//!
//! [`Env`] wraps the simulator into an episodic environment with two task
//! modes: `Tracking` (keep the gripper on a moving goal, 4-dim action) and
//! `Grasping` (intercept and grab the object, 5-dim action with a gripper
//! command). Observations are a fixed 23-dim physical layout, optionally
//! extended by a 6-dim one-hot of the trajectory family. Episodes are
//! deterministic given their seed: trajectory, dynamics draw, and both noise
//! streams derive from it.

use crate::geom::{dist, Aabb, Vec3};
use crate::rng::{mix, salt, stream};
use crate::sim::{
    apply_action, apply_object_goal, check_grasp, init_state, randomize_dynamics, DynamicsParams,
    RandomizationRanges, RobotParams, SimError, SimState,
};
use crate::traj::{
    sample_spec, Cursor, SampleRanges, TrajError, TrajectoryFamily, TrajectorySpec,
};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Number of physical observation components (before the task one-hot).
pub const PHYS_OBS_DIM: usize = 23;
/// Width of the optional task one-hot suffix.
pub const TASK_ONE_HOT_DIM: usize = 6;
/// Action width without and with the gripper command.
pub const TRACKING_ACTION_DIM: usize = 4;
pub const GRASPING_ACTION_DIM: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TaskKind {
    Tracking,
    Grasping,
}

impl TaskKind {
    pub fn action_dim(self) -> usize {
        match self {
            TaskKind::Tracking => TRACKING_ACTION_DIM,
            TaskKind::Grasping => GRASPING_ACTION_DIM,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            TaskKind::Tracking => "tracking",
            TaskKind::Grasping => "grasping",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        match name {
            "tracking" => Some(TaskKind::Tracking),
            "grasping" => Some(TaskKind::Grasping),
            _ => None,
        }
    }
}

/// Zero-mean Gaussian noise, clipped at `clip_k` sigmas, injected into
/// executed actions and observations. A sigma of zero disables that stream
/// entirely (no RNG draws).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseConfig {
    pub sigma_action: f64,
    pub sigma_obs: f64,
    pub clip_k: f64,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        Self {
            sigma_action: 0.01,
            sigma_obs: 0.005,
            clip_k: 3.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvConfig {
    pub task: TaskKind,
    /// Control interval, seconds.
    pub dt: f64,
    /// Steps per episode.
    pub episode_len: u32,
    /// Box the goal trajectories live in.
    pub workspace: Aabb,
    pub ranges: SampleRanges,
    pub noise: NoiseConfig,
    pub randomization: RandomizationRanges,
    /// Draw fresh dynamics each episode; off means nominal dynamics.
    pub randomize_dynamics: bool,
    /// Bonus added on the grasp-success step.
    pub grasp_reward: f64,
    /// Append the 6-dim family one-hot to observations.
    pub task_onehot: bool,
    pub robot: RobotParams,
    /// Gripper pose the arm is driven to at reset.
    pub home_target: Vec3,
}

impl Default for EnvConfig {
    fn default() -> Self {
        Self {
            task: TaskKind::Tracking,
            dt: 0.04,
            episode_len: 200,
            workspace: Aabb::new([0.9, -0.45, 0.15], [2.1, 0.45, 0.85]),
            ranges: SampleRanges::default(),
            noise: NoiseConfig::default(),
            randomization: RandomizationRanges::default(),
            randomize_dynamics: true,
            grasp_reward: 50.0,
            task_onehot: false,
            robot: RobotParams::default(),
            home_target: [0.55, 0.0, 0.5],
        }
    }
}

impl EnvConfig {
    pub fn validate(&self) -> Result<(), EnvError> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(EnvError::InvalidConfig("dt must be positive"));
        }
        if self.episode_len == 0 {
            return Err(EnvError::InvalidConfig("episode_len must be positive"));
        }
        if self.noise.sigma_action < 0.0 || self.noise.sigma_obs < 0.0 {
            return Err(EnvError::InvalidConfig("noise sigmas must be non-negative"));
        }
        if self.noise.clip_k <= 0.0 {
            return Err(EnvError::InvalidConfig("noise clip_k must be positive"));
        }
        if !self.grasp_reward.is_finite() {
            return Err(EnvError::InvalidConfig("grasp_reward must be finite"));
        }
        self.robot.validate()?;
        Ok(())
    }

    pub fn obs_dim(&self) -> usize {
        PHYS_OBS_DIM + if self.task_onehot { TASK_ONE_HOT_DIM } else { 0 }
    }
}

/// Tracking reward: `-d + exp(-100 d^2)`. The linear term penalizes distance
/// everywhere; the sharp exponential pays out only within a few centimeters,
/// rewarding precision.
pub fn tracking_reward(distance: f64) -> f64 {
    -distance + (-100.0 * distance * distance).exp()
}

/// Sum of per-step rewards.
pub fn episode_return(rewards: &[f64]) -> f64 {
    rewards.iter().sum()
}

#[derive(Debug, Error)]
pub enum EnvError {
    #[error("environment stepped before reset")]
    NotReset,
    #[error("episode finished; call reset before stepping")]
    EpisodeDone,
    #[error("action has {got} components, expected {expected}")]
    ActionDim { expected: usize, got: usize },
    #[error("invalid environment config: {0}")]
    InvalidConfig(&'static str),
    #[error(transparent)]
    Traj(#[from] TrajError),
    #[error(transparent)]
    Sim(#[from] SimError),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepInfo {
    /// Gripper-object distance after the step, meters.
    pub distance: f64,
    /// True only on the step where the grasp succeeded.
    pub grasp_success: bool,
    /// IK clamped the gripper target this step.
    pub clamped: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepResult {
    pub observation: Vec<f64>,
    pub reward: f64,
    pub done: bool,
    pub info: StepInfo,
}

/// Object-safe environment interface shared by the manipulator tasks and the
/// point-mass toy, so the trainer is generic over both.
pub trait TaskEnv: Send {
    fn obs_dim(&self) -> usize;
    fn action_dim(&self) -> usize;
    /// Stable task identifier for per-family bookkeeping: the one-hot index
    /// for basic families, [`TASK_ONE_HOT_DIM`] for the composite.
    fn task_id(&self) -> usize;
    fn reset(&mut self) -> Result<Vec<f64>, EnvError>;
    fn step(&mut self, action: &[f64]) -> Result<StepResult, EnvError>;
}

pub struct Env {
    config: EnvConfig,
    family: TrajectoryFamily,
    base_seed: u64,
    episode_counter: u64,
    cursor: Option<Cursor>,
    state: SimState,
    prev_gripper_pos: Vec3,
    gripper_vel: Vec3,
    noise_rng: ChaCha8Rng,
    steps_taken: u32,
    done: bool,
    ready: bool,
}

impl Env {
    /// Builds an environment for one trajectory family. Call [`Env::reset`]
    /// before stepping. Episode seeds derive from `base_seed` and the reset
    /// counter, so two environments with the same seed replay the same
    /// episode sequence.
    pub fn new(
        config: EnvConfig,
        family: TrajectoryFamily,
        base_seed: u64,
    ) -> Result<Self, EnvError> {
        config.validate()?;
        let state = init_state(&config.robot, DynamicsParams::nominal(), config.home_target)?;
        Ok(Self {
            config,
            family,
            base_seed,
            episode_counter: 0,
            cursor: None,
            state,
            prev_gripper_pos: [0.0; 3],
            gripper_vel: [0.0; 3],
            noise_rng: stream(base_seed, salt::NOISE),
            steps_taken: 0,
            done: false,
            ready: false,
        })
    }

    pub fn config(&self) -> &EnvConfig {
        &self.config
    }

    pub fn family(&self) -> TrajectoryFamily {
        self.family
    }

    pub fn state(&self) -> &SimState {
        &self.state
    }

    /// Spec of the current episode's trajectory.
    pub fn spec(&self) -> Option<&TrajectorySpec> {
        self.cursor.as_ref().map(|c| c.spec())
    }

    pub fn done(&self) -> bool {
        self.done
    }

    /// Starts the episode identified by `episode_seed`, independent of the
    /// reset counter. The same seed always reproduces the same trajectory,
    /// dynamics draw, noise stream, and therefore the same initial
    /// observation.
    pub fn reset_to(&mut self, episode_seed: u64) -> Result<Vec<f64>, EnvError> {
        let spec = sample_spec(
            self.family,
            episode_seed,
            &self.config.workspace,
            &self.config.ranges,
            self.config.dt,
        )?;
        let dynamics = if self.config.randomize_dynamics {
            randomize_dynamics(episode_seed, &self.config.randomization)
        } else {
            DynamicsParams::nominal()
        };
        let mut state = init_state(&self.config.robot, dynamics, self.config.home_target)?;
        let mut cursor = Cursor::new(spec, self.config.dt);
        state = apply_object_goal(&state, cursor.next_goal(), self.config.dt);
        self.cursor = Some(cursor);
        self.prev_gripper_pos = state.gripper_pos;
        self.gripper_vel = [0.0; 3];
        self.state = state;
        self.noise_rng = stream(episode_seed, salt::NOISE);
        self.steps_taken = 0;
        self.done = false;
        self.ready = true;
        Ok(self.observe())
    }

    fn observe(&mut self) -> Vec<f64> {
        let s = &self.state;
        let mut obs = Vec::with_capacity(self.config.obs_dim());
        obs.push(s.base_x);
        obs.extend_from_slice(&s.q);
        obs.push(s.qd_base);
        obs.extend_from_slice(&s.qd);
        obs.extend_from_slice(&s.gripper_pos);
        obs.extend_from_slice(&s.object_pos);
        obs.extend_from_slice(&s.object_vel);
        for i in 0..3 {
            obs.push(s.object_pos[i] - s.gripper_pos[i]);
        }
        for i in 0..3 {
            obs.push(s.object_vel[i] - self.gripper_vel[i]);
        }
        debug_assert_eq!(obs.len(), PHYS_OBS_DIM);
        add_clipped_noise(
            &mut obs,
            self.config.noise.sigma_obs,
            self.config.noise.clip_k,
            &mut self.noise_rng,
        );
        // The one-hot is categorical, not a sensor reading: appended after
        // noise injection.
        if self.config.task_onehot {
            let mut onehot = [0.0; TASK_ONE_HOT_DIM];
            if let Some(i) = self.family.one_hot_index() {
                onehot[i] = 1.0;
            }
            obs.extend_from_slice(&onehot);
        }
        obs
    }
}

impl TaskEnv for Env {
    fn obs_dim(&self) -> usize {
        self.config.obs_dim()
    }

    fn action_dim(&self) -> usize {
        self.config.task.action_dim()
    }

    fn task_id(&self) -> usize {
        self.family.one_hot_index().unwrap_or(TASK_ONE_HOT_DIM)
    }

    fn reset(&mut self) -> Result<Vec<f64>, EnvError> {
        let episode = self.episode_counter;
        self.episode_counter += 1;
        self.reset_to(mix(self.base_seed, mix(episode, salt::EPISODE)))
    }

    /// One control step: clip the action, add actuation noise, move the arm
    /// and base, advance the object, and score the result.
    fn step(&mut self, action: &[f64]) -> Result<StepResult, EnvError> {
        if !self.ready {
            return Err(EnvError::NotReset);
        }
        if self.done {
            return Err(EnvError::EpisodeDone);
        }
        let expected = self.action_dim();
        if action.len() != expected {
            return Err(EnvError::ActionDim {
                expected,
                got: action.len(),
            });
        }
        let mut act = [0.0; GRASPING_ACTION_DIM];
        for (slot, a) in act.iter_mut().zip(action) {
            *slot = a.clamp(-1.0, 1.0);
        }
        add_clipped_noise(
            &mut act[..expected],
            self.config.noise.sigma_action,
            self.config.noise.clip_k,
            &mut self.noise_rng,
        );
        for slot in &mut act[..expected] {
            *slot = slot.clamp(-1.0, 1.0);
        }
        let gripper_cmd = match self.config.task {
            TaskKind::Tracking => None,
            TaskKind::Grasping => Some(act[4]),
        };
        let control = [act[0], act[1], act[2], act[3]];
        let dt = self.config.dt;
        let mut state = apply_action(&self.state, control, gripper_cmd, &self.config.robot, dt);
        let goal = self.cursor.as_mut().expect("ready implies cursor").next_goal();
        state = apply_object_goal(&state, goal, dt);
        self.gripper_vel = [
            (state.gripper_pos[0] - self.prev_gripper_pos[0]) / dt,
            (state.gripper_pos[1] - self.prev_gripper_pos[1]) / dt,
            (state.gripper_pos[2] - self.prev_gripper_pos[2]) / dt,
        ];
        self.prev_gripper_pos = state.gripper_pos;
        let distance = dist(state.object_pos, state.gripper_pos);
        let grasp_success =
            self.config.task == TaskKind::Grasping && check_grasp(&state, &self.config.robot);
        if grasp_success {
            state.object_grasped = true;
        }
        let mut reward = tracking_reward(distance);
        if grasp_success {
            reward += self.config.grasp_reward;
        }
        self.steps_taken += 1;
        self.done = self.steps_taken >= self.config.episode_len || grasp_success;
        let clamped = state.clamped;
        self.state = state;
        Ok(StepResult {
            observation: self.observe(),
            reward,
            done: self.done,
            info: StepInfo {
                distance,
                grasp_success,
                clamped,
            },
        })
    }
}

fn add_clipped_noise(values: &mut [f64], sigma: f64, clip_k: f64, rng: &mut ChaCha8Rng) {
    if sigma <= 0.0 {
        return;
    }
    let clip = clip_k * sigma;
    for v in values.iter_mut() {
        let n: f64 = rand::Rng::sample(rng, StandardNormal);
        *v += (sigma * n).clamp(-clip, clip);
    }
}

/// Massless point chasing the same trajectories with direct position control.
/// Nine observations (position, goal, difference), three actions. Exists to
/// smoke-test the learning stack quickly; shares the reward and episode
/// structure of the manipulator tasks.
pub struct PointMassEnv {
    family: TrajectoryFamily,
    base_seed: u64,
    bounds: Aabb,
    ranges: SampleRanges,
    dt: f64,
    episode_len: u32,
    /// Largest per-axis move per step, meters.
    step_max: f64,
    episode_counter: u64,
    cursor: Option<Cursor>,
    pos: Vec3,
    goal: Vec3,
    steps_taken: u32,
    done: bool,
    ready: bool,
}

pub const POINT_MASS_OBS_DIM: usize = 9;
pub const POINT_MASS_ACTION_DIM: usize = 3;

impl PointMassEnv {
    pub fn new(family: TrajectoryFamily, base_seed: u64) -> Self {
        Self {
            family,
            base_seed,
            bounds: Aabb::new([0.9, -0.45, 0.15], [2.1, 0.45, 0.85]),
            ranges: SampleRanges::default(),
            dt: 0.04,
            episode_len: 200,
            step_max: 0.05,
            episode_counter: 0,
            cursor: None,
            pos: [0.0; 3],
            goal: [0.0; 3],
            steps_taken: 0,
            done: false,
            ready: false,
        }
    }
}

impl TaskEnv for PointMassEnv {
    fn obs_dim(&self) -> usize {
        POINT_MASS_OBS_DIM
    }

    fn action_dim(&self) -> usize {
        POINT_MASS_ACTION_DIM
    }

    fn task_id(&self) -> usize {
        self.family.one_hot_index().unwrap_or(TASK_ONE_HOT_DIM)
    }

    fn reset(&mut self) -> Result<Vec<f64>, EnvError> {
        let episode = self.episode_counter;
        self.episode_counter += 1;
        let seed = mix(self.base_seed, mix(episode, salt::EPISODE));
        let spec = sample_spec(self.family, seed, &self.bounds, &self.ranges, self.dt)?;
        let mut cursor = Cursor::new(spec, self.dt);
        self.goal = cursor.next_goal().position;
        self.cursor = Some(cursor);
        // Fixed offset start: far enough that the point must chase.
        self.pos = [self.bounds.lo[0] + 0.05, 0.0, self.bounds.lo[2] + 0.05];
        self.steps_taken = 0;
        self.done = false;
        self.ready = true;
        Ok(self.observe())
    }

    fn step(&mut self, action: &[f64]) -> Result<StepResult, EnvError> {
        if !self.ready {
            return Err(EnvError::NotReset);
        }
        if self.done {
            return Err(EnvError::EpisodeDone);
        }
        if action.len() != POINT_MASS_ACTION_DIM {
            return Err(EnvError::ActionDim {
                expected: POINT_MASS_ACTION_DIM,
                got: action.len(),
            });
        }
        for i in 0..3 {
            self.pos[i] += action[i].clamp(-1.0, 1.0) * self.step_max;
            self.pos[i] = self.pos[i].clamp(self.bounds.lo[i], self.bounds.hi[i]);
        }
        self.goal = self.cursor.as_mut().expect("ready implies cursor").next_goal().position;
        let distance = dist(self.pos, self.goal);
        self.steps_taken += 1;
        self.done = self.steps_taken >= self.episode_len;
        Ok(StepResult {
            observation: self.observe(),
            reward: tracking_reward(distance),
            done: self.done,
            info: StepInfo {
                distance,
                grasp_success: false,
                clamped: false,
            },
        })
    }
}

impl PointMassEnv {
    fn observe(&self) -> Vec<f64> {
        let mut obs = Vec::with_capacity(POINT_MASS_OBS_DIM);
        obs.extend_from_slice(&self.pos);
        obs.extend_from_slice(&self.goal);
        for i in 0..3 {
            obs.push(self.goal[i] - self.pos[i]);
        }
        obs
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quiet_config() -> EnvConfig {
        EnvConfig {
            noise: NoiseConfig {
                sigma_action: 0.0,
                sigma_obs: 0.0,
                clip_k: 3.0,
            },
            randomize_dynamics: false,
            ..EnvConfig::default()
        }
    }

    #[test]
    fn observation_layout_is_pinned() {
        let mut env = Env::new(quiet_config(), TrajectoryFamily::Circle, 4).unwrap();
        let obs = env.reset().unwrap();
        assert_eq!(obs.len(), PHYS_OBS_DIM);
        let s = *env.state();
        assert_eq!(obs[0], s.base_x);
        assert_eq!(&obs[1..4], &s.q);
        assert_eq!(obs[4], s.qd_base);
        assert_eq!(&obs[5..8], &s.qd);
        assert_eq!(&obs[8..11], &s.gripper_pos);
        assert_eq!(&obs[11..14], &s.object_pos);
        assert_eq!(&obs[14..17], &s.object_vel);
        for i in 0..3 {
            assert_eq!(obs[17 + i], s.object_pos[i] - s.gripper_pos[i]);
        }
        // Reset: both velocities are zero, so the velocity difference is too.
        assert_eq!(&obs[20..23], &[0.0; 3]);
    }

    #[test]
    fn one_hot_suffix_matches_family() {
        let config = EnvConfig {
            task_onehot: true,
            ..quiet_config()
        };
        for (i, family) in TrajectoryFamily::BASIC.into_iter().enumerate() {
            let mut env = Env::new(config.clone(), family, 9).unwrap();
            let obs = env.reset().unwrap();
            assert_eq!(obs.len(), PHYS_OBS_DIM + TASK_ONE_HOT_DIM);
            for j in 0..TASK_ONE_HOT_DIM {
                let expected = if i == j { 1.0 } else { 0.0 };
                assert_eq!(obs[PHYS_OBS_DIM + j], expected);
            }
        }
        let mut env = Env::new(config, TrajectoryFamily::RandomComposite, 9).unwrap();
        let obs = env.reset().unwrap();
        assert_eq!(&obs[PHYS_OBS_DIM..], &[0.0; TASK_ONE_HOT_DIM]);
    }

    #[test]
    fn reward_formula() {
        assert_eq!(tracking_reward(0.0), 1.0);
        let r = tracking_reward(0.1);
        assert!((r - (-0.1 + (-1.0f64).exp())).abs() < 1e-15);
        assert!(tracking_reward(0.5) < 0.0);
    }

    #[test]
    fn same_episode_seed_reproduces_noisy_run() {
        let config = EnvConfig::default();
        let mut a = Env::new(config.clone(), TrajectoryFamily::Sine, 1).unwrap();
        let mut b = Env::new(config, TrajectoryFamily::Sine, 2).unwrap();
        let oa = a.reset_to(777).unwrap();
        let ob = b.reset_to(777).unwrap();
        assert_eq!(oa, ob, "initial observations (noise included) diverged");
        for step in 0..50 {
            let action = [0.3, -0.1, 0.2, 0.4];
            let ra = a.step(&action).unwrap();
            let rb = b.step(&action).unwrap();
            assert_eq!(ra.observation, rb.observation, "diverged at step {step}");
            assert_eq!(ra.reward, rb.reward);
        }
    }

    #[test]
    fn reset_sequence_is_deterministic_per_base_seed() {
        let config = EnvConfig::default();
        let mut a = Env::new(config.clone(), TrajectoryFamily::Helix, 5).unwrap();
        let mut b = Env::new(config, TrajectoryFamily::Helix, 5).unwrap();
        for _ in 0..3 {
            assert_eq!(a.reset().unwrap(), b.reset().unwrap());
        }
        assert_eq!(a.spec(), b.spec());
    }

    #[test]
    fn obs_noise_is_clipped() {
        let mut config = quiet_config();
        config.noise.sigma_obs = 0.5;
        config.noise.clip_k = 2.0;
        let mut noisy = Env::new(config, TrajectoryFamily::Circle, 3).unwrap();
        let mut clean = Env::new(quiet_config(), TrajectoryFamily::Circle, 3).unwrap();
        let no = noisy.reset_to(42).unwrap();
        let nc = clean.reset_to(42).unwrap();
        let mut hit_tail = false;
        for i in 0..PHYS_OBS_DIM {
            let delta = (no[i] - nc[i]).abs();
            assert!(delta <= 2.0 * 0.5 + 1e-12, "noise {delta} beyond clip");
            if delta > 0.5 {
                hit_tail = true;
            }
        }
        let _ = hit_tail;
    }

    #[test]
    fn episode_ends_after_configured_length() {
        let mut env = Env::new(quiet_config(), TrajectoryFamily::HorizontalLine, 8).unwrap();
        env.reset().unwrap();
        let mut last_done = false;
        for _ in 0..200 {
            last_done = env.step(&[0.0; 4]).unwrap().done;
        }
        assert!(last_done);
        assert!(matches!(env.step(&[0.0; 4]), Err(EnvError::EpisodeDone)));
        env.reset().unwrap();
        assert!(env.step(&[0.0; 4]).is_ok());
    }

    #[test]
    fn step_before_reset_is_rejected() {
        let mut env = Env::new(quiet_config(), TrajectoryFamily::Circle, 1).unwrap();
        assert!(matches!(env.step(&[0.0; 4]), Err(EnvError::NotReset)));
    }

    #[test]
    fn wrong_action_width_is_rejected() {
        let mut env = Env::new(quiet_config(), TrajectoryFamily::Circle, 1).unwrap();
        env.reset().unwrap();
        match env.step(&[0.0; 5]) {
            Err(EnvError::ActionDim { expected, got }) => {
                assert_eq!((expected, got), (4, 5));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    /// Greedy controller: command the full gripper offset toward the object
    /// (normalized by the step limit) and walk the base under it.
    fn chase_action(obs: &[f64]) -> [f64; 5] {
        let step = 0.05;
        [
            (obs[17] / step).clamp(-1.0, 1.0),
            (obs[18] / step).clamp(-1.0, 1.0),
            (obs[19] / step).clamp(-1.0, 1.0),
            (obs[17] / step).clamp(-1.0, 1.0),
            -1.0,
        ]
    }

    #[test]
    fn grasping_episode_ends_on_success_with_bonus() {
        let mut config = quiet_config();
        config.task = TaskKind::Grasping;
        let mut env = Env::new(config, TrajectoryFamily::HorizontalLine, 21).unwrap();
        let mut obs = env.reset_to(11).unwrap();
        let mut steps = 0;
        let mut succeeded = false;
        for _ in 0..200 {
            let mut action = chase_action(&obs);
            // Close once within reach.
            let d = (obs[17] * obs[17] + obs[18] * obs[18] + obs[19] * obs[19]).sqrt();
            if d < 0.04 {
                action[4] = 1.0;
            }
            let r = env.step(&action).unwrap();
            steps += 1;
            obs = r.observation;
            if r.info.grasp_success {
                assert!(r.reward > 49.0, "bonus missing from reward {}", r.reward);
                assert!(r.done);
                succeeded = true;
                break;
            }
        }
        assert!(succeeded, "greedy chase failed to grasp in {steps} steps");
        assert!(steps < 200);
    }

    #[test]
    fn tracking_episode_runs_full_length_while_chasing() {
        let mut env = Env::new(quiet_config(), TrajectoryFamily::Circle, 31).unwrap();
        let mut obs = env.reset_to(3).unwrap();
        let mut final_distance = f64::INFINITY;
        for _ in 0..200 {
            let a = chase_action(&obs);
            let r = env.step(&a[..4]).unwrap();
            obs = r.observation;
            final_distance = r.info.distance;
        }
        assert!(env.done());
        assert!(
            final_distance < 0.05,
            "greedy chase should track closely, got {final_distance}"
        );
    }

    #[test]
    fn randomized_dynamics_vary_across_episodes() {
        let mut env = Env::new(EnvConfig::default(), TrajectoryFamily::Circle, 77).unwrap();
        env.reset().unwrap();
        let first = env.state().dynamics;
        env.reset().unwrap();
        let second = env.state().dynamics;
        assert_ne!(first, second);
        let mut quiet = Env::new(quiet_config(), TrajectoryFamily::Circle, 77).unwrap();
        quiet.reset().unwrap();
        assert_eq!(quiet.state().dynamics, DynamicsParams::nominal());
    }

    #[test]
    fn point_mass_env_tracks_under_greedy_policy() {
        let mut env = PointMassEnv::new(TrajectoryFamily::Circle, 5);
        let mut obs = env.reset().unwrap();
        assert_eq!(obs.len(), POINT_MASS_OBS_DIM);
        let mut last = f64::INFINITY;
        for _ in 0..200 {
            let a = [
                (obs[6] / 0.05).clamp(-1.0, 1.0),
                (obs[7] / 0.05).clamp(-1.0, 1.0),
                (obs[8] / 0.05).clamp(-1.0, 1.0),
            ];
            let r = env.step(&a).unwrap();
            obs = r.observation;
            last = r.info.distance;
        }
        assert!(last < 0.02, "point mass should catch the goal, got {last}");
    }
}
