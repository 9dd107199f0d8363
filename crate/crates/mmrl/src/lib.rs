//! Multi-task reinforcement-learning suite for a kinematic mobile manipulator.
//!
//! The crate trains and evaluates PPO policies on two task groups: dynamic
//! trajectory tracking (drive the gripper along a moving goal) and dynamic
//! object grasping (intercept and grab an object that rides a trajectory).
//! Goals are drawn from six parameterized trajectory families plus a
//! random-composite generator, with optional noise injection and dynamics
//! randomization for sim-to-real style robustness.
//!
//! Everything is deterministic given a seed: trajectory sampling, dynamics
//! draws, noise streams, network init, rollouts, and updates all derive from
//! named RNG streams, and parallel execution is bitwise-identical to the
//! sequential fallback (`--no-default-features` disables the `parallel`
//! feature).

pub mod checkpoint;
pub mod cli;
pub mod config;
pub mod env;
pub mod eval;
pub mod geom;
pub mod net;
pub mod ppo;
pub mod report;
pub mod rng;
pub mod selftest;
pub mod sim;
pub mod traj;
