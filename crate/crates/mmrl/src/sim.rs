//! Kinematic mobile-manipulator simulator.
//!
//! The robot is a prismatic base sliding along the world x axis carrying a
//! 3-DOF arm: a pan joint about the vertical axis and a two-link planar
//! elbow. Control is incremental and purely kinematic: each step the policy
//! commands a Cartesian gripper displacement plus a base displacement, a
//! first-order actuation filter shapes the command, and inverse kinematics
//! snaps the gripper to the closest reachable pose. Dynamics randomization
//! perturbs the filter gain, lag, and per-subsystem speed scales, standing in
//! for the mass, friction, and damping variation of a physical platform.

use crate::geom::{dist, Vec3};
use crate::rng::{salt, stream};
use crate::traj::{goal_at, GoalSample, TrajectorySpec};
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use thiserror::Error;

/// Robot geometry and actuation limits.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RobotParams {
    /// Upper-arm link length, meters.
    pub link1_length: f64,
    /// Forearm link length, meters.
    pub link2_length: f64,
    /// Shoulder height above the base plane, meters.
    pub shoulder_height: f64,
    /// Joint angle limits `[lo, hi]` for pan, shoulder, elbow, radians.
    pub joint_limits: [[f64; 2]; 3],
    /// Reachable shell around the shoulder: closest and farthest gripper
    /// distance, meters.
    pub reach_min: f64,
    pub reach_max: f64,
    /// Largest base displacement per step, meters.
    pub base_step_max: f64,
    /// Largest commanded gripper displacement per step, meters.
    pub ee_step_max: f64,
    /// Grasp succeeds when the object is within this distance of a closing
    /// gripper, meters.
    pub grasp_radius: f64,
}

impl Default for RobotParams {
    fn default() -> Self {
        Self {
            link1_length: 0.425,
            link2_length: 0.392,
            shoulder_height: 0.5,
            joint_limits: [[-PI, PI], [-PI, PI], [0.0, PI]],
            reach_min: 0.30,
            reach_max: 0.80,
            base_step_max: 0.05,
            ee_step_max: 0.05,
            grasp_radius: 0.05,
        }
    }
}

impl RobotParams {
    pub fn validate(&self) -> Result<(), SimError> {
        let vals = [
            self.link1_length,
            self.link2_length,
            self.shoulder_height,
            self.reach_min,
            self.reach_max,
            self.base_step_max,
            self.ee_step_max,
            self.grasp_radius,
        ];
        if vals.iter().any(|v| !v.is_finite()) {
            return Err(SimError::InvalidParams("non-finite robot parameter"));
        }
        if self.link1_length <= 0.0 || self.link2_length <= 0.0 {
            return Err(SimError::InvalidParams("link lengths must be positive"));
        }
        if !(self.reach_min >= 0.0 && self.reach_min < self.reach_max) {
            return Err(SimError::InvalidParams(
                "reach shell must satisfy 0 <= reach_min < reach_max",
            ));
        }
        if self.reach_max > self.link1_length + self.link2_length {
            return Err(SimError::InvalidParams(
                "reach_max exceeds the stretched arm length",
            ));
        }
        if self.reach_min < (self.link1_length - self.link2_length).abs() {
            return Err(SimError::InvalidParams(
                "reach_min is inside the folded-arm dead zone",
            ));
        }
        if self.base_step_max <= 0.0 || self.ee_step_max <= 0.0 {
            return Err(SimError::InvalidParams("step limits must be positive"));
        }
        Ok(())
    }
}

/// Multiplicative actuation perturbations drawn per episode.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DynamicsParams {
    /// Scales every effective command.
    pub actuation_gain: f64,
    /// First-order filter coefficient in (0, 1]; 1 means no lag.
    pub lag_alpha: f64,
    /// Extra scale on base displacements.
    pub base_speed_scale: f64,
    /// Extra scale on gripper displacements.
    pub arm_speed_scale: f64,
}

impl DynamicsParams {
    /// Nominal actuation: unit gain, no lag, unit speed scales.
    pub fn nominal() -> Self {
        Self {
            actuation_gain: 1.0,
            lag_alpha: 1.0,
            base_speed_scale: 1.0,
            arm_speed_scale: 1.0,
        }
    }
}

impl Default for DynamicsParams {
    fn default() -> Self {
        Self::nominal()
    }
}

/// Uniform sampling ranges for [`DynamicsParams`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RandomizationRanges {
    pub actuation_gain: [f64; 2],
    pub lag_alpha: [f64; 2],
    pub base_speed_scale: [f64; 2],
    pub arm_speed_scale: [f64; 2],
}

impl Default for RandomizationRanges {
    fn default() -> Self {
        Self {
            actuation_gain: [0.8, 1.2],
            lag_alpha: [0.6, 1.0],
            base_speed_scale: [0.8, 1.2],
            arm_speed_scale: [0.8, 1.2],
        }
    }
}

impl RandomizationRanges {
    /// Ranges widened by `factor` about their midpoint. Gains and scales stay
    /// positive; `lag_alpha` stays within (0, 1].
    pub fn widened(&self, factor: f64) -> Self {
        fn widen(range: [f64; 2], factor: f64, floor: f64, ceil: f64) -> [f64; 2] {
            let mid = 0.5 * (range[0] + range[1]);
            let half = 0.5 * (range[1] - range[0]) * factor;
            [(mid - half).max(floor), (mid + half).min(ceil)]
        }
        Self {
            actuation_gain: widen(self.actuation_gain, factor, 0.05, f64::INFINITY),
            lag_alpha: widen(self.lag_alpha, factor, 0.05, 1.0),
            base_speed_scale: widen(self.base_speed_scale, factor, 0.05, f64::INFINITY),
            arm_speed_scale: widen(self.arm_speed_scale, factor, 0.05, f64::INFINITY),
        }
    }
}

/// Draws episode dynamics from `ranges`. The draw order (gain, lag, base
/// scale, arm scale) is frozen; identical seeds give identical params.
pub fn randomize_dynamics(rng_seed: u64, ranges: &RandomizationRanges) -> DynamicsParams {
    let mut rng = stream(rng_seed, salt::DYNAMICS);
    let mut draw = |range: [f64; 2]| range[0] + (range[1] - range[0]) * rng.random::<f64>();
    DynamicsParams {
        actuation_gain: draw(ranges.actuation_gain),
        lag_alpha: draw(ranges.lag_alpha),
        base_speed_scale: draw(ranges.base_speed_scale),
        arm_speed_scale: draw(ranges.arm_speed_scale),
    }
}

/// Full simulator state. Cheap to copy; stepping functions take the previous
/// state by reference and return the next.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimState {
    pub base_x: f64,
    /// Joint angles: pan, shoulder, elbow.
    pub q: [f64; 3],
    pub qd_base: f64,
    pub qd: [f64; 3],
    pub gripper_pos: Vec3,
    pub gripper_closed: bool,
    /// Gripper command state on the previous step, for grasp-edge detection.
    pub prev_gripper_closed: bool,
    pub object_pos: Vec3,
    pub object_vel: Vec3,
    pub object_grasped: bool,
    /// Filtered effective command from the previous step (dx, dy, dz, dbase).
    pub prev_command: [f64; 4],
    pub step_index: u32,
    pub dynamics: DynamicsParams,
    /// True when the last gripper target had to be clamped to the reach
    /// shell. Diagnostics only.
    pub clamped: bool,
}

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid robot parameters: {0}")]
    InvalidParams(&'static str),
}

/// Forward kinematics: gripper position for joint angles `q` and base
/// position `base_x`.
pub fn fk(q: [f64; 3], base_x: f64, params: &RobotParams) -> Vec3 {
    let radial = params.link1_length * q[1].cos() + params.link2_length * (q[1] + q[2]).cos();
    let height = params.link1_length * q[1].sin() + params.link2_length * (q[1] + q[2]).sin();
    [
        base_x + radial * q[0].cos(),
        radial * q[0].sin(),
        params.shoulder_height + height,
    ]
}

/// Inverse kinematics result. `Unreachable` carries the closest reachable
/// point (the radial projection of the target onto the reach shell) along
/// with the joint solution for it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum IkResult {
    Reachable([f64; 3]),
    Unreachable { clamped: Vec3, joints: [f64; 3] },
}

impl IkResult {
    pub fn joints(&self) -> [f64; 3] {
        match *self {
            IkResult::Reachable(q) => q,
            IkResult::Unreachable { joints, .. } => joints,
        }
    }

    pub fn is_clamped(&self) -> bool {
        matches!(self, IkResult::Unreachable { .. })
    }
}

/// Closed-form inverse kinematics on the elbow-down branch (elbow angle in
/// `[0, pi]`). Targets outside the reach shell are projected radially onto it
/// and reported as `Unreachable`.
pub fn ik(target: Vec3, base_x: f64, params: &RobotParams) -> IkResult {
    let shoulder = [base_x, 0.0, params.shoulder_height];
    let delta = [
        target[0] - shoulder[0],
        target[1] - shoulder[1],
        target[2] - shoulder[2],
    ];
    let r = (delta[0] * delta[0] + delta[1] * delta[1] + delta[2] * delta[2]).sqrt();
    if r < params.reach_min || r > params.reach_max {
        let r_clamped = r.clamp(params.reach_min, params.reach_max);
        let dir = if r > 0.0 {
            [delta[0] / r, delta[1] / r, delta[2] / r]
        } else {
            [1.0, 0.0, 0.0]
        };
        let clamped = [
            shoulder[0] + r_clamped * dir[0],
            shoulder[1] + r_clamped * dir[1],
            shoulder[2] + r_clamped * dir[2],
        ];
        let joints = solve_in_shell(clamped, shoulder, params);
        return IkResult::Unreachable { clamped, joints };
    }
    IkResult::Reachable(solve_in_shell(target, shoulder, params))
}

fn solve_in_shell(target: Vec3, shoulder: Vec3, params: &RobotParams) -> [f64; 3] {
    let dx = target[0] - shoulder[0];
    let dy = target[1] - shoulder[1];
    let dz = target[2] - shoulder[2];
    let rho = (dx * dx + dy * dy).sqrt();
    let pan = if rho > 0.0 { dy.atan2(dx) } else { 0.0 };
    let l1 = params.link1_length;
    let l2 = params.link2_length;
    let r2 = rho * rho + dz * dz;
    // Law of cosines; the clamp absorbs rounding at the shell boundary.
    let d = ((r2 - l1 * l1 - l2 * l2) / (2.0 * l1 * l2)).clamp(-1.0, 1.0);
    let elbow = d.acos();
    let shoulder_angle = dz.atan2(rho) - (l2 * elbow.sin()).atan2(l1 + l2 * elbow.cos());
    [pan, shoulder_angle, elbow]
}

/// Initial state: base at zero, arm posed at `home_target`, object unset.
pub fn init_state(
    params: &RobotParams,
    dynamics: DynamicsParams,
    home_target: Vec3,
) -> Result<SimState, SimError> {
    params.validate()?;
    let solved = ik(home_target, 0.0, params);
    let q = solved.joints();
    let gripper_pos = fk(q, 0.0, params);
    Ok(SimState {
        base_x: 0.0,
        q,
        qd_base: 0.0,
        qd: [0.0; 3],
        gripper_pos,
        gripper_closed: false,
        prev_gripper_closed: false,
        object_pos: [0.0; 3],
        object_vel: [0.0; 3],
        object_grasped: false,
        prev_command: [0.0; 4],
        step_index: 0,
        dynamics,
        clamped: solved.is_clamped(),
    })
}

/// Applies one control step. `control` holds normalized commands in
/// `[-1, 1]`: gripper displacement (x, y, z) and base displacement.
/// `gripper_cmd` is the normalized open/close command for grasping tasks
/// (`> 0` closes); `None` keeps the gripper untouched (tracking tasks).
///
/// The commanded displacements are scaled to meters, filtered through the
/// first-order actuation model, and resolved with IK; joint velocities are
/// exact step differences over `dt`. A grasped object keeps the gripper
/// closed regardless of the command.
pub fn apply_action(
    state: &SimState,
    control: [f64; 4],
    gripper_cmd: Option<f64>,
    params: &RobotParams,
    dt: f64,
) -> SimState {
    let dp = &state.dynamics;
    let cmd = [
        control[0] * params.ee_step_max * dp.arm_speed_scale,
        control[1] * params.ee_step_max * dp.arm_speed_scale,
        control[2] * params.ee_step_max * dp.arm_speed_scale,
        control[3] * params.base_step_max * dp.base_speed_scale,
    ];
    let mut effective = [0.0; 4];
    for i in 0..4 {
        effective[i] = dp.lag_alpha * dp.actuation_gain * cmd[i]
            + (1.0 - dp.lag_alpha) * state.prev_command[i];
    }
    let base_x = state.base_x + effective[3];
    let target = [
        state.gripper_pos[0] + effective[0],
        state.gripper_pos[1] + effective[1],
        state.gripper_pos[2] + effective[2],
    ];
    let solved = ik(target, base_x, params);
    let q = solved.joints();
    // FK of the solved joints, not the raw target, so the stored gripper pose
    // is exactly consistent with the joint state.
    let gripper_pos = fk(q, base_x, params);
    let qd = [
        (q[0] - state.q[0]) / dt,
        (q[1] - state.q[1]) / dt,
        (q[2] - state.q[2]) / dt,
    ];
    let gripper_closed = match gripper_cmd {
        _ if state.object_grasped => true,
        Some(g) => g > 0.0,
        None => state.gripper_closed,
    };
    SimState {
        base_x,
        q,
        qd_base: (base_x - state.base_x) / dt,
        qd,
        gripper_pos,
        gripper_closed,
        prev_gripper_closed: state.gripper_closed,
        object_pos: state.object_pos,
        object_vel: state.object_vel,
        object_grasped: state.object_grasped,
        prev_command: effective,
        step_index: state.step_index + 1,
        dynamics: state.dynamics,
        clamped: solved.is_clamped(),
    }
}

/// Moves the object: a grasped object rides the gripper, otherwise it follows
/// its goal sample. Velocities are backward differences over `dt`.
pub fn apply_object_goal(state: &SimState, goal: GoalSample, dt: f64) -> SimState {
    let mut next = *state;
    if state.object_grasped {
        next.object_pos = state.gripper_pos;
        next.object_vel = [
            (next.object_pos[0] - state.object_pos[0]) / dt,
            (next.object_pos[1] - state.object_pos[1]) / dt,
            (next.object_pos[2] - state.object_pos[2]) / dt,
        ];
    } else {
        next.object_pos = goal.position;
        next.object_vel = goal.velocity;
    }
    next
}

/// Advances the free object along `spec` using the state's own step index.
pub fn step_object(state: &SimState, spec: &TrajectorySpec, dt: f64) -> SimState {
    apply_object_goal(state, goal_at(spec, state.step_index, dt), dt)
}

/// True on the step where a grasp first succeeds: the gripper transitioned
/// from open to closed with the object inside the grasp radius.
pub fn check_grasp(state: &SimState, params: &RobotParams) -> bool {
    state.gripper_closed
        && !state.prev_gripper_closed
        && dist(state.object_pos, state.gripper_pos) <= params.grasp_radius
}
