//! Numerical cross-checks shared by the `selftest` command and the
//! acceptance suite.
//!
//! Each check measures a worst-case error against an oracle computed by an
//! independent route: generalized advantage estimation against a direct
//! double-sum, analytic policy gradients against central finite
//! differences, inverse kinematics against forward kinematics, goal
//! stepping against the constant-chord contract, and the reward and
//! surrogate formulas against hand-computed values. Callers compare the
//! measured values to their own pinned tolerances; [`run_all`] applies the
//! defaults listed on each function.

use crate::env::tracking_reward;
use crate::geom::dist;
use crate::net::PolicyParams;
use crate::ppo::rollout::{collect_rollout_sequential, EnvSlot};
use crate::ppo::update::{clipped_surrogate, loss_and_grads, ppo_loss, UpdateConfig};
use crate::ppo::{compute_gae, RolloutBatch};
use crate::rng::{mix, salt, stream};
use crate::sim::{fk, ik, IkResult, RobotParams};
use crate::traj::{goal_at, sample_spec, sine_advance, SampleRanges, TrajectoryFamily, TrajectorySpec};
use rand::Rng;

/// One check outcome: the measured worst-case error and the default
/// tolerance it is held to.
#[derive(Debug, Clone)]
pub struct Check {
    pub name: &'static str,
    pub value: f64,
    pub tolerance: f64,
    pub detail: String,
}

impl Check {
    pub fn passed(&self) -> bool {
        self.value.is_finite() && self.value <= self.tolerance
    }
}

/// Worst absolute advantage/return error of [`compute_gae`] against a
/// direct double-sum evaluation over random sequences with random episode
/// cuts. Default tolerance 1e-10.
pub fn gae_against_brute_force(sequences: usize, max_len: usize, seed: u64) -> f64 {
    let mut rng = stream(seed, salt::EVAL);
    let mut worst: f64 = 0.0;
    for _ in 0..sequences {
        let t_len = rng.random_range(1..=max_len);
        let rewards: Vec<f64> = (0..t_len).map(|_| rng.random::<f64>() * 4.0 - 2.0).collect();
        let values: Vec<f64> = (0..t_len).map(|_| rng.random::<f64>() * 4.0 - 2.0).collect();
        let dones: Vec<bool> = (0..t_len).map(|_| rng.random::<f64>() < 0.15).collect();
        let bootstrap = rng.random::<f64>() * 4.0 - 2.0;
        let gamma = 0.9 + 0.1 * rng.random::<f64>();
        let lambda = 0.8 + 0.2 * rng.random::<f64>();
        let (adv, ret) = compute_gae(&rewards, &values, &dones, bootstrap, gamma, lambda);
        for t in 0..t_len {
            // A_t = sum_k delta_k prod_{j=t..k-1} gamma lambda (1 - done_j),
            // with the product cut at the first episode end.
            let mut acc = 0.0;
            let mut coef = 1.0;
            for k in t..t_len {
                let not_done = if dones[k] { 0.0 } else { 1.0 };
                let next_value = if k + 1 < t_len { values[k + 1] } else { bootstrap };
                let delta = rewards[k] + gamma * not_done * next_value - values[k];
                acc += coef * delta;
                coef *= gamma * lambda * not_done;
                if coef == 0.0 {
                    break;
                }
            }
            worst = worst.max((adv[t] - acc).abs());
            worst = worst.max((ret[t] - (acc + values[t])).abs());
        }
    }
    worst
}

fn probe_batch(seed: u64) -> (PolicyParams, RolloutBatch) {
    let params = PolicyParams::init(9, 3, &[6, 6], seed);
    let mut slots: Vec<EnvSlot> = (0..2)
        .map(|i| {
            let family = TrajectoryFamily::BASIC[(i + 2) % TrajectoryFamily::BASIC.len()];
            let env = crate::env::PointMassEnv::new(family, mix(seed, i as u64));
            EnvSlot::new(Box::new(env), seed, i)
        })
        .collect();
    let batch = collect_rollout_sequential(&params, &mut slots, 30).expect("point mass rollout");
    (params, batch)
}

/// Worst relative error between the analytic PPO gradient and a central
/// finite difference of the scalar loss, probed across every parameter
/// block. Default tolerance 1e-5.
pub fn policy_gradient_against_fd(seed: u64) -> f64 {
    let (params, batch) = probe_batch(seed);
    let mut rng = stream(mix(seed, 1), salt::EVAL);
    let n = batch.total_steps();
    let advantages: Vec<f64> = (0..n).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect();
    let returns: Vec<f64> = (0..n).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect();
    let cfg = UpdateConfig {
        clip_eps: 0.2,
        value_coef: 0.5,
        entropy_coef: 0.01,
        grad_clip_norm: f64::INFINITY,
        epochs: 1,
        minibatch_size: n,
    };
    let rows: Vec<usize> = (0..n).collect();
    let (_, grads) = loss_and_grads(&params, &batch, &rows, &advantages, &returns, &cfg);
    let h = 1e-5;
    let mut worst: f64 = 0.0;
    for (b, block) in grads.blocks().iter().enumerate() {
        let stride = (block.len() / 9).max(1);
        for j in (0..block.len()).step_by(stride) {
            let mut probe = params.clone();
            probe.blocks_mut()[b][j] += h;
            let up = ppo_loss(&probe, &batch, &rows, &advantages, &returns, &cfg);
            probe.blocks_mut()[b][j] -= 2.0 * h;
            let down = ppo_loss(&probe, &batch, &rows, &advantages, &returns, &cfg);
            let fd = (up - down) / (2.0 * h);
            let denom = fd.abs().max(block[j].abs()).max(1e-6);
            worst = worst.max((fd - block[j]).abs() / denom);
        }
    }
    worst
}

/// Worst deviation of the clipped surrogate from hand-computed values on
/// the fixed probe batch (ratios 0.7, 1.0, 1.4 against advantages -1, 2, 1
/// at clip 0.2, expected objectives -0.8, 2.0, 1.2 with mean 0.8).
/// Default tolerance 1e-12.
pub fn surrogate_against_hand_values() -> f64 {
    let cases = [
        (0.7, -1.0, -0.8),
        (1.0, 2.0, 2.0),
        (1.4, 1.0, 1.2),
    ];
    let mut worst: f64 = 0.0;
    let mut mean = 0.0;
    for (ratio, adv, expected) in cases {
        let got = clipped_surrogate(ratio, adv, 0.2);
        worst = worst.max((got - expected).abs());
        mean += got / cases.len() as f64;
    }
    worst.max((mean - 0.8).abs())
}

/// Reward-shape violations on a dense distance grid: the value at zero,
/// the far-field identity `r(d) = -d` beyond one meter, and strict
/// monotonic decrease. Monotonicity violations report as infinity.
/// Default tolerance 1e-12.
pub fn reward_shape(grid: usize) -> f64 {
    let mut worst = (tracking_reward(0.0) - 1.0).abs();
    let mut prev = tracking_reward(0.0);
    for i in 1..=grid {
        let d = 2.0 * i as f64 / grid as f64;
        let r = tracking_reward(d);
        if r >= prev {
            return f64::INFINITY;
        }
        prev = r;
        if d >= 1.0 {
            worst = worst.max((r + d).abs());
        }
    }
    worst
}

/// Forward-of-inverse kinematics outcome over a target sweep.
#[derive(Debug, Clone, Copy)]
pub struct KinematicsOutcome {
    /// Worst `|fk(ik(target)) - target|` over reachable targets, meters.
    pub reachable_error: f64,
    /// Worst deviation of clamped solutions from the reach shell, meters.
    pub clamp_error: f64,
    pub reachable: usize,
    pub clamped: usize,
}

/// Sweeps random targets around the shoulder, both inside and outside the
/// reach shell. Default tolerance 1e-9 on both error fields.
pub fn kinematics_consistency(samples: usize, seed: u64) -> KinematicsOutcome {
    let params = RobotParams::default();
    let mut rng = stream(seed, salt::EVAL);
    let mut out = KinematicsOutcome {
        reachable_error: 0.0,
        clamp_error: 0.0,
        reachable: 0,
        clamped: 0,
    };
    for _ in 0..samples {
        let base_x = rng.random::<f64>() * 2.0 - 1.0;
        let target = [
            base_x + rng.random::<f64>() * 2.4 - 1.2,
            rng.random::<f64>() * 2.4 - 1.2,
            params.shoulder_height + rng.random::<f64>() * 2.4 - 1.2,
        ];
        let shoulder = [base_x, 0.0, params.shoulder_height];
        match ik(target, base_x, &params) {
            IkResult::Reachable(q) => {
                out.reachable += 1;
                out.reachable_error = out.reachable_error.max(dist(fk(q, base_x, &params), target));
            }
            IkResult::Unreachable { clamped, joints } => {
                out.clamped += 1;
                let r_target = dist(target, shoulder);
                let shell = r_target.clamp(params.reach_min, params.reach_max);
                let err = (dist(clamped, shoulder) - shell).abs();
                let fk_err = dist(fk(joints, base_x, &params), clamped);
                out.clamp_error = out.clamp_error.max(err.max(fk_err));
            }
        }
    }
    out
}

/// Constant-chord stepping outcome over sampled specs.
#[derive(Debug, Clone, Copy)]
pub struct DisplacementOutcome {
    /// Worst `|chord - speed dt|` over non-event steps, meters.
    pub chord_error: f64,
    /// Worst amount an event-step chord exceeded `speed dt`, meters.
    pub event_excess: f64,
    pub steps_checked: usize,
    pub event_steps: usize,
}

/// Number of boundary reflections between an unfolded coordinate and its
/// folded image.
fn fold_count(x: f64, lo: f64, hi: f64) -> i64 {
    ((x - lo) / (hi - lo)).floor() as i64
}

/// Event predicate: may step `k -> k+1` legitimately displace less than
/// `speed * dt`? Recomputed from the unfolded geometry, independent of the
/// position formulas' folding.
fn is_event_step(spec: &TrajectorySpec, sine_u: (f64, f64), step: u32, dt: f64) -> bool {
    match spec.family {
        TrajectoryFamily::HorizontalLine | TrajectoryFamily::VerticalLine => (0..3).any(|i| {
            if spec.direction[i] == 0.0 {
                return false;
            }
            let a = spec.start[i] + spec.speed * (step as f64 * dt) * spec.direction[i];
            let b = spec.start[i] + spec.speed * ((step + 1) as f64 * dt) * spec.direction[i];
            fold_count(a, spec.bounds.lo[i], spec.bounds.hi[i])
                != fold_count(b, spec.bounds.lo[i], spec.bounds.hi[i])
        }),
        TrajectoryFamily::Circle => false,
        TrajectoryFamily::Sine => {
            let (ua, ub) = sine_u;
            (0..2).any(|i| {
                if spec.direction[i] == 0.0 {
                    return false;
                }
                let a = spec.start[i] + ua * spec.direction[i];
                let b = spec.start[i] + ub * spec.direction[i];
                fold_count(a, spec.bounds.lo[i], spec.bounds.hi[i])
                    != fold_count(b, spec.bounds.lo[i], spec.bounds.hi[i])
            })
        }
        TrajectoryFamily::Square => {
            let arc = spec.speed * dt;
            let ea = (step as f64 * arc / spec.side_length).floor();
            let eb = ((step + 1) as f64 * arc / spec.side_length).floor();
            ea != eb
        }
        TrajectoryFamily::Helix => {
            let a = spec.start[2] + spec.axis_sign * spec.vertical_speed * (step as f64 * dt);
            let b = spec.start[2] + spec.axis_sign * spec.vertical_speed * ((step + 1) as f64 * dt);
            fold_count(a, spec.bounds.lo[2], spec.bounds.hi[2])
                != fold_count(b, spec.bounds.lo[2], spec.bounds.hi[2])
        }
        TrajectoryFamily::RandomComposite => unreachable!("basic families only"),
    }
}

/// Verifies the constant-chord contract on `specs_per_family` fresh specs
/// of every basic family, `steps` steps each, inside the default
/// workspace. Default tolerances: 1e-6 on `chord_error`, 1e-9 on
/// `event_excess`.
pub fn displacement_invariant(specs_per_family: usize, steps: u32, seed: u64) -> DisplacementOutcome {
    let bounds = crate::geom::Aabb::new([0.9, -0.45, 0.15], [2.1, 0.45, 0.85]);
    let ranges = SampleRanges::default();
    let dt = 0.04;
    let mut out = DisplacementOutcome {
        chord_error: 0.0,
        event_excess: 0.0,
        steps_checked: 0,
        event_steps: 0,
    };
    for family in TrajectoryFamily::BASIC {
        for i in 0..specs_per_family {
            let spec = sample_spec(family, mix(seed, i as u64), &bounds, &ranges, dt)
                .expect("default workspace fits every family");
            let expected = spec.speed * dt;
            let mut prev = goal_at(&spec, 0, dt).position;
            let mut u = 0.0;
            for step in 0..steps {
                let next = goal_at(&spec, step + 1, dt).position;
                let chord = dist(next, prev);
                let u_next = if family == TrajectoryFamily::Sine {
                    sine_advance(&spec, u, dt)
                } else {
                    u
                };
                out.steps_checked += 1;
                if is_event_step(&spec, (u, u_next), step, dt) {
                    out.event_steps += 1;
                    out.event_excess = out.event_excess.max(chord - expected);
                } else {
                    out.chord_error = out.chord_error.max((chord - expected).abs());
                }
                prev = next;
                u = u_next;
            }
        }
    }
    out
}

/// Runs every check with its default tolerance.
pub fn run_all() -> Vec<Check> {
    let mut checks = Vec::new();
    checks.push(Check {
        name: "gae_brute_force",
        value: gae_against_brute_force(500, 50, 101),
        tolerance: 1e-10,
        detail: "500 random sequences, length <= 50".to_string(),
    });
    checks.push(Check {
        name: "policy_gradient_fd",
        value: policy_gradient_against_fd(102),
        tolerance: 1e-5,
        detail: "central differences, h = 1e-5".to_string(),
    });
    checks.push(Check {
        name: "surrogate_hand_values",
        value: surrogate_against_hand_values(),
        tolerance: 1e-12,
        detail: "ratios 0.7 / 1.0 / 1.4, clip 0.2".to_string(),
    });
    checks.push(Check {
        name: "reward_shape",
        value: reward_shape(10_000),
        tolerance: 1e-12,
        detail: "value at 0, far field, monotonicity".to_string(),
    });
    let kin = kinematics_consistency(10_000, 103);
    checks.push(Check {
        name: "fk_of_ik",
        value: kin.reachable_error,
        tolerance: 1e-9,
        detail: format!("{} reachable targets", kin.reachable),
    });
    checks.push(Check {
        name: "ik_shell_clamp",
        value: kin.clamp_error,
        tolerance: 1e-9,
        detail: format!("{} clamped targets", kin.clamped),
    });
    let disp = displacement_invariant(20, 300, 104);
    checks.push(Check {
        name: "constant_chord",
        value: disp.chord_error,
        tolerance: 1e-6,
        detail: format!(
            "{} steps, {} event steps",
            disp.steps_checked, disp.event_steps
        ),
    });
    checks.push(Check {
        name: "event_chord_bound",
        value: disp.event_excess,
        tolerance: 1e-9,
        detail: "event chords never exceed speed * dt".to_string(),
    });
    checks
}
