//! Parameterized goal trajectories.
//!
//! Six basic families (horizontal line, vertical line, circle, sine, square,
//! helix) plus a random composite that chains basic segments. A trajectory is
//! described by a [`TrajectorySpec`] sampled from per-family parameter ranges;
//! [`goal_at`] evaluates the goal pose at any integer step and [`Cursor`]
//! walks the same sequence incrementally (bitwise-identical output).
//!
//! Stepping is constant-chord: the straight-line displacement between
//! consecutive steps equals `speed * dt` except at documented event steps
//! (boundary folds and square corners), where it is shorter. Trajectories
//! that would leave the workspace box are folded back in by specular
//! reflection, so every goal stays inside `bounds` forever.

use crate::geom::{add, fold_reflect, scale, Aabb, Vec3};
use crate::rng::{salt, stream};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use thiserror::Error;

/// Margin kept between sampled geometry and the workspace faces, in meters.
pub const MARGIN: f64 = 1e-3;

/// Composite trajectories are padded to cover at least this many steps.
pub const MIN_COMPOSITE_STEPS: u32 = 200;

/// Convergence threshold on the squared-chord residual of the sine stepper.
const SINE_TOL: f64 = 1e-14;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TrajectoryFamily {
    HorizontalLine,
    VerticalLine,
    Circle,
    Sine,
    Square,
    Helix,
    RandomComposite,
}

impl TrajectoryFamily {
    /// The six basic families, in one-hot index order.
    pub const BASIC: [TrajectoryFamily; 6] = [
        TrajectoryFamily::HorizontalLine,
        TrajectoryFamily::VerticalLine,
        TrajectoryFamily::Circle,
        TrajectoryFamily::Sine,
        TrajectoryFamily::Square,
        TrajectoryFamily::Helix,
    ];

    pub fn name(self) -> &'static str {
        match self {
            TrajectoryFamily::HorizontalLine => "horizontal_line",
            TrajectoryFamily::VerticalLine => "vertical_line",
            TrajectoryFamily::Circle => "circle",
            TrajectoryFamily::Sine => "sine",
            TrajectoryFamily::Square => "square",
            TrajectoryFamily::Helix => "helix",
            TrajectoryFamily::RandomComposite => "random_composite",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        let all = [
            TrajectoryFamily::HorizontalLine,
            TrajectoryFamily::VerticalLine,
            TrajectoryFamily::Circle,
            TrajectoryFamily::Sine,
            TrajectoryFamily::Square,
            TrajectoryFamily::Helix,
            TrajectoryFamily::RandomComposite,
        ];
        all.into_iter().find(|f| f.name() == name)
    }

    /// Index into the one-hot task encoding; `None` for the composite.
    pub fn one_hot_index(self) -> Option<usize> {
        Self::BASIC.iter().position(|&f| f == self)
    }
}

/// Per-family parameter sampling ranges (`[lo, hi]`, meters and m/s).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SampleRanges {
    pub speed: [f64; 2],
    pub radius: [f64; 2],
    pub side_length: [f64; 2],
    pub amplitude: [f64; 2],
    pub wavelength: [f64; 2],
    pub vertical_speed: [f64; 2],
}

impl Default for SampleRanges {
    fn default() -> Self {
        Self {
            speed: [0.05, 0.30],
            radius: [0.10, 0.40],
            side_length: [0.20, 0.50],
            amplitude: [0.10, 0.30],
            wavelength: [0.50, 1.50],
            vertical_speed: [0.02, 0.10],
        }
    }
}

/// One segment of a composite trajectory. `spec.start` is pinned to the end
/// point of the previous segment, so the composite is continuous.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompositeSegment {
    pub steps: u32,
    pub spec: TrajectorySpec,
}

/// A fully-instantiated trajectory.
///
/// Field use varies by family:
/// - `direction`: travel direction for lines and sine (unit, z = 0 for
///   horizontal travel); radial unit from center to start for circle (x-z
///   plane) and helix (x-y plane); signed x edge direction for square.
/// - `turn_sign`: +-1 angular direction for circle and helix.
/// - `axis_sign`: +-1 initial vertical direction for helix, signed z edge
///   for square.
/// - `radius`, `side_length`, `amplitude`, `wavelength`, `vertical_speed`:
///   family-specific sizes; unused fields are zero.
///
/// Composite specs keep `segments` non-empty and use `speed` for the maximum
/// segment speed. Composite geometry is bound to the `dt` it was sampled
/// with: evaluating it at a different `dt` breaks segment continuity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectorySpec {
    pub family: TrajectoryFamily,
    pub start: Vec3,
    pub speed: f64,
    pub direction: Vec3,
    pub turn_sign: f64,
    pub axis_sign: f64,
    pub radius: f64,
    pub side_length: f64,
    pub amplitude: f64,
    pub wavelength: f64,
    pub vertical_speed: f64,
    pub bounds: Aabb,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub segments: Vec<CompositeSegment>,
}

impl TrajectorySpec {
    fn blank(family: TrajectoryFamily, start: Vec3, speed: f64, bounds: Aabb, seed: u64) -> Self {
        Self {
            family,
            start,
            speed,
            direction: [1.0, 0.0, 0.0],
            turn_sign: 1.0,
            axis_sign: 1.0,
            radius: 0.0,
            side_length: 0.0,
            amplitude: 0.0,
            wavelength: 0.0,
            vertical_speed: 0.0,
            bounds,
            seed,
            segments: Vec::new(),
        }
    }

    /// Largest per-step displacement this spec can produce (`speed * dt` for
    /// basic families; composites store the max segment speed in `speed`).
    pub fn max_step_displacement(&self, dt: f64) -> f64 {
        self.speed * dt
    }
}

/// Goal pose at one step: position plus backward finite-difference velocity
/// (zero at step 0).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GoalSample {
    pub position: Vec3,
    pub velocity: Vec3,
}

#[derive(Debug, Error)]
pub enum TrajError {
    #[error("workspace bounds degenerate on {axis} axis: extent {extent:.6} m")]
    DegenerateBounds { axis: char, extent: f64 },
    #[error(
        "workspace too small for {family} on {axis} axis: need at least {need:.3} m, have {have:.3} m"
    )]
    WorkspaceTooSmall {
        family: &'static str,
        axis: char,
        need: f64,
        have: f64,
    },
}

const AXES: [char; 3] = ['x', 'y', 'z'];

fn validate_bounds(bounds: &Aabb) -> Result<(), TrajError> {
    for i in 0..3 {
        let extent = bounds.extent(i);
        if !(extent > 0.0) || !extent.is_finite() {
            return Err(TrajError::DegenerateBounds {
                axis: AXES[i],
                extent,
            });
        }
    }
    Ok(())
}

/// Uniform draw on `[lo, hi)`; returns `lo` without consuming the stream when
/// the interval is degenerate.
fn uniform(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    if lo >= hi {
        return lo;
    }
    lo + (hi - lo) * rng.random::<f64>()
}

fn coin_sign(rng: &mut ChaCha8Rng) -> f64 {
    if rng.random::<bool>() {
        1.0
    } else {
        -1.0
    }
}

fn uniform_point(rng: &mut ChaCha8Rng, b: &Aabb) -> Vec3 {
    let x = uniform(rng, b.lo[0], b.hi[0]);
    let y = uniform(rng, b.lo[1], b.hi[1]);
    let z = uniform(rng, b.lo[2], b.hi[2]);
    [x, y, z]
}

/// Samples a trajectory of the given family. Identical `(family, rng_seed)`
/// pairs produce identical specs. `dt` only affects `RandomComposite`, whose
/// segment chain is laid out in step units.
pub fn sample_spec(
    family: TrajectoryFamily,
    rng_seed: u64,
    bounds: &Aabb,
    ranges: &SampleRanges,
    dt: f64,
) -> Result<TrajectorySpec, TrajError> {
    if family == TrajectoryFamily::RandomComposite {
        return sample_composite(rng_seed, bounds, ranges, dt);
    }
    validate_bounds(bounds)?;
    let idx = family.one_hot_index().unwrap_or(0) as u64;
    let mut rng = stream(rng_seed, salt::SPEC.wrapping_add(idx));
    let speed = uniform(&mut rng, ranges.speed[0], ranges.speed[1]);
    let inner = bounds.shrink(MARGIN);
    let mut spec = match family {
        TrajectoryFamily::HorizontalLine => {
            let psi = uniform(&mut rng, 0.0, 2.0 * PI);
            let start = uniform_point(&mut rng, &inner);
            let mut s = TrajectorySpec::blank(family, start, speed, *bounds, rng_seed);
            s.direction = [psi.cos(), psi.sin(), 0.0];
            s
        }
        TrajectoryFamily::VerticalLine => {
            let sign = coin_sign(&mut rng);
            let start = uniform_point(&mut rng, &inner);
            let mut s = TrajectorySpec::blank(family, start, speed, *bounds, rng_seed);
            s.direction = [0.0, 0.0, sign];
            s
        }
        TrajectoryFamily::Circle => {
            let radius = sample_fit_radius(&mut rng, family, bounds, ranges.radius, [0, 2])?;
            let cx = uniform(&mut rng, bounds.lo[0] + MARGIN + radius, bounds.hi[0] - MARGIN - radius);
            let cy = uniform(&mut rng, inner.lo[1], inner.hi[1]);
            let cz = uniform(&mut rng, bounds.lo[2] + MARGIN + radius, bounds.hi[2] - MARGIN - radius);
            let theta0 = uniform(&mut rng, 0.0, 2.0 * PI);
            let dir = [theta0.cos(), 0.0, theta0.sin()];
            let start = [cx + radius * dir[0], cy, cz + radius * dir[2]];
            let mut s = TrajectorySpec::blank(family, start, speed, *bounds, rng_seed);
            s.direction = dir;
            s.turn_sign = coin_sign(&mut rng);
            s.radius = radius;
            s
        }
        TrajectoryFamily::Sine => {
            let amplitude = sample_fit_radius(&mut rng, family, bounds, ranges.amplitude, [2, 2])?;
            let wavelength = uniform(&mut rng, ranges.wavelength[0], ranges.wavelength[1]);
            let psi = uniform(&mut rng, 0.0, 2.0 * PI);
            let x = uniform(&mut rng, inner.lo[0], inner.hi[0]);
            let y = uniform(&mut rng, inner.lo[1], inner.hi[1]);
            let z = uniform(
                &mut rng,
                bounds.lo[2] + MARGIN + amplitude,
                bounds.hi[2] - MARGIN - amplitude,
            );
            let mut s = TrajectorySpec::blank(family, [x, y, z], speed, *bounds, rng_seed);
            s.direction = [psi.cos(), psi.sin(), 0.0];
            s.amplitude = amplitude;
            s.wavelength = wavelength;
            s
        }
        TrajectoryFamily::Square => {
            let side = sample_fit_side(&mut rng, bounds, ranges.side_length)?;
            let sx = coin_sign(&mut rng);
            let sz = coin_sign(&mut rng);
            let x = corner_coord(&mut rng, bounds.lo[0], bounds.hi[0], side, sx);
            let z = corner_coord(&mut rng, bounds.lo[2], bounds.hi[2], side, sz);
            let y = uniform(&mut rng, inner.lo[1], inner.hi[1]);
            let mut s = TrajectorySpec::blank(TrajectoryFamily::Square, [x, y, z], speed, *bounds, rng_seed);
            s.direction = [sx, 0.0, 0.0];
            s.axis_sign = sz;
            s.side_length = side;
            s
        }
        TrajectoryFamily::Helix => {
            let radius = sample_fit_radius(&mut rng, family, bounds, ranges.radius, [0, 1])?;
            let vmax = (0.8 * speed).min(ranges.vertical_speed[1]);
            let vmin = ranges.vertical_speed[0].min(vmax);
            let vertical_speed = uniform(&mut rng, vmin, vmax);
            let cx = uniform(&mut rng, bounds.lo[0] + MARGIN + radius, bounds.hi[0] - MARGIN - radius);
            let cy = uniform(&mut rng, bounds.lo[1] + MARGIN + radius, bounds.hi[1] - MARGIN - radius);
            let z = uniform(&mut rng, inner.lo[2], inner.hi[2]);
            let phi0 = uniform(&mut rng, 0.0, 2.0 * PI);
            let dir = [phi0.cos(), phi0.sin(), 0.0];
            let start = [cx + radius * dir[0], cy + radius * dir[1], z];
            let mut s = TrajectorySpec::blank(TrajectoryFamily::Helix, start, speed, *bounds, rng_seed);
            s.direction = dir;
            s.turn_sign = coin_sign(&mut rng);
            s.axis_sign = coin_sign(&mut rng);
            s.radius = radius;
            s.vertical_speed = vertical_speed;
            s
        }
        TrajectoryFamily::RandomComposite => unreachable!(),
    };
    spec.seed = rng_seed;
    Ok(spec)
}

/// Draws a radius-like size that must fit twice (plus margins) into the
/// extents of `axes`. Errors when even the range minimum does not fit.
fn sample_fit_radius(
    rng: &mut ChaCha8Rng,
    family: TrajectoryFamily,
    bounds: &Aabb,
    range: [f64; 2],
    axes: [usize; 2],
) -> Result<f64, TrajError> {
    let mut fit = f64::INFINITY;
    let mut tight = axes[0];
    for &axis in &axes {
        let cap = (bounds.extent(axis) - 2.0 * MARGIN) / 2.0;
        if cap < fit {
            fit = cap;
            tight = axis;
        }
    }
    if fit < range[0] {
        return Err(TrajError::WorkspaceTooSmall {
            family: family.name(),
            axis: AXES[tight],
            need: 2.0 * (range[0] + MARGIN),
            have: bounds.extent(tight),
        });
    }
    Ok(uniform(rng, range[0], range[1].min(fit)))
}

fn sample_fit_side(
    rng: &mut ChaCha8Rng,
    bounds: &Aabb,
    range: [f64; 2],
) -> Result<f64, TrajError> {
    let cap_x = bounds.extent(0) - 2.0 * MARGIN;
    let cap_z = bounds.extent(2) - 2.0 * MARGIN;
    let (fit, tight) = if cap_x < cap_z { (cap_x, 0) } else { (cap_z, 2) };
    if fit < range[0] {
        return Err(TrajError::WorkspaceTooSmall {
            family: TrajectoryFamily::Square.name(),
            axis: AXES[tight],
            need: range[0] + 2.0 * MARGIN,
            have: bounds.extent(tight),
        });
    }
    Ok(uniform(rng, range[0], range[1].min(fit)))
}

/// Corner coordinate so a square of edge `side` extends toward `sign` without
/// leaving `[lo + MARGIN, hi - MARGIN]`.
fn corner_coord(rng: &mut ChaCha8Rng, lo: f64, hi: f64, side: f64, sign: f64) -> f64 {
    if sign > 0.0 {
        uniform(rng, lo + MARGIN, hi - MARGIN - side)
    } else {
        uniform(rng, lo + MARGIN + side, hi - MARGIN)
    }
}

/// Samples a composite trajectory: 3-6 basic segments of 30-80 steps each
/// (padded so the total covers at least [`MIN_COMPOSITE_STEPS`]), chained
/// continuously. Segments whose family does not fit at the chain point fall
/// back to a line family, so sampling never fails on a usable workspace.
pub fn sample_composite(
    rng_seed: u64,
    bounds: &Aabb,
    ranges: &SampleRanges,
    dt: f64,
) -> Result<TrajectorySpec, TrajError> {
    validate_bounds(bounds)?;
    let mut rng = stream(rng_seed, salt::COMPOSITE);
    let n_segments: u32 = rng.random_range(3..=6);
    let inner = bounds.shrink(MARGIN);
    let start = uniform_point(&mut rng, &inner);
    let mut point = start;
    let mut segments: Vec<CompositeSegment> = Vec::new();
    let mut total = 0u32;
    for _ in 0..n_segments {
        let family = TrajectoryFamily::BASIC[rng.random_range(0..TrajectoryFamily::BASIC.len())];
        let steps: u32 = rng.random_range(30..=80);
        let spec = sample_segment_at(family, &mut rng, bounds, ranges, point, rng_seed);
        point = basic_position(&spec, steps, dt);
        total += steps;
        segments.push(CompositeSegment { steps, spec });
    }
    if total < MIN_COMPOSITE_STEPS {
        let last = segments.last_mut().expect("at least three segments");
        last.steps += MIN_COMPOSITE_STEPS - total;
    }
    let max_speed = segments
        .iter()
        .map(|s| s.spec.speed)
        .fold(f64::NEG_INFINITY, f64::max);
    let mut spec = TrajectorySpec::blank(
        TrajectoryFamily::RandomComposite,
        start,
        max_speed,
        *bounds,
        rng_seed,
    );
    spec.segments = segments;
    Ok(spec)
}

/// Samples a segment that starts exactly at `point`. Families that cannot be
/// anchored there (circle, sine, square, helix in tight spots) fall back to a
/// line, which folds and therefore always fits.
fn sample_segment_at(
    family: TrajectoryFamily,
    rng: &mut ChaCha8Rng,
    bounds: &Aabb,
    ranges: &SampleRanges,
    point: Vec3,
    seed: u64,
) -> TrajectorySpec {
    let speed = uniform(rng, ranges.speed[0], ranges.speed[1]);
    match family {
        TrajectoryFamily::HorizontalLine => horizontal_line_at(rng, bounds, point, speed, seed),
        TrajectoryFamily::VerticalLine => vertical_line_at(rng, bounds, point, speed, seed),
        TrajectoryFamily::Circle => {
            match circle_like_at(rng, bounds, ranges.radius, point, [0, 2], seed) {
                Some((radius, dir)) => {
                    let mut s =
                        TrajectorySpec::blank(TrajectoryFamily::Circle, point, speed, *bounds, seed);
                    s.direction = dir;
                    s.turn_sign = coin_sign(rng);
                    s.radius = radius;
                    s
                }
                None => horizontal_line_at(rng, bounds, point, speed, seed),
            }
        }
        TrajectoryFamily::Sine => {
            let head = (point[2] - bounds.lo[2] - MARGIN).min(bounds.hi[2] - MARGIN - point[2]);
            let cap = head.min(ranges.amplitude[1]);
            if cap < ranges.amplitude[0] {
                return horizontal_line_at(rng, bounds, point, speed, seed);
            }
            let amplitude = uniform(rng, ranges.amplitude[0], cap);
            let wavelength = uniform(rng, ranges.wavelength[0], ranges.wavelength[1]);
            let psi = uniform(rng, 0.0, 2.0 * PI);
            let mut s = TrajectorySpec::blank(TrajectoryFamily::Sine, point, speed, *bounds, seed);
            s.direction = [psi.cos(), psi.sin(), 0.0];
            s.amplitude = amplitude;
            s.wavelength = wavelength;
            s
        }
        TrajectoryFamily::Square => {
            let room_x = (bounds.hi[0] - MARGIN - point[0]).max(point[0] - bounds.lo[0] - MARGIN);
            let room_z = (bounds.hi[2] - MARGIN - point[2]).max(point[2] - bounds.lo[2] - MARGIN);
            let cap = ranges.side_length[1].min(room_x).min(room_z);
            if cap < ranges.side_length[0] {
                return horizontal_line_at(rng, bounds, point, speed, seed);
            }
            let side = uniform(rng, ranges.side_length[0], cap);
            let sx = fit_sign(rng, point[0], bounds.lo[0], bounds.hi[0], side);
            let sz = fit_sign(rng, point[2], bounds.lo[2], bounds.hi[2], side);
            match (sx, sz) {
                (Some(sx), Some(sz)) => {
                    let mut s =
                        TrajectorySpec::blank(TrajectoryFamily::Square, point, speed, *bounds, seed);
                    s.direction = [sx, 0.0, 0.0];
                    s.axis_sign = sz;
                    s.side_length = side;
                    s
                }
                _ => horizontal_line_at(rng, bounds, point, speed, seed),
            }
        }
        TrajectoryFamily::Helix => {
            match circle_like_at(rng, bounds, ranges.radius, point, [0, 1], seed) {
                Some((radius, dir)) => {
                    let vmax = (0.8 * speed).min(ranges.vertical_speed[1]);
                    let vmin = ranges.vertical_speed[0].min(vmax);
                    let mut s =
                        TrajectorySpec::blank(TrajectoryFamily::Helix, point, speed, *bounds, seed);
                    s.direction = dir;
                    s.turn_sign = coin_sign(rng);
                    s.axis_sign = coin_sign(rng);
                    s.radius = radius;
                    s.vertical_speed = uniform(rng, vmin, vmax);
                    s
                }
                None => vertical_line_at(rng, bounds, point, speed, seed),
            }
        }
        TrajectoryFamily::RandomComposite => unreachable!("composites never nest"),
    }
}

fn horizontal_line_at(
    rng: &mut ChaCha8Rng,
    bounds: &Aabb,
    point: Vec3,
    speed: f64,
    seed: u64,
) -> TrajectorySpec {
    let psi = uniform(rng, 0.0, 2.0 * PI);
    let mut s = TrajectorySpec::blank(TrajectoryFamily::HorizontalLine, point, speed, *bounds, seed);
    s.direction = [psi.cos(), psi.sin(), 0.0];
    s
}

fn vertical_line_at(
    rng: &mut ChaCha8Rng,
    bounds: &Aabb,
    point: Vec3,
    speed: f64,
    seed: u64,
) -> TrajectorySpec {
    let sign = coin_sign(rng);
    let mut s = TrajectorySpec::blank(TrajectoryFamily::VerticalLine, point, speed, *bounds, seed);
    s.direction = [0.0, 0.0, sign];
    s
}

/// Tries to place a circle through `point` in the plane of `axes`. Returns
/// `(radius, radial unit from center to point)` or `None` when no placement
/// was found in a bounded number of attempts.
fn circle_like_at(
    rng: &mut ChaCha8Rng,
    bounds: &Aabb,
    radius_range: [f64; 2],
    point: Vec3,
    axes: [usize; 2],
    _seed: u64,
) -> Option<(f64, Vec3)> {
    let mut fit = f64::INFINITY;
    for &axis in &axes {
        fit = fit.min((bounds.extent(axis) - 2.0 * MARGIN) / 2.0);
    }
    if fit < radius_range[0] {
        return None;
    }
    for _ in 0..16 {
        let radius = uniform(rng, radius_range[0], radius_range[1].min(fit));
        let alpha = uniform(rng, 0.0, 2.0 * PI);
        let mut dir = [0.0; 3];
        dir[axes[0]] = alpha.cos();
        dir[axes[1]] = alpha.sin();
        let ok = axes.iter().all(|&axis| {
            let c = point[axis] - radius * dir[axis];
            c - radius >= bounds.lo[axis] + MARGIN && c + radius <= bounds.hi[axis] - MARGIN
        });
        if ok {
            return Some((radius, dir));
        }
    }
    None
}

/// Random edge sign such that `coord + sign * side` stays inside the margin
/// band; `None` when neither sign fits.
fn fit_sign(rng: &mut ChaCha8Rng, coord: f64, lo: f64, hi: f64, side: f64) -> Option<f64> {
    let pos_ok = coord + side <= hi - MARGIN;
    let neg_ok = coord - side >= lo + MARGIN;
    match (pos_ok, neg_ok) {
        (true, true) => Some(coin_sign(rng)),
        (true, false) => Some(1.0),
        (false, true) => Some(-1.0),
        (false, false) => None,
    }
}

// --- evaluation ---

fn line_position(spec: &TrajectorySpec, step: u32, dt: f64) -> Vec3 {
    let t = step as f64 * dt;
    let mut p = [0.0; 3];
    for i in 0..3 {
        let unfolded = spec.start[i] + spec.speed * t * spec.direction[i];
        p[i] = fold_reflect(unfolded, spec.bounds.lo[i], spec.bounds.hi[i]);
    }
    p
}

fn circle_position(spec: &TrajectorySpec, step: u32, dt: f64) -> Vec3 {
    if step == 0 {
        // Rebuilding the start through atan2/cos would cost an ulp.
        return spec.start;
    }
    let r = spec.radius;
    let half = (spec.speed * dt / (2.0 * r)).min(1.0);
    let dtheta = 2.0 * half.asin();
    let theta0 = spec.direction[2].atan2(spec.direction[0]);
    let theta = theta0 + spec.turn_sign * step as f64 * dtheta;
    let cx = spec.start[0] - r * spec.direction[0];
    let cz = spec.start[2] - r * spec.direction[2];
    [cx + r * theta.cos(), spec.start[1], cz + r * theta.sin()]
}

fn square_position(spec: &TrajectorySpec, step: u32, dt: f64) -> Vec3 {
    let l = spec.side_length;
    let s = (step as f64 * (spec.speed * dt)).rem_euclid(4.0 * l);
    let e1 = spec.direction;
    let e2 = [0.0, 0.0, spec.axis_sign];
    let edge = ((s / l).floor() as usize).min(3);
    let within = s - edge as f64 * l;
    // Traversal order: up the e2 edge, across e1, back down, and home.
    let (corner, dir) = match edge {
        0 => (spec.start, e2),
        1 => (add(spec.start, scale(e2, l)), e1),
        2 => (add(add(spec.start, scale(e2, l)), scale(e1, l)), scale(e2, -1.0)),
        _ => (add(spec.start, scale(e1, l)), scale(e1, -1.0)),
    };
    add(corner, scale(dir, within))
}

fn helix_position(spec: &TrajectorySpec, step: u32, dt: f64) -> Vec3 {
    if step == 0 {
        return spec.start;
    }
    let r = spec.radius;
    let chord = spec.speed * dt;
    let dz = spec.vertical_speed * dt;
    let horizontal = (chord * chord - dz * dz).max(0.0).sqrt();
    let half = (horizontal / (2.0 * r)).min(1.0);
    let dphi = 2.0 * half.asin();
    let phi0 = spec.direction[1].atan2(spec.direction[0]);
    let phi = phi0 + spec.turn_sign * step as f64 * dphi;
    let cx = spec.start[0] - r * spec.direction[0];
    let cy = spec.start[1] - r * spec.direction[1];
    let unfolded_z = spec.start[2] + spec.axis_sign * spec.vertical_speed * (step as f64 * dt);
    [
        cx + r * phi.cos(),
        cy + r * phi.sin(),
        fold_reflect(unfolded_z, spec.bounds.lo[2], spec.bounds.hi[2]),
    ]
}

fn sine_omega(spec: &TrajectorySpec) -> f64 {
    2.0 * PI / spec.wavelength
}

/// Advances the sine curve parameter by one constant-chord step: the returned
/// `u'` satisfies `(u'-u)^2 + A^2 (sin(w u') - sin(w u))^2 = (speed*dt)^2`
/// to [`SINE_TOL`] on the squared residual.
pub(crate) fn sine_advance(spec: &TrajectorySpec, u: f64, dt: f64) -> f64 {
    let chord = spec.speed * dt;
    let a = spec.amplitude;
    let w = sine_omega(spec);
    let s0 = (w * u).sin();
    let slope = a * w * (w * u).cos();
    let mut du = chord / (1.0 + slope * slope).sqrt();
    for _ in 0..32 {
        let s1 = (w * (u + du)).sin();
        let dz = a * (s1 - s0);
        let g = du * du + dz * dz - chord * chord;
        if g.abs() < SINE_TOL {
            break;
        }
        let gp = 2.0 * du + 2.0 * dz * a * w * (w * (u + du)).cos();
        du -= g / gp;
        // The solution is bracketed well inside (0, 2 chord); clamping keeps a
        // stray Newton step from ever leaving the basin.
        du = du.clamp(0.05 * chord, 2.0 * chord);
    }
    u + du
}

fn sine_position(spec: &TrajectorySpec, u: f64) -> Vec3 {
    let z = spec.start[2] + spec.amplitude * (sine_omega(spec) * u).sin();
    let x = spec.start[0] + u * spec.direction[0];
    let y = spec.start[1] + u * spec.direction[1];
    [
        fold_reflect(x, spec.bounds.lo[0], spec.bounds.hi[0]),
        fold_reflect(y, spec.bounds.lo[1], spec.bounds.hi[1]),
        z,
    ]
}

/// Position of a basic (non-composite) spec at `step`. Sine re-runs its chord
/// recursion from step zero; [`Cursor`] exists to avoid that cost in loops.
fn basic_position(spec: &TrajectorySpec, step: u32, dt: f64) -> Vec3 {
    match spec.family {
        TrajectoryFamily::HorizontalLine | TrajectoryFamily::VerticalLine => {
            line_position(spec, step, dt)
        }
        TrajectoryFamily::Circle => circle_position(spec, step, dt),
        TrajectoryFamily::Sine => {
            let mut u = 0.0;
            for _ in 0..step {
                u = sine_advance(spec, u, dt);
            }
            sine_position(spec, u)
        }
        TrajectoryFamily::Square => square_position(spec, step, dt),
        TrajectoryFamily::Helix => helix_position(spec, step, dt),
        TrajectoryFamily::RandomComposite => unreachable!("composite handled by caller"),
    }
}

/// Maps a global composite step to `(segment index, local step)`. Steps past
/// the end of the chain stay in the last segment, which extrapolates.
fn composite_locate(spec: &TrajectorySpec, step: u32) -> (usize, u32) {
    let mut base = 0u32;
    for (i, seg) in spec.segments.iter().enumerate() {
        if i + 1 == spec.segments.len() || step - base < seg.steps {
            return (i, step - base);
        }
        base += seg.steps;
    }
    (0, step)
}

fn position_at(spec: &TrajectorySpec, step: u32, dt: f64) -> Vec3 {
    if spec.family == TrajectoryFamily::RandomComposite {
        let (i, local) = composite_locate(spec, step);
        basic_position(&spec.segments[i].spec, local, dt)
    } else {
        basic_position(spec, step, dt)
    }
}

fn finite_diff_velocity(pos: Vec3, prev: Vec3, dt: f64) -> Vec3 {
    [
        (pos[0] - prev[0]) / dt,
        (pos[1] - prev[1]) / dt,
        (pos[2] - prev[2]) / dt,
    ]
}

/// Goal pose at `step`. Pure in `(spec, step, dt)`; the velocity is the
/// backward difference to `step - 1` (zero at step 0).
pub fn goal_at(spec: &TrajectorySpec, step: u32, dt: f64) -> GoalSample {
    let position = position_at(spec, step, dt);
    let velocity = if step == 0 {
        [0.0; 3]
    } else {
        finite_diff_velocity(position, position_at(spec, step - 1, dt), dt)
    };
    GoalSample { position, velocity }
}

/// Incremental walker over a trajectory. Emits exactly the [`goal_at`]
/// sequence (bitwise) in O(1) per step, caching the sine curve parameter and
/// the composite segment index.
#[derive(Debug, Clone)]
pub struct Cursor {
    spec: TrajectorySpec,
    dt: f64,
    step: u32,
    prev: Vec3,
    sine_u: f64,
    seg_idx: usize,
    seg_base: u32,
}

impl Cursor {
    pub fn new(spec: TrajectorySpec, dt: f64) -> Self {
        Self {
            spec,
            dt,
            step: 0,
            prev: [0.0; 3],
            sine_u: 0.0,
            seg_idx: 0,
            seg_base: 0,
        }
    }

    pub fn spec(&self) -> &TrajectorySpec {
        &self.spec
    }

    fn current_segment(&self) -> &TrajectorySpec {
        if self.spec.family == TrajectoryFamily::RandomComposite {
            &self.spec.segments[self.seg_idx].spec
        } else {
            &self.spec
        }
    }

    /// Emits the goal for the current step, then advances.
    pub fn next_goal(&mut self) -> GoalSample {
        if self.spec.family == TrajectoryFamily::RandomComposite {
            while self.seg_idx + 1 < self.spec.segments.len()
                && self.step - self.seg_base >= self.spec.segments[self.seg_idx].steps
            {
                self.seg_base += self.spec.segments[self.seg_idx].steps;
                self.seg_idx += 1;
                self.sine_u = 0.0;
            }
        }
        let local = self.step - self.seg_base;
        let seg = self.current_segment();
        let position = if seg.family == TrajectoryFamily::Sine {
            sine_position(seg, self.sine_u)
        } else {
            basic_position(seg, local, self.dt)
        };
        if seg.family == TrajectoryFamily::Sine {
            self.sine_u = sine_advance(seg, self.sine_u, self.dt);
        }
        let velocity = if self.step == 0 {
            [0.0; 3]
        } else {
            finite_diff_velocity(position, self.prev, self.dt)
        };
        self.prev = position;
        self.step += 1;
        GoalSample { position, velocity }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::{dist, norm};

    const DT: f64 = 0.04;

    fn test_bounds() -> Aabb {
        Aabb::new([0.9, -0.45, 0.15], [2.1, 0.45, 0.85])
    }

    fn spec_for(family: TrajectoryFamily, seed: u64) -> TrajectorySpec {
        sample_spec(family, seed, &test_bounds(), &SampleRanges::default(), DT).unwrap()
    }

    /// Event predicate per family: step k -> k+1 may legitimately displace
    /// less than speed*dt. Derived from the unfolded geometry, independently
    /// of the position formulas own folding.
    fn is_event_step(spec: &TrajectorySpec, step: u32) -> bool {
        match spec.family {
            TrajectoryFamily::HorizontalLine | TrajectoryFamily::VerticalLine => {
                (0..3).any(|i| {
                    if spec.direction[i] == 0.0 {
                        return false;
                    }
                    let a = spec.start[i] + spec.speed * (step as f64 * DT) * spec.direction[i];
                    let b =
                        spec.start[i] + spec.speed * ((step + 1) as f64 * DT) * spec.direction[i];
                    fold_count(a, spec.bounds.lo[i], spec.bounds.hi[i])
                        != fold_count(b, spec.bounds.lo[i], spec.bounds.hi[i])
                })
            }
            TrajectoryFamily::Circle => false,
            TrajectoryFamily::Sine => {
                // Horizontal folds only; u is monotone so bracket with the
                // unfolded travel bound u <= speed * t.
                let (ua, ub) = sine_u_pair(spec, step);
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
                let arc = spec.speed * DT;
                let ea = (step as f64 * arc / spec.side_length).floor();
                let eb = ((step + 1) as f64 * arc / spec.side_length).floor();
                ea != eb
            }
            TrajectoryFamily::Helix => {
                let a = spec.start[2]
                    + spec.axis_sign * spec.vertical_speed * (step as f64 * DT);
                let b = spec.start[2]
                    + spec.axis_sign * spec.vertical_speed * ((step + 1) as f64 * DT);
                fold_count(a, spec.bounds.lo[2], spec.bounds.hi[2])
                    != fold_count(b, spec.bounds.lo[2], spec.bounds.hi[2])
            }
            TrajectoryFamily::RandomComposite => unreachable!(),
        }
    }

    fn sine_u_pair(spec: &TrajectorySpec, step: u32) -> (f64, f64) {
        let mut u = 0.0;
        for _ in 0..step {
            u = sine_advance(spec, u, DT);
        }
        (u, sine_advance(spec, u, DT))
    }

    /// Number of boundary reflections between the unfolded coordinate and its
    /// folded image: floor of the normalized period position.
    fn fold_count(x: f64, lo: f64, hi: f64) -> i64 {
        ((x - lo) / (hi - lo)).floor() as i64
    }

    #[test]
    fn sampled_specs_deterministic_and_in_range() {
        let ranges = SampleRanges::default();
        for family in TrajectoryFamily::BASIC {
            for seed in 0..50u64 {
                let a = spec_for(family, seed);
                let b = spec_for(family, seed);
                assert_eq!(a, b, "resampling {family:?} with seed {seed} diverged");
                assert!(a.speed >= ranges.speed[0] && a.speed <= ranges.speed[1]);
                assert!(test_bounds().contains(a.start, 0.0));
                assert!((norm(a.direction) - 1.0).abs() < 1e-12);
                match family {
                    TrajectoryFamily::Circle | TrajectoryFamily::Helix => {
                        assert!(a.radius >= ranges.radius[0] && a.radius <= ranges.radius[1]);
                    }
                    TrajectoryFamily::Sine => {
                        assert!(
                            a.amplitude >= ranges.amplitude[0]
                                && a.amplitude <= ranges.amplitude[1]
                        );
                        assert!(
                            a.wavelength >= ranges.wavelength[0]
                                && a.wavelength <= ranges.wavelength[1]
                        );
                    }
                    TrajectoryFamily::Square => {
                        assert!(
                            a.side_length >= ranges.side_length[0]
                                && a.side_length <= ranges.side_length[1]
                        );
                    }
                    _ => {}
                }
                if family == TrajectoryFamily::Helix {
                    assert!(a.vertical_speed >= ranges.vertical_speed[0]);
                    assert!(a.vertical_speed <= ranges.vertical_speed[1]);
                    assert!(a.vertical_speed <= 0.8 * a.speed + 1e-12);
                }
            }
        }
    }

    #[test]
    fn goals_start_at_spec_start() {
        for family in TrajectoryFamily::BASIC {
            let spec = spec_for(family, 7);
            let g = goal_at(&spec, 0, DT);
            assert!(
                dist(g.position, spec.start) < 1e-12,
                "{family:?} starts {:?} away from start",
                dist(g.position, spec.start)
            );
            assert_eq!(g.velocity, [0.0; 3]);
        }
    }

    #[test]
    fn displacement_matches_speed_except_events() {
        for family in TrajectoryFamily::BASIC {
            for seed in 0..20u64 {
                let spec = spec_for(family, seed);
                let expected = spec.speed * DT;
                let mut prev = goal_at(&spec, 0, DT).position;
                for step in 0..300u32 {
                    let next = goal_at(&spec, step + 1, DT).position;
                    let chord = dist(next, prev);
                    if is_event_step(&spec, step) {
                        assert!(
                            chord <= expected + 1e-9,
                            "{family:?} seed {seed} event step {step}: chord {chord} > {expected}"
                        );
                    } else {
                        assert!(
                            (chord - expected).abs() <= 1e-6,
                            "{family:?} seed {seed} step {step}: chord {chord} vs {expected}"
                        );
                    }
                    prev = next;
                }
            }
        }
    }

    #[test]
    fn goals_stay_inside_bounds() {
        let bounds = test_bounds();
        for family in TrajectoryFamily::BASIC {
            for seed in 0..10u64 {
                let spec = spec_for(family, seed);
                for step in (0..2000).step_by(7) {
                    let g = goal_at(&spec, step, DT);
                    assert!(
                        bounds.contains(g.position, 1e-9),
                        "{family:?} seed {seed} step {step} escaped: {:?}",
                        g.position
                    );
                }
            }
        }
    }

    #[test]
    fn velocity_is_backward_difference() {
        let spec = spec_for(TrajectoryFamily::Helix, 3);
        for step in 1..50u32 {
            let g = goal_at(&spec, step, DT);
            let p = goal_at(&spec, step - 1, DT).position;
            let v = finite_diff_velocity(g.position, p, DT);
            assert_eq!(g.velocity, v);
        }
    }

    #[test]
    fn cursor_matches_goal_at_bitwise() {
        for family in TrajectoryFamily::BASIC {
            let spec = spec_for(family, 11);
            let mut cursor = Cursor::new(spec.clone(), DT);
            for step in 0..250u32 {
                let a = cursor.next_goal();
                let b = goal_at(&spec, step, DT);
                assert_eq!(a, b, "{family:?} diverged at step {step}");
            }
        }
        let spec =
            sample_composite(99, &test_bounds(), &SampleRanges::default(), DT).unwrap();
        let mut cursor = Cursor::new(spec.clone(), DT);
        for step in 0..400u32 {
            let a = cursor.next_goal();
            let b = goal_at(&spec, step, DT);
            assert_eq!(a, b, "composite diverged at step {step}");
        }
    }

    #[test]
    fn composite_is_continuous_and_speed_capped() {
        let bounds = test_bounds();
        for seed in 0..30u64 {
            let spec = sample_composite(seed, &bounds, &SampleRanges::default(), DT).unwrap();
            assert!(spec.segments.len() >= 3 && spec.segments.len() <= 6);
            let total: u32 = spec.segments.iter().map(|s| s.steps).sum();
            assert!(total >= MIN_COMPOSITE_STEPS);
            let cap = spec.max_step_displacement(DT);
            let mut prev = goal_at(&spec, 0, DT).position;
            for step in 0..total.min(400) {
                let next = goal_at(&spec, step + 1, DT).position;
                let chord = dist(next, prev);
                assert!(
                    chord <= cap + 1e-9,
                    "seed {seed} step {step}: chord {chord} above cap {cap}"
                );
                assert!(bounds.contains(next, 1e-9));
                prev = next;
            }
            // Segment boundaries are C0: the first goal of each segment is the
            // exact end point of the previous one.
            let mut base = 0u32;
            for (i, seg) in spec.segments.iter().enumerate().skip(1) {
                base += spec.segments[i - 1].steps;
                let left = basic_position(&spec.segments[i - 1].spec, spec.segments[i - 1].steps, DT);
                assert_eq!(left, seg.spec.start);
                assert_eq!(goal_at(&spec, base, DT).position, seg.spec.start);
            }
        }
    }

    #[test]
    fn composite_speed_cap_under_global_limit() {
        for seed in 100..120u64 {
            let spec =
                sample_composite(seed, &test_bounds(), &SampleRanges::default(), DT).unwrap();
            assert!(spec.max_step_displacement(DT) <= 0.30 * DT + 1e-9);
        }
    }

    #[test]
    fn infeasible_workspace_reports_axis() {
        let tiny = Aabb::new([0.0, 0.0, 0.0], [1.0, 1.0, 0.05]);
        let err = sample_spec(
            TrajectoryFamily::Circle,
            1,
            &tiny,
            &SampleRanges::default(),
            DT,
        )
        .unwrap_err();
        match err {
            TrajError::WorkspaceTooSmall { family, axis, .. } => {
                assert_eq!(family, "circle");
                assert_eq!(axis, 'z');
            }
            other => panic!("unexpected error {other:?}"),
        }
        let flat = Aabb::new([0.0, 0.0, 0.0], [1.0, 1.0, 0.0]);
        assert!(matches!(
            sample_spec(
                TrajectoryFamily::HorizontalLine,
                1,
                &flat,
                &SampleRanges::default(),
                DT
            ),
            Err(TrajError::DegenerateBounds { axis: 'z', .. })
        ));
    }

    #[test]
    fn square_closes_loop() {
        let spec = spec_for(TrajectoryFamily::Square, 5);
        let perimeter = 4.0 * spec.side_length;
        let steps_per_lap = perimeter / (spec.speed * DT);
        // After a whole number of laps the goal returns near the start.
        let lap = steps_per_lap.round() as u32;
        let drift = (steps_per_lap - lap as f64).abs() * spec.speed * DT;
        let g = goal_at(&spec, lap, DT);
        assert!(dist(g.position, spec.start) <= drift + 1e-9);
    }

    #[test]
    fn spec_serde_round_trip_is_bitwise() {
        let spec =
            sample_composite(7, &test_bounds(), &SampleRanges::default(), DT).unwrap();
        let json = serde_json::to_string(&spec).unwrap();
        let back: TrajectorySpec = serde_json::from_str(&json).unwrap();
        assert_eq!(spec, back);
    }
}
