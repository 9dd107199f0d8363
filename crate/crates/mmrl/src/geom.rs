//! Small fixed-size vector helpers and an axis-aligned box type.
//!
//! All geometry in the crate runs on `[f64; 3]` with plain loops so that
//! operation order, and therefore bit patterns, are fully pinned down.

use serde::{Deserialize, Serialize};

pub type Vec3 = [f64; 3];

pub fn add(a: Vec3, b: Vec3) -> Vec3 {
    [a[0] + b[0], a[1] + b[1], a[2] + b[2]]
}

pub fn sub(a: Vec3, b: Vec3) -> Vec3 {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

pub fn scale(a: Vec3, s: f64) -> Vec3 {
    [a[0] * s, a[1] * s, a[2] * s]
}

pub fn dot(a: Vec3, b: Vec3) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

pub fn norm(a: Vec3) -> f64 {
    dot(a, a).sqrt()
}

pub fn dist(a: Vec3, b: Vec3) -> f64 {
    norm(sub(a, b))
}

/// Axis-aligned box with inclusive bounds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Aabb {
    pub lo: Vec3,
    pub hi: Vec3,
}

impl Aabb {
    pub fn new(lo: Vec3, hi: Vec3) -> Self {
        Self { lo, hi }
    }

    pub fn extent(&self, axis: usize) -> f64 {
        self.hi[axis] - self.lo[axis]
    }

    /// True when `p` lies inside the box, expanded by `tol` on every face.
    pub fn contains(&self, p: Vec3, tol: f64) -> bool {
        (0..3).all(|i| p[i] >= self.lo[i] - tol && p[i] <= self.hi[i] + tol)
    }

    /// Box shrunk by `margin` on every face. Collapses to the center plane on
    /// axes thinner than `2 * margin`.
    pub fn shrink(&self, margin: f64) -> Aabb {
        let mut lo = self.lo;
        let mut hi = self.hi;
        for i in 0..3 {
            if self.extent(i) > 2.0 * margin {
                lo[i] += margin;
                hi[i] -= margin;
            } else {
                let mid = 0.5 * (self.lo[i] + self.hi[i]);
                lo[i] = mid;
                hi[i] = mid;
            }
        }
        Aabb { lo, hi }
    }
}

/// Reflects `x` into `[lo, hi]` by folding it as a triangle wave with period
/// `2 * (hi - lo)`. Values already inside the interval pass through unchanged.
pub fn fold_reflect(x: f64, lo: f64, hi: f64) -> f64 {
    if x >= lo && x <= hi {
        // Bitwise identity inside the interval; the modular arithmetic below
        // would round by an ulp or two.
        return x;
    }
    let width = hi - lo;
    if width <= 0.0 {
        return lo;
    }
    let y = (x - lo).rem_euclid(2.0 * width);
    if y <= width {
        lo + y
    } else {
        hi - (y - width)
    }
}
