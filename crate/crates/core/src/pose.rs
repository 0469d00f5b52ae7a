//! Planar rigid-body configuration and angle helpers.

use serde::{Deserialize, Serialize};
use std::f64::consts::{PI, TAU};

/// Wraps an angle to `(-π, π]`.
pub fn wrap_angle(angle: f64) -> f64 {
    let a = angle.rem_euclid(TAU);
    if a > PI {
        a - TAU
    } else {
        a
    }
}

/// Position and heading of a rigid body in the world frame.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Pose {
    pub x: f64,
    pub y: f64,
    pub theta: f64,
}

impl Pose {
    /// Builds a pose, normalizing the heading to `(-π, π]`.
    pub fn new(x: f64, y: f64, theta: f64) -> Self {
        Self {
            x,
            y,
            theta: wrap_angle(theta),
        }
    }

    pub fn distance_to(&self, other: &Pose) -> f64 {
        (other.x - self.x).hypot(other.y - self.y)
    }

    /// Unit vector along the body's longitudinal axis.
    pub fn heading(&self) -> (f64, f64) {
        (self.theta.cos(), self.theta.sin())
    }

    /// Unit vector along the body's lateral (left) axis.
    pub fn left(&self) -> (f64, f64) {
        (-self.theta.sin(), self.theta.cos())
    }

    /// Applies the rigid motion `(tx, ty, rot)` to this pose: rotate about the
    /// origin by `rot`, then translate.
    pub fn transformed(&self, tx: f64, ty: f64, rot: f64) -> Pose {
        let (s, c) = rot.sin_cos();
        Pose::new(
            c * self.x - s * self.y + tx,
            s * self.x + c * self.y + ty,
            self.theta + rot,
        )
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.theta.is_finite()
    }
}
