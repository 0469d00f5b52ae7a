//! Holonomic planar kinematics driven by body-frame velocity commands.
//!
//! Poses are advanced with the closed-form SE(2) exponential, so a constant
//! twist is integrated exactly regardless of the step size. An optional
//! first-order lag models the delay between the commanded and the realized
//! velocity.

use crate::pose::Pose;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Below this yaw rate the arc integrals use their series expansions.
const SMALL_OMEGA: f64 = 1e-9;

#[derive(Debug, Error, PartialEq)]
pub enum VehicleError {
    #[error("time step {0} outside (0, 0.1] s")]
    BadTimeStep(f64),
    #[error("non-finite {0}")]
    NonFinite(&'static str),
}

/// Body-frame twist: longitudinal, lateral and yaw rate.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct BodyVelocity {
    pub v_xi: f64,
    pub v_eta: f64,
    pub omega: f64,
}

impl BodyVelocity {
    pub fn new(v_xi: f64, v_eta: f64, omega: f64) -> Self {
        Self { v_xi, v_eta, omega }
    }

    pub fn is_finite(&self) -> bool {
        self.v_xi.is_finite() && self.v_eta.is_finite() && self.omega.is_finite()
    }

    pub fn planar_speed(&self) -> f64 {
        self.v_xi.hypot(self.v_eta)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VehicleConfig {
    /// Translational speed limit, m/s.
    pub v_max: f64,
    /// Yaw-rate limit, rad/s.
    pub omega_max: f64,
    /// Actuator time constant, s. Zero means the command is realized instantly.
    pub tau: f64,
    /// Initial `(e2, e3)` offset of the vehicle from the path start.
    pub initial_errors: [f64; 2],
}

impl Default for VehicleConfig {
    fn default() -> Self {
        Self {
            v_max: 0.3,
            omega_max: 1.5,
            tau: 0.2,
            initial_errors: [0.0, 0.0],
        }
    }
}

impl VehicleConfig {
    /// Clips a command to the configured limits. The flag is set when any
    /// component had to be reduced.
    pub fn saturate(&self, cmd: BodyVelocity) -> (BodyVelocity, bool) {
        let mut out = cmd;
        let mut clipped = false;
        let speed = cmd.planar_speed();
        if speed > self.v_max {
            let k = self.v_max / speed;
            out.v_xi *= k;
            out.v_eta *= k;
            clipped = true;
        }
        if cmd.omega.abs() > self.omega_max {
            out.omega = self.omega_max.copysign(cmd.omega);
            clipped = true;
        }
        (out, clipped)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct VehicleState {
    pub pose: Pose,
    pub realized_velocity: BodyVelocity,
}

impl VehicleState {
    pub fn at(pose: Pose) -> Self {
        Self {
            pose,
            realized_velocity: BodyVelocity::default(),
        }
    }
}

/// World-frame velocity `(ẋ, ẏ, θ̇)` of a body moving with twist `v`.
pub fn body_to_world(pose: &Pose, v: &BodyVelocity) -> (f64, f64, f64) {
    let (s, c) = pose.theta.sin_cos();
    (c * v.v_xi - s * v.v_eta, s * v.v_xi + c * v.v_eta, v.omega)
}

/// Exact motion under a constant body twist held for `dt`.
pub fn integrate_twist(pose: &Pose, v: &BodyVelocity, dt: f64) -> Pose {
    let phi = v.omega * dt;
    // sin(φ)/ω and (1 − cos φ)/ω
    let (sin_term, cos_term) = if phi.abs() < SMALL_OMEGA * dt.max(1.0) {
        (dt * (1.0 - phi * phi / 6.0), dt * phi / 2.0)
    } else {
        (phi.sin() / v.omega, (1.0 - phi.cos()) / v.omega)
    };
    let dx_body = v.v_xi * sin_term - v.v_eta * cos_term;
    let dy_body = v.v_xi * cos_term + v.v_eta * sin_term;
    let (s, c) = pose.theta.sin_cos();
    Pose::new(
        pose.x + c * dx_body - s * dy_body,
        pose.y + s * dx_body + c * dy_body,
        pose.theta + phi,
    )
}

/// Advances the vehicle by one step. The command is saturated, the realized
/// velocity relaxes toward it with the configured lag, and the pose moves
/// under the new realized velocity.
pub fn step(
    state: &VehicleState,
    cmd: BodyVelocity,
    dt: f64,
    config: &VehicleConfig,
) -> Result<VehicleState, VehicleError> {
    if !(dt > 0.0 && dt <= 0.1) {
        return Err(VehicleError::BadTimeStep(dt));
    }
    if !cmd.is_finite() {
        return Err(VehicleError::NonFinite("velocity command"));
    }
    if !state.pose.is_finite() || !state.realized_velocity.is_finite() {
        return Err(VehicleError::NonFinite("vehicle state"));
    }
    let (cmd, _) = config.saturate(cmd);
    let realized = if config.tau > 0.0 {
        let blend = 1.0 - (-dt / config.tau).exp();
        let prev = state.realized_velocity;
        BodyVelocity::new(
            prev.v_xi + (cmd.v_xi - prev.v_xi) * blend,
            prev.v_eta + (cmd.v_eta - prev.v_eta) * blend,
            prev.omega + (cmd.omega - prev.omega) * blend,
        )
    } else {
        cmd
    };
    Ok(VehicleState {
        pose: integrate_twist(&state.pose, &realized, dt),
        realized_velocity: realized,
    })
}
