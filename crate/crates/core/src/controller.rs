//! Translational velocity conversion and the inverse-optimal heading law.
//!
//! With the error state `e = [e2, e3]` the closed-loop error dynamics are
//! input-affine, `ė = f(e) + g(e)·u`, where
//!
//! ```text
//! f(e) = [V_r sin e3 − V sin β, ω_r],   g(e) = [0, −1]
//! ```
//!
//! and `u` is the yaw rate. The quadratic `V0 = ½K2·e2² + ½K3·e3²` is a control
//! Lyapunov function for this system, and the Sontag-type gain below makes
//! `V̇0 = a + b·u = −c0·b² − √(a² + b⁴)` along the unsaturated closed loop.
//!
//! The translation direction is `β = atan(α·e2)`: with `e2` measured as
//! reference-minus-robot in the robot frame this steers toward the path and
//! gives `a = −K2·e2·V·sin β < 0` whenever `b = 0` and `e2 ≠ 0`.

use crate::error_frame::ErrorState;
use serde::{Deserialize, Serialize};

/// `|b|` at or below this is treated as zero in the Sontag gain.
pub const B_ZERO: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ControllerGains {
    /// Velocity-conversion gain, 1/m.
    pub alpha: f64,
    /// CLF weight on the lateral error, 1/m².
    pub k2: f64,
    /// CLF weight on the heading error, 1/rad².
    pub k3: f64,
    /// Sontag offset, dimensionless.
    pub c0: f64,
}

impl Default for ControllerGains {
    fn default() -> Self {
        Self {
            alpha: 1.0,
            k2: 1.0,
            k3: 1.0,
            c0: 1.0,
        }
    }
}

impl ControllerGains {
    pub fn is_valid(&self) -> bool {
        self.alpha > 0.0 && self.k2 > 0.0 && self.k3 > 0.0 && self.c0 >= 0.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ControlCommand {
    /// Operator speed magnitude, m/s.
    pub v: f64,
    /// Translation direction in the body frame, rad.
    pub beta: f64,
    pub v_xi: f64,
    pub v_eta: f64,
    /// Desired yaw rate after saturation, rad/s.
    pub u: f64,
    /// Yaw rate before saturation.
    pub u_raw: f64,
    pub saturated: bool,
}

/// Splits the operator speed `v` into body components pointing toward the path.
pub fn velocity_conversion(v: f64, e2: f64, alpha: f64) -> (f64, f64, f64) {
    let beta = (alpha * e2).atan();
    let (s, c) = beta.sin_cos();
    (beta, v * c, v * s)
}

pub fn clf_value(e2: f64, e3: f64, k2: f64, k3: f64) -> f64 {
    0.5 * k2 * e2 * e2 + 0.5 * k3 * e3 * e3
}

/// Lie derivatives `(a, b) = (L_f V0, L_g V0)` of the CLF.
#[allow(clippy::too_many_arguments)]
pub fn lie_derivatives(
    e2: f64,
    e3: f64,
    v: f64,
    beta: f64,
    v_r: f64,
    omega_r: f64,
    k2: f64,
    k3: f64,
) -> (f64, f64) {
    let a = k2 * e2 * (v_r * e3.sin() - v * beta.sin()) + k3 * e3 * omega_r;
    let b = -k3 * e3;
    (a, b)
}

/// Sontag-type gain `p(e)`; equals `c0` when `b` vanishes.
pub fn sontag_gain(a: f64, b: f64, c0: f64) -> f64 {
    if b.abs() <= B_ZERO {
        return c0;
    }
    let bb = b * b;
    c0 + (a + (a * a + bb * bb).sqrt()) / bb
}

/// Full control step on already gated errors: translation direction from the
/// lateral error and yaw rate `u = −p·b`, clipped to `±omega_max` afterwards.
pub fn control(errors: &ErrorState, v: f64, gains: &ControllerGains, omega_max: f64) -> ControlCommand {
    let (beta, v_xi, v_eta) = velocity_conversion(v, errors.e2, gains.alpha);
    let (a, b) = lie_derivatives(
        errors.e2,
        errors.e3,
        v,
        beta,
        errors.v_r,
        errors.omega_r,
        gains.k2,
        gains.k3,
    );
    let p = sontag_gain(a, b, gains.c0);
    let u_raw = -p * b;
    let u = u_raw.clamp(-omega_max, omega_max);
    ControlCommand {
        v,
        beta,
        v_xi,
        v_eta,
        u,
        u_raw,
        saturated: u != u_raw,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::error_frame::{reference_speed, reference_turn_rate};
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use std::f64::consts::FRAC_PI_4;

    fn errors(e2: f64, e3: f64, v: f64, rho: f64, alpha: f64) -> ErrorState {
        let (beta, _, _) = velocity_conversion(v, e2, alpha);
        let v_r = reference_speed(v, beta, e2, e3, 0.0, 0.6);
        ErrorState {
            e1: 0.0,
            e2,
            e3,
            v_r,
            omega_r: reference_turn_rate(rho, v_r),
            rho,
            detected: true,
        }
    }

    #[test]
    fn on_path_conversion_is_straight() {
        assert_eq!(velocity_conversion(0.2, 0.0, 1.0), (0.0, 0.2, 0.0));
    }

    #[test]
    fn unit_gain_unit_error_is_quarter_pi() {
        let (beta, _, _) = velocity_conversion(0.2, 1.0, 1.0);
        assert_abs_diff_eq!(beta.abs(), FRAC_PI_4);
    }

    #[test]
    fn conversion_hand_values() {
        let (beta, vx, vy) = velocity_conversion(0.2, 0.3, 1.0);
        assert_abs_diff_eq!(beta, 0.2915, epsilon = 1e-4);
        assert_abs_diff_eq!(vx, 0.19157, epsilon = 1e-5);
        assert_abs_diff_eq!(vy, 0.05747, epsilon = 1e-5);
        assert_abs_diff_eq!(vx.hypot(vy), 0.2, epsilon = 1e-15);
    }

    #[test]
    fn clf_examples() {
        assert_eq!(clf_value(0.0, 0.0, 1.0, 1.0), 0.0);
        assert_abs_diff_eq!(clf_value(0.3, 0.2, 1.0, 1.0), 0.065, epsilon = 1e-15);
        let base = clf_value(0.3, 0.0, 1.0, 1.0);
        assert_abs_diff_eq!(clf_value(0.3, 0.0, 4.0, 1.0), 4.0 * base, epsilon = 1e-15);
    }

    #[test]
    fn lie_derivative_examples() {
        let (a, b) = lie_derivatives(0.0, 0.5, 0.2, 0.0, 0.2279, 0.0, 1.0, 1.0);
        assert_eq!(a, 0.0);
        assert_eq!(b, -0.5);
        assert_eq!(lie_derivatives(0.0, 0.0, 0.2, 0.0, 0.2, 0.3, 1.0, 1.0), (0.0, 0.0));
    }

    #[test]
    fn sontag_examples() {
        assert_eq!(sontag_gain(-3.0, 0.0, 1.0), 1.0);
        assert_abs_diff_eq!(sontag_gain(0.0, -0.5, 1.0), 2.0, epsilon = 1e-15);
        assert_eq!(sontag_gain(-1.0, 1e-13, 0.7), 0.7);
    }

    #[test]
    fn gated_zero_errors_give_manual_passthrough() {
        let cmd = control(&errors(0.0, 0.0, 0.2, 0.0, 1.0), 0.2, &ControllerGains::default(), 1.5);
        assert_eq!(cmd.u, 0.0);
        assert_eq!(cmd.beta, 0.0);
        assert_eq!((cmd.v_xi, cmd.v_eta), (0.2, 0.0));
    }

    #[test]
    fn heading_error_example() {
        let cmd = control(&errors(0.0, 0.5, 0.2, 0.0, 1.0), 0.2, &ControllerGains::default(), 1.5);
        assert_abs_diff_eq!(cmd.u, 1.0, epsilon = 1e-12);
        assert!(!cmd.saturated);
        let clipped = control(&errors(0.0, 0.5, 0.2, 0.0, 1.0), 0.2, &ControllerGains::default(), 0.4);
        assert_eq!(clipped.u, 0.4);
        assert!(clipped.saturated);
    }

    #[test]
    fn lateral_only_error_translates_without_turning() {
        let cmd = control(&errors(0.3, 0.0, 0.2, 0.0, 1.0), 0.2, &ControllerGains::default(), 1.5);
        assert_eq!(cmd.u, 0.0);
        assert!(cmd.beta > 0.0);
    }

    #[test]
    fn clf_sign_condition_at_zero_heading_error() {
        for e2 in [-1.0, -0.2, 1e-3, 0.4, 1.0] {
            let s = errors(e2, 0.0, 0.2, 1.0, 1.0);
            let (beta, _, _) = velocity_conversion(0.2, e2, 1.0);
            let (a, b) = lie_derivatives(e2, 0.0, 0.2, beta, s.v_r, s.omega_r, 1.0, 1.0);
            assert_eq!(b, 0.0);
            assert!(a < 0.0, "e2 = {e2}: a = {a}");
        }
    }

    proptest! {
        #[test]
        fn decrease_identity(
            e2 in -1.0f64..1.0, e3 in -1.2f64..1.2, v in 0.05f64..0.3, rho in -2.0f64..2.0,
        ) {
            let g = ControllerGains::default();
            let s = errors(e2, e3, v, rho, g.alpha);
            let (beta, _, _) = velocity_conversion(v, e2, g.alpha);
            let (a, b) = lie_derivatives(e2, e3, v, beta, s.v_r, s.omega_r, g.k2, g.k3);
            let u = control(&s, v, &g, f64::INFINITY).u;
            let vdot = a + b * u;
            if b.abs() > B_ZERO {
                let expected = -g.c0 * b * b - (a * a + b.powi(4)).sqrt();
                prop_assert!((vdot - expected).abs() <= 1e-12 * (1.0 + a.abs() + b * b));
                prop_assert!(vdot < 0.0);
            }
        }

        #[test]
        fn u_is_odd_on_straight_paths(e2 in -1.0f64..1.0, e3 in -1.2f64..1.2, v in 0.05f64..0.3) {
            let g = ControllerGains::default();
            let plus = control(&errors(e2, e3, v, 0.0, g.alpha), v, &g, f64::INFINITY);
            let minus = control(&errors(-e2, -e3, v, 0.0, g.alpha), v, &g, f64::INFINITY);
            prop_assert!((plus.u + minus.u).abs() < 1e-12);
            prop_assert!((plus.beta + minus.beta).abs() < 1e-15);
        }

        #[test]
        fn gain_is_at_least_offset(a in -5.0f64..5.0, b in -2.0f64..2.0, c0 in 0.0f64..3.0) {
            let p = sontag_gain(a, b, c0);
            prop_assert!(p >= c0 && p >= 0.0);
        }
    }
}
