//! Path-following errors in the robot frame and the reference robot's velocities.

use crate::pose::{wrap_angle, Pose};
use serde::{Deserialize, Serialize};

/// |e3| is clamped to this value before evaluating the reference speed,
/// keeping `cos e3` away from zero.
pub const E3_CLAMP: f64 = 1.2;

/// Errors of the reference robot with respect to the real robot, plus the
/// reference quantities the controller consumes.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ErrorState {
    pub e1: f64,
    pub e2: f64,
    pub e3: f64,
    pub v_r: f64,
    pub omega_r: f64,
    pub rho: f64,
    pub detected: bool,
}

/// `[e1, e2]` is the reference position relative to the robot, expressed in
/// the robot frame; `e3` is the heading difference wrapped to `(-π, π]`.
pub fn compute_errors(robot: &Pose, reference: &Pose) -> (f64, f64, f64) {
    let (s, c) = robot.theta.sin_cos();
    let dx = reference.x - robot.x;
    let dy = reference.y - robot.y;
    (
        c * dx + s * dy,
        -s * dx + c * dy,
        wrap_angle(reference.theta - robot.theta),
    )
}

/// Inverse of [`compute_errors`] for `e1 = 0`: the robot pose that sees
/// `reference` at lateral error `e2` and heading error `e3`.
pub fn robot_pose_from_errors(reference: &Pose, e2: f64, e3: f64) -> Pose {
    let theta = reference.theta - e3;
    let (s, c) = theta.sin_cos();
    // reference = robot + e2 * left(theta)
    Pose::new(reference.x + e2 * s, reference.y - e2 * c, theta)
}

/// Longitudinal speed of the reference robot that keeps `e1` at zero,
/// `(V cos β − e2 ω) / cos e3`, with `e3` clamped to [`E3_CLAMP`] and the
/// result clamped to `±v_r_max`.
pub fn reference_speed(v: f64, beta: f64, e2: f64, e3: f64, omega_applied: f64, v_r_max: f64) -> f64 {
    let e3 = e3.clamp(-E3_CLAMP, E3_CLAMP);
    let v_r = (v * beta.cos() - e2 * omega_applied) / e3.cos();
    v_r.clamp(-v_r_max, v_r_max)
}

/// Yaw rate of the reference robot travelling at `v_r` along curvature `rho`.
pub fn reference_turn_rate(rho: f64, v_r: f64) -> f64 {
    rho * v_r
}

/// Switches the assistance off by zeroing `e2` and `e3` when the path is not
/// detected or the operator pressed the override button.
pub fn gate(errors: &ErrorState, detected: bool, operator_override: bool) -> ErrorState {
    let mut out = ErrorState {
        detected,
        ..*errors
    };
    if !detected || operator_override {
        out.e2 = 0.0;
        out.e3 = 0.0;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use std::f64::consts::{FRAC_PI_2, PI};

    #[test]
    fn identical_poses_have_zero_error() {
        let p = Pose::new(1.3, -0.4, 2.0);
        assert_eq!(compute_errors(&p, &p), (0.0, 0.0, 0.0));
    }

    #[test]
    fn identity_rotation_at_zero_heading() {
        let (e1, e2, e3) = compute_errors(&Pose::default(), &Pose::new(1.0, 0.5, 0.3));
        assert_abs_diff_eq!(e1, 1.0);
        assert_abs_diff_eq!(e2, 0.5);
        assert_abs_diff_eq!(e3, 0.3);
    }

    #[test]
    fn displacement_rotated_into_body_frame() {
        let (e1, e2, e3) = compute_errors(
            &Pose::new(0.0, 0.0, FRAC_PI_2),
            &Pose::new(0.0, 1.0, FRAC_PI_2),
        );
        assert_abs_diff_eq!(e1, 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(e2, 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(e3, 0.0);
    }

    #[test]
    fn reference_speed_examples() {
        assert_abs_diff_eq!(reference_speed(0.2, 0.0, 0.0, 0.0, 0.0, 0.6), 0.2);
        let beta = 0.3f64.atan();
        let v_r = reference_speed(0.2, beta, 0.3, 0.2, 0.1, 0.6);
        let expected = (0.2 * beta.cos() - 0.03) / 0.2f64.cos();
        assert_abs_diff_eq!(v_r, expected, epsilon = 1e-15);
        assert_abs_diff_eq!(v_r, 0.16485, epsilon = 1e-5);
    }

    #[test]
    fn reference_speed_is_finite_at_clamp() {
        for e3 in [E3_CLAMP, -E3_CLAMP, FRAC_PI_2, PI] {
            let v_r = reference_speed(0.3, 0.0, 0.0, e3, 0.0, 0.6);
            assert!(v_r.is_finite());
            assert!(v_r <= 0.6);
        }
        assert_abs_diff_eq!(
            reference_speed(0.3, 0.0, 0.0, FRAC_PI_2, 0.0, 10.0),
            0.3 / E3_CLAMP.cos()
        );
    }

    #[test]
    fn turn_rate_is_signed_product() {
        assert_eq!(reference_turn_rate(0.0, 0.7), 0.0);
        assert_abs_diff_eq!(reference_turn_rate(0.5, 0.2), 0.1);
        assert_abs_diff_eq!(reference_turn_rate(-0.5, 0.2), -0.1);
    }

    #[test]
    fn gating_rules() {
        let e = ErrorState {
            e1: 0.0,
            e2: 0.3,
            e3: 0.2,
            rho: 0.5,
            ..ErrorState::default()
        };
        let g = gate(&e, false, false);
        assert_eq!((g.e1, g.e2, g.e3), (0.0, 0.0, 0.0));
        assert!(!g.detected);
        assert_eq!(g.rho, 0.5);
        let g = gate(&e, true, true);
        assert_eq!((g.e2, g.e3), (0.0, 0.0));
        let g = gate(&e, true, false);
        assert_eq!((g.e2, g.e3), (0.3, 0.2));
        assert!(g.detected);
    }

    #[test]
    fn pose_from_errors_round_trip() {
        let reference = Pose::new(1.0, 2.0, 0.4);
        let robot = robot_pose_from_errors(&reference, 0.5, -0.3);
        let (e1, e2, e3) = compute_errors(&robot, &reference);
        assert_abs_diff_eq!(e1, 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(e2, 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(e3, -0.3, epsilon = 1e-15);
    }

    proptest! {
        #[test]
        fn errors_invariant_under_rigid_motion(
            x in -5.0f64..5.0, y in -5.0f64..5.0, th in -3.1f64..3.1,
            xr in -5.0f64..5.0, yr in -5.0f64..5.0, thr in -3.1f64..3.1,
            tx in -10.0f64..10.0, ty in -10.0f64..10.0, rot in -3.1f64..3.1,
        ) {
            let robot = Pose::new(x, y, th);
            let reference = Pose::new(xr, yr, thr);
            let a = compute_errors(&robot, &reference);
            let b = compute_errors(&robot.transformed(tx, ty, rot), &reference.transformed(tx, ty, rot));
            prop_assert!((a.0 - b.0).abs() < 1e-12);
            prop_assert!((a.1 - b.1).abs() < 1e-12);
            prop_assert!(wrap_angle(a.2 - b.2).abs() < 1e-12);
        }

        #[test]
        fn heading_error_is_wrapped(th in -50.0f64..50.0, thr in -50.0f64..50.0) {
            let (_, _, e3) = compute_errors(
                &Pose { x: 0.0, y: 0.0, theta: th },
                &Pose { x: 1.0, y: 0.0, theta: thr },
            );
            prop_assert!(e3 > -PI && e3 <= PI);
        }
    }
}
