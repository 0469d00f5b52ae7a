//! Two-axis joystick with haptic guidance on the lateral axis.
//!
//! The lateral axis is a mass–damper driven by the device's guidance force and
//! the operator's force. The guidance force pulls the stick toward the angle
//! `φ_d = h⁻¹(u)` that would command the controller's yaw rate, so a hands-off
//! operator gets the automatic behaviour while a firm hand can always win.
//! The longitudinal axis has no haptics and follows the operator directly.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct JoystickState {
    /// Longitudinal deflection in `[-1, 1]`.
    pub phi_x: f64,
    /// Lateral deflection in `[-1, 1]`.
    pub phi_y: f64,
    /// Lateral deflection rate, 1/s.
    pub phi_y_rate: f64,
    /// Guidance force applied by the device during the last step.
    pub force: f64,
    /// Operator force applied during the last step.
    pub human_force: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HapticGains {
    /// Guidance stiffness, force per unit stick error.
    pub k_p: f64,
    /// Guidance damping, force per unit stick rate.
    pub k_d: f64,
    /// Yaw rate at full lateral deflection, rad/s.
    pub k_omega: f64,
    /// Speed at full forward deflection, m/s.
    pub k_v: f64,
    pub stick_mass: f64,
    pub stick_damping: f64,
    /// Stiffness of the virtual hand that turns position inputs into force.
    pub hand_stiffness: f64,
    /// Update rate of the device's force loop, Hz.
    pub haptic_rate: f64,
    /// Map negative longitudinal deflection to reverse speed instead of zero.
    pub allow_reverse: bool,
    /// Replace the stick dynamics by their static equilibrium each tick.
    pub quasi_static: bool,
}

impl Default for HapticGains {
    fn default() -> Self {
        Self {
            k_p: 2.0,
            k_d: 0.5,
            k_omega: 1.0,
            k_v: 0.3,
            stick_mass: 0.05,
            stick_damping: 0.8,
            hand_stiffness: 4.0,
            haptic_rate: 1000.0,
            allow_reverse: false,
            quasi_static: false,
        }
    }
}

impl HapticGains {
    pub fn is_valid(&self) -> bool {
        [
            self.k_p,
            self.k_d,
            self.k_omega,
            self.k_v,
            self.stick_mass,
            self.stick_damping,
            self.hand_stiffness,
            self.haptic_rate,
        ]
        .iter()
        .all(|g| g.is_finite() && *g > 0.0)
    }
}

/// `ω_d = h(φ_y)`, linear in the deflection.
pub fn stick_to_omega(phi_y: f64, gains: &HapticGains) -> f64 {
    gains.k_omega * phi_y
}

/// `φ_d = h⁻¹(u)`, clamped to the stick range.
pub fn omega_to_stick(u: f64, gains: &HapticGains) -> f64 {
    (u / gains.k_omega).clamp(-1.0, 1.0)
}

/// Force applied by the device to the stick: a spring toward `phi_d` plus
/// damping of the stick rate.
pub fn guidance_force(phi_y: f64, phi_d: f64, phi_y_rate: f64, gains: &HapticGains) -> f64 {
    -gains.k_p * (phi_y - phi_d) - gains.k_d * phi_y_rate
}

/// Operator speed magnitude from the longitudinal deflection.
pub fn stick_to_speed(phi_x: f64, gains: &HapticGains) -> f64 {
    if gains.allow_reverse {
        gains.k_v * phi_x
    } else {
        gains.k_v * phi_x.max(0.0)
    }
}

/// Integrates `m·φ̈ = F + F_human − b·φ̇` over `dt`. The stick's own damping is
/// treated implicitly; both forces are held constant over the step. Hitting
/// a hard stop zeroes the rate.
pub fn joystick_step(
    state: &JoystickState,
    force: f64,
    human_force: f64,
    phi_x_cmd: f64,
    dt: f64,
    gains: &HapticGains,
) -> JoystickState {
    let m = gains.stick_mass;
    let mut rate = (state.phi_y_rate + dt * (force + human_force) / m)
        / (1.0 + dt * gains.stick_damping / m);
    let mut phi_y = state.phi_y + dt * rate;
    if phi_y > 1.0 {
        phi_y = 1.0;
        rate = 0.0;
    } else if phi_y < -1.0 {
        phi_y = -1.0;
        rate = 0.0;
    }
    JoystickState {
        phi_x: phi_x_cmd.clamp(-1.0, 1.0),
        phi_y,
        phi_y_rate: rate,
        force,
        human_force,
    }
}

/// Advances the stick over one control period `dt` the way the device does:
/// its force loop runs at `haptic_rate`, recomputing the guidance force
/// toward `phi_d` (none when `None`) and the hand force at every sub-step.
pub fn haptic_step(
    state: &JoystickState,
    phi_d: Option<f64>,
    hand: HandInput,
    phi_x_cmd: f64,
    dt: f64,
    gains: &HapticGains,
) -> JoystickState {
    let n = (dt * gains.haptic_rate - 1e-9).ceil().max(1.0) as usize;
    let h = dt / n as f64;
    let mut s = *state;
    for _ in 0..n {
        let force = phi_d.map_or(0.0, |d| guidance_force(s.phi_y, d, s.phi_y_rate, gains));
        let human = hand.force_on(s.phi_y, gains);
        s = joystick_step(&s, force, human, phi_x_cmd, h, gains);
    }
    s
}

/// Static equilibrium of the lateral axis: the deflection where the guidance
/// spring balances the operator. `hand` is either a constant force or a
/// position target held with the virtual-hand stiffness.
pub fn equilibrium(phi_d: Option<f64>, hand: HandInput, gains: &HapticGains) -> f64 {
    let (k_guide, target) = match phi_d {
        Some(d) => (gains.k_p, d),
        None => (0.0, 0.0),
    };
    let phi = match hand {
        HandInput::Force(f) => {
            if k_guide > 0.0 {
                target + f / k_guide
            } else if f == 0.0 {
                0.0
            } else {
                f.signum()
            }
        }
        HandInput::Position(p) => {
            let k_hand = gains.hand_stiffness;
            (k_guide * target + k_hand * p) / (k_guide + k_hand)
        }
    };
    phi.clamp(-1.0, 1.0)
}

/// How the operator drives the lateral axis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", content = "value", rename_all = "lowercase")]
pub enum HandInput {
    /// Force applied to the stick.
    Force(f64),
    /// Stick angle the hand tries to hold.
    Position(f64),
}

impl HandInput {
    /// Force exerted on a stick currently at `phi_y`.
    pub fn force_on(&self, phi_y: f64, gains: &HapticGains) -> f64 {
        match *self {
            HandInput::Force(f) => f,
            HandInput::Position(p) => gains.hand_stiffness * (p.clamp(-1.0, 1.0) - phi_y),
        }
    }
}
