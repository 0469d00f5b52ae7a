//! Synthetic operators that close the loop without a live human.
//!
//! The manual operator is a delayed, noisy PD steering law on the lateral and
//! heading errors. Observation noise is a stationary Gauss–Markov process
//! (white when the correlation time is zero) drawn from a seeded ChaCha
//! stream, so every operator is fully determined by its parameters and seed.

use crate::joystick::HandInput;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use std::collections::VecDeque;

/// What an operator perceives at the start of a tick.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Observation {
    pub tick: u64,
    pub dt: f64,
    /// True (ungated) lateral error, m.
    pub e2: f64,
    /// True (ungated) heading error, rad.
    pub e3: f64,
    /// Path curvature at the reference point, 1/m.
    pub rho: f64,
    pub detected: bool,
    pub phi_y: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OperatorAction {
    pub phi_x_cmd: f64,
    pub lateral: HandInput,
    pub override_button: bool,
}

impl OperatorAction {
    pub fn idle() -> Self {
        Self {
            phi_x_cmd: 0.0,
            lateral: HandInput::Force(0.0),
            override_button: false,
        }
    }
}

pub trait Operator {
    fn act(&mut self, obs: &Observation) -> OperatorAction;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OperatorKind {
    Compliant,
    ManualPd,
    Hybrid,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OperatorParams {
    pub kind: OperatorKind,
    /// Reaction delay, s.
    pub reaction_delay: f64,
    /// Standard deviation of the lateral-error perception noise, m.
    pub sigma_e2: f64,
    /// Standard deviation of the heading-error perception noise, rad.
    pub sigma_e3: f64,
    /// Correlation time of the perception noise, s. Zero gives white noise.
    pub noise_correlation_time: f64,
    /// Stick per metre of lateral error.
    pub k_p2: f64,
    /// Stick per radian of heading error.
    pub k_p3: f64,
    /// Stick per rad/s of heading-error rate.
    pub k_d: f64,
    /// Time constant of the heading-rate estimate, s.
    pub derivative_filter: f64,
    /// Longitudinal deflection held on straights, `[0, 1]`.
    pub speed_setpoint: f64,
    /// Speed reduction in curves: the setpoint is divided by `1 + |ρ|·curve_slowdown`.
    pub curve_slowdown: f64,
}

impl Default for OperatorParams {
    fn default() -> Self {
        Self {
            kind: OperatorKind::Hybrid,
            reaction_delay: 0.3,
            sigma_e2: 0.02,
            sigma_e3: 0.05,
            noise_correlation_time: 0.5,
            k_p2: 2.0,
            k_p3: 1.5,
            k_d: 0.3,
            derivative_filter: 0.1,
            speed_setpoint: 0.67,
            curve_slowdown: 0.5,
        }
    }
}

impl OperatorParams {
    pub fn is_valid(&self) -> bool {
        let non_negative = [
            self.reaction_delay,
            self.sigma_e2,
            self.sigma_e3,
            self.noise_correlation_time,
            self.k_p2,
            self.k_p3,
            self.k_d,
            self.derivative_filter,
            self.curve_slowdown,
        ];
        non_negative.iter().all(|v| v.is_finite() && *v >= 0.0)
            && (0.0..=1.0).contains(&self.speed_setpoint)
    }
}

/// Holds the stick forward at the setpoint and keeps hands off the lateral axis.
#[derive(Debug, Clone)]
pub struct CompliantOperator {
    speed_setpoint: f64,
}

impl CompliantOperator {
    pub fn new(speed_setpoint: f64) -> Self {
        Self { speed_setpoint }
    }
}

impl Operator for CompliantOperator {
    fn act(&mut self, _obs: &Observation) -> OperatorAction {
        OperatorAction {
            phi_x_cmd: self.speed_setpoint,
            lateral: HandInput::Force(0.0),
            override_button: false,
        }
    }
}

/// Stationary first-order Gauss–Markov noise source.
#[derive(Debug, Clone)]
struct PerceptionNoise {
    sigma: f64,
    correlation_time: f64,
    value: Option<f64>,
}

impl PerceptionNoise {
    fn new(sigma: f64, correlation_time: f64) -> Self {
        Self {
            sigma,
            correlation_time,
            value: None,
        }
    }

    fn next(&mut self, rng: &mut ChaCha8Rng, dt: f64) -> f64 {
        let z: f64 = StandardNormal.sample(rng);
        let v = match self.value {
            Some(prev) if self.correlation_time > 0.0 => {
                let keep = (-dt / self.correlation_time).exp();
                keep * prev + self.sigma * (1.0 - keep * keep).sqrt() * z
            }
            _ => self.sigma * z,
        };
        self.value = Some(v);
        v
    }
}

#[derive(Debug, Clone, Copy)]
struct Perceived {
    e2: f64,
    e3: f64,
    rho: f64,
    detected: bool,
}

/// Delayed, noisy PD steering on the perceived errors.
#[derive(Debug, Clone)]
pub struct ManualPdOperator {
    params: OperatorParams,
    rng: ChaCha8Rng,
    noise_e2: PerceptionNoise,
    noise_e3: PerceptionNoise,
    history: VecDeque<Perceived>,
    last_e3: Option<f64>,
    e3_rate: f64,
    delayed_detected: bool,
}

impl ManualPdOperator {
    pub fn new(params: OperatorParams, seed: u64) -> Self {
        Self {
            params,
            rng: ChaCha8Rng::seed_from_u64(seed),
            noise_e2: PerceptionNoise::new(params.sigma_e2, params.noise_correlation_time),
            noise_e3: PerceptionNoise::new(params.sigma_e3, params.noise_correlation_time),
            history: VecDeque::new(),
            last_e3: None,
            e3_rate: 0.0,
            delayed_detected: true,
        }
    }

    /// Detection flag as perceived after the reaction delay.
    pub fn delayed_detected(&self) -> bool {
        self.delayed_detected
    }

    fn delay_ticks(&self, dt: f64) -> usize {
        (self.params.reaction_delay / dt).round() as usize
    }
}

impl Operator for ManualPdOperator {
    fn act(&mut self, obs: &Observation) -> OperatorAction {
        let p = &self.params;
        let n2 = self.noise_e2.next(&mut self.rng, obs.dt);
        let n3 = self.noise_e3.next(&mut self.rng, obs.dt);
        self.history.push_back(Perceived {
            e2: obs.e2 + n2,
            e3: obs.e3 + n3,
            rho: obs.rho,
            detected: obs.detected,
        });
        let keep = self.delay_ticks(obs.dt) + 1;
        while self.history.len() > keep {
            self.history.pop_front();
        }
        let seen = *self.history.front().expect("history is never empty here");
        self.delayed_detected = seen.detected;

        let raw_rate = match self.last_e3 {
            Some(prev) => (seen.e3 - prev) / obs.dt,
            None => 0.0,
        };
        self.last_e3 = Some(seen.e3);
        let blend = obs.dt / (p.derivative_filter + obs.dt);
        self.e3_rate += blend * (raw_rate - self.e3_rate);

        // positive deflection turns left, toward a reference on the left (e2 > 0)
        let steer = (p.k_p2 * seen.e2 + p.k_p3 * seen.e3 + p.k_d * self.e3_rate).clamp(-1.0, 1.0);
        let speed = p.speed_setpoint / (1.0 + seen.rho.abs() * p.curve_slowdown);
        OperatorAction {
            phi_x_cmd: speed.clamp(-1.0, 1.0),
            lateral: HandInput::Position(steer),
            override_button: false,
        }
    }
}

/// Hands off while the path is (perceived as) detected, manual PD takeover
/// while it is lost. The PD stage runs every tick so its noise stream stays
/// aligned with a pure manual run of the same seed.
#[derive(Debug, Clone)]
pub struct HybridOperator {
    manual: ManualPdOperator,
    compliant: CompliantOperator,
}

impl HybridOperator {
    pub fn new(params: OperatorParams, seed: u64) -> Self {
        Self {
            manual: ManualPdOperator::new(params, seed),
            compliant: CompliantOperator::new(params.speed_setpoint),
        }
    }
}

impl Operator for HybridOperator {
    fn act(&mut self, obs: &Observation) -> OperatorAction {
        let manual = self.manual.act(obs);
        if self.manual.delayed_detected() {
            self.compliant.act(obs)
        } else {
            manual
        }
    }
}

/// Stick state driven from outside (a live cockpit or a recorded trace).
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct HeldInput {
    pub phi_x: f64,
    /// Lateral position held by the hand; `None` when the stick is released.
    #[serde(default)]
    pub phi_y: Option<f64>,
    #[serde(default)]
    pub override_button: bool,
}

impl HeldInput {
    pub fn clamped(self) -> Self {
        Self {
            phi_x: clamp_unit(self.phi_x),
            phi_y: self.phi_y.map(clamp_unit),
            override_button: self.override_button,
        }
    }
}

fn clamp_unit(v: f64) -> f64 {
    if v.is_nan() {
        0.0
    } else {
        v.clamp(-1.0, 1.0)
    }
}

/// Applies the latest held stick input with a zero-order hold.
#[derive(Debug, Clone, Default)]
pub struct HeldInputOperator {
    pub input: HeldInput,
}

impl Operator for HeldInputOperator {
    fn act(&mut self, _obs: &Observation) -> OperatorAction {
        OperatorAction {
            phi_x_cmd: self.input.phi_x,
            lateral: match self.input.phi_y {
                Some(p) => HandInput::Position(p),
                None => HandInput::Force(0.0),
            },
            override_button: self.input.override_button,
        }
    }
}

/// Builds the operator described by `params`, seeded with `seed`.
pub fn build_operator(params: &OperatorParams, seed: u64) -> Box<dyn Operator + Send> {
    match params.kind {
        OperatorKind::Compliant => Box::new(CompliantOperator::new(params.speed_setpoint)),
        OperatorKind::ManualPd => Box::new(ManualPdOperator::new(*params, seed)),
        OperatorKind::Hybrid => Box::new(HybridOperator::new(*params, seed)),
    }
}
