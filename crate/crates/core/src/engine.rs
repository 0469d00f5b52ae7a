//! Fixed-timestep simulation of the cooperative path-following loop.
//!
//! Each tick runs, in order: path projection and detection, true errors
//! against the reference point, gating, velocity conversion and the heading
//! law (CC only), the haptic target and guidance force (CC only), the
//! operator's action, the stick dynamics, the stick-to-velocity maps and the
//! vehicle step. All values computed in the tick are recorded against the
//! tick start time.

use crate::controller::{control, velocity_conversion, ControlCommand};
use crate::error_frame::{compute_errors, gate, reference_speed, reference_turn_rate, robot_pose_from_errors, ErrorState};
use crate::joystick::{
    equilibrium, guidance_force, haptic_step, omega_to_stick, stick_to_omega, stick_to_speed,
    HandInput, JoystickState,
};
use crate::operator::{build_operator, Observation, Operator, OperatorAction};
use crate::path::PathModel;
use crate::pose::Pose;
use crate::record::{Event, RunRecord, RunStatus, TickRow};
use crate::scenario::{Mode, Scenario, ScenarioError};
use crate::vehicle::{self, BodyVelocity, VehicleState};

/// The run completes once the nearest path point is this close to the end.
pub const COMPLETION_EPS: f64 = 0.05;

#[derive(Debug, Clone)]
pub struct Engine {
    scenario: Scenario,
    path: PathModel,
    max_ticks: u64,
    vehicle: VehicleState,
    stick: JoystickState,
    tick: u64,
    override_active: bool,
    last_detected: bool,
    pending_events: Vec<Event>,
    last_phi_d: f64,
    record: RunRecord,
}

impl Engine {
    pub fn new(scenario: Scenario) -> Result<Self, ScenarioError> {
        let path = scenario.validate()?;
        let start = path.point_at(0.0).pose;
        let [e2, e3] = scenario.vehicle.initial_errors;
        let pose = robot_pose_from_errors(&start, e2, e3);
        let max_ticks = (scenario.max_duration / scenario.dt - 1e-9).ceil().max(1.0) as u64;
        let record = RunRecord {
            scenario_hash: scenario.hash(),
            mode: scenario.mode,
            seed: scenario.seed,
            dt: scenario.dt,
            rows: Vec::new(),
            status: None,
            terminal_time: 0.0,
            diagnostic: None,
        };
        Ok(Self {
            scenario,
            path,
            max_ticks,
            vehicle: VehicleState::at(pose),
            stick: JoystickState::default(),
            tick: 0,
            override_active: false,
            last_detected: true,
            pending_events: Vec::new(),
            last_phi_d: 0.0,
            record,
        })
    }

    pub fn scenario(&self) -> &Scenario {
        &self.scenario
    }

    pub fn path(&self) -> &PathModel {
        &self.path
    }

    /// Number of ticks executed so far.
    pub fn tick(&self) -> u64 {
        self.tick
    }

    pub fn time(&self) -> f64 {
        self.tick as f64 * self.scenario.dt
    }

    pub fn vehicle(&self) -> &VehicleState {
        &self.vehicle
    }

    pub fn stick(&self) -> &JoystickState {
        &self.stick
    }

    /// Haptic target angle of the last tick.
    pub fn phi_d(&self) -> f64 {
        self.last_phi_d
    }

    pub fn is_finished(&self) -> bool {
        self.record.status.is_some()
    }

    pub fn record(&self) -> &RunRecord {
        &self.record
    }

    pub fn last_row(&self) -> Option<&TickRow> {
        self.record.rows.last()
    }

    /// Ends the run; unfinished runs are marked interrupted.
    pub fn into_record(mut self) -> RunRecord {
        if self.record.status.is_none() {
            self.record.status = Some(RunStatus::Interrupted);
        }
        self.record
    }

    /// Attaches an event to the next recorded tick.
    pub fn push_event(&mut self, event: Event) {
        self.pending_events.push(event);
    }

    fn abort(&mut self, diagnostic: String) {
        self.record.status = Some(RunStatus::Aborted);
        self.record.diagnostic = Some(diagnostic);
        self.record.terminal_time = self.time();
    }

    /// Runs one tick with `operator` in the loop. Does nothing once finished.
    pub fn step(&mut self, operator: &mut dyn Operator) {
        if self.is_finished() {
            return;
        }
        let sc = &self.scenario;
        let haptics = &sc.haptics;
        let dt = sc.dt;
        let cc = sc.mode == Mode::CC;
        let tick = self.tick;
        let pose = self.vehicle.pose;

        let (near, distance) = self.path.project_with_distance(&pose);
        let detected = distance <= sc.sensing_radius && !near.in_gap;
        let (reference, lateral_reference) = self.path.reference_point(&pose);
        let (e1, e2, e3) = compute_errors(&pose, &reference.pose);
        let rho = reference.curvature;
        let truth = ErrorState {
            e1,
            e2,
            e3,
            v_r: 0.0,
            omega_r: 0.0,
            rho,
            detected,
        };

        let gated = gate(&truth, detected, self.override_active);
        let v_now = stick_to_speed(self.stick.phi_x, haptics);
        let beta = if cc {
            velocity_conversion(v_now, gated.e2, sc.controller.alpha).0
        } else {
            0.0
        };
        let omega_applied = self.vehicle.realized_velocity.omega;
        let v_r = reference_speed(v_now, beta, gated.e2, gated.e3, omega_applied, 2.0 * sc.vehicle.v_max);
        let omega_r = reference_turn_rate(rho, v_r);
        let gated = ErrorState {
            v_r,
            omega_r,
            ..gated
        };

        let (command, phi_d, force) = if cc {
            let c = control(&gated, v_now, &sc.controller, sc.vehicle.omega_max);
            let phi_d = omega_to_stick(c.u, haptics);
            let f = guidance_force(self.stick.phi_y, phi_d, self.stick.phi_y_rate, haptics);
            (c, phi_d, f)
        } else {
            (
                ControlCommand {
                    v: v_now,
                    ..ControlCommand::default()
                },
                0.0,
                0.0,
            )
        };

        let obs = Observation {
            tick,
            dt,
            e2,
            e3,
            rho,
            detected,
            phi_y: self.stick.phi_y,
        };
        let action = sanitize(operator.act(&obs));
        let human_force = action.lateral.force_on(self.stick.phi_y, haptics);
        let stick = if haptics.quasi_static {
            let phi_y = equilibrium(cc.then_some(phi_d), action.lateral, haptics);
            JoystickState {
                phi_x: action.phi_x_cmd,
                phi_y,
                phi_y_rate: 0.0,
                force,
                human_force,
            }
        } else {
            haptic_step(&self.stick, cc.then_some(phi_d), action.lateral, action.phi_x_cmd, dt, haptics)
        };

        let v = stick_to_speed(stick.phi_x, haptics);
        let omega = stick_to_omega(stick.phi_y, haptics);
        let body = if cc {
            let (s, c) = beta.sin_cos();
            BodyVelocity::new(v * c, v * s, omega)
        } else {
            BodyVelocity::new(v, 0.0, omega)
        };
        let (_, velocity_saturated) = sc.vehicle.saturate(body);

        let mut events = std::mem::take(&mut self.pending_events);
        if detected != self.last_detected {
            events.push(if detected { Event::PathFound } else { Event::PathLost });
        }
        if action.override_button != self.override_active {
            events.push(if action.override_button {
                Event::OverrideOn
            } else {
                Event::OverrideOff
            });
        }

        let row = TickRow {
            tick,
            t: tick as f64 * dt,
            pose,
            s: near.s,
            distance,
            lateral_reference,
            e1,
            e2,
            e3,
            gated_e2: gated.e2,
            gated_e3: gated.e3,
            detected,
            override_active: self.override_active,
            rho,
            v_r,
            omega_r,
            beta,
            u: command.u,
            phi_x: stick.phi_x,
            phi_y: stick.phi_y,
            phi_d,
            force,
            human_force,
            v,
            omega,
            u_saturated: command.saturated,
            velocity_saturated,
            events,
        };
        let finite = [
            e1, e2, e3, v_r, omega_r, beta, command.u, stick.phi_y, force, human_force, v, omega,
        ]
        .iter()
        .all(|x| x.is_finite());
        self.record.rows.push(row);
        self.last_detected = detected;
        self.override_active = action.override_button;
        self.last_phi_d = phi_d;
        self.stick = stick;

        if !finite {
            self.tick += 1;
            self.abort(format!("non-finite value computed at tick {tick}"));
            return;
        }
        match vehicle::step(&self.vehicle, body, dt, &self.scenario.vehicle) {
            Ok(next) => self.vehicle = next,
            Err(err) => {
                self.tick += 1;
                self.abort(format!("vehicle step failed at tick {tick}: {err}"));
                return;
            }
        }
        self.tick += 1;

        let progress = self.path.project(&self.vehicle.pose).s;
        if progress >= self.path.total_length() - COMPLETION_EPS {
            self.record.status = Some(RunStatus::Completed);
        } else if self.tick >= self.max_ticks {
            self.record.status = Some(RunStatus::Timeout);
        }
        self.record.terminal_time = self.time();
    }

    /// Steps until the run finishes.
    pub fn run_to_end(&mut self, operator: &mut dyn Operator) {
        while !self.is_finished() {
            self.step(operator);
        }
    }

    pub fn pose(&self) -> Pose {
        self.vehicle.pose
    }
}

fn finite_or_zero(v: f64) -> f64 {
    if v.is_finite() {
        v
    } else {
        0.0
    }
}

fn sanitize(action: OperatorAction) -> OperatorAction {
    OperatorAction {
        phi_x_cmd: finite_or_zero(action.phi_x_cmd).clamp(-1.0, 1.0),
        lateral: match action.lateral {
            HandInput::Force(f) => HandInput::Force(finite_or_zero(f)),
            HandInput::Position(p) => HandInput::Position(finite_or_zero(p).clamp(-1.0, 1.0)),
        },
        override_button: action.override_button,
    }
}

/// Runs a scenario headlessly with the operator it configures.
pub fn run(scenario: &Scenario) -> Result<RunRecord, ScenarioError> {
    let mut operator = build_operator(&scenario.operator, scenario.seed);
    run_with(scenario, operator.as_mut())
}

/// Runs a scenario with an explicit operator.
pub fn run_with(scenario: &Scenario, operator: &mut dyn Operator) -> Result<RunRecord, ScenarioError> {
    let mut engine = Engine::new(scenario.clone())?;
    engine.run_to_end(operator);
    Ok(engine.into_record())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::controller::clf_value;
    use crate::operator::{CompliantOperator, OperatorKind};

    fn straight_cc(e2: f64, e3: f64) -> Scenario {
        let mut s = Scenario::straight(8.0);
        s.path.start = Pose::new(-1.0, 0.0, 0.0);
        s.vehicle.initial_errors = [e2, e3];
        s.operator.kind = OperatorKind::Compliant;
        s.max_duration = 60.0;
        s
    }

    #[test]
    fn on_path_start_stays_on_path() {
        let rec = run(&straight_cc(0.0, 0.0)).unwrap();
        let rmse = (rec.rows.iter().map(|r| r.e2 * r.e2).sum::<f64>() / rec.rows.len() as f64).sqrt();
        assert!(rmse < 1e-3);
        assert_eq!(rec.status, Some(RunStatus::Completed));
    }

    #[test]
    fn lateral_offset_decays_monotonically() {
        let sc = straight_cc(0.3, 0.0);
        let rec = run(&sc).unwrap();
        assert_eq!(rec.status, Some(RunStatus::Completed));
        let g = sc.controller;
        let v0: Vec<f64> = rec.rows.iter().map(|r| clf_value(r.e2, r.e3, g.k2, g.k3)).collect();
        for w in v0.windows(2) {
            assert!(w[1] <= w[0] + 1e-12, "{} -> {}", w[0], w[1]);
        }
        assert!(v0.last().unwrap() < &(0.01 * v0[0]));
    }

    #[test]
    fn runs_are_reproducible() {
        let sc = Scenario::default_course();
        let a = run(&sc).unwrap();
        let b = run(&sc).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.to_jsonl(), b.to_jsonl());
    }

    #[test]
    fn row_times_are_uniform() {
        let mut sc = Scenario::default_course();
        sc.max_duration = 3.0;
        let rec = run(&sc).unwrap();
        assert_eq!(rec.status, Some(RunStatus::Timeout));
        assert_eq!(rec.rows.len(), 300);
        for (k, r) in rec.rows.iter().enumerate() {
            assert_eq!(r.tick, k as u64);
            assert_eq!(r.t, k as f64 * sc.dt);
        }
        assert_eq!(rec.terminal_time, 300.0 * sc.dt);
    }

    #[test]
    fn manual_mode_has_no_assistance() {
        let mut sc = Scenario::default_course();
        sc.mode = Mode::MC;
        sc.operator.kind = OperatorKind::ManualPd;
        let rec = run(&sc).unwrap();
        assert!(rec.rows.iter().all(|r| r.beta == 0.0 && r.force == 0.0 && r.u == 0.0));
    }

    #[test]
    fn gaps_switch_assistance_off() {
        let rec = run(&Scenario::default_course()).unwrap();
        let lost: Vec<_> = rec.rows.iter().filter(|r| !r.detected).collect();
        assert!(!lost.is_empty());
        assert!(lost.iter().all(|r| r.u == 0.0 && r.beta == 0.0 && r.gated_e2 == 0.0));
        assert!(rec.rows.iter().any(|r| r.events.contains(&Event::PathLost)));
        assert!(rec.rows.iter().any(|r| r.events.contains(&Event::PathFound)));
    }

    #[test]
    fn override_applies_from_next_tick() {
        struct Pressing(u64);
        impl Operator for Pressing {
            fn act(&mut self, obs: &Observation) -> OperatorAction {
                OperatorAction {
                    phi_x_cmd: 0.67,
                    lateral: HandInput::Force(0.0),
                    override_button: obs.tick >= self.0,
                }
            }
        }
        let sc = straight_cc(0.2, 0.3);
        let mut engine = Engine::new(sc).unwrap();
        let mut op = Pressing(10);
        for _ in 0..12 {
            engine.step(&mut op);
        }
        let rows = &engine.record().rows;
        assert!(rows[10].u != 0.0 && rows[10].beta != 0.0);
        assert!(rows[10].events.contains(&Event::OverrideOn));
        assert_eq!((rows[11].u, rows[11].beta), (0.0, 0.0));
        assert!(rows[11].override_active);
    }

    #[test]
    fn quasi_static_stick_follows_target_when_hands_off() {
        let mut sc = straight_cc(0.2, 0.4);
        sc.haptics.quasi_static = true;
        let mut engine = Engine::new(sc).unwrap();
        let mut op = CompliantOperator::new(0.67);
        for _ in 0..50 {
            engine.step(&mut op);
            let r = engine.last_row().unwrap();
            assert_eq!(r.phi_y, r.phi_d);
        }
    }

    #[test]
    fn exhausted_engine_ignores_steps() {
        let mut sc = straight_cc(0.0, 0.0);
        sc.max_duration = 0.05;
        let mut engine = Engine::new(sc).unwrap();
        let mut op = CompliantOperator::new(0.67);
        engine.run_to_end(&mut op);
        let n = engine.record().rows.len();
        engine.step(&mut op);
        assert_eq!(engine.record().rows.len(), n);
        assert_eq!(engine.record().status, Some(RunStatus::Timeout));
    }
}
