//! Simulation state of a live session, free of any IO or wall clock.

use crate::protocol::{ClientMessage, ObjectInView, RunState, Snapshot};
use coopath_core::engine::Engine;
use coopath_core::error_frame::compute_errors;
use coopath_core::operator::{HeldInput, HeldInputOperator};
use coopath_core::trace::{InputTrace, TraceItem};
use coopath_core::{Event, Mode, RunRecord, RunStatus, Scenario, ScenarioError};

/// One finished (or interrupted) run with everything needed to replay it.
#[derive(Debug, Clone)]
pub struct SessionRun {
    pub scenario: Scenario,
    pub record: RunRecord,
    pub trace: InputTrace,
}

#[derive(Debug)]
pub struct Session {
    scenario: Scenario,
    engine: Engine,
    operator: HeldInputOperator,
    trace: InputTrace,
    run: u32,
    input_seq: Option<u64>,
    unsent_events: Vec<Event>,
    reported_rows: usize,
    finished: Vec<SessionRun>,
}

impl Session {
    pub fn new(scenario: Scenario) -> Result<Self, ScenarioError> {
        let engine = Engine::new(scenario.clone())?;
        let trace = InputTrace::new(scenario.hash());
        Ok(Self {
            scenario,
            engine,
            operator: HeldInputOperator::default(),
            trace,
            run: 0,
            input_seq: None,
            unsent_events: Vec::new(),
            reported_rows: 0,
            finished: Vec::new(),
        })
    }

    pub fn scenario(&self) -> &Scenario {
        &self.scenario
    }

    pub fn engine(&self) -> &Engine {
        &self.engine
    }

    pub fn run_index(&self) -> u32 {
        self.run
    }

    pub fn held_input(&self) -> HeldInput {
        self.operator.input
    }

    pub fn is_finished(&self) -> bool {
        self.engine.is_finished()
    }

    fn set_input(&mut self, input: HeldInput) {
        let input = input.clamped();
        if input == self.operator.input {
            return;
        }
        self.operator.input = input;
        let tick = self.engine.tick();
        if let Some(TraceItem::Input { tick: last, input: held }) = self.trace.items.last_mut() {
            if *last == tick {
                *held = input;
                return;
            }
        }
        self.trace.items.push(TraceItem::Input { tick, input });
    }

    fn push_event(&mut self, event: Event) {
        let tick = self.engine.tick();
        self.engine.push_event(event.clone());
        self.trace.items.push(TraceItem::Event { tick, event });
    }

    /// Applies a driver message. Input takes effect on the next tick.
    pub fn apply(&mut self, msg: ClientMessage) -> Result<(), ScenarioError> {
        match msg {
            ClientMessage::Stick { phi_x, phi_y, seq } => {
                let input = HeldInput {
                    phi_x,
                    phi_y,
                    ..self.operator.input
                };
                self.set_input(input);
                if seq.is_some() {
                    self.input_seq = seq;
                }
            }
            ClientMessage::Override { active } => {
                let input = HeldInput {
                    override_button: active,
                    ..self.operator.input
                };
                self.set_input(input);
            }
            ClientMessage::CountSubmit { count } => self.push_event(Event::CountSubmitted { count }),
            ClientMessage::Reset => self.restart(self.scenario.clone())?,
            ClientMessage::ModeSet { mode } => {
                let scenario = Scenario {
                    mode,
                    ..self.scenario.clone()
                };
                self.restart(scenario)?;
            }
        }
        Ok(())
    }

    /// Zeroes the held commands (driver gone quiet).
    pub fn hold_zero(&mut self) {
        self.set_input(HeldInput::default());
    }

    /// Closes the current run and starts a fresh one from the scenario start.
    pub fn restart(&mut self, scenario: Scenario) -> Result<(), ScenarioError> {
        let engine = Engine::new(scenario.clone())?;
        self.close_current(engine);
        self.trace = InputTrace::new(scenario.hash());
        self.scenario = scenario;
        self.run += 1;
        self.unsent_events.clear();
        self.reported_rows = 0;
        self.operator.input = HeldInput::default();
        self.input_seq = None;
        Ok(())
    }

    fn close_current(&mut self, next: Engine) {
        let engine = std::mem::replace(&mut self.engine, next);
        let trace = std::mem::take(&mut self.trace);
        self.finished.push(SessionRun {
            scenario: self.scenario.clone(),
            record: engine.into_record(),
            trace,
        });
    }

    /// Runs one tick with the held input. Returns false once the run is over.
    pub fn step(&mut self) -> bool {
        if self.engine.is_finished() {
            return false;
        }
        self.engine.step(&mut self.operator);
        self.trace.ticks = self.engine.tick();
        true
    }

    pub fn snapshot(&mut self, paused: bool) -> Snapshot {
        let rows = &self.engine.record().rows;
        for row in &rows[self.reported_rows..] {
            self.unsent_events.extend(row.events.iter().cloned());
        }
        self.reported_rows = rows.len();
        let events = std::mem::take(&mut self.unsent_events);

        let pose = self.engine.pose();
        let path = self.engine.path();
        let (reference, _) = path.reference_point(&pose);
        let (e1, e2, e3) = compute_errors(&pose, &reference.pose);
        let radius = self.scenario.sensing_radius;
        let objects_in_view = path
            .objects()
            .iter()
            .filter_map(|o| {
                let (x, y) = path.object_position(o);
                ((x - pose.x).hypot(y - pose.y) <= radius).then(|| ObjectInView::new(o, (x, y)))
            })
            .collect();
        let last = self.engine.last_row();
        let status = match self.engine.record().status {
            Some(RunStatus::Completed) => RunState::Completed,
            Some(RunStatus::Timeout) => RunState::Timeout,
            Some(RunStatus::Aborted) => RunState::Aborted,
            _ if paused => RunState::Paused,
            _ => RunState::Running,
        };
        let stick = self.engine.stick();
        Snapshot {
            run: self.run,
            tick: self.engine.tick(),
            t: self.engine.time(),
            mode: self.scenario.mode,
            pose,
            e1,
            e2,
            e3,
            detected: last.is_none_or(|r| r.detected),
            override_active: self.operator.input.override_button,
            beta: last.map_or(0.0, |r| r.beta),
            u: last.map_or(0.0, |r| r.u),
            phi_x: stick.phi_x,
            phi_y: stick.phi_y,
            phi_d: last.map_or(0.0, |r| r.phi_d),
            force: last.map_or(0.0, |r| r.force),
            speed: last.map_or(0.0, |r| r.v),
            omega: last.map_or(0.0, |r| r.omega),
            objects_in_view,
            status,
            events,
            input_seq: self.input_seq,
        }
    }

    /// Ends the session, returning every run including the current one.
    pub fn finish(mut self) -> Vec<SessionRun> {
        let current = SessionRun {
            scenario: self.scenario.clone(),
            record: self.engine.into_record(),
            trace: self.trace,
        };
        self.finished.push(current);
        self.finished
    }

    pub fn mode(&self) -> Mode {
        self.scenario.mode
    }
}
