//! Recorded operator inputs of a live session and their headless replay.

use crate::engine::Engine;
use crate::operator::{HeldInput, HeldInputOperator};
use crate::record::{Event, RunRecord};
use crate::scenario::{Scenario, ScenarioError};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ReplayError {
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error("trace was recorded for scenario {trace}, got {scenario}")]
    HashMismatch { trace: String, scenario: String },
    #[error("trace items are not ordered by tick")]
    Unordered,
}

/// Something that happened before a given tick was computed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum TraceItem {
    Input { tick: u64, input: HeldInput },
    Event { tick: u64, event: Event },
}

impl TraceItem {
    pub fn tick(&self) -> u64 {
        match self {
            TraceItem::Input { tick, .. } | TraceItem::Event { tick, .. } => *tick,
        }
    }
}

/// Everything needed to rerun a live session: input changes and events
/// keyed by the tick they preceded, and the number of ticks executed.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct InputTrace {
    pub scenario_hash: String,
    pub ticks: u64,
    pub items: Vec<TraceItem>,
}

impl InputTrace {
    pub fn new(scenario_hash: String) -> Self {
        Self {
            scenario_hash,
            ticks: 0,
            items: Vec::new(),
        }
    }
}

/// Reruns `trace` against `scenario` without any wall clock.
pub fn replay(scenario: &Scenario, trace: &InputTrace) -> Result<RunRecord, ReplayError> {
    let hash = scenario.hash();
    if hash != trace.scenario_hash {
        return Err(ReplayError::HashMismatch {
            trace: trace.scenario_hash.clone(),
            scenario: hash,
        });
    }
    if trace.items.windows(2).any(|w| w[0].tick() > w[1].tick()) {
        return Err(ReplayError::Unordered);
    }
    let mut engine = Engine::new(scenario.clone())?;
    let mut operator = HeldInputOperator::default();
    let mut items = trace.items.iter().peekable();
    for tick in 0..trace.ticks {
        while let Some(item) = items.next_if(|i| i.tick() == tick) {
            match item {
                TraceItem::Input { input, .. } => operator.input = *input,
                TraceItem::Event { event, .. } => engine.push_event(event.clone()),
            }
        }
        engine.step(&mut operator);
    }
    Ok(engine.into_record())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::record::RunStatus;

    #[test]
    fn replay_matches_direct_drive() {
        let mut sc = Scenario::default_course();
        sc.max_duration = 5.0;
        let inputs = [
            (0, HeldInput { phi_x: 0.5, phi_y: None, override_button: false }),
            (120, HeldInput { phi_x: 0.6, phi_y: Some(0.3), override_button: true }),
            (300, HeldInput { phi_x: 0.6, phi_y: None, override_button: false }),
        ];
        let mut trace = InputTrace::new(sc.hash());
        let mut engine = Engine::new(sc.clone()).unwrap();
        let mut op = HeldInputOperator::default();
        for tick in 0..400 {
            if let Some((_, input)) = inputs.iter().find(|(k, _)| *k == tick) {
                op.input = *input;
                trace.items.push(TraceItem::Input { tick, input: *input });
            }
            if tick == 200 {
                let event = Event::CountSubmitted { count: 3 };
                engine.push_event(event.clone());
                trace.items.push(TraceItem::Event { tick, event });
            }
            engine.step(&mut op);
            trace.ticks += 1;
        }
        let live = engine.into_record();
        assert_eq!(live.status, Some(RunStatus::Interrupted));
        let replayed = replay(&sc, &trace).unwrap();
        assert_eq!(replayed, live);
        assert!(replayed.rows[200].events.contains(&Event::CountSubmitted { count: 3 }));
    }

    #[test]
    fn wrong_scenario_is_rejected() {
        let sc = Scenario::default_course();
        let trace = InputTrace::new("00".into());
        assert!(matches!(replay(&sc, &trace), Err(ReplayError::HashMismatch { .. })));
    }

    #[test]
    fn trace_json_round_trip() {
        let trace = InputTrace {
            scenario_hash: "ab".into(),
            ticks: 3,
            items: vec![
                TraceItem::Input { tick: 0, input: HeldInput { phi_x: 0.1, phi_y: Some(-0.2), override_button: false } },
                TraceItem::Event { tick: 2, event: Event::PathLost },
            ],
        };
        let text = serde_json::to_string(&trace).unwrap();
        assert_eq!(serde_json::from_str::<InputTrace>(&text).unwrap(), trace);
    }
}
