//! Per-tick run traces and their JSON-lines encoding.

use crate::pose::Pose;
use crate::scenario::Mode;
use serde::{Deserialize, Serialize};
use std::fmt;
use thiserror::Error;

pub const RECORD_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum RecordError {
    #[error("line {line}: {source}")]
    Json {
        line: usize,
        source: serde_json::Error,
    },
    #[error("missing {0} line")]
    Missing(&'static str),
    #[error("line {0}: unexpected record line")]
    Unexpected(usize),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum Event {
    PathLost,
    PathFound,
    OverrideOn,
    OverrideOff,
    CountSubmitted { count: i64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Completed,
    Timeout,
    Aborted,
    /// Stopped from outside (end of a live session) before finishing.
    Interrupted,
}

impl fmt::Display for RunStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RunStatus::Completed => "completed",
            RunStatus::Timeout => "timeout",
            RunStatus::Aborted => "aborted",
            RunStatus::Interrupted => "interrupted",
        })
    }
}

/// Everything computed during one tick, evaluated at the tick start time `t`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TickRow {
    pub tick: u64,
    pub t: f64,
    pub pose: Pose,
    /// Arclength of the nearest path point.
    pub s: f64,
    /// Distance to the nearest path point.
    pub distance: f64,
    /// Whether the reference point came from the lateral-axis projection.
    pub lateral_reference: bool,
    pub e1: f64,
    pub e2: f64,
    pub e3: f64,
    pub gated_e2: f64,
    pub gated_e3: f64,
    pub detected: bool,
    pub override_active: bool,
    pub rho: f64,
    pub v_r: f64,
    pub omega_r: f64,
    pub beta: f64,
    pub u: f64,
    pub phi_x: f64,
    pub phi_y: f64,
    pub phi_d: f64,
    pub force: f64,
    pub human_force: f64,
    /// Speed magnitude sent to the vehicle.
    pub v: f64,
    /// Yaw rate sent to the vehicle.
    pub omega: f64,
    pub u_saturated: bool,
    pub velocity_saturated: bool,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub events: Vec<Event>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub scenario_hash: String,
    pub mode: Mode,
    pub seed: u64,
    pub dt: f64,
    pub rows: Vec<TickRow>,
    pub status: Option<RunStatus>,
    /// Simulated time at the end of the last tick.
    pub terminal_time: f64,
    pub diagnostic: Option<String>,
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
enum Line {
    Header {
        version: u32,
        scenario_hash: String,
        mode: Mode,
        seed: u64,
        dt: f64,
    },
    Tick(TickRow),
    End {
        status: Option<RunStatus>,
        terminal_time: f64,
        ticks: usize,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        diagnostic: Option<String>,
    },
}

impl RunRecord {
    /// Final status, treating an unfinished record as interrupted.
    pub fn final_status(&self) -> RunStatus {
        self.status.unwrap_or(RunStatus::Interrupted)
    }

    /// One JSON object per line: a header, one line per tick, and an end line.
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        let mut push = |line: &Line| {
            out.push_str(&serde_json::to_string(line).expect("record serializes"));
            out.push('\n');
        };
        push(&Line::Header {
            version: RECORD_FORMAT_VERSION,
            scenario_hash: self.scenario_hash.clone(),
            mode: self.mode,
            seed: self.seed,
            dt: self.dt,
        });
        for row in &self.rows {
            push(&Line::Tick(row.clone()));
        }
        push(&Line::End {
            status: self.status,
            terminal_time: self.terminal_time,
            ticks: self.rows.len(),
            diagnostic: self.diagnostic.clone(),
        });
        out
    }

    pub fn from_jsonl(text: &str) -> Result<Self, RecordError> {
        let mut header = None;
        let mut rows = Vec::new();
        let mut end = None;
        for (i, raw) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
            let line: Line =
                serde_json::from_str(raw).map_err(|source| RecordError::Json { line: i + 1, source })?;
            match line {
                Line::Header {
                    scenario_hash,
                    mode,
                    seed,
                    dt,
                    ..
                } if header.is_none() => header = Some((scenario_hash, mode, seed, dt)),
                Line::Tick(row) if header.is_some() && end.is_none() => rows.push(row),
                Line::End {
                    status,
                    terminal_time,
                    diagnostic,
                    ..
                } if header.is_some() && end.is_none() => end = Some((status, terminal_time, diagnostic)),
                _ => return Err(RecordError::Unexpected(i + 1)),
            }
        }
        let (scenario_hash, mode, seed, dt) = header.ok_or(RecordError::Missing("header"))?;
        let (status, terminal_time, diagnostic) = end.ok_or(RecordError::Missing("end"))?;
        Ok(RunRecord {
            scenario_hash,
            mode,
            seed,
            dt,
            rows,
            status,
            terminal_time,
            diagnostic,
        })
    }
}
