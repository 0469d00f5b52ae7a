//! Cooperative path following for a holonomic vehicle driven through a
//! haptic joystick, plus a deterministic simulator with scripted operators.

pub mod controller;
pub mod engine;
pub mod error_frame;
pub mod joystick;
pub mod metrics;
pub mod operator;
pub mod path;
pub mod pose;
pub mod record;
pub mod scenario;
pub mod trace;
pub mod vehicle;

pub use engine::{run, run_with, Engine};
pub use pose::{wrap_angle, Pose};
pub use record::{Event, RunRecord, RunStatus, TickRow};
pub use scenario::{Mode, Scenario, ScenarioError};
