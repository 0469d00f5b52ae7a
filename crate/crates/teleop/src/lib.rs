//! Live teleoperation service: a cockpit drives the simulated vehicle over a
//! websocket while the server paces the simulation in real time.

pub mod protocol;
pub mod server;
pub mod session;

pub use server::{serve, ServeConfig, ServerHandle, TeleopError, DEFAULT_PORT};
pub use session::{Session, SessionRun};
