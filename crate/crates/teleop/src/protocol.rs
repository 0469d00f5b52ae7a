//! Wire protocol: versioned JSON text frames.
//!
//! Every frame is an object with a `"v"` version and a `"kind"`. Unknown
//! fields are ignored on decode so newer clients can talk to this server.

use coopath_core::path::InspectionObject;
use coopath_core::{Event, Mode, Pose};
use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

pub const PROTOCOL_VERSION: u64 = 1;
pub const SUPPORTED_VERSIONS: &[u64] = &[PROTOCOL_VERSION];

/// Inbound message from a cockpit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ClientMessage {
    /// Stick position. `phi_y: null` means the lateral axis is released.
    Stick {
        phi_x: f64,
        #[serde(default)]
        phi_y: Option<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        seq: Option<u64>,
    },
    Override { active: bool },
    Reset,
    ModeSet { mode: Mode },
    CountSubmit { count: i64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Driver,
    Observer,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorCode {
    BadFrame,
    MissingVersion,
    UnsupportedVersion,
    MissingKind,
    UnknownKind,
    BadPayload,
    NotDriver,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectInView {
    pub s: f64,
    pub lateral_offset: f64,
    pub slit_count: u32,
    pub x: f64,
    pub y: f64,
}

impl ObjectInView {
    pub fn new(object: &InspectionObject, position: (f64, f64)) -> Self {
        Self {
            s: object.s,
            lateral_offset: object.lateral_offset,
            slit_count: object.slit_count,
            x: position.0,
            y: position.1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunState {
    Running,
    Paused,
    Completed,
    Timeout,
    Aborted,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    /// Index of the run within the session; bumps on reset and mode change.
    pub run: u32,
    /// Ticks executed so far in this run.
    pub tick: u64,
    pub t: f64,
    pub mode: Mode,
    pub pose: Pose,
    pub e1: f64,
    pub e2: f64,
    pub e3: f64,
    pub detected: bool,
    pub override_active: bool,
    pub beta: f64,
    pub u: f64,
    pub phi_x: f64,
    pub phi_y: f64,
    pub phi_d: f64,
    /// Guidance force on the lateral stick axis.
    pub force: f64,
    pub speed: f64,
    pub omega: f64,
    pub objects_in_view: Vec<ObjectInView>,
    pub status: RunState,
    /// Events recorded since the previous snapshot.
    pub events: Vec<Event>,
    /// Sequence number of the last stick message applied, if any carried one.
    pub input_seq: Option<u64>,
}

/// Outbound message to a cockpit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ServerMessage {
    Hello {
        role: Role,
        supported_versions: Vec<u64>,
        scenario_hash: String,
        mode: Mode,
        dt: f64,
        snapshot_rate: f64,
    },
    Snapshot(Snapshot),
    Error {
        code: ErrorCode,
        message: String,
        supported_versions: Vec<u64>,
    },
}

impl ServerMessage {
    pub fn error(code: ErrorCode, message: impl Into<String>) -> Self {
        ServerMessage::Error {
            code,
            message: message.into(),
            supported_versions: SUPPORTED_VERSIONS.to_vec(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
#[error("{code:?}: {message}")]
pub struct ProtocolError {
    pub code: ErrorCode,
    pub message: String,
}

impl ProtocolError {
    fn new(code: ErrorCode, message: impl Into<String>) -> Self {
        Self {
            code,
            message: message.into(),
        }
    }

    pub fn to_frame(&self) -> String {
        encode_server(&ServerMessage::error(self.code, self.message.clone()))
    }
}

#[derive(Serialize)]
struct Envelope<'a, T> {
    v: u64,
    #[serde(flatten)]
    body: &'a T,
}

fn encode<T: Serialize>(body: &T) -> String {
    serde_json::to_string(&Envelope {
        v: PROTOCOL_VERSION,
        body,
    })
    .expect("protocol messages serialize")
}

pub fn encode_client(msg: &ClientMessage) -> String {
    encode(msg)
}

pub fn encode_server(msg: &ServerMessage) -> String {
    encode(msg)
}

const CLIENT_KINDS: &[&str] = &["stick", "override", "reset", "mode_set", "count_submit"];
const SERVER_KINDS: &[&str] = &["hello", "snapshot", "error"];

fn decode<T: for<'de> Deserialize<'de>>(text: &str, kinds: &[&str]) -> Result<T, ProtocolError> {
    let value: Value =
        serde_json::from_str(text).map_err(|e| ProtocolError::new(ErrorCode::BadFrame, e.to_string()))?;
    let Value::Object(mut map) = value else {
        return Err(ProtocolError::new(ErrorCode::BadFrame, "frame must be a JSON object"));
    };
    match map.remove("v") {
        None => return Err(ProtocolError::new(ErrorCode::MissingVersion, "missing \"v\"")),
        Some(v) => match v.as_u64() {
            Some(n) if SUPPORTED_VERSIONS.contains(&n) => {}
            _ => {
                return Err(ProtocolError::new(
                    ErrorCode::UnsupportedVersion,
                    format!("version {v} not supported"),
                ))
            }
        },
    }
    match map.get("kind") {
        None => return Err(ProtocolError::new(ErrorCode::MissingKind, "missing \"kind\"")),
        Some(Value::String(k)) if kinds.contains(&k.as_str()) => {}
        Some(k) => return Err(ProtocolError::new(ErrorCode::UnknownKind, format!("unknown kind {k}"))),
    }
    serde_json::from_value(Value::Object(map))
        .map_err(|e| ProtocolError::new(ErrorCode::BadPayload, e.to_string()))
}

pub fn decode_client(text: &str) -> Result<ClientMessage, ProtocolError> {
    decode(text, CLIENT_KINDS)
}

pub fn decode_server(text: &str) -> Result<ServerMessage, ProtocolError> {
    decode(text, SERVER_KINDS)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn code(text: &str) -> ErrorCode {
        decode_client(text).unwrap_err().code
    }

    #[test]
    fn decodes_every_client_kind() {
        assert_eq!(
            decode_client(r#"{"v":1,"kind":"stick","phi_x":0.5,"phi_y":-0.25}"#).unwrap(),
            ClientMessage::Stick {
                phi_x: 0.5,
                phi_y: Some(-0.25),
                seq: None
            }
        );
        assert_eq!(
            decode_client(r#"{"v":1,"kind":"stick","phi_x":0.5}"#).unwrap(),
            ClientMessage::Stick {
                phi_x: 0.5,
                phi_y: None,
                seq: None
            }
        );
        assert_eq!(
            decode_client(r#"{"v":1,"kind":"override","active":true}"#).unwrap(),
            ClientMessage::Override { active: true }
        );
        assert_eq!(decode_client(r#"{"v":1,"kind":"reset"}"#).unwrap(), ClientMessage::Reset);
        assert_eq!(
            decode_client(r#"{"v":1,"kind":"mode_set","mode":"MC"}"#).unwrap(),
            ClientMessage::ModeSet { mode: Mode::MC }
        );
        assert_eq!(
            decode_client(r#"{"v":1,"kind":"count_submit","count":4}"#).unwrap(),
            ClientMessage::CountSubmit { count: 4 }
        );
    }

    #[test]
    fn unknown_fields_are_ignored() {
        let m = decode_client(r#"{"v":1,"kind":"reset","client":"x","extra":{"a":1}}"#).unwrap();
        assert_eq!(m, ClientMessage::Reset);
    }

    #[test]
    fn error_codes() {
        assert_eq!(code("nope"), ErrorCode::BadFrame);
        assert_eq!(code("[1]"), ErrorCode::BadFrame);
        assert_eq!(code(r#"{"kind":"reset"}"#), ErrorCode::MissingVersion);
        assert_eq!(code(r#"{"v":2,"kind":"reset"}"#), ErrorCode::UnsupportedVersion);
        assert_eq!(code(r#"{"v":"1","kind":"reset"}"#), ErrorCode::UnsupportedVersion);
        assert_eq!(code(r#"{"v":1}"#), ErrorCode::MissingKind);
        assert_eq!(code(r#"{"v":1,"kind":"jump"}"#), ErrorCode::UnknownKind);
        assert_eq!(code(r#"{"v":1,"kind":"snapshot"}"#), ErrorCode::UnknownKind);
        assert_eq!(code(r#"{"v":1,"kind":"stick","phi_x":"fast"}"#), ErrorCode::BadPayload);
        assert_eq!(code(r#"{"v":1,"kind":"mode_set","mode":"auto"}"#), ErrorCode::BadPayload);
    }

    #[test]
    fn error_frame_lists_supported_versions() {
        let frame = decode_client(r#"{"v":9,"kind":"reset"}"#).unwrap_err().to_frame();
        let value: Value = serde_json::from_str(&frame).unwrap();
        assert_eq!(value["kind"], "error");
        assert_eq!(value["code"], "unsupported_version");
        assert_eq!(value["supported_versions"], serde_json::json!([1]));
        assert_eq!(value["v"], 1);
    }

    #[test]
    fn encode_carries_version_and_kind() {
        let text = encode_client(&ClientMessage::Override { active: false });
        assert_eq!(text, r#"{"v":1,"kind":"override","active":false}"#);
    }
}
