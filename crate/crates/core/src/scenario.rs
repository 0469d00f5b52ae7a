//! Scenario configuration: geometry, vehicle, gains, operator and run settings.

use crate::controller::ControllerGains;
use crate::joystick::HapticGains;
use crate::operator::OperatorParams;
use crate::path::{Gap, InspectionObject, PathError, PathModel, PathSpec, SegmentSpec};
use crate::pose::Pose;
use crate::vehicle::VehicleConfig;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::f64::consts::FRAC_PI_2;
use std::fmt;
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("scenario JSON: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("path: {0}")]
    Path(#[from] PathError),
    #[error("`{key}`: {message}")]
    Invalid { key: &'static str, message: String },
}

fn invalid(key: &'static str, message: impl Into<String>) -> ScenarioError {
    ScenarioError::Invalid {
        key,
        message: message.into(),
    }
}

/// Manual control or cooperative control.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Mode {
    MC,
    CC,
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::MC => "MC",
            Mode::CC => "CC",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub path: PathSpec,
    #[serde(default)]
    pub gaps: Vec<Gap>,
    #[serde(default)]
    pub objects: Vec<InspectionObject>,
    #[serde(default)]
    pub vehicle: VehicleConfig,
    #[serde(default)]
    pub controller: ControllerGains,
    #[serde(default)]
    pub haptics: HapticGains,
    #[serde(default)]
    pub operator: OperatorParams,
    #[serde(default = "default_mode")]
    pub mode: Mode,
    #[serde(default = "default_dt")]
    pub dt: f64,
    #[serde(default = "default_max_duration")]
    pub max_duration: f64,
    #[serde(default = "default_sensing_radius")]
    pub sensing_radius: f64,
    #[serde(default)]
    pub seed: u64,
}

fn default_mode() -> Mode {
    Mode::CC
}
fn default_dt() -> f64 {
    0.01
}
fn default_max_duration() -> f64 {
    120.0
}
fn default_sensing_radius() -> f64 {
    0.5
}

/// Geometry of the default U-shaped course.
pub mod course {
    pub const START_X: f64 = 0.8;
    pub const START_Y: f64 = 0.15;
    pub const OUTER_STRAIGHT: f64 = 3.0;
    pub const MIDDLE_STRAIGHT: f64 = 1.2;
    pub const CURVE_RADIUS: f64 = 0.6;
    pub const GAP_LENGTH: f64 = 0.3;
}

impl Scenario {
    /// U-shaped course inside a 5.4 m × 2.7 m area: a straight, two left
    /// quarter turns joined by a short straight, and a final straight, with a
    /// detection gap in the middle of each straight.
    pub fn default_course() -> Self {
        use course::*;
        let curve = CURVE_RADIUS * FRAC_PI_2;
        let mid_first = OUTER_STRAIGHT / 2.0;
        let mid_middle = OUTER_STRAIGHT + curve + MIDDLE_STRAIGHT / 2.0;
        let mid_last = OUTER_STRAIGHT + 2.0 * curve + MIDDLE_STRAIGHT + OUTER_STRAIGHT / 2.0;
        let gap = |mid: f64| Gap::new(mid - GAP_LENGTH / 2.0, mid + GAP_LENGTH / 2.0);
        let object = |s: f64, lateral_offset: f64, slit_count: u32| InspectionObject {
            s,
            lateral_offset,
            slit_count,
        };
        Scenario {
            path: PathSpec {
                start: Pose::new(START_X, START_Y, 0.0),
                segments: vec![
                    SegmentSpec::Line {
                        length: OUTER_STRAIGHT,
                    },
                    SegmentSpec::Arc {
                        radius: CURVE_RADIUS,
                        sweep: FRAC_PI_2,
                    },
                    SegmentSpec::Line {
                        length: MIDDLE_STRAIGHT,
                    },
                    SegmentSpec::Arc {
                        radius: CURVE_RADIUS,
                        sweep: FRAC_PI_2,
                    },
                    SegmentSpec::Line {
                        length: OUTER_STRAIGHT,
                    },
                ],
                note: Some(
                    "U course approximating the pool layout; dimensions and gap placement are \
                     estimates, tuned so a hands-off cooperative run at 0.2 m/s takes about 45 s"
                        .into(),
                ),
            },
            gaps: vec![gap(mid_first), gap(mid_middle), gap(mid_last)],
            objects: vec![
                object(0.7, 0.3, 2),
                object(2.3, -0.3, 4),
                object(3.3, 0.35, 3),
                object(4.9, -0.3, 4),
                object(6.4, 0.3, 2),
                object(8.2, -0.3, 4),
            ],
            vehicle: VehicleConfig::default(),
            controller: ControllerGains::default(),
            haptics: HapticGains::default(),
            operator: OperatorParams::default(),
            mode: Mode::CC,
            dt: default_dt(),
            max_duration: default_max_duration(),
            sensing_radius: default_sensing_radius(),
            seed: 0,
        }
    }

    /// Straight course along +x starting at the origin.
    pub fn straight(length: f64) -> Self {
        Scenario {
            path: PathSpec {
                start: Pose::default(),
                segments: vec![SegmentSpec::Line { length }],
                note: None,
            },
            gaps: Vec::new(),
            objects: Vec::new(),
            ..Self::default_course()
        }
    }

    pub fn from_json_str(text: &str) -> Result<Self, ScenarioError> {
        let scenario: Scenario = serde_json::from_str(text)?;
        scenario.validate()?;
        Ok(scenario)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ScenarioError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| ScenarioError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_json_str(&text)
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("scenario serializes")
    }

    /// Checks every range constraint and builds the path.
    pub fn validate(&self) -> Result<PathModel, ScenarioError> {
        if !(self.dt > 0.0 && self.dt <= 0.05) {
            return Err(invalid("dt", format!("must lie in (0, 0.05], got {}", self.dt)));
        }
        if !(self.max_duration.is_finite() && self.max_duration > 0.0) {
            return Err(invalid("max_duration", "must be positive and finite"));
        }
        if !(self.sensing_radius.is_finite() && self.sensing_radius > 0.0) {
            return Err(invalid("sensing_radius", "must be positive and finite"));
        }
        let v = &self.vehicle;
        if !(v.v_max > 0.0 && v.omega_max > 0.0 && v.tau >= 0.0)
            || !(v.v_max.is_finite() && v.omega_max.is_finite() && v.tau.is_finite())
        {
            return Err(invalid("vehicle", "v_max, omega_max must be positive and tau non-negative"));
        }
        if !v.initial_errors.iter().all(|e| e.is_finite()) {
            return Err(invalid("vehicle", "initial_errors must be finite"));
        }
        if !self.controller.is_valid() {
            return Err(invalid("controller", "alpha, k2, k3 must be positive and c0 non-negative"));
        }
        if !self.haptics.is_valid() {
            return Err(invalid("haptics", "all gains, mass and damping must be positive"));
        }
        if !self.operator.is_valid() {
            return Err(invalid(
                "operator",
                "delays, noise levels and gains must be non-negative; speed_setpoint in [0, 1]",
            ));
        }
        Ok(PathModel::build(&self.path, &self.gaps, &self.objects)?)
    }

    /// SHA-256 of the canonical JSON encoding, hex encoded.
    pub fn hash(&self) -> String {
        let canonical = serde_json::to_string(self).expect("scenario serializes");
        Sha256::digest(canonical.as_bytes())
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }
}
