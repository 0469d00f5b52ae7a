//! Arclength-parameterized path made of line and arc segments.
//!
//! The path carries its curvature, the intervals where it cannot be detected
//! (gaps) and the inspection objects placed beside it. Two projections are
//! offered: the nearest point in the Euclidean sense, used for detection and
//! progress, and the intersection of the robot's lateral axis with the path,
//! which places the reference robot so that the longitudinal error vanishes.

use crate::pose::{wrap_angle, Pose};
use serde::{Deserialize, Serialize};
use std::f64::consts::{FRAC_PI_2, TAU};
use thiserror::Error;

/// Two candidate distances closer than this are treated as equal, and the
/// smaller arclength wins.
const TIE_EPS: f64 = 1e-12;

/// Lateral-axis intersections farther than `LATERAL_REACH_RATIO * d + LATERAL_REACH_SLACK`
/// (with `d` the nearest-point distance) are rejected in favour of the nearest point.
const LATERAL_REACH_RATIO: f64 = 3.0;
const LATERAL_REACH_SLACK: f64 = 0.1;

#[derive(Debug, Error, PartialEq)]
pub enum PathError {
    #[error("path needs at least one segment")]
    Empty,
    #[error("segment {index}: length must be positive and finite, got {length}")]
    NonPositiveLength { index: usize, length: f64 },
    #[error("segment {index}: arc radius must be positive and finite, got {radius}")]
    BadRadius { index: usize, radius: f64 },
    #[error("segment {index}: arc sweep must be non-zero and finite, got {sweep}")]
    BadSweep { index: usize, sweep: f64 },
    #[error("start pose must be finite")]
    NonFiniteStart,
    #[error("gap ({start}, {end}) is empty or outside [0, {total}]")]
    GapOutOfRange { start: f64, end: f64, total: f64 },
    #[error("gaps ({0}, {1}) and ({2}, {3}) overlap")]
    OverlappingGaps(f64, f64, f64, f64),
    #[error("object at s = {s} lies outside [0, {total}]")]
    ObjectOutOfRange { s: f64, total: f64 },
}

/// Declarative description of a path, as found in scenario files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PathSpec {
    pub start: Pose,
    pub segments: Vec<SegmentSpec>,
    /// Free-form provenance note carried along with the geometry.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

/// One piece of a [`PathSpec`]. Positive arc sweep turns left.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum SegmentSpec {
    Line { length: f64 },
    Arc { radius: f64, sweep: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Gap {
    pub s_start: f64,
    pub s_end: f64,
}

impl Gap {
    pub fn new(s_start: f64, s_end: f64) -> Self {
        Self { s_start, s_end }
    }

    pub fn contains(&self, s: f64) -> bool {
        s >= self.s_start && s <= self.s_end
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InspectionObject {
    pub s: f64,
    pub lateral_offset: f64,
    pub slit_count: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SegmentKind {
    Line,
    Arc,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Segment {
    pub kind: SegmentKind,
    pub start_pose: Pose,
    pub length: f64,
    /// Signed curvature, `0` for lines and `±1/radius` for arcs.
    pub curvature: f64,
    /// Arclength of the segment start along the whole path.
    pub s_start: f64,
}

impl Segment {
    /// Pose at local arclength `u` (not clamped).
    pub fn pose_at(&self, u: f64) -> Pose {
        let p = &self.start_pose;
        if self.kind == SegmentKind::Line {
            let (c, s) = (p.theta.cos(), p.theta.sin());
            return Pose::new(p.x + u * c, p.y + u * s, p.theta);
        }
        let k = self.curvature;
        let th = p.theta + k * u;
        Pose::new(
            p.x + (th.sin() - p.theta.sin()) / k,
            p.y - (th.cos() - p.theta.cos()) / k,
            th,
        )
    }

    pub fn end_pose(&self) -> Pose {
        self.pose_at(self.length)
    }

    fn center(&self) -> (f64, f64) {
        let p = &self.start_pose;
        let k = self.curvature;
        (p.x - p.theta.sin() / k, p.y + p.theta.cos() / k)
    }

    /// Local arclength of the arc point whose radial angle (from the centre)
    /// is `psi`, measured forward from the segment start in `[0, 2π/|κ|)`.
    fn arc_param(&self, psi: f64) -> f64 {
        let k = self.curvature;
        let tangent = psi + FRAC_PI_2 * k.signum();
        let delta = (k.signum() * (tangent - self.start_pose.theta)).rem_euclid(TAU);
        delta / k.abs()
    }

    /// Candidate local parameters for the closest point to `(px, py)`, in increasing order.
    fn nearest_params(&self, px: f64, py: f64) -> Vec<f64> {
        match self.kind {
            SegmentKind::Line => {
                let (c, s) = (self.start_pose.theta.cos(), self.start_pose.theta.sin());
                let u = (px - self.start_pose.x) * c + (py - self.start_pose.y) * s;
                vec![u.clamp(0.0, self.length)]
            }
            SegmentKind::Arc => {
                let (cx, cy) = self.center();
                let (dx, dy) = (px - cx, py - cy);
                let mut out = vec![0.0];
                if dx != 0.0 || dy != 0.0 {
                    let u = self.arc_param(dy.atan2(dx));
                    if u > 0.0 && u < self.length {
                        out.push(u);
                    }
                }
                out.push(self.length);
                out
            }
        }
    }

    /// Local parameters where the line `robot + t·left(robot)` crosses this
    /// segment, paired with the signed distance `t`.
    fn lateral_crossings(&self, robot: &Pose) -> Vec<(f64, f64)> {
        let (nx, ny) = robot.left();
        let tol = 1e-9 * self.length.max(1.0);
        match self.kind {
            SegmentKind::Line => {
                let (dx, dy) = self.start_pose.heading();
                // robot + t n = start + u d
                let det = dx * ny - dy * nx;
                if det.abs() < 1e-12 {
                    return Vec::new();
                }
                let (rx, ry) = (robot.x - self.start_pose.x, robot.y - self.start_pose.y);
                let u = (rx * ny - ry * nx) / det;
                let t = (dx * ry - dy * rx) / det;
                if u >= -tol && u <= self.length + tol {
                    vec![(u.clamp(0.0, self.length), t)]
                } else {
                    Vec::new()
                }
            }
            SegmentKind::Arc => {
                let (cx, cy) = self.center();
                let r = 1.0 / self.curvature.abs();
                let (wx, wy) = (robot.x - cx, robot.y - cy);
                let half_b = nx * wx + ny * wy;
                let c = wx * wx + wy * wy - r * r;
                let disc = half_b * half_b - c;
                if disc < 0.0 {
                    return Vec::new();
                }
                let root = disc.sqrt();
                let full = TAU / self.curvature.abs();
                let mut out = Vec::with_capacity(2);
                for t in [-half_b - root, -half_b + root] {
                    let (qx, qy) = (wx + t * nx, wy + t * ny);
                    let mut u = self.arc_param(qy.atan2(qx));
                    if full - u < tol {
                        u = 0.0;
                    }
                    if u <= self.length + tol {
                        out.push((u.min(self.length), t));
                    }
                }
                out
            }
        }
    }
}

/// Point on the path together with its local properties.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PathPoint {
    pub pose: Pose,
    pub s: f64,
    pub curvature: f64,
    pub in_gap: bool,
}

/// Immutable path model; safe to share across threads once built.
#[derive(Debug, Clone, PartialEq)]
pub struct PathModel {
    segments: Vec<Segment>,
    gaps: Vec<Gap>,
    objects: Vec<InspectionObject>,
    total_length: f64,
}

impl PathModel {
    pub fn build(
        spec: &PathSpec,
        gaps: &[Gap],
        objects: &[InspectionObject],
    ) -> Result<Self, PathError> {
        if spec.segments.is_empty() {
            return Err(PathError::Empty);
        }
        if !spec.start.is_finite() {
            return Err(PathError::NonFiniteStart);
        }
        let mut segments = Vec::with_capacity(spec.segments.len());
        let mut pose = Pose::new(spec.start.x, spec.start.y, spec.start.theta);
        let mut s_start = 0.0;
        for (index, seg) in spec.segments.iter().enumerate() {
            let (kind, length, curvature) = match *seg {
                SegmentSpec::Line { length } => (SegmentKind::Line, length, 0.0),
                SegmentSpec::Arc { radius, sweep } => {
                    if !(radius.is_finite() && radius > 0.0) {
                        return Err(PathError::BadRadius { index, radius });
                    }
                    if !(sweep.is_finite() && sweep != 0.0) {
                        return Err(PathError::BadSweep { index, sweep });
                    }
                    (SegmentKind::Arc, radius * sweep.abs(), sweep.signum() / radius)
                }
            };
            if !(length.is_finite() && length > 0.0) {
                return Err(PathError::NonPositiveLength { index, length });
            }
            let segment = Segment {
                kind,
                start_pose: pose,
                length,
                curvature,
                s_start,
            };
            pose = segment.end_pose();
            s_start += length;
            segments.push(segment);
        }
        let total_length = s_start;

        let mut sorted: Vec<Gap> = gaps.to_vec();
        for g in &sorted {
            if !(g.s_start.is_finite() && g.s_end.is_finite())
                || g.s_start < 0.0
                || g.s_end > total_length
                || g.s_start >= g.s_end
            {
                return Err(PathError::GapOutOfRange {
                    start: g.s_start,
                    end: g.s_end,
                    total: total_length,
                });
            }
        }
        sorted.sort_by(|a, b| a.s_start.total_cmp(&b.s_start));
        for w in sorted.windows(2) {
            if w[1].s_start < w[0].s_end {
                return Err(PathError::OverlappingGaps(
                    w[0].s_start,
                    w[0].s_end,
                    w[1].s_start,
                    w[1].s_end,
                ));
            }
        }
        for o in objects {
            if !(o.s >= 0.0 && o.s <= total_length) {
                return Err(PathError::ObjectOutOfRange {
                    s: o.s,
                    total: total_length,
                });
            }
        }

        Ok(Self {
            segments,
            gaps: sorted,
            objects: objects.to_vec(),
            total_length,
        })
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    pub fn gaps(&self) -> &[Gap] {
        &self.gaps
    }

    pub fn objects(&self) -> &[InspectionObject] {
        &self.objects
    }

    pub fn total_length(&self) -> f64 {
        self.total_length
    }

    pub fn in_gap(&self, s: f64) -> bool {
        self.gaps.iter().any(|g| g.contains(s))
    }

    fn segment_index(&self, s: f64) -> usize {
        self.segments
            .partition_point(|seg| seg.s_start <= s)
            .saturating_sub(1)
    }

    fn point_on(&self, index: usize, u: f64) -> PathPoint {
        let seg = &self.segments[index];
        let s = seg.s_start + u;
        PathPoint {
            pose: seg.pose_at(u),
            s,
            curvature: seg.curvature,
            in_gap: self.in_gap(s),
        }
    }

    /// Point at arclength `s`, clamped to `[0, total_length]`.
    pub fn point_at(&self, s: f64) -> PathPoint {
        let s = if s.is_nan() {
            0.0
        } else {
            s.clamp(0.0, self.total_length)
        };
        let index = self.segment_index(s);
        let seg = &self.segments[index];
        self.point_on(index, (s - seg.s_start).clamp(0.0, seg.length))
    }

    /// Nearest path point to the robot position; ties go to the smaller arclength.
    pub fn project(&self, robot: &Pose) -> PathPoint {
        self.project_with_distance(robot).0
    }

    /// Like [`project`](Self::project), also returning the Euclidean distance.
    pub fn project_with_distance(&self, robot: &Pose) -> (PathPoint, f64) {
        let mut best: Option<(usize, f64, f64)> = None;
        for (index, seg) in self.segments.iter().enumerate() {
            for u in seg.nearest_params(robot.x, robot.y) {
                let p = seg.pose_at(u);
                let d = (p.x - robot.x).hypot(p.y - robot.y);
                match best {
                    Some((_, _, bd)) if d >= bd - TIE_EPS => {}
                    _ => best = Some((index, u, d)),
                }
            }
        }
        let (index, u, d) = best.expect("path has at least one segment");
        (self.point_on(index, u), d)
    }

    /// Path point on the robot's lateral axis, so that the longitudinal error
    /// against it is zero.
    ///
    /// Among all crossings whose tangent points within ±π/2 of the robot
    /// heading, the one closest to the robot is chosen (ties to smaller
    /// arclength). Returns `None` when no admissible crossing lies within
    /// reach of the nearest point.
    pub fn project_lateral(&self, robot: &Pose) -> Option<PathPoint> {
        let (_, nearest) = self.project_with_distance(robot);
        let reach = LATERAL_REACH_RATIO * nearest + LATERAL_REACH_SLACK;
        let mut best: Option<(usize, f64, f64)> = None;
        for (index, seg) in self.segments.iter().enumerate() {
            for (u, t) in seg.lateral_crossings(robot) {
                let heading = seg.pose_at(u).theta;
                if wrap_angle(heading - robot.theta).abs() >= FRAC_PI_2 {
                    continue;
                }
                let d = t.abs();
                if d > reach {
                    continue;
                }
                match best {
                    Some((_, _, bd)) if d >= bd - TIE_EPS => {}
                    _ => best = Some((index, u, d)),
                }
            }
        }
        best.map(|(index, u, _)| self.point_on(index, u))
    }

    /// Reference point for error computation: the lateral-axis crossing when
    /// one exists, otherwise the nearest point. The flag tells which was used.
    pub fn reference_point(&self, robot: &Pose) -> (PathPoint, bool) {
        match self.project_lateral(robot) {
            Some(p) => (p, true),
            None => (self.project(robot), false),
        }
    }

    /// Geometric stand-in for camera detection of the path.
    pub fn detect(&self, robot: &Pose, sensing_radius: f64) -> bool {
        let (p, d) = self.project_with_distance(robot);
        d <= sensing_radius && !p.in_gap
    }

    /// World position of an inspection object (positive offset is left of the path).
    pub fn object_position(&self, object: &InspectionObject) -> (f64, f64) {
        let p = self.point_at(object.s).pose;
        let (lx, ly) = p.left();
        (
            p.x + object.lateral_offset * lx,
            p.y + object.lateral_offset * ly,
        )
    }
}
