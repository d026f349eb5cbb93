//! Skeleton data model, per-sensor streams, time-based interpolation and
//! tracking-area filtering.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::formats::{self, FormatError};
use crate::geometry::{orthonormalize, GeometryError, RigidTransform, Rotation, Vec3};

/// Default hold window for bodies seen on only one side of an interpolation.
pub const DEFAULT_HOLD_US: i64 = 50_000;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SkeletonError {
    #[error("skeleton {0} has no pelvis joint")]
    MissingPelvis(u32),
    #[error("skeleton {body_id} lists joint {joint} twice")]
    DuplicateJoint { body_id: u32, joint: JointId },
    #[error("frame at {timestamp_us} us lists body {body_id} twice")]
    DuplicateBody { timestamp_us: i64, body_id: u32 },
    #[error("interpolation time {t} us is outside [{t0}, {t1}]")]
    TimeOrder { t0: i64, t1: i64, t: i64 },
    #[error("cannot interpolate frames from sensors {0:?} and {1:?}")]
    SensorMismatch(String, String),
    #[error("stream {sensor_id:?}: timestamp {next} us follows {prev} us")]
    NonMonotonic { sensor_id: String, prev: i64, next: i64 },
    #[error("tracking area polygon is self-intersecting")]
    SelfIntersectingPolygon,
    #[error("tracking area needs at least 3 vertices, got {0}")]
    PolygonTooSmall(usize),
    #[error("min_sensor_distance must be non-negative")]
    NegativeDistance,
}

/// Tracker-reported joint confidence, ordered `None < Low < Medium < High`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Confidence {
    None,
    Low,
    Medium,
    High,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JointId {
    Pelvis,
    SpineChest,
    Neck,
    Head,
    ShoulderL,
    ShoulderR,
    ElbowL,
    ElbowR,
    HandL,
    HandR,
    FootL,
    FootR,
}

impl JointId {
    pub const ALL: [JointId; 12] = [
        JointId::Pelvis,
        JointId::SpineChest,
        JointId::Neck,
        JointId::Head,
        JointId::ShoulderL,
        JointId::ShoulderR,
        JointId::ElbowL,
        JointId::ElbowR,
        JointId::HandL,
        JointId::HandR,
        JointId::FootL,
        JointId::FootR,
    ];
}

impl fmt::Display for JointId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = serde_json::to_value(self).ok().and_then(|v| v.as_str().map(str::to_owned)).unwrap_or_default();
        f.write_str(&s)
    }
}

/// Joint orientation as three axis vectors expressed in the skeleton's frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Axes {
    pub x: Vec3,
    pub y: Vec3,
    pub z: Vec3,
}

impl Axes {
    pub fn identity() -> Self {
        Axes { x: Vec3::x(), y: Vec3::y(), z: Vec3::z() }
    }

    pub fn from_rotation(r: &Rotation) -> Self {
        Axes { x: r.column(0), y: r.column(1), z: r.column(2) }
    }

    pub fn rotated(&self, r: &Rotation) -> Self {
        Axes { x: r.apply(&self.x), y: r.apply(&self.y), z: r.apply(&self.z) }
    }

    pub fn orthonormalized(&self) -> Result<Self, GeometryError> {
        let (x, y, z) = orthonormalize(self.x, self.y, self.z)?;
        Ok(Axes { x, y, z })
    }

    /// Rotation with the (re-orthonormalized) axes as columns.
    pub fn rotation(&self) -> Result<Rotation, GeometryError> {
        let a = self.orthonormalized()?;
        Rotation::from_axes(a.x, a.y, a.z)
    }

    /// Largest deviation of `[x y z]ᵀ[x y z]` from identity, plus `|det − 1|`.
    pub fn orthonormality_error(&self) -> f64 {
        let m = nalgebra::Matrix3::from_columns(&[self.x, self.y, self.z]);
        let e = (m.transpose() * m - nalgebra::Matrix3::identity()).amax();
        e.max((m.determinant() - 1.0).abs())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Joint {
    pub id: JointId,
    pub position: Vec3,
    pub axes: Axes,
    pub confidence: Confidence,
}

impl Joint {
    pub fn new(id: JointId, position: Vec3, axes: Axes, confidence: Confidence) -> Self {
        Joint { id, position, axes, confidence }
    }
}

/// One tracked body: a pelvis plus any subset of the other joints, stored
/// in [`JointId`] order.
#[derive(Debug, Clone, PartialEq)]
pub struct Skeleton {
    pub body_id: u32,
    joints: Vec<Joint>,
}

impl Skeleton {
    pub fn new(body_id: u32, mut joints: Vec<Joint>) -> Result<Self, SkeletonError> {
        joints.sort_by_key(|j| j.id);
        if let Some(w) = joints.windows(2).find(|w| w[0].id == w[1].id) {
            return Err(SkeletonError::DuplicateJoint { body_id, joint: w[0].id });
        }
        if joints.first().map(|j| j.id) != Some(JointId::Pelvis) {
            return Err(SkeletonError::MissingPelvis(body_id));
        }
        Ok(Skeleton { body_id, joints })
    }

    pub fn joints(&self) -> &[Joint] {
        &self.joints
    }

    pub fn joint(&self, id: JointId) -> Option<&Joint> {
        self.joints.binary_search_by_key(&id, |j| j.id).ok().map(|i| &self.joints[i])
    }

    pub fn pelvis(&self) -> &Joint {
        &self.joints[0]
    }

    pub fn with_body_id(mut self, body_id: u32) -> Self {
        self.body_id = body_id;
        self
    }
}

/// Everything one sensor reported at one instant.
#[derive(Debug, Clone, PartialEq)]
pub struct SkeletonFrame {
    pub sensor_id: String,
    pub timestamp_us: i64,
    skeletons: Vec<Skeleton>,
}

impl SkeletonFrame {
    pub fn new(sensor_id: impl Into<String>, timestamp_us: i64, skeletons: Vec<Skeleton>) -> Result<Self, SkeletonError> {
        let mut seen = BTreeSet::new();
        for s in &skeletons {
            if !seen.insert(s.body_id) {
                return Err(SkeletonError::DuplicateBody { timestamp_us, body_id: s.body_id });
            }
        }
        Ok(SkeletonFrame { sensor_id: sensor_id.into(), timestamp_us, skeletons })
    }

    pub fn empty(sensor_id: impl Into<String>, timestamp_us: i64) -> Self {
        SkeletonFrame { sensor_id: sensor_id.into(), timestamp_us, skeletons: Vec::new() }
    }

    pub fn skeletons(&self) -> &[Skeleton] {
        &self.skeletons
    }

    pub fn into_skeletons(self) -> Vec<Skeleton> {
        self.skeletons
    }

    pub fn body(&self, body_id: u32) -> Option<&Skeleton> {
        self.skeletons.iter().find(|s| s.body_id == body_id)
    }
}

/// Maps every joint position by `t` and rotates every axis.
pub fn transform_skeleton(t: &RigidTransform, s: &Skeleton) -> Skeleton {
    Skeleton {
        body_id: s.body_id,
        joints: s
            .joints
            .iter()
            .map(|j| Joint { position: t.apply(&j.position), axes: j.axes.rotated(&t.rotation), ..*j })
            .collect(),
    }
}

pub fn transform_frame(t: &RigidTransform, f: &SkeletonFrame) -> SkeletonFrame {
    SkeletonFrame {
        sensor_id: f.sensor_id.clone(),
        timestamp_us: f.timestamp_us,
        skeletons: f.skeletons.iter().map(|s| transform_skeleton(t, s)).collect(),
    }
}

fn lerp(a: &Vec3, b: &Vec3, alpha: f64) -> Vec3 {
    // exact at both ends: (1−0)·a + 0·b = a and 0·a + 1·b = b
    a * (1.0 - alpha) + b * alpha
}

fn interpolate_joint(a: &Joint, b: &Joint, alpha: f64) -> Joint {
    let raw = Axes {
        x: lerp(&a.axes.x, &b.axes.x, alpha),
        y: lerp(&a.axes.y, &b.axes.y, alpha),
        z: lerp(&a.axes.z, &b.axes.z, alpha),
    };
    let axes = raw.orthonormalized().unwrap_or(if alpha <= 0.5 { a.axes } else { b.axes });
    Joint {
        id: a.id,
        position: lerp(&a.position, &b.position, alpha),
        axes,
        confidence: a.confidence.min(b.confidence),
    }
}

fn interpolate_skeleton(a: &Skeleton, b: &Skeleton, alpha: f64) -> Skeleton {
    let mut joints = Vec::with_capacity(a.joints.len().max(b.joints.len()));
    for id in JointId::ALL {
        match (a.joint(id), b.joint(id)) {
            (Some(ja), Some(jb)) => joints.push(interpolate_joint(ja, jb, alpha)),
            (Some(j), None) | (None, Some(j)) => joints.push(*j),
            (None, None) => {}
        }
    }
    Skeleton { body_id: a.body_id, joints }
}

/// Resamples a sensor's skeletons at `t_us` between two bracketing frames.
///
/// Bodies seen in both frames are blended with `α = (t − t0)/(t1 − t0)`:
/// positions linearly, axes component-wise and then re-orthonormalized,
/// confidence as the lower of the two. At `α = 0` or `α = 1` the endpoint
/// skeleton is returned verbatim. A body seen in only one frame is kept
/// unchanged if that frame lies within `hold_us` of `t_us`.
pub fn interpolate_frames(
    f0: &SkeletonFrame,
    f1: &SkeletonFrame,
    t_us: i64,
    hold_us: i64,
) -> Result<SkeletonFrame, SkeletonError> {
    if f0.sensor_id != f1.sensor_id {
        return Err(SkeletonError::SensorMismatch(f0.sensor_id.clone(), f1.sensor_id.clone()));
    }
    let (t0, t1) = (f0.timestamp_us, f1.timestamp_us);
    if !(t0 <= t_us && t_us <= t1) {
        return Err(SkeletonError::TimeOrder { t0, t1, t: t_us });
    }
    let alpha = if t1 == t0 { 0.0 } else { (t_us - t0) as f64 / (t1 - t0) as f64 };

    let mut bodies: BTreeMap<u32, Skeleton> = BTreeMap::new();
    for a in &f0.skeletons {
        match f1.body(a.body_id) {
            Some(b) => {
                let s = if alpha == 0.0 {
                    a.clone()
                } else if alpha == 1.0 {
                    b.clone()
                } else {
                    interpolate_skeleton(a, b, alpha)
                };
                bodies.insert(a.body_id, s);
            }
            None if t_us - t0 <= hold_us => {
                bodies.insert(a.body_id, a.clone());
            }
            None => {}
        }
    }
    for b in &f1.skeletons {
        if f0.body(b.body_id).is_none() && t1 - t_us <= hold_us {
            bodies.insert(b.body_id, b.clone());
        }
    }
    Ok(SkeletonFrame { sensor_id: f0.sensor_id.clone(), timestamp_us: t_us, skeletons: bodies.into_values().collect() })
}

/// A sensor's frames with non-decreasing timestamps.
#[derive(Debug, Clone, PartialEq)]
pub struct SensorStream {
    sensor_id: String,
    frames: Vec<SkeletonFrame>,
}

impl SensorStream {
    pub fn new(sensor_id: impl Into<String>, frames: Vec<SkeletonFrame>) -> Result<Self, SkeletonError> {
        let sensor_id = sensor_id.into();
        for f in &frames {
            if f.sensor_id != sensor_id {
                return Err(SkeletonError::SensorMismatch(sensor_id, f.sensor_id.clone()));
            }
        }
        if let Some(w) = frames.windows(2).find(|w| w[1].timestamp_us < w[0].timestamp_us) {
            return Err(SkeletonError::NonMonotonic { sensor_id, prev: w[0].timestamp_us, next: w[1].timestamp_us });
        }
        Ok(SensorStream { sensor_id, frames })
    }

    pub fn sensor_id(&self) -> &str {
        &self.sensor_id
    }

    pub fn frames(&self) -> &[SkeletonFrame] {
        &self.frames
    }

    pub fn time_span(&self) -> Option<(i64, i64)> {
        Some((self.frames.first()?.timestamp_us, self.frames.last()?.timestamp_us))
    }

    /// The stream's view at `t_us`: interpolated between the bracketing
    /// frames, or held from the nearest frame within `hold_us` at the ends.
    pub fn sample(&self, t_us: i64, hold_us: i64) -> SkeletonFrame {
        let after = self.frames.partition_point(|f| f.timestamp_us < t_us);
        let exact = self.frames.get(after).filter(|f| f.timestamp_us == t_us);
        if let Some(f) = exact {
            return f.clone();
        }
        let before = after.checked_sub(1).map(|i| &self.frames[i]);
        let next = self.frames.get(after);
        match (before, next) {
            (Some(f0), Some(f1)) => {
                interpolate_frames(f0, f1, t_us, hold_us).expect("bracketing frames share a sensor and order")
            }
            (Some(f), None) | (None, Some(f)) if (f.timestamp_us - t_us).abs() <= hold_us => {
                SkeletonFrame { timestamp_us: t_us, ..f.clone() }
            }
            _ => SkeletonFrame::empty(self.sensor_id.clone(), t_us),
        }
    }
}

/// Region where fused tracking is wanted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrackingAreaConfig {
    /// Skeletons whose pelvis is closer than this to their sensor are dropped.
    pub min_sensor_distance: f64,
    /// Floor-plane polygon `(x, y)` in the floor frame; empty means unbounded.
    pub area_polygon: Vec<[f64; 2]>,
    /// World → floor frame (z up); identity when the world is already floor-aligned.
    #[serde(with = "transform_4x4")]
    pub floor_frame: RigidTransform,
}

impl Default for TrackingAreaConfig {
    fn default() -> Self {
        TrackingAreaConfig {
            min_sensor_distance: 0.0,
            area_polygon: Vec::new(),
            floor_frame: RigidTransform::identity(),
        }
    }
}

impl TrackingAreaConfig {
    pub fn validate(&self) -> Result<(), SkeletonError> {
        if !(self.min_sensor_distance >= 0.0) {
            return Err(SkeletonError::NegativeDistance);
        }
        let poly = &self.area_polygon;
        if poly.is_empty() {
            return Ok(());
        }
        if poly.len() < 3 {
            return Err(SkeletonError::PolygonTooSmall(poly.len()));
        }
        let n = poly.len();
        for i in 0..n {
            for j in i + 1..n {
                let adjacent = j == i + 1 || (i == 0 && j == n - 1);
                if !adjacent && segments_intersect(poly[i], poly[(i + 1) % n], poly[j], poly[(j + 1) % n]) {
                    return Err(SkeletonError::SelfIntersectingPolygon);
                }
            }
        }
        Ok(())
    }
}

pub(crate) mod transform_4x4 {
    use super::RigidTransform;
    use serde::{de::Error, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(t: &RigidTransform, s: S) -> Result<S::Ok, S::Error> {
        s.collect_seq(t.to_row_major_4x4())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<RigidTransform, D::Error> {
        let v = Vec::<f64>::deserialize(d)?;
        RigidTransform::from_row_major_4x4(&v).map_err(D::Error::custom)
    }
}

fn cross2(o: [f64; 2], a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])
}

fn on_segment(p: [f64; 2], a: [f64; 2], b: [f64; 2]) -> bool {
    cross2(a, b, p) == 0.0
        && p[0] >= a[0].min(b[0])
        && p[0] <= a[0].max(b[0])
        && p[1] >= a[1].min(b[1])
        && p[1] <= a[1].max(b[1])
}

fn segments_intersect(a: [f64; 2], b: [f64; 2], c: [f64; 2], d: [f64; 2]) -> bool {
    let d1 = cross2(c, d, a);
    let d2 = cross2(c, d, b);
    let d3 = cross2(a, b, c);
    let d4 = cross2(a, b, d);
    if ((d1 > 0.0 && d2 < 0.0) || (d1 < 0.0 && d2 > 0.0)) && ((d3 > 0.0 && d4 < 0.0) || (d3 < 0.0 && d4 > 0.0)) {
        return true;
    }
    on_segment(a, c, d) || on_segment(b, c, d) || on_segment(c, a, b) || on_segment(d, a, b)
}

/// Ray-casting parity test; points on an edge or vertex count as inside.
pub fn point_in_polygon(p: [f64; 2], poly: &[[f64; 2]]) -> bool {
    let n = poly.len();
    if n == 0 {
        return false;
    }
    let mut inside = false;
    for i in 0..n {
        let a = poly[i];
        let b = poly[(i + 1) % n];
        if on_segment(p, a, b) {
            return true;
        }
        if (a[1] > p[1]) != (b[1] > p[1]) {
            let x = a[0] + (p[1] - a[1]) / (b[1] - a[1]) * (b[0] - a[0]);
            if p[0] < x {
                inside = !inside;
            }
        }
    }
    inside
}

/// Drops world-frame skeletons too close to their sensor or outside the
/// tracking area. Order is preserved.
pub fn filter_skeletons(f: &SkeletonFrame, sensor_pose: &RigidTransform, cfg: &TrackingAreaConfig) -> SkeletonFrame {
    let keep = |s: &&Skeleton| {
        let pelvis = s.pelvis().position;
        if (pelvis - sensor_pose.translation).norm() < cfg.min_sensor_distance {
            return false;
        }
        if cfg.area_polygon.is_empty() {
            return true;
        }
        let q = cfg.floor_frame.apply(&pelvis);
        point_in_polygon([q.x, q.y], &cfg.area_polygon)
    };
    SkeletonFrame {
        sensor_id: f.sensor_id.clone(),
        timestamp_us: f.timestamp_us,
        skeletons: f.skeletons.iter().filter(keep).cloned().collect(),
    }
}

/// JSON shapes shared by the skeleton and fused streams.
pub mod wire {
    use super::*;

    #[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
    pub struct AxesWire {
        pub x: [f64; 3],
        pub y: [f64; 3],
        pub z: [f64; 3],
    }

    #[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
    pub struct JointWire {
        pub id: JointId,
        pub pos: [f64; 3],
        pub axes: AxesWire,
        pub conf: Confidence,
    }

    #[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
    pub struct BodyWire {
        pub body_id: u32,
        pub joints: Vec<JointWire>,
    }

    #[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
    pub struct FrameWire {
        pub sensor_id: String,
        pub timestamp_us: i64,
        pub bodies: Vec<BodyWire>,
    }

    fn arr(v: &Vec3) -> [f64; 3] {
        [v.x, v.y, v.z]
    }

    fn vec(a: &[f64; 3]) -> Vec3 {
        Vec3::new(a[0], a[1], a[2])
    }

    impl From<&Skeleton> for BodyWire {
        fn from(s: &Skeleton) -> Self {
            BodyWire {
                body_id: s.body_id,
                joints: s
                    .joints()
                    .iter()
                    .map(|j| JointWire {
                        id: j.id,
                        pos: arr(&j.position),
                        axes: AxesWire { x: arr(&j.axes.x), y: arr(&j.axes.y), z: arr(&j.axes.z) },
                        conf: j.confidence,
                    })
                    .collect(),
            }
        }
    }

    impl TryFrom<&BodyWire> for Skeleton {
        type Error = SkeletonError;

        fn try_from(b: &BodyWire) -> Result<Self, SkeletonError> {
            let joints = b
                .joints
                .iter()
                .map(|j| Joint {
                    id: j.id,
                    position: vec(&j.pos),
                    axes: Axes { x: vec(&j.axes.x), y: vec(&j.axes.y), z: vec(&j.axes.z) },
                    confidence: j.conf,
                })
                .collect();
            Skeleton::new(b.body_id, joints)
        }
    }

    impl From<&SkeletonFrame> for FrameWire {
        fn from(f: &SkeletonFrame) -> Self {
            FrameWire {
                sensor_id: f.sensor_id.clone(),
                timestamp_us: f.timestamp_us,
                bodies: f.skeletons().iter().map(BodyWire::from).collect(),
            }
        }
    }

    impl TryFrom<&FrameWire> for SkeletonFrame {
        type Error = SkeletonError;

        fn try_from(f: &FrameWire) -> Result<Self, SkeletonError> {
            let skeletons = f.bodies.iter().map(Skeleton::try_from).collect::<Result<Vec<_>, _>>()?;
            SkeletonFrame::new(f.sensor_id.clone(), f.timestamp_us, skeletons)
        }
    }
}

/// One JSON object per line, shortest round-trip float formatting.
pub fn encode_stream(frames: &[SkeletonFrame]) -> String {
    let mut out = String::new();
    for f in frames {
        out.push_str(&serde_json::to_string(&wire::FrameWire::from(f)).expect("serializable frame"));
        out.push('\n');
    }
    out
}

pub fn decode_stream(text: &str, path: &Path) -> Result<Vec<SkeletonFrame>, FormatError> {
    let mut frames = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let w: wire::FrameWire =
            serde_json::from_str(line).map_err(|e| FormatError::parse(path, Some(i + 1), e.to_string()))?;
        frames.push(SkeletonFrame::try_from(&w).map_err(|e| FormatError::parse(path, Some(i + 1), e.to_string()))?);
    }
    Ok(frames)
}

pub fn read_stream(path: &Path) -> Result<Vec<SkeletonFrame>, FormatError> {
    decode_stream(&formats::read_string(path)?, path)
}

pub fn write_stream(path: &Path, frames: &[SkeletonFrame]) -> Result<(), FormatError> {
    formats::write_atomic(path, encode_stream(frames).as_bytes())
}
