//! Extrinsic calibration: a skeleton-based initial estimate refined by ICP
//! on depth clouds restricted to the neighbourhood of the reference person.
//!
//! The world frame is the reference sensor's frame; every other sensor is
//! calibrated pairwise against it.

mod icp;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use icp::{icp, IcpParams, IcpResult};

use crate::geometry::{average_rotations, average_translations, GeometryError, RigidTransform};
use crate::sensor::{backproject, filter_radius, DepthImage, PointCloud};
use crate::skeleton::{Confidence, Skeleton, SkeletonFrame};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CalibrationError {
    #[error("skeleton stage ({sensor_id}): expected exactly one tracked person, found {count}")]
    PersonCount { sensor_id: String, count: usize },
    #[error("skeleton stage: {0} joints meet the confidence threshold in both views, need at least 3")]
    InsufficientJoints(usize),
    #[error("skeleton stage: {0}")]
    Averaging(GeometryError),
    #[error("depth stage ({sensor_id}): no depth image")]
    MissingDepth { sensor_id: String },
    #[error("point cloud stage ({sensor_id}): no points left after filtering")]
    EmptyCloud { sensor_id: String },
    #[error("icp stage: every correspondence was rejected after {0} updates")]
    Divergence(usize),
    #[error("icp stage: {0}")]
    Alignment(GeometryError),
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("sensor {0:?} is not part of the capture")]
    UnknownSensor(String),
}

impl CalibrationError {
    fn for_sensor(self, sensor_id: &str) -> Self {
        match self {
            CalibrationError::EmptyCloud { .. } => CalibrationError::EmptyCloud { sensor_id: sensor_id.into() },
            other => other,
        }
    }
}

/// Estimates the transform mapping sensor-B coordinates into sensor-A
/// coordinates from one person seen by both sensors.
///
/// Every joint present in both skeletons with at least `min_conf` in both
/// yields `pose_A ∘ pose_B⁻¹`; rotations and translations of these per-joint
/// transforms are averaged separately.
pub fn estimate_from_skeletons(
    sa: &Skeleton,
    sb: &Skeleton,
    min_conf: Confidence,
) -> Result<RigidTransform, CalibrationError> {
    let mut rotations = Vec::new();
    let mut translations = Vec::new();
    for ja in sa.joints() {
        let Some(jb) = sb.joint(ja.id) else { continue };
        if ja.confidence < min_conf || jb.confidence < min_conf {
            continue;
        }
        let (Ok(ra), Ok(rb)) = (ja.axes.rotation(), jb.axes.rotation()) else { continue };
        let pose_a = RigidTransform::new(ra, ja.position);
        let pose_b = RigidTransform::new(rb, jb.position);
        let t = pose_a.compose(&pose_b.inverse());
        rotations.push(t.rotation);
        translations.push(t.translation);
    }
    if rotations.len() < 3 {
        return Err(CalibrationError::InsufficientJoints(rotations.len()));
    }
    let rotation = average_rotations(&rotations).map_err(CalibrationError::Averaging)?;
    let translation = average_translations(&translations).map_err(CalibrationError::Averaging)?;
    Ok(RigidTransform::new(rotation, translation))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CalibrationConfig {
    pub icp: IcpParams,
    /// Radius of the sphere around the reference person's pelvis that clouds are cropped to.
    pub person_radius: f64,
    /// ICP passes, each starting from the previous result.
    pub icp_runs: usize,
    pub min_confidence: Confidence,
}

impl Default for CalibrationConfig {
    fn default() -> Self {
        CalibrationConfig {
            icp: IcpParams::default(),
            person_radius: 2.0,
            icp_runs: 2,
            min_confidence: Confidence::Medium,
        }
    }
}

impl CalibrationConfig {
    pub fn validate(&self) -> Result<(), CalibrationError> {
        self.icp.validate()?;
        if !(self.person_radius > 0.0) {
            return Err(CalibrationError::InvalidParams("person_radius must be positive".into()));
        }
        if self.icp_runs < 1 {
            return Err(CalibrationError::InvalidParams("icp_runs must be at least 1".into()));
        }
        Ok(())
    }
}

/// What one sensor saw at the calibration instant, in its own frame.
#[derive(Debug, Clone, PartialEq)]
pub struct SensorCapture {
    pub sensor_id: String,
    pub skeletons: SkeletonFrame,
    pub depth: Option<DepthImage>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IcpRunSummary {
    pub rms: f64,
    pub iterations: usize,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairDiagnostics {
    #[serde(with = "crate::skeleton::transform_4x4", rename = "initial_4x4_row_major")]
    pub initial: RigidTransform,
    pub joints_used: usize,
    pub target_points: usize,
    pub source_points: usize,
    pub icp_runs: Vec<IcpRunSummary>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PairCalibration {
    /// Maps the calibrated sensor's frame into the reference frame.
    pub extrinsic: RigidTransform,
    pub diagnostics: PairDiagnostics,
}

fn single_person(c: &SensorCapture) -> Result<&Skeleton, CalibrationError> {
    match c.skeletons.skeletons() {
        [s] => Ok(s),
        other => Err(CalibrationError::PersonCount { sensor_id: c.sensor_id.clone(), count: other.len() }),
    }
}

fn person_cloud(c: &SensorCapture, center: &Skeleton, radius: f64) -> Result<PointCloud, CalibrationError> {
    let depth = c.depth.as_ref().ok_or_else(|| CalibrationError::MissingDepth { sensor_id: c.sensor_id.clone() })?;
    let cloud = filter_radius(&backproject(depth), &center.pelvis().position, radius);
    if cloud.is_empty() {
        return Err(CalibrationError::EmptyCloud { sensor_id: c.sensor_id.clone() });
    }
    Ok(cloud)
}

/// Calibrates `other` against `reference`: skeleton estimate, person-centred
/// cloud crops, then `icp_runs` chained ICP passes.
pub fn calibrate_pair(
    reference: &SensorCapture,
    other: &SensorCapture,
    cfg: &CalibrationConfig,
) -> Result<PairCalibration, CalibrationError> {
    cfg.validate()?;
    let person_ref = single_person(reference)?;
    let person_other = single_person(other)?;
    let initial = estimate_from_skeletons(person_ref, person_other, cfg.min_confidence)?;
    let joints_used = person_ref
        .joints()
        .iter()
        .filter(|j| {
            j.confidence >= cfg.min_confidence
                && person_other.joint(j.id).is_some_and(|o| o.confidence >= cfg.min_confidence)
        })
        .count();

    let target = person_cloud(reference, person_ref, cfg.person_radius)?;
    let source = person_cloud(other, person_other, cfg.person_radius)?;

    let mut current = initial;
    let mut runs = Vec::with_capacity(cfg.icp_runs);
    let mut counts = (0, 0);
    for _ in 0..cfg.icp_runs {
        let r = icp(&source, &target, &current, &cfg.icp).map_err(|e| e.for_sensor(&other.sensor_id))?;
        current = r.transform;
        counts = (r.target_points, r.source_points);
        runs.push(IcpRunSummary { rms: r.rms, iterations: r.iterations, converged: r.converged });
    }
    Ok(PairCalibration {
        extrinsic: current,
        diagnostics: PairDiagnostics {
            initial,
            joints_used,
            target_points: counts.0,
            source_points: counts.1,
            icp_runs: runs,
        },
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensorExtrinsic {
    pub sensor_id: String,
    /// Sensor frame → world frame.
    #[serde(with = "crate::skeleton::transform_4x4", rename = "extrinsic_4x4_row_major")]
    pub extrinsic: RigidTransform,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationResult {
    pub reference_sensor_id: String,
    pub sensors: Vec<SensorExtrinsic>,
    #[serde(default)]
    pub diagnostics: BTreeMap<String, PairDiagnostics>,
}

impl CalibrationResult {
    pub fn extrinsic(&self, sensor_id: &str) -> Option<&RigidTransform> {
        self.sensors.iter().find(|s| s.sensor_id == sensor_id).map(|s| &s.extrinsic)
    }

    /// Sensor ids with the reference first.
    pub fn sensor_ids(&self) -> Vec<&str> {
        self.sensors.iter().map(|s| s.sensor_id.as_str()).collect()
    }
}

/// Calibrates every capture against the one named `reference_id`.
pub fn calibrate_captures(
    captures: &[SensorCapture],
    reference_id: &str,
    cfg: &CalibrationConfig,
) -> Result<CalibrationResult, CalibrationError> {
    let reference = captures
        .iter()
        .find(|c| c.sensor_id == reference_id)
        .ok_or_else(|| CalibrationError::UnknownSensor(reference_id.into()))?;
    let mut sensors = vec![SensorExtrinsic { sensor_id: reference_id.into(), extrinsic: RigidTransform::identity() }];
    let mut diagnostics = BTreeMap::new();
    for c in captures.iter().filter(|c| c.sensor_id != reference_id) {
        let pair = calibrate_pair(reference, c, cfg)?;
        sensors.push(SensorExtrinsic { sensor_id: c.sensor_id.clone(), extrinsic: pair.extrinsic });
        diagnostics.insert(c.sensor_id.clone(), pair.diagnostics);
    }
    Ok(CalibrationResult { reference_sensor_id: reference_id.into(), sensors, diagnostics })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{Rotation, Vec3};
    use crate::sensor::Intrinsics;
    use crate::skeleton::{transform_skeleton, Axes, Joint, JointId};

    fn person(conf: Confidence) -> Skeleton {
        let joints = JointId::ALL
            .iter()
            .enumerate()
            .map(|(i, &id)| {
                let k = i as f64;
                let r = Rotation::from_axis_angle(Vec3::new(k.sin(), 1.0, k.cos()), 0.1 * k);
                Joint::new(id, Vec3::new(0.1 * k.cos(), 0.9 - 0.08 * k, 2.8 + 0.05 * k.sin()), Axes::from_rotation(&r), conf)
            })
            .collect();
        Skeleton::new(1, joints).unwrap()
    }

    fn truth() -> RigidTransform {
        RigidTransform::new(Rotation::from_axis_angle(Vec3::new(0.1, 1.0, -0.2), 0.9), Vec3::new(1.8, -0.1, 0.9))
    }

    #[test]
    fn identical_views_give_identity() {
        let s = person(Confidence::High);
        let t = estimate_from_skeletons(&s, &s, Confidence::Medium).unwrap();
        let (a, d) = t.error_to(&RigidTransform::identity());
        assert!(a < 1e-9 && d < 1e-9);
    }

    #[test]
    fn exact_skeleton_transform_recovered() {
        let sa = person(Confidence::Medium);
        let sb = transform_skeleton(&truth().inverse(), &sa);
        let t = estimate_from_skeletons(&sa, &sb, Confidence::Medium).unwrap();
        let (a, d) = t.error_to(&truth());
        assert!(a < 1e-9 && d < 1e-9, "{a} {d}");
    }

    #[test]
    fn low_confidence_joints_are_ignored() {
        let mut joints: Vec<Joint> = person(Confidence::Low).joints().to_vec();
        for j in joints.iter_mut().take(2) {
            j.confidence = Confidence::High;
        }
        let s = Skeleton::new(1, joints).unwrap();
        assert_eq!(estimate_from_skeletons(&s, &s, Confidence::Medium), Err(CalibrationError::InsufficientJoints(2)));
    }

    fn capture(id: &str, people: Vec<Skeleton>, depth: bool) -> SensorCapture {
        let k = Intrinsics::new(4, 4, 2.0, 2.0, 2.0, 2.0).unwrap();
        SensorCapture {
            sensor_id: id.into(),
            skeletons: SkeletonFrame::new(id, 0, people).unwrap(),
            depth: depth.then(|| DepthImage::new(k, vec![2800; 16]).unwrap()),
        }
    }

    #[test]
    fn stage_errors() {
        let cfg = CalibrationConfig::default();
        let one = person(Confidence::High);
        let two = vec![one.clone(), one.clone().with_body_id(2)];
        let a = capture("a", vec![one.clone()], true);
        let crowded = capture("b", two, true);
        assert_eq!(
            calibrate_pair(&a, &crowded, &cfg).unwrap_err(),
            CalibrationError::PersonCount { sensor_id: "b".into(), count: 2 }
        );
        let no_depth = capture("b", vec![one], false);
        assert_eq!(
            calibrate_pair(&a, &no_depth, &cfg).unwrap_err(),
            CalibrationError::MissingDepth { sensor_id: "b".into() }
        );
        assert!(calibrate_pair(&a, &capture("b", vec![], true), &cfg).unwrap_err().to_string().contains("skeleton stage"));
    }

    #[test]
    fn result_json_shape() {
        let r = CalibrationResult {
            reference_sensor_id: "a".into(),
            sensors: vec![SensorExtrinsic { sensor_id: "a".into(), extrinsic: RigidTransform::identity() }],
            diagnostics: BTreeMap::new(),
        };
        let v = serde_json::to_value(&r).unwrap();
        let m = v["sensors"][0]["extrinsic_4x4_row_major"].as_array().unwrap();
        assert_eq!(m.len(), 16);
        assert_eq!(m[15], 1.0);
        let back: CalibrationResult = serde_json::from_value(v).unwrap();
        assert_eq!(back, r);
    }
}
