//! Synthetic multi-sensor scenes with exact ground truth.
//!
//! The world is z-up with the floor at `z = 0`. Sensors use the usual
//! camera convention (+Z forward, +X right, +Y down) and each sensor's pose
//! maps its frame into the world.

pub mod body;
pub mod presets;
pub mod raycast;
mod session;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use body::{body_capsules, body_joints, BodyModel, Capsule, Waypoint};
pub use raycast::BoxProp;
pub use session::{
    generate_session, ground_truth, BodyCorrespondence, GroundTruthJoint, GroundTruth, GroundTruthFrame, GroundTruthPerson, GroundTruthSensor,
    SessionDepth, SessionManifest, SessionSensor, SessionSummary,
};

use crate::formats::FormatError;
use crate::geometry::{Rotation, RigidTransform, Vec3};
use crate::sensor::{project, DepthImage, Intrinsics};
use crate::skeleton::{transform_skeleton, Confidence, Joint, Skeleton, SkeletonFrame};

#[derive(Debug, Error)]
pub enum SimError {
    #[error("unknown sensor {0:?}")]
    UnknownSensor(String),
    #[error("invalid scene: {0}")]
    InvalidScene(String),
    #[error(transparent)]
    Format(#[from] FormatError),
}

/// Observation noise and tracker behaviour.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NoiseModel {
    /// Joint position noise, metres.
    pub joint_sigma: f64,
    /// Per-component rotation-vector noise on joint axes, radians.
    pub axis_sigma: f64,
    pub depth_sigma_mm: f64,
    /// Position noise multiplier for occluded (`Low`) joints.
    pub low_noise_factor: f64,
    /// A body with fewer unobstructed joints than this is not reported.
    pub min_visible_joints: usize,
    pub seed: u64,
}

impl Default for NoiseModel {
    fn default() -> Self {
        NoiseModel {
            joint_sigma: 0.02,
            axis_sigma: 2f64.to_radians(),
            depth_sigma_mm: 3.0,
            low_noise_factor: 3.0,
            min_visible_joints: 1,
            seed: 0,
        }
    }
}

impl NoiseModel {
    pub fn noiseless(seed: u64) -> Self {
        NoiseModel { joint_sigma: 0.0, axis_sigma: 0.0, depth_sigma_mm: 0.0, seed, ..Default::default() }
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let ok = [self.joint_sigma, self.axis_sigma, self.depth_sigma_mm, self.low_noise_factor]
            .iter()
            .all(|s| s.is_finite() && *s >= 0.0);
        if !ok {
            return Err(SimError::InvalidScene("noise parameters must be finite and non-negative".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensorSpec {
    pub sensor_id: String,
    #[serde(default = "default_intrinsics")]
    pub intrinsics: Intrinsics,
    /// Sensor frame → world frame.
    #[serde(with = "crate::skeleton::transform_4x4", rename = "pose_4x4_row_major")]
    pub pose: RigidTransform,
    #[serde(default = "default_max_range")]
    pub max_range: f64,
    #[serde(default)]
    pub phase_offset_us: i64,
}

fn default_intrinsics() -> Intrinsics {
    Intrinsics::from_horizontal_fov(320, 288, 75.0).expect("valid default")
}

fn default_max_range() -> f64 {
    5.0
}

impl SensorSpec {
    /// Default 320×288, 75° camera at `eye` looking at `target`.
    pub fn looking_at(sensor_id: impl Into<String>, eye: Vec3, target: Vec3) -> Self {
        SensorSpec {
            sensor_id: sensor_id.into(),
            intrinsics: default_intrinsics(),
            pose: look_at(eye, target),
            max_range: default_max_range(),
            phase_offset_us: 0,
        }
    }

    pub fn with_phase(mut self, phase_offset_us: i64) -> Self {
        self.phase_offset_us = phase_offset_us;
        self
    }
}

/// Camera pose at `eye` with +Z towards `target` and +Y pointing as close
/// to world down as possible.
pub fn look_at(eye: Vec3, target: Vec3) -> RigidTransform {
    let f = (target - eye).normalize();
    let mut right = f.cross(&Vec3::z());
    if right.norm() < 1e-9 {
        right = Vec3::x();
    }
    let right = right.normalize();
    let down = f.cross(&right);
    let r = Rotation::from_axes(right, down, f).expect("orthonormal by construction");
    RigidTransform::new(r, eye)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionSpec {
    pub duration_s: f64,
    pub fps: f64,
    /// Frame indices at which every sensor also writes a depth image.
    #[serde(default = "default_depth_frames")]
    pub depth_frames: Vec<usize>,
}

fn default_depth_frames() -> Vec<usize> {
    vec![0]
}

impl Default for SessionSpec {
    fn default() -> Self {
        SessionSpec { duration_s: 1.0, fps: 30.0, depth_frames: default_depth_frames() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scene {
    #[serde(default = "default_true")]
    pub floor: bool,
    #[serde(default)]
    pub boxes: Vec<BoxProp>,
    #[serde(default)]
    pub bodies: Vec<BodyModel>,
    pub sensors: Vec<SensorSpec>,
    #[serde(default)]
    pub noise: NoiseModel,
    #[serde(default)]
    pub session: SessionSpec,
}

fn default_true() -> bool {
    true
}

impl Scene {
    pub fn validate(&self) -> Result<(), SimError> {
        self.noise.validate()?;
        if self.sensors.is_empty() {
            return Err(SimError::InvalidScene("at least one sensor is required".into()));
        }
        for (i, s) in self.sensors.iter().enumerate() {
            s.intrinsics.validate().map_err(|e| SimError::InvalidScene(format!("sensor {:?}: {e}", s.sensor_id)))?;
            if self.sensors[..i].iter().any(|o| o.sensor_id == s.sensor_id) {
                return Err(SimError::InvalidScene(format!("duplicate sensor id {:?}", s.sensor_id)));
            }
            if !(s.max_range > 0.0) {
                return Err(SimError::InvalidScene(format!("sensor {:?}: max_range must be positive", s.sensor_id)));
            }
        }
        if let Some(b) = self.boxes.iter().find(|b| !b.is_valid()) {
            return Err(SimError::InvalidScene(format!("box min {:?} is not below max {:?}", b.min, b.max)));
        }
        for (i, b) in self.bodies.iter().enumerate() {
            let feet_ok = self.body_times().iter().all(|&t| {
                body_joints(b, t, 0).joints().iter().all(|j| j.position.z >= 0.0)
            });
            if !feet_ok {
                return Err(SimError::InvalidScene(format!("body {i} goes below the floor")));
            }
        }
        if !(self.session.fps > 0.0) || !(self.session.duration_s >= 0.0) {
            return Err(SimError::InvalidScene("session fps must be positive and duration non-negative".into()));
        }
        Ok(())
    }

    fn body_times(&self) -> Vec<i64> {
        let mut t: Vec<i64> = self.bodies.iter().flat_map(|b| b.trajectory.iter().map(|w| w.t_us)).collect();
        t.push(0);
        t
    }

    pub fn sensor_index(&self, sensor_id: &str) -> Result<usize, SimError> {
        self.sensors
            .iter()
            .position(|s| s.sensor_id == sensor_id)
            .ok_or_else(|| SimError::UnknownSensor(sensor_id.into()))
    }

    /// Number of frames each sensor produces.
    pub fn frame_count(&self) -> usize {
        (self.session.duration_s * self.session.fps).round() as usize
    }

    /// Timestamp of frame `k` for the sensor at `sensor_index`.
    pub fn frame_time(&self, sensor_index: usize, k: usize) -> i64 {
        (k as f64 * 1e6 / self.session.fps).round() as i64 + self.sensors[sensor_index].phase_offset_us
    }

    /// Ground-truth world skeletons at `t_us`, body ids `0..n`.
    pub fn world_skeletons(&self, t_us: i64) -> Vec<Skeleton> {
        self.bodies.iter().enumerate().map(|(i, b)| body_joints(b, t_us, i as u32)).collect()
    }

    /// Body id reported by sensor `sensor_index` for body `body_index`.
    /// Ids are stable for the whole session and differ between sensors.
    pub fn body_id(&self, sensor_index: usize, body_index: usize) -> u32 {
        let n = self.bodies.len();
        let mut order: Vec<usize> = (0..n).collect();
        let mut rng = rng_for(self.noise.seed, &[STREAM_IDS, sensor_index as u64]);
        for i in (1..n).rev() {
            let j = rng.random_range(0..=i);
            order.swap(i, j);
        }
        let slot = order.iter().position(|&b| b == body_index).expect("index in range");
        ((sensor_index + 1) * 100 + slot) as u32
    }
}

const STREAM_IDS: u64 = 1;
const STREAM_DEPTH: u64 = 2;
const STREAM_JOINT: u64 = 3;

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Independent RNG stream for a key path, so results never depend on the
/// order in which frames or sensors are generated.
fn rng_for(seed: u64, keys: &[u64]) -> ChaCha8Rng {
    let mut h = splitmix(seed);
    for &k in keys {
        h = splitmix(h ^ k);
    }
    ChaCha8Rng::seed_from_u64(h)
}

fn gaussian(rng: &mut ChaCha8Rng, sigma: f64) -> f64 {
    if sigma == 0.0 {
        return 0.0;
    }
    let z: f64 = StandardNormal.sample(rng);
    z * sigma
}

/// Nearest surface along a world ray, as a ray parameter.
pub fn cast_ray(scene: &Scene, capsules: &[Capsule], origin: &Vec3, dir: &Vec3) -> Option<f64> {
    let mut best = if scene.floor { raycast::ray_floor(origin, dir) } else { None };
    let mut consider = |s: Option<f64>| {
        if let Some(s) = s {
            if best.is_none_or(|b| s < b) {
                best = Some(s);
            }
        }
    };
    for b in &scene.boxes {
        consider(raycast::ray_box(origin, dir, b));
    }
    for c in capsules {
        consider(raycast::ray_capsule(origin, dir, c));
    }
    best
}

/// Every body's capsules at `t_us`, tagged with the body index.
fn scene_capsules(scene: &Scene, t_us: i64) -> Vec<(usize, Capsule)> {
    scene
        .world_skeletons(t_us)
        .iter()
        .enumerate()
        .flat_map(|(i, s)| body_capsules(s).into_iter().map(move |c| (i, c)))
        .collect()
}

/// Noise-free depth in metres for every pixel, 0 where nothing is hit or
/// the hit is beyond the sensor's range.
pub fn render_depth_exact(scene: &Scene, sensor_id: &str, t_us: i64) -> Result<Vec<f64>, SimError> {
    let s = &scene.sensors[scene.sensor_index(sensor_id)?];
    let capsules: Vec<Capsule> = scene_capsules(scene, t_us).into_iter().map(|(_, c)| c).collect();
    let k = &s.intrinsics;
    let origin = s.pose.translation;
    let mut out = Vec::with_capacity(k.pixel_count());
    for v in 0..k.height {
        for u in 0..k.width {
            // the ray has unit z in the sensor frame, so the ray parameter is the depth
            let dir = s.pose.apply_vector(&k.ray(u as f64, v as f64));
            let z = cast_ray(scene, &capsules, &origin, &dir).filter(|z| *z <= s.max_range).unwrap_or(0.0);
            out.push(z);
        }
    }
    Ok(out)
}

/// Depth image as the sensor at `sensor_id` would record it at `t_us`,
/// with Gaussian depth noise from the scene's noise model.
pub fn render_depth(scene: &Scene, sensor_id: &str, t_us: i64) -> Result<DepthImage, SimError> {
    let idx = scene.sensor_index(sensor_id)?;
    let exact = render_depth_exact(scene, sensor_id, t_us)?;
    let mut rng = rng_for(scene.noise.seed, &[STREAM_DEPTH, idx as u64, t_us as u64]);
    let sigma = scene.noise.depth_sigma_mm;
    let normal = Normal::new(0.0, sigma.max(f64::MIN_POSITIVE)).expect("valid sigma");
    let data = exact
        .into_iter()
        .map(|z| {
            if z == 0.0 {
                return 0;
            }
            let noise = if sigma > 0.0 { normal.sample(&mut rng) } else { 0.0 };
            (z * 1000.0 + noise).round().clamp(1.0, 65535.0) as u16
        })
        .collect();
    let k = scene.sensors[idx].intrinsics;
    Ok(DepthImage::new(k, data).expect("size matches intrinsics"))
}

/// Visibility of one joint from a sensor, decided from geometry alone.
pub fn joint_confidence(
    scene: &Scene,
    sensor: &SensorSpec,
    capsules: &[(usize, Capsule)],
    body_index: usize,
    world: &Vec3,
) -> Confidence {
    let local = sensor.pose.inverse().apply(world);
    if local.z <= 0.0 || local.z > sensor.max_range || project(&local, &sensor.intrinsics).is_none() {
        return Confidence::None;
    }
    let eye = sensor.pose.translation;
    let blocked = scene.boxes.iter().any(|b| raycast::segment_hits_box(&eye, world, b))
        || capsules
            .iter()
            .any(|(owner, c)| *owner != body_index && raycast::segment_hits_capsule(&eye, world, c));
    if blocked {
        Confidence::Low
    } else {
        Confidence::High
    }
}

/// Skeleton frame reported by one sensor at `t_us`, in that sensor's frame.
pub fn observe_skeletons(scene: &Scene, sensor_id: &str, t_us: i64, n: &NoiseModel) -> Result<SkeletonFrame, SimError> {
    let idx = scene.sensor_index(sensor_id)?;
    let sensor = &scene.sensors[idx];
    let capsules = scene_capsules(scene, t_us);
    let to_sensor = sensor.pose.inverse();
    let mut out = Vec::new();
    for (bi, truth) in scene.world_skeletons(t_us).iter().enumerate() {
        let conf: Vec<Confidence> = truth
            .joints()
            .iter()
            .map(|j| joint_confidence(scene, sensor, &capsules, bi, &j.position))
            .collect();
        let pelvis_pos = truth.joints().iter().position(|j| j.id == truth.pelvis().id).expect("pelvis");
        let visible = conf.iter().filter(|c| **c == Confidence::High).count();
        if conf[pelvis_pos] == Confidence::None || visible < n.min_visible_joints {
            continue;
        }
        let local = transform_skeleton(&to_sensor, truth);
        let joints = local
            .joints()
            .iter()
            .zip(&conf)
            .enumerate()
            .map(|(ji, (j, &c))| {
                let mut rng = rng_for(n.seed, &[STREAM_JOINT, idx as u64, t_us as u64, bi as u64, ji as u64]);
                let sigma = if c == Confidence::Low { n.joint_sigma * n.low_noise_factor } else { n.joint_sigma };
                let dp = Vec3::new(gaussian(&mut rng, sigma), gaussian(&mut rng, sigma), gaussian(&mut rng, sigma));
                let rv = Vec3::new(
                    gaussian(&mut rng, n.axis_sigma),
                    gaussian(&mut rng, n.axis_sigma),
                    gaussian(&mut rng, n.axis_sigma),
                );
                let axes = if rv == Vec3::zeros() { j.axes } else { j.axes.rotated(&Rotation::from_rotation_vector(rv)) };
                Joint::new(j.id, j.position + dp, axes, c)
            })
            .collect();
        let skel = Skeleton::new(scene.body_id(idx, bi), joints).expect("same joints as ground truth");
        out.push(skel);
    }
    out.sort_by_key(|s| s.body_id);
    Ok(SkeletonFrame::new(sensor_id, t_us, out).expect("body ids are distinct"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sensor::backproject;
    use crate::skeleton::JointId;

    fn one_sensor(eye: Vec3, target: Vec3) -> Scene {
        Scene {
            floor: true,
            boxes: vec![],
            bodies: vec![],
            sensors: vec![SensorSpec::looking_at("a", eye, target)],
            noise: NoiseModel::noiseless(1),
            session: SessionSpec::default(),
        }
    }

    #[test]
    fn look_at_axes() {
        let t = look_at(Vec3::zeros(), Vec3::new(1.0, 0.0, 0.0));
        assert!((t.rotation.column(2) - Vec3::x()).norm() < 1e-12);
        assert!((t.rotation.column(1) + Vec3::z()).norm() < 1e-12);
        assert!((t.rotation.column(0) + Vec3::y()).norm() < 1e-12);
    }

    #[test]
    fn looking_up_sees_nothing() {
        let s = one_sensor(Vec3::new(0.0, 0.0, 1.0), Vec3::new(0.0, 0.1, 5.0));
        let img = render_depth(&s, "a", 0).unwrap();
        assert_eq!(img.valid_count(), 0);
    }

    #[test]
    fn wall_box_at_two_metres() {
        let mut s = one_sensor(Vec3::new(0.0, 0.0, 1.5), Vec3::new(1.0, 0.0, 1.5));
        s.floor = false;
        s.boxes.push(BoxProp::new(Vec3::new(2.0, -5.0, -5.0), Vec3::new(2.5, 5.0, 5.0)));
        s.noise.depth_sigma_mm = 3.0;
        let img = render_depth(&s, "a", 0).unwrap();
        assert!((img.get(160, 144) as f64 - 2000.0).abs() < 15.0);
        let exact = render_depth_exact(&s, "a", 0).unwrap();
        assert!((exact[144 * 320 + 160] - 2.0).abs() < 1e-9);
    }

    #[test]
    fn floor_points_lie_on_floor() {
        let mut s = one_sensor(Vec3::new(0.0, 0.0, 1.5), Vec3::new(2.0, 0.0, 0.0));
        s.noise.depth_sigma_mm = 2.0;
        let img = render_depth(&s, "a", 0).unwrap();
        let cloud = backproject(&img).transformed(&s.sensors[0].pose);
        assert!(cloud.len() > 1000);
        for p in cloud.points() {
            // the residual along the ray scales with the depth error over the grazing angle
            assert!(p.z.abs() < 0.06, "{p:?}");
        }
    }

    #[test]
    fn unoccluded_noiseless_body_is_exact() {
        let mut s = one_sensor(Vec3::new(-3.0, 0.0, 1.2), Vec3::new(0.0, 0.0, 1.0));
        s.bodies.push(BodyModel::standing(0.0, 0.0, 180.0));
        let f = observe_skeletons(&s, "a", 0, &s.noise).unwrap();
        assert_eq!(f.skeletons().len(), 1);
        let truth = &s.world_skeletons(0)[0];
        let back = transform_skeleton(&s.sensors[0].pose, &f.skeletons()[0]);
        for (a, b) in back.joints().iter().zip(truth.joints()) {
            assert_eq!(a.confidence, Confidence::High);
            assert!((a.position - b.position).norm() < 1e-9);
        }
    }

    #[test]
    fn body_behind_box_is_occluded() {
        let mut s = one_sensor(Vec3::new(-3.0, 0.0, 1.2), Vec3::new(0.0, 0.0, 1.0));
        s.bodies.push(BodyModel::standing(0.0, 0.0, 180.0));
        s.boxes.push(BoxProp::new(Vec3::new(-1.5, -0.5, 0.0), Vec3::new(-1.2, 0.5, 1.2)));
        let f = observe_skeletons(&s, "a", 0, &s.noise).unwrap();
        let sk = &f.skeletons()[0];
        assert_eq!(sk.pelvis().confidence, Confidence::Low);
        assert_eq!(sk.joint(JointId::FootL).unwrap().confidence, Confidence::Low);
        assert_eq!(sk.joint(JointId::Head).unwrap().confidence, Confidence::High);
    }

    #[test]
    fn body_outside_frustum_is_absent() {
        let mut s = one_sensor(Vec3::new(-3.0, 0.0, 1.2), Vec3::new(0.0, 0.0, 1.0));
        s.bodies.push(BodyModel::standing(-5.0, 0.0, 0.0));
        assert!(observe_skeletons(&s, "a", 0, &s.noise).unwrap().skeletons().is_empty());
    }

    #[test]
    fn body_ids_are_stable_and_distinct() {
        let mut s = one_sensor(Vec3::new(-3.0, 0.0, 1.2), Vec3::new(0.0, 0.0, 1.0));
        s.sensors.push(SensorSpec::looking_at("b", Vec3::new(3.0, 0.0, 1.2), Vec3::zeros()));
        s.bodies = (0..4).map(|i| BodyModel::standing(0.0, i as f64, 0.0)).collect();
        for si in 0..2 {
            let ids: std::collections::BTreeSet<u32> = (0..4).map(|b| s.body_id(si, b)).collect();
            assert_eq!(ids.len(), 4);
        }
        assert_eq!(s.body_id(1, 2), s.body_id(1, 2));
    }
}
