use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{observe_skeletons, render_depth, Scene, SimError};
use crate::formats::{write_atomic, write_depth, write_json};
use crate::geometry::RigidTransform;
use crate::skeleton::{encode_stream, transform_skeleton, JointId};

pub const MANIFEST_FILE: &str = "session.json";
pub const GROUND_TRUTH_FILE: &str = "ground_truth.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionDepth {
    pub frame: usize,
    pub timestamp_us: i64,
    /// Paths relative to the session directory.
    pub pgm: String,
    pub meta: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionSensor {
    pub sensor_id: String,
    pub stream: String,
    #[serde(default)]
    pub depth: Vec<SessionDepth>,
}

/// Index of a recorded session directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionManifest {
    pub reference_sensor: String,
    pub sensors: Vec<SessionSensor>,
}

impl SessionManifest {
    pub const FILE: &'static str = MANIFEST_FILE;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruthSensor {
    pub sensor_id: String,
    /// Sensor frame → simulator world.
    #[serde(with = "crate::skeleton::transform_4x4", rename = "pose_4x4_row_major")]
    pub pose: RigidTransform,
    /// Sensor frame → reference sensor frame, comparable with calibration output.
    #[serde(with = "crate::skeleton::transform_4x4", rename = "extrinsic_4x4_row_major")]
    pub extrinsic: RigidTransform,
}

/// Which body id each sensor uses for one person.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BodyCorrespondence {
    pub person: usize,
    pub body_ids: BTreeMap<String, u32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruthJoint {
    pub id: JointId,
    pub pos: [f64; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruthPerson {
    pub person: usize,
    pub joints: Vec<GroundTruthJoint>,
}

/// True joint positions in the reference sensor frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruthFrame {
    pub timestamp_us: i64,
    pub persons: Vec<GroundTruthPerson>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub seed: u64,
    pub reference_sensor: String,
    pub sensors: Vec<GroundTruthSensor>,
    pub correspondences: Vec<BodyCorrespondence>,
    pub frames: Vec<GroundTruthFrame>,
}

impl GroundTruth {
    pub const FILE: &'static str = GROUND_TRUTH_FILE;

    pub fn extrinsic(&self, sensor_id: &str) -> Option<&RigidTransform> {
        self.sensors.iter().find(|s| s.sensor_id == sensor_id).map(|s| &s.extrinsic)
    }

    /// Person index for a sensor's body id.
    pub fn person_of(&self, sensor_id: &str, body_id: u32) -> Option<usize> {
        self.correspondences
            .iter()
            .find(|c| c.body_ids.get(sensor_id) == Some(&body_id))
            .map(|c| c.person)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SessionSummary {
    pub seed: u64,
    pub sensors: usize,
    pub frames_per_sensor: usize,
    pub depth_images: usize,
    pub persons: usize,
}

/// Builds the ground truth record for `scene`. Frames follow the first
/// sensor's timestamps.
pub fn ground_truth(scene: &Scene) -> GroundTruth {
    let reference = &scene.sensors[0];
    let to_ref = reference.pose.inverse();
    let sensors = scene
        .sensors
        .iter()
        .map(|s| GroundTruthSensor { sensor_id: s.sensor_id.clone(), pose: s.pose, extrinsic: to_ref.compose(&s.pose) })
        .collect();
    let correspondences = (0..scene.bodies.len())
        .map(|b| BodyCorrespondence {
            person: b,
            body_ids: scene.sensors.iter().enumerate().map(|(si, s)| (s.sensor_id.clone(), scene.body_id(si, b))).collect(),
        })
        .collect();
    let frames = (0..scene.frame_count())
        .map(|k| {
            let t = scene.frame_time(0, k);
            let persons = scene
                .world_skeletons(t)
                .iter()
                .enumerate()
                .map(|(person, s)| GroundTruthPerson {
                    person,
                    joints: transform_skeleton(&to_ref, s)
                        .joints()
                        .iter()
                        .map(|j| GroundTruthJoint { id: j.id, pos: [j.position.x, j.position.y, j.position.z] })
                        .collect(),
                })
                .collect();
            GroundTruthFrame { timestamp_us: t, persons }
        })
        .collect();
    GroundTruth { seed: scene.noise.seed, reference_sensor: reference.sensor_id.clone(), sensors, correspondences, frames }
}

/// Writes a complete session for `scene` into `out_dir`: one skeleton
/// stream per sensor, depth images at the scene's depth frames, a manifest
/// and the ground truth. Output depends only on the scene.
pub fn generate_session(scene: &Scene, out_dir: &Path) -> Result<SessionSummary, SimError> {
    scene.validate()?;
    let frames = scene.frame_count();
    let mut manifest_sensors = Vec::new();
    let mut depth_images = 0;
    for (si, sensor) in scene.sensors.iter().enumerate() {
        let id = &sensor.sensor_id;
        let stream: Vec<_> = (0..frames)
            .map(|k| observe_skeletons(scene, id, scene.frame_time(si, k), &scene.noise))
            .collect::<Result<_, _>>()?;
        let stream_name = format!("{id}.jsonl");
        let stream_path = out_dir.join(&stream_name);
        write_atomic(&stream_path, encode_stream(&stream).as_bytes())?;

        let mut depth = Vec::new();
        for &k in scene.session.depth_frames.iter().filter(|&&k| k < frames.max(1)) {
            let t = scene.frame_time(si, k);
            let img = render_depth(scene, id, t)?;
            let pgm = format!("depth/{id}_{k:05}.pgm");
            let meta = format!("depth/{id}_{k:05}.json");
            write_depth(&out_dir.join(&pgm), &img, id, t)?;
            depth.push(SessionDepth { frame: k, timestamp_us: t, pgm, meta });
            depth_images += 1;
        }
        manifest_sensors.push(SessionSensor { sensor_id: id.clone(), stream: stream_name, depth });
    }
    let manifest = SessionManifest { reference_sensor: scene.sensors[0].sensor_id.clone(), sensors: manifest_sensors };
    write_json(&out_dir.join(MANIFEST_FILE), &manifest)?;
    write_json(&out_dir.join(GROUND_TRUTH_FILE), &ground_truth(scene))?;
    Ok(SessionSummary {
        seed: scene.noise.seed,
        sensors: scene.sensors.len(),
        frames_per_sensor: frames,
        depth_images,
        persons: scene.bodies.len(),
    })
}
