mod common;

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use common::transform_error;
use skelfuse::calibration::CalibrationResult;
use skelfuse::formats::{encode_pgm, read_json, write_json, DepthMeta};
use skelfuse::geometry::{RigidTransform, Vec3};
use skelfuse::merging::read_fused;
use skelfuse::sensor::Intrinsics;
use skelfuse::simulator::{presets, GroundTruth, Scene, SessionManifest};

fn skelfuse(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_skelfuse")).args(args).output().unwrap()
}

fn ok(args: &[&str]) -> String {
    let out = skelfuse(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn fails(args: &[&str]) -> String {
    let out = skelfuse(args);
    assert!(!out.status.success(), "{args:?} unexpectedly succeeded");
    assert!(out.stdout.is_empty(), "failed command wrote to stdout");
    String::from_utf8(out.stderr).unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn simulated(dir: &Path, scene: &Scene) -> std::path::PathBuf {
    let scene_file = dir.join("scene.json");
    write_json(&scene_file, scene).unwrap();
    let session = dir.join("session");
    ok(&["simulate", p(&scene_file), "-o", p(&session)]);
    session
}

fn one_sensor_scene() -> Scene {
    let mut s = presets::calibration_scene(2);
    s.sensors.truncate(1);
    s.session.duration_s = 0.5;
    s
}

#[test]
fn simulate_one_sensor_writes_one_stream() {
    let dir = tempfile::tempdir().unwrap();
    let session = simulated(dir.path(), &one_sensor_scene());
    let m: SessionManifest = read_json(&session.join(SessionManifest::FILE)).unwrap();
    assert_eq!(m.sensors.len(), 1);
    let jsonl: Vec<_> = fs::read_dir(&session)
        .unwrap()
        .filter_map(|e| e.ok())
        .filter(|e| e.path().extension().is_some_and(|x| x == "jsonl"))
        .collect();
    assert_eq!(jsonl.len(), 1);
    let lines = fs::read_to_string(jsonl[0].path()).unwrap().lines().count();
    assert_eq!(lines, 15);
}

#[test]
fn simulate_two_sensors_inventory_and_summary() {
    let dir = tempfile::tempdir().unwrap();
    let scene_file = dir.path().join("scene.json");
    write_json(&scene_file, &presets::calibration_scene(3)).unwrap();
    let session = dir.path().join("s");
    let out = ok(&["simulate", p(&scene_file), "-o", p(&session), "--seed", "99"]);
    assert!(out.contains("2 sensors") && out.contains("60 frames") && out.contains("seed 99"), "{out}");
    for f in [
        "session.json",
        "ground_truth.json",
        "kinect_a.jsonl",
        "kinect_b.jsonl",
        "depth/kinect_a_00000.pgm",
        "depth/kinect_a_00000.json",
        "depth/kinect_b_00000.pgm",
        "depth/kinect_b_00000.json",
    ] {
        assert!(session.join(f).is_file(), "missing {f}");
    }
    let gt: GroundTruth = read_json(&session.join("ground_truth.json")).unwrap();
    assert_eq!(gt.seed, 99);
}

#[test]
fn missing_scene_names_the_path() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nope.json");
    let err = fails(&["simulate", p(&missing), "-o", p(&dir.path().join("out"))]);
    assert!(err.contains("nope.json"), "{err}");
}

#[test]
fn malformed_scene_reports_line() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    fs::write(&bad, "{\n  \"floor\": true,\n  \"boxes\": [oops]\n}\n").unwrap();
    let err = fails(&["simulate", p(&bad), "-o", p(&dir.path().join("out"))]);
    assert!(err.contains("bad.json") && err.contains("line 3"), "{err}");
}

fn depth_files(dir: &Path, k: &Intrinsics, data: &[u16]) -> std::path::PathBuf {
    let pgm = dir.join("d.pgm");
    fs::write(&pgm, encode_pgm(k.width, k.height, data)).unwrap();
    write_json(&dir.join("d.json"), &DepthMeta::new(k, "cam", 0)).unwrap();
    pgm
}

fn ply_vertices(path: &Path) -> Vec<Vec3> {
    let text = fs::read_to_string(path).unwrap();
    let (header, body) = text.split_once("end_header\n").unwrap();
    let n: usize = header
        .lines()
        .find_map(|l| l.strip_prefix("element vertex "))
        .unwrap()
        .parse()
        .unwrap();
    let pts: Vec<Vec3> = body
        .lines()
        .map(|l| {
            let v: Vec<f64> = l.split_whitespace().map(|x| x.parse().unwrap()).collect();
            Vec3::new(v[0], v[1], v[2])
        })
        .collect();
    assert_eq!(pts.len(), n);
    pts
}

#[test]
fn cloud_of_zero_depth_is_empty() {
    let dir = tempfile::tempdir().unwrap();
    let k = Intrinsics::new(8, 6, 5.0, 5.0, 4.0, 3.0).unwrap();
    let pgm = depth_files(dir.path(), &k, &[0; 48]);
    let ply = dir.path().join("c.ply");
    let out = ok(&["cloud", p(&pgm), "-o", p(&ply)]);
    assert!(out.starts_with("0 points"), "{out}");
    assert!(ply_vertices(&ply).is_empty());
}

#[test]
fn cloud_of_single_pixel() {
    let dir = tempfile::tempdir().unwrap();
    let k = Intrinsics::new(8, 6, 5.0, 4.0, 4.0, 3.0).unwrap();
    let mut data = vec![0u16; 48];
    let (u, v, d) = (6u32, 1u32, 1500u16);
    data[(v * 8 + u) as usize] = d;
    let pgm = depth_files(dir.path(), &k, &data);
    let ply = dir.path().join("c.ply");
    ok(&["cloud", p(&pgm), "--meta", p(&dir.path().join("d.json")), "-o", p(&ply)]);
    let pts = ply_vertices(&ply);
    assert_eq!(pts.len(), 1);
    // x = (u - cx) z / fx, y = (v - cy) z / fy
    let want = Vec3::new((6.0 - 4.0) * 1.5 / 5.0, (1.0 - 3.0) * 1.5 / 4.0, 1.5);
    assert!((pts[0] - want).amax() < 1e-6, "{:?}", pts[0]);
}

#[test]
fn cloud_rejects_other_maxval() {
    let dir = tempfile::tempdir().unwrap();
    let k = Intrinsics::new(8, 6, 5.0, 5.0, 4.0, 3.0).unwrap();
    let pgm = dir.path().join("d.pgm");
    let mut bytes = b"P5\n8 6\n255\n".to_vec();
    bytes.extend(std::iter::repeat_n(0u8, 48));
    fs::write(&pgm, bytes).unwrap();
    write_json(&dir.path().join("d.json"), &DepthMeta::new(&k, "cam", 0)).unwrap();
    let err = fails(&["cloud", p(&pgm), "-o", p(&dir.path().join("c.ply"))]);
    assert!(err.contains("maxval") && err.contains("d.pgm"), "{err}");
}

/// Replaces sensor B of a simulated session by a copy of sensor A.
fn duplicate_reference(session: &Path) {
    let mut m: SessionManifest = read_json(&session.join(SessionManifest::FILE)).unwrap();
    let a = m.sensors[0].clone();
    let text = fs::read_to_string(session.join(&a.stream)).unwrap();
    let b_id = m.sensors[1].sensor_id.clone();
    fs::write(session.join("copy.jsonl"), text.replace(&format!("\"{}\"", a.sensor_id), &format!("\"{b_id}\""))).unwrap();
    m.sensors[1].stream = "copy.jsonl".into();
    m.sensors[1].depth = a.depth.clone();
    write_json(&session.join(SessionManifest::FILE), &m).unwrap();
}

#[test]
fn duplicated_stream_calibrates_to_identity() {
    let dir = tempfile::tempdir().unwrap();
    let session = simulated(dir.path(), &presets::calibration_scene(5));
    duplicate_reference(&session);
    let calib = dir.path().join("c.json");
    ok(&["calibrate", p(&session), "-o", p(&calib)]);
    let r: CalibrationResult = read_json(&calib).unwrap();
    assert_eq!(r.extrinsic("kinect_a"), Some(&RigidTransform::identity()));
    let (da, dt) = transform_error(r.extrinsic("kinect_b").unwrap(), &RigidTransform::identity());
    assert!(da < 1e-9 && dt < 1e-9, "{da} {dt}");
}

#[test]
fn calibrated_session_is_close_to_truth() {
    let dir = tempfile::tempdir().unwrap();
    let session = simulated(dir.path(), &presets::calibration_scene(8));
    let calib = dir.path().join("c.json");
    let out = ok(&["calibrate", p(&session), "-o", p(&calib)]);
    assert!(out.contains("kinect_b") && out.contains("run 2"), "{out}");
    let r: CalibrationResult = read_json(&calib).unwrap();
    let gt: GroundTruth = read_json(&session.join("ground_truth.json")).unwrap();
    let (da, dt) = transform_error(r.extrinsic("kinect_b").unwrap(), gt.extrinsic("kinect_b").unwrap());
    assert!(da.to_degrees() < 2.0 && dt < 0.05, "{} deg {dt} m", da.to_degrees());
}

#[test]
fn calibrate_without_depth_names_the_stage() {
    let dir = tempfile::tempdir().unwrap();
    let mut scene = presets::calibration_scene(1);
    scene.session.depth_frames.clear();
    let session = simulated(dir.path(), &scene);
    let err = fails(&["calibrate", p(&session), "-o", p(&dir.path().join("c.json"))]);
    assert!(err.contains("depth") && err.contains("kinect_a"), "{err}");
}

#[test]
fn fuse_rejects_unknown_sensor() {
    let dir = tempfile::tempdir().unwrap();
    let session = simulated(dir.path(), &presets::calibration_scene(1));
    let calib = dir.path().join("c.json");
    let only_a = CalibrationResult {
        reference_sensor_id: "kinect_a".into(),
        sensors: vec![skelfuse::calibration::SensorExtrinsic {
            sensor_id: "kinect_a".into(),
            extrinsic: RigidTransform::identity(),
        }],
        diagnostics: Default::default(),
    };
    write_json(&calib, &only_a).unwrap();
    let err = fails(&["fuse", p(&session), "--calibration", p(&calib), "-o", p(&dir.path().join("f.jsonl"))]);
    assert!(err.contains("kinect_b"), "{err}");
}

#[test]
fn single_sensor_fusion_is_passthrough() {
    let dir = tempfile::tempdir().unwrap();
    let session = simulated(dir.path(), &one_sensor_scene());
    let calib = dir.path().join("c.json");
    let identity = CalibrationResult {
        reference_sensor_id: "kinect_a".into(),
        sensors: vec![skelfuse::calibration::SensorExtrinsic {
            sensor_id: "kinect_a".into(),
            extrinsic: RigidTransform::identity(),
        }],
        diagnostics: Default::default(),
    };
    write_json(&calib, &identity).unwrap();
    let fused = dir.path().join("f.jsonl");
    ok(&["fuse", p(&session), "--calibration", p(&calib), "-o", p(&fused)]);
    let frames = read_fused(&fused).unwrap();
    let stream = skelfuse::skeleton::read_stream(&session.join("kinect_a.jsonl")).unwrap();
    assert_eq!(frames.len(), stream.len());
    for (f, s) in frames.iter().zip(&stream) {
        assert_eq!(f.timestamp_us, s.timestamp_us);
        assert!(f.persons.iter().all(|p| !p.provenance.is_merged()));
        let mut got = f.skeletons();
        got.sort_by_key(|s| s.body_id);
        assert_eq!(got, s.skeletons());
    }
}

#[test]
fn fuse_and_eval_end_to_end() {
    let dir = tempfile::tempdir().unwrap();
    let session = simulated(dir.path(), &presets::crowd_scene(4, 4));
    let gt_path = session.join("ground_truth.json");
    let gt: GroundTruth = read_json(&gt_path).unwrap();
    // the crowd scene has no depth capture, so place the sensors from ground truth
    let calib = dir.path().join("c.json");
    let truth = CalibrationResult {
        reference_sensor_id: gt.reference_sensor.clone(),
        sensors: gt
            .sensors
            .iter()
            .map(|s| skelfuse::calibration::SensorExtrinsic { sensor_id: s.sensor_id.clone(), extrinsic: s.extrinsic })
            .collect(),
        diagnostics: Default::default(),
    };
    write_json(&calib, &truth).unwrap();
    let fused = dir.path().join("f.jsonl");
    ok(&["fuse", p(&session), "--calibration", p(&calib), "-o", p(&fused)]);
    let first = fs::read(&fused).unwrap();
    ok(&["fuse", p(&session), "--calibration", p(&calib), "-o", p(&fused)]);
    assert_eq!(first, fs::read(&fused).unwrap());

    for f in read_fused(&fused).unwrap() {
        assert_eq!(f.persons.len(), 4, "tick {}", f.timestamp_us);
    }
    let report: serde_json::Value = serde_json::from_str(&ok(&[
        "eval",
        p(&fused),
        p(&gt_path),
        "--session",
        p(&session),
        "--calibration",
        p(&calib),
    ]))
    .unwrap();
    assert_eq!(report["fused"]["matching_accuracy"], 1.0);
    assert_eq!(report["fused"]["coverage"], 1.0);
    let fused_rms = report["fused"]["rms_joint_error_jointly_visible"].as_f64().unwrap();
    for s in ["kinect_a", "kinect_b"] {
        let single = report["single_sensor"][s]["rms_joint_error_jointly_visible"].as_f64().unwrap();
        assert!(fused_rms < single, "{fused_rms} vs {s} {single}");
    }
}

#[test]
fn eval_rejects_misaligned_timestamps() {
    let dir = tempfile::tempdir().unwrap();
    let session = simulated(dir.path(), &one_sensor_scene());
    let calib = dir.path().join("c.json");
    write_json(
        &calib,
        &CalibrationResult {
            reference_sensor_id: "kinect_a".into(),
            sensors: vec![skelfuse::calibration::SensorExtrinsic {
                sensor_id: "kinect_a".into(),
                extrinsic: RigidTransform::identity(),
            }],
            diagnostics: Default::default(),
        },
    )
    .unwrap();
    let fused = dir.path().join("f.jsonl");
    ok(&["fuse", p(&session), "--calibration", p(&calib), "-o", p(&fused), "--tick-hz", "7"]);
    let err = fails(&["eval", p(&fused), p(&session.join("ground_truth.json"))]);
    assert!(err.contains("ground-truth frame"), "{err}");
}

#[test]
fn config_file_is_validated() {
    let dir = tempfile::tempdir().unwrap();
    let session = simulated(dir.path(), &one_sensor_scene());
    let cfg = dir.path().join("cfg.json");
    fs::write(&cfg, r#"{"matching": {"d_easy": 0.9, "d_max": 0.5}}"#).unwrap();
    let err = fails(&["--config", p(&cfg), "calibrate", p(&session), "-o", p(&dir.path().join("c.json"))]);
    assert!(err.contains("d_easy"), "{err}");
    fs::write(&cfg, r#"{"tick_rate": 10}"#).unwrap();
    let err = fails(&["--config", p(&cfg), "calibrate", p(&session), "-o", p(&dir.path().join("c.json"))]);
    assert!(err.contains("tick_rate"), "{err}");
}
