//! A person hides behind a cabinet from one sensor and later walks out of
//! the other's view. Fusing both sensors keeps them tracked throughout.

use std::collections::BTreeMap;

use skelfuse::eval::{evaluate, DEFAULT_TIME_TOLERANCE_US};
use skelfuse::formats::read_json;
use skelfuse::pipeline::{calibrate_session, fuse_session, fuse_streams, placed_streams, PipelineConfig, Session};
use skelfuse::simulator::{generate_session, presets, GroundTruth};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let seed: u64 = std::env::args().nth(1).map(|s| s.parse()).transpose()?.unwrap_or(0);
    let dir = tempfile::tempdir()?;
    generate_session(&presets::occlusion_scene(seed), dir.path())?;
    let gt: GroundTruth = read_json(&dir.path().join(GroundTruth::FILE))?;

    let cfg = PipelineConfig::default();
    let session = Session::load(dir.path())?;
    let calibration = calibrate_session(&session, &cfg)?;
    let fused = fuse_session(&session, &calibration, &cfg)?;

    let ticks: Vec<i64> = fused.iter().map(|f| f.timestamp_us).collect();
    let mut singles = BTreeMap::new();
    for placed in placed_streams(&session, &calibration)? {
        singles.insert(placed.stream.sensor_id().to_string(), fuse_streams(&[placed], &ticks, &cfg));
    }
    let report = evaluate(&fused, &gt, &singles, DEFAULT_TIME_TOLERANCE_US)?;

    let mm = |v: Option<f64>| v.map_or("-".to_string(), |x| format!("{:.1} mm", x * 1e3));
    println!("{:>10}  {:>8}  {:>10}  {:>16}", "stream", "coverage", "rms", "rms (both see)");
    let rows = std::iter::once(("fused", &report.fused)).chain(report.single_sensor.iter().map(|(k, v)| (k.as_str(), v)));
    for (name, m) in rows {
        println!(
            "{name:>10}  {:>8.3}  {:>10}  {:>16}",
            m.coverage,
            mm(m.rms_joint_error),
            mm(m.rms_joint_error_jointly_visible)
        );
    }
    Ok(())
}
