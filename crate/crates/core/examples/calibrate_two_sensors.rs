//! Full extrinsic calibration of a simulated two-sensor session: skeleton
//! estimate, then chained ICP on the person-centred depth clouds.

use skelfuse::formats::read_json;
use skelfuse::pipeline::{calibrate_session, PipelineConfig, Session};
use skelfuse::simulator::{generate_session, presets, GroundTruth};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let seed: u64 = std::env::args().nth(1).map(|s| s.parse()).transpose()?.unwrap_or(21);
    let dir = tempfile::tempdir()?;
    generate_session(&presets::calibration_scene(seed), dir.path())?;

    let session = Session::load(dir.path())?;
    let result = calibrate_session(&session, &PipelineConfig::default())?;
    let gt: GroundTruth = read_json(&dir.path().join(GroundTruth::FILE))?;

    for s in &result.sensors {
        let truth = gt.extrinsic(&s.sensor_id).expect("ground truth covers every sensor");
        let (da, dt) = s.extrinsic.error_to(truth);
        print!("{}: refined {:.3} deg / {:.4} m from truth", s.sensor_id, da.to_degrees(), dt);
        if let Some(d) = result.diagnostics.get(&s.sensor_id) {
            let (ia, it) = d.initial.error_to(truth);
            print!(" (skeleton-only {:.2} deg / {:.3} m, {} joints)", ia.to_degrees(), it, d.joints_used);
        }
        println!();
    }
    println!("{}", serde_json::to_string_pretty(&result)?);
    Ok(())
}
