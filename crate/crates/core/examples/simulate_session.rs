//! Generates a synthetic two-sensor session: skeleton streams, a depth
//! capture per sensor and the ground truth.
//!
//! Usage: cargo run --example simulate_session -- [out_dir] [seed]

use std::path::PathBuf;

use skelfuse::simulator::{generate_session, presets};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let out = PathBuf::from(args.next().unwrap_or_else(|| "session".into()));
    let seed: u64 = args.next().map(|s| s.parse()).transpose()?.unwrap_or(1);

    let scene = presets::calibration_scene(seed);
    let summary = generate_session(&scene, &out)?;
    println!(
        "{}: {} sensors x {} frames, {} depth images, {} person(s)",
        out.display(),
        summary.sensors,
        summary.frames_per_sensor,
        summary.depth_images,
        summary.persons
    );
    for s in &scene.sensors {
        println!("  {} phase offset {} us", s.sensor_id, s.phase_offset_us);
    }
    Ok(())
}
