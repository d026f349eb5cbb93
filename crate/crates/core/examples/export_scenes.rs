//! Writes the built-in scenes as JSON files that `skelfuse simulate` accepts.
//!
//! Usage: cargo run --example export_scenes -- <out_dir> [seed]

use std::path::PathBuf;

use skelfuse::formats::write_json;
use skelfuse::simulator::presets;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let dir = PathBuf::from(args.next().unwrap_or_else(|| "scenes".into()));
    let seed: u64 = args.next().map(|s| s.parse()).transpose()?.unwrap_or(7);
    let scenes = [
        ("calibration.json", presets::calibration_scene(seed)),
        ("crowd.json", presets::crowd_scene(seed, 4)),
        ("occlusion.json", presets::occlusion_scene(seed)),
    ];
    for (name, scene) in scenes {
        let path = dir.join(name);
        write_json(&path, &scene)?;
        println!("{}: {} sensors, {} bodies, {} boxes", path.display(), scene.sensors.len(), scene.bodies.len(), scene.boxes.len());
    }
    Ok(())
}
