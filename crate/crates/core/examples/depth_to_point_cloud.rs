//! Renders one depth image of a simulated room and turns it into a partial
//! point cloud written as PLY.
//!
//! Usage: cargo run --example depth_to_point_cloud -- [out.ply]

use std::path::PathBuf;

use skelfuse::formats::write_ply;
use skelfuse::sensor::{backproject, voxel_downsample};
use skelfuse::simulator::{presets, render_depth};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let out = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "cloud.ply".into()));
    let scene = presets::calibration_scene(3);
    let sensor = &scene.sensors[0];

    let depth = render_depth(&scene, &sensor.sensor_id, 0)?;
    let k = depth.intrinsics();
    println!("{}x{} depth image, {} valid pixels", k.width, k.height, depth.valid_count());

    let cloud = backproject(&depth);
    let (lo, hi) = cloud.points().iter().fold((f64::INFINITY, 0.0f64), |(lo, hi), p| (lo.min(p.z), hi.max(p.z)));
    println!("{} points, depth range {lo:.3} to {hi:.3} m", cloud.len());
    println!("{} points after 2 cm voxel grid", voxel_downsample(&cloud, 0.02).len());

    write_ply(&out, &cloud)?;
    println!("wrote {}", out.display());
    Ok(())
}
