//! Registers the depth clouds of two simulated sensors with ICP, starting
//! from perturbed guesses of their relative pose, with several correspondence
//! cutoffs. A cutoff of 0 disables rejection.

use skelfuse::calibration::{icp, IcpParams};
use skelfuse::geometry::{RigidTransform, Rotation, Vec3};
use skelfuse::sensor::{backproject, filter_radius};
use skelfuse::simulator::{ground_truth, presets, render_depth};
use skelfuse::skeleton::JointId;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let scene = presets::calibration_scene(11);
    let (a, b) = (&scene.sensors[0].sensor_id, &scene.sensors[1].sensor_id);
    let gt = ground_truth(&scene);
    let truth = *gt.extrinsic(b).expect("sensor in scene");

    // crop both clouds to 2 m around the person, as calibration does
    let pelvis = gt.frames[0].persons[0].joints.iter().find(|j| j.id == JointId::Pelvis).expect("pelvis");
    let pelvis = Vec3::from(pelvis.pos);
    let target = filter_radius(&backproject(&render_depth(&scene, a, 0)?), &pelvis, 2.0);
    let source = filter_radius(&backproject(&render_depth(&scene, b, 0)?), &truth.inverse().apply(&pelvis), 2.0);

    let report = |name: &str, t: &RigidTransform| {
        let (da, dt) = t.error_to(&truth);
        println!("{name:>22}: {:.3} deg, {:.4} m from truth", da.to_degrees(), dt);
    };
    for (deg, shift) in [(1.0f64, 0.04), (3.0, 0.05)] {
        let nudge = RigidTransform::new(
            Rotation::from_axis_angle(Vec3::new(0.3, 1.0, 0.2), deg.to_radians()),
            Vec3::new(shift, -0.5 * shift, 0.5 * shift),
        );
        let init = truth.compose(&nudge);
        report("start", &init);
        for cutoff in [0.08, 0.2, 0.0] {
            let params = IcpParams { max_correspondence_dist: cutoff, ..IcpParams::default() };
            let r = icp(&source, &target, &init, &params)?;
            report(&format!("cutoff {cutoff} m, {} it", r.iterations), &r.transform);
        }
    }
    Ok(())
}
