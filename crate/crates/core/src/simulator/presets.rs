//! Ready-made scenes used by the examples, the CLI tests and the
//! acceptance suite.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{BodyModel, BoxProp, NoiseModel, Scene, SensorSpec, SessionSpec, Waypoint};
use crate::geometry::Vec3;
use crate::simulator::body::STANDING_PELVIS_HEIGHT;

fn sensor_on_arc(id: &str, center: Vec3, radius: f64, azimuth_deg: f64, height: f64, target: Vec3) -> SensorSpec {
    let a = azimuth_deg.to_radians();
    let eye = Vec3::new(center.x + radius * a.cos(), center.y + radius * a.sin(), height);
    SensorSpec::looking_at(id, eye, target)
}

/// One person next to a standing desk and a cardboard box, watched by two
/// sensors 2.5 to 3 m away and 30 to 70 degrees apart. Layout, sensor
/// placement and noise stream all vary with `seed`.
pub fn calibration_scene(seed: u64) -> Scene {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xCA11_B0A7);
    let mut j = |s: f64| rng.random_range(-s..=s);
    let person = Vec3::new(j(0.15), j(0.15), 0.0);
    let desk_at = Vec3::new(-0.9 + j(0.1), 0.55 + j(0.1), 0.0);
    let box_at = Vec3::new(-0.7 + j(0.1), -1.25 + j(0.1), 0.0);
    let sep = 50.0 + j(20.0);
    let mid = j(10.0);
    let (ra, rb) = (2.75 + j(0.25), 2.75 + j(0.25));
    let (ha, hb) = (1.5 + j(0.3), 1.5 + j(0.3));
    let target = Vec3::new(-0.25 + j(0.1), j(0.1), 0.8);
    let center = Vec3::new(-0.2, 0.0, 0.0);
    Scene {
        floor: true,
        boxes: vec![
            BoxProp::new(desk_at, desk_at + Vec3::new(1.2, 0.6, 1.0)),
            BoxProp::new(box_at, box_at + Vec3::new(0.5, 0.5, 0.5)),
        ],
        bodies: vec![BodyModel::standing(person.x, person.y, mid + j(15.0))],
        sensors: vec![
            sensor_on_arc("kinect_a", center, ra, mid - sep / 2.0, ha, target),
            sensor_on_arc("kinect_b", center, rb, mid + sep / 2.0, hb, target).with_phase(12_000),
        ],
        noise: NoiseModel { seed, ..NoiseModel::default() },
        session: SessionSpec { duration_s: 2.0, fps: 30.0, depth_frames: vec![0] },
    }
}

/// `persons` people at least 1 m apart in a 4 × 4 m area, seen by two
/// sensors from opposite corners.
pub fn crowd_scene(seed: u64, persons: usize) -> Scene {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xC0_0D);
    let mut bodies: Vec<BodyModel> = Vec::new();
    while bodies.len() < persons {
        let x = rng.random_range(-1.5..1.5);
        let y = rng.random_range(-1.5..1.5);
        let heading = rng.random_range(-180.0..180.0);
        let far_enough = bodies.iter().all(|b| (b.pelvis.xy() - Vec3::new(x, y, 0.0).xy()).norm() >= 1.0);
        if far_enough {
            bodies.push(BodyModel::standing(x, y, heading));
        }
    }
    let target = Vec3::new(0.0, 0.0, 0.9);
    Scene {
        floor: true,
        boxes: vec![],
        bodies,
        sensors: vec![
            SensorSpec::looking_at("kinect_a", Vec3::new(4.2, -0.8, 2.2), target),
            SensorSpec::looking_at("kinect_b", Vec3::new(-0.8, 4.2, 2.2), target).with_phase(9_000),
        ],
        noise: NoiseModel { seed, ..NoiseModel::default() },
        session: SessionSpec { duration_s: 2.0, fps: 30.0, depth_frames: vec![] },
    }
}

/// A person first stands in the open between two props (the calibration
/// capture), then waits behind a tall cabinet that hides them from the
/// first sensor for about half the session, and finally walks out of the
/// second sensor's field of view.
pub fn occlusion_scene(seed: u64) -> Scene {
    let duration_s = 4.0;
    let at = |f: f64| (f * duration_s * 1e6) as i64;
    let h = STANDING_PELVIS_HEIGHT;
    let open = Vec3::new(0.0, 0.0, h);
    let hidden = Vec3::new(-1.6, -0.6, h);
    let away = Vec3::new(-0.6, 2.6, h);
    let wp = |t_us: i64, pelvis: Vec3, heading_deg: f64| Waypoint { t_us, pelvis, heading_deg };
    let walk = vec![
        wp(0, open, 0.0),
        wp(at(0.2), open, 0.0),
        wp(at(0.27), hidden, 0.0),
        wp(at(0.75), hidden, 0.0),
        wp(at(0.9), away, 75.0),
        wp(at(1.0), away, 75.0),
    ];
    let center = Vec3::new(-0.2, 0.0, 0.0);
    let target = Vec3::new(-0.25, 0.0, 0.8);
    Scene {
        floor: true,
        boxes: vec![
            BoxProp::new(Vec3::new(-0.9, 0.55, 0.0), Vec3::new(0.3, 1.15, 1.0)),
            BoxProp::new(Vec3::new(0.8, -1.4, 0.0), Vec3::new(1.1, -0.75, 2.2)),
        ],
        bodies: vec![BodyModel { pelvis: open, heading_deg: 0.0, trajectory: walk }],
        sensors: vec![
            sensor_on_arc("kinect_a", center, 2.75, -25.0, 1.5, target),
            sensor_on_arc("kinect_b", center, 2.75, 25.0, 1.5, target).with_phase(11_000),
        ],
        noise: NoiseModel { seed, ..NoiseModel::default() },
        session: SessionSpec { duration_s, fps: 30.0, depth_frames: vec![0] },
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simulator::observe_skeletons;

    #[test]
    fn calibration_scene_person_seen_by_both() {
        for seed in 0..20 {
            let s = calibration_scene(seed);
            s.validate().unwrap();
            for sensor in &s.sensors {
                let f = observe_skeletons(&s, &sensor.sensor_id, 0, &s.noise).unwrap();
                assert_eq!(f.skeletons().len(), 1, "seed {seed} sensor {}", sensor.sensor_id);
            }
        }
    }

    #[test]
    fn crowd_spacing() {
        let s = crowd_scene(3, 6);
        for (i, a) in s.bodies.iter().enumerate() {
            for b in &s.bodies[i + 1..] {
                assert!((a.pelvis - b.pelvis).norm() >= 1.0);
            }
        }
    }

    #[test]
    fn occlusion_phases() {
        let s = occlusion_scene(1);
        s.validate().unwrap();
        let seen = |id: &str, t: i64| !observe_skeletons(&s, id, t, &s.noise).unwrap().skeletons().is_empty();
        assert!(seen("kinect_a", 0) && seen("kinect_b", 0));
        assert!(!seen("kinect_a", 2_000_000));
        assert!(seen("kinect_b", 2_000_000));
        assert!(seen("kinect_a", 3_950_000));
        assert!(!seen("kinect_b", 3_950_000));
    }
}
