#![allow(dead_code)]

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};

use skelfuse::geometry::{RigidTransform, Rotation, Vec3};
use skelfuse::skeleton::{Axes, Confidence, Joint, JointId, Skeleton};

pub fn gauss3(rng: &mut ChaCha8Rng, sigma: f64) -> Vec3 {
    let n = Normal::new(0.0, sigma).unwrap();
    Vec3::new(n.sample(rng), n.sample(rng), n.sample(rng))
}

pub fn unit_vector(rng: &mut ChaCha8Rng) -> Vec3 {
    loop {
        let v = Vec3::new(
            StandardNormal.sample(rng),
            StandardNormal.sample(rng),
            StandardNormal.sample(rng),
        );
        if v.norm() > 1e-6 {
            return v.normalize();
        }
    }
}

/// Rotation by an angle drawn uniformly from `[0, max_angle]` about a random axis.
pub fn random_rotation(rng: &mut ChaCha8Rng, max_angle: f64) -> Rotation {
    let axis = unit_vector(rng);
    Rotation::from_axis_angle(axis, rng.random_range(0.0..=max_angle))
}

pub fn random_transform(rng: &mut ChaCha8Rng, max_angle: f64, max_shift: f64) -> RigidTransform {
    let dir = unit_vector(rng);
    RigidTransform::new(random_rotation(rng, max_angle), dir * rng.random_range(0.0..=max_shift))
}

/// (rotation error in radians, translation error in metres) between two
/// transforms. The angle comes from the chordal distance, which stays
/// accurate near zero where `acos` of the trace does not.
pub fn transform_error(a: &RigidTransform, b: &RigidTransform) -> (f64, f64) {
    let chord = (a.rotation.matrix() - b.rotation.matrix()).norm();
    let angle = 2.0 * (chord / (2.0 * 2f64.sqrt())).min(1.0).asin();
    (angle, (a.translation - b.translation).norm())
}

pub fn pelvis_only(id: u32, p: Vec3) -> Skeleton {
    Skeleton::new(id, vec![Joint::new(JointId::Pelvis, p, Axes::identity(), Confidence::High)]).unwrap()
}

pub fn confidence_from(k: u8) -> Confidence {
    match k % 4 {
        0 => Confidence::None,
        1 => Confidence::Low,
        2 => Confidence::Medium,
        _ => Confidence::High,
    }
}
