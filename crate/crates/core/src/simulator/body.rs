use serde::{Deserialize, Serialize};

use crate::geometry::{vec3_serde, Rotation, Vec3};
use crate::skeleton::{Axes, Confidence, Joint, JointId, Skeleton};

/// Joint parent and offset from it, in the body frame (x forward, y left,
/// z up).
const BONES: [(JointId, Option<JointId>, [f64; 3]); 12] = [
    (JointId::Pelvis, None, [0.0, 0.0, 0.0]),
    (JointId::SpineChest, Some(JointId::Pelvis), [0.0, 0.0, 0.30]),
    (JointId::Neck, Some(JointId::SpineChest), [0.0, 0.0, 0.25]),
    (JointId::Head, Some(JointId::Neck), [0.02, 0.0, 0.18]),
    (JointId::ShoulderL, Some(JointId::SpineChest), [0.0, 0.19, 0.17]),
    (JointId::ShoulderR, Some(JointId::SpineChest), [0.0, -0.19, 0.17]),
    (JointId::ElbowL, Some(JointId::ShoulderL), [0.0, 0.03, -0.28]),
    (JointId::ElbowR, Some(JointId::ShoulderR), [0.0, -0.03, -0.28]),
    (JointId::HandL, Some(JointId::ElbowL), [0.06, 0.0, -0.25]),
    (JointId::HandR, Some(JointId::ElbowR), [0.06, 0.0, -0.25]),
    (JointId::FootL, Some(JointId::Pelvis), [0.03, 0.11, -0.88]),
    (JointId::FootR, Some(JointId::Pelvis), [0.03, -0.11, -0.88]),
];

/// Pelvis height that puts the feet 5 cm above the floor.
pub const STANDING_PELVIS_HEIGHT: f64 = 0.93;

/// Bone length from each joint's parent, metres.
pub fn bone_lengths() -> Vec<(JointId, f64)> {
    BONES
        .iter()
        .filter(|(_, parent, _)| parent.is_some())
        .map(|(id, _, o)| (*id, Vec3::new(o[0], o[1], o[2]).norm()))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Waypoint {
    pub t_us: i64,
    #[serde(with = "vec3_serde")]
    pub pelvis: Vec3,
    #[serde(default)]
    pub heading_deg: f64,
}

/// A stick-figure person: pelvis pose plus a fixed bone table. With a
/// trajectory, the pose is interpolated between waypoints and held
/// constant outside them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BodyModel {
    #[serde(with = "vec3_serde")]
    pub pelvis: Vec3,
    #[serde(default)]
    pub heading_deg: f64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub trajectory: Vec<Waypoint>,
}

impl BodyModel {
    pub fn standing(x: f64, y: f64, heading_deg: f64) -> Self {
        BodyModel { pelvis: Vec3::new(x, y, STANDING_PELVIS_HEIGHT), heading_deg, trajectory: Vec::new() }
    }

    pub fn with_trajectory(mut self, trajectory: Vec<Waypoint>) -> Self {
        self.trajectory = trajectory;
        self
    }

    /// Pelvis position and heading (radians) at `t_us`.
    pub fn pose_at(&self, t_us: i64) -> (Vec3, f64) {
        let w = &self.trajectory;
        let Some(first) = w.first() else {
            return (self.pelvis, self.heading_deg.to_radians());
        };
        if t_us <= first.t_us {
            return (first.pelvis, first.heading_deg.to_radians());
        }
        for pair in w.windows(2) {
            let (a, b) = (&pair[0], &pair[1]);
            if t_us <= b.t_us {
                let alpha = (t_us - a.t_us) as f64 / (b.t_us - a.t_us).max(1) as f64;
                let pelvis = a.pelvis * (1.0 - alpha) + b.pelvis * alpha;
                let heading = a.heading_deg * (1.0 - alpha) + b.heading_deg * alpha;
                return (pelvis, heading.to_radians());
            }
        }
        let last = w.last().expect("non-empty");
        (last.pelvis, last.heading_deg.to_radians())
    }
}

/// Ground-truth skeleton in the world frame, every joint `High`.
pub fn body_joints(b: &BodyModel, t_us: i64, body_id: u32) -> Skeleton {
    let (pelvis, heading) = b.pose_at(t_us);
    let r = Rotation::about_z(heading);
    let axes = Axes::from_rotation(&r);
    let mut positions: Vec<(JointId, Vec3)> = Vec::with_capacity(BONES.len());
    for (id, parent, offset) in BONES {
        let base = match parent {
            None => pelvis,
            Some(p) => positions.iter().find(|(j, _)| *j == p).expect("parents precede children").1,
        };
        let o = Vec3::new(offset[0], offset[1], offset[2]);
        let pos = if parent.is_none() { base } else { base + r.apply(&o) };
        positions.push((id, pos));
    }
    let joints = positions.into_iter().map(|(id, p)| Joint::new(id, p, axes, Confidence::High)).collect();
    Skeleton::new(body_id, joints).expect("bone table contains the pelvis")
}

/// Segment with radius, used for ray casting and occlusion.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Capsule {
    pub a: Vec3,
    pub b: Vec3,
    pub radius: f64,
}

/// Capsules approximating the body surface for a ground-truth skeleton.
pub fn body_capsules(s: &Skeleton) -> Vec<Capsule> {
    let p = |id: JointId| s.joint(id).expect("full skeleton").position;
    let pelvis = p(JointId::Pelvis);
    let lateral = (p(JointId::ShoulderL) - p(JointId::ShoulderR)).normalize();
    let hip_l = pelvis + lateral * 0.1;
    let hip_r = pelvis - lateral * 0.1;
    let cap = |a: Vec3, b: Vec3, radius: f64| Capsule { a, b, radius };
    vec![
        cap(pelvis, p(JointId::Neck), 0.14),
        cap(p(JointId::Neck), p(JointId::Head) + Vec3::new(0.0, 0.0, 0.05), 0.10),
        cap(p(JointId::ShoulderL), p(JointId::ShoulderR), 0.07),
        cap(p(JointId::ShoulderL), p(JointId::ElbowL), 0.05),
        cap(p(JointId::ShoulderR), p(JointId::ElbowR), 0.05),
        cap(p(JointId::ElbowL), p(JointId::HandL), 0.045),
        cap(p(JointId::ElbowR), p(JointId::HandR), 0.045),
        cap(hip_l, p(JointId::FootL), 0.075),
        cap(hip_r, p(JointId::FootR), 0.075),
    ]
}
