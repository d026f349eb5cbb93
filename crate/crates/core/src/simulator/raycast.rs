//! Ray intersection against the simulator's primitives. Every function
//! returns the smallest ray parameter `s > MIN_S` at which the ray enters
//! the surface, with directions not required to be unit length.

use serde::{Deserialize, Serialize};

use super::body::Capsule;
use crate::geometry::{vec3_serde, Vec3};

const MIN_S: f64 = 1e-9;

/// Axis-aligned box given by opposite corners.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoxProp {
    #[serde(with = "vec3_serde")]
    pub min: Vec3,
    #[serde(with = "vec3_serde")]
    pub max: Vec3,
}

impl BoxProp {
    pub fn new(min: Vec3, max: Vec3) -> Self {
        BoxProp { min, max }
    }

    pub fn is_valid(&self) -> bool {
        (0..3).all(|i| self.min[i] < self.max[i])
    }

    /// Signed distance, negative inside.
    pub fn sdf(&self, p: &Vec3) -> f64 {
        let c = (self.min + self.max) * 0.5;
        let h = (self.max - self.min) * 0.5;
        let q = (p - c).abs() - h;
        let outside = Vec3::new(q.x.max(0.0), q.y.max(0.0), q.z.max(0.0)).norm();
        outside + q.x.max(q.y).max(q.z).min(0.0)
    }
}

impl Capsule {
    pub fn sdf(&self, p: &Vec3) -> f64 {
        let ab = self.b - self.a;
        let t = ((p - self.a).dot(&ab) / ab.norm_squared().max(1e-300)).clamp(0.0, 1.0);
        (p - (self.a + ab * t)).norm() - self.radius
    }
}

/// Plane `z = 0` hit from above only.
pub fn ray_floor(o: &Vec3, d: &Vec3) -> Option<f64> {
    if o.z <= 0.0 || d.z >= 0.0 {
        return None;
    }
    let s = -o.z / d.z;
    (s > MIN_S).then_some(s)
}

/// Slab test. A ray starting inside reports the exit point.
pub fn ray_box(o: &Vec3, d: &Vec3, b: &BoxProp) -> Option<f64> {
    let mut t0 = f64::NEG_INFINITY;
    let mut t1 = f64::INFINITY;
    for i in 0..3 {
        if d[i].abs() < 1e-300 {
            if o[i] < b.min[i] || o[i] > b.max[i] {
                return None;
            }
            continue;
        }
        let inv = 1.0 / d[i];
        let (a, c) = ((b.min[i] - o[i]) * inv, (b.max[i] - o[i]) * inv);
        t0 = t0.max(a.min(c));
        t1 = t1.min(a.max(c));
    }
    if t0 > t1 {
        return None;
    }
    if t0 > MIN_S {
        Some(t0)
    } else if t1 > MIN_S {
        Some(t1)
    } else {
        None
    }
}

fn ray_sphere(o: &Vec3, d: &Vec3, c: &Vec3, r: f64) -> Option<f64> {
    let oc = o - c;
    let a = d.norm_squared();
    let b = oc.dot(d);
    let cc = oc.norm_squared() - r * r;
    let disc = b * b - a * cc;
    if disc < 0.0 {
        return None;
    }
    let sq = disc.sqrt();
    let s0 = (-b - sq) / a;
    let s1 = (-b + sq) / a;
    if s0 > MIN_S {
        Some(s0)
    } else if s1 > MIN_S {
        Some(s1)
    } else {
        None
    }
}

/// First hit on a capsule: the nearer of the end-cap spheres and the
/// cylinder wall between them.
pub fn ray_capsule(o: &Vec3, d: &Vec3, c: &Capsule) -> Option<f64> {
    let mut best = ray_sphere(o, d, &c.a, c.radius);
    let s_b = ray_sphere(o, d, &c.b, c.radius);
    best = min_opt(best, s_b);
    let axis = c.b - c.a;
    let len = axis.norm();
    if len > 1e-12 {
        let u = axis / len;
        let oa = o - c.a;
        let dp = d - u * d.dot(&u);
        let op = oa - u * oa.dot(&u);
        let a = dp.norm_squared();
        if a > 1e-300 {
            let b = op.dot(&dp);
            let cc = op.norm_squared() - c.radius * c.radius;
            let disc = b * b - a * cc;
            if disc >= 0.0 {
                let sq = disc.sqrt();
                for s in [(-b - sq) / a, (-b + sq) / a] {
                    if s > MIN_S {
                        let h = (oa + d * s).dot(&u);
                        if (0.0..=len).contains(&h) {
                            best = min_opt(best, Some(s));
                            break;
                        }
                    }
                }
            }
        }
    }
    best
}

fn min_opt(a: Option<f64>, b: Option<f64>) -> Option<f64> {
    match (a, b) {
        (Some(x), Some(y)) => Some(x.min(y)),
        (x, None) => x,
        (None, y) => y,
    }
}

/// Does the open segment `p -> q` pass through the box?
pub fn segment_hits_box(p: &Vec3, q: &Vec3, b: &BoxProp) -> bool {
    let d = q - p;
    if b.sdf(p) <= 0.0 {
        return true;
    }
    matches!(ray_box(p, &d, b), Some(s) if s < 1.0)
}

/// Does the open segment `p -> q` pass through the capsule?
pub fn segment_hits_capsule(p: &Vec3, q: &Vec3, c: &Capsule) -> bool {
    let d = q - p;
    if c.sdf(p) <= 0.0 {
        return true;
    }
    matches!(ray_capsule(p, &d, c), Some(s) if s < 1.0)
}
