//! Pinhole depth-camera model, depth images and point clouds.
//!
//! Sensor frame: +Z forward along the optical axis, +X right, +Y down.
//! Pixel `(u, v)` is centred on integer coordinates. Depth is stored in
//! integer millimetres (0 = invalid) and converted to metres for geometry.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{RigidTransform, Vec3};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SensorError {
    #[error("invalid intrinsics: {0}")]
    InvalidIntrinsics(String),
    #[error("depth buffer has {got} samples, expected {expected}")]
    BufferSize { expected: usize, got: usize },
    #[error("point cloud contains a non-finite point at index {0}")]
    NonFinitePoint(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Intrinsics {
    pub width: u32,
    pub height: u32,
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
}

impl Intrinsics {
    pub fn new(width: u32, height: u32, fx: f64, fy: f64, cx: f64, cy: f64) -> Result<Self, SensorError> {
        let k = Intrinsics { width, height, fx, fy, cx, cy };
        k.validate()?;
        Ok(k)
    }

    /// Square pixels, principal point at `(width/2, height/2)`.
    pub fn from_horizontal_fov(width: u32, height: u32, hfov_deg: f64) -> Result<Self, SensorError> {
        let f = (width as f64 / 2.0) / (hfov_deg.to_radians() / 2.0).tan();
        Self::new(width, height, f, f, (width / 2) as f64, (height / 2) as f64)
    }

    pub fn validate(&self) -> Result<(), SensorError> {
        let bad = |m: &str| Err(SensorError::InvalidIntrinsics(m.to_string()));
        if self.width < 1 || self.height < 1 {
            return bad("width and height must be at least 1");
        }
        if !(self.fx > 0.0 && self.fy > 0.0) || !self.fx.is_finite() || !self.fy.is_finite() {
            return bad("focal lengths must be positive and finite");
        }
        if !(self.cx >= 0.0 && self.cx < self.width as f64) || !(self.cy >= 0.0 && self.cy < self.height as f64) {
            return bad("principal point must lie inside the image");
        }
        Ok(())
    }

    pub fn pixel_count(&self) -> usize {
        self.width as usize * self.height as usize
    }

    /// Whether a continuous pixel coordinate falls inside the image rectangle
    /// `[-0.5, width - 0.5) × [-0.5, height - 0.5)`.
    pub fn contains(&self, u: f64, v: f64) -> bool {
        u >= -0.5 && u < self.width as f64 - 0.5 && v >= -0.5 && v < self.height as f64 - 0.5
    }

    /// Ray direction through pixel `(u, v)`, scaled so that its z component is 1.
    pub fn ray(&self, u: f64, v: f64) -> Vec3 {
        Vec3::new((u - self.cx) / self.fx, (v - self.cy) / self.fy, 1.0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DepthImage {
    intrinsics: Intrinsics,
    data: Vec<u16>,
}

impl DepthImage {
    /// `data` is row-major, `width × height` samples in millimetres.
    pub fn new(intrinsics: Intrinsics, data: Vec<u16>) -> Result<Self, SensorError> {
        intrinsics.validate()?;
        let expected = intrinsics.pixel_count();
        if data.len() != expected {
            return Err(SensorError::BufferSize { expected, got: data.len() });
        }
        Ok(DepthImage { intrinsics, data })
    }

    pub fn zeros(intrinsics: Intrinsics) -> Result<Self, SensorError> {
        Self::new(intrinsics, vec![0; intrinsics.pixel_count()])
    }

    pub fn intrinsics(&self) -> &Intrinsics {
        &self.intrinsics
    }

    pub fn data(&self) -> &[u16] {
        &self.data
    }

    pub fn get(&self, u: u32, v: u32) -> u16 {
        self.data[v as usize * self.intrinsics.width as usize + u as usize]
    }

    pub fn set(&mut self, u: u32, v: u32, depth_mm: u16) {
        let w = self.intrinsics.width as usize;
        self.data[v as usize * w + u as usize] = depth_mm;
    }

    pub fn valid_count(&self) -> usize {
        self.data.iter().filter(|&&d| d > 0).count()
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct PointCloud {
    points: Vec<Vec3>,
}

impl PointCloud {
    pub fn new(points: Vec<Vec3>) -> Result<Self, SensorError> {
        if let Some(i) = points.iter().position(|p| !p.iter().all(|c| c.is_finite())) {
            return Err(SensorError::NonFinitePoint(i));
        }
        Ok(PointCloud { points })
    }

    pub fn empty() -> Self {
        Self::default()
    }

    pub fn points(&self) -> &[Vec3] {
        &self.points
    }

    pub fn into_points(self) -> Vec<Vec3> {
        self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn transformed(&self, t: &RigidTransform) -> PointCloud {
        PointCloud { points: self.points.iter().map(|p| t.apply(p)).collect() }
    }

    pub fn extend(&mut self, other: &PointCloud) {
        self.points.extend_from_slice(&other.points);
    }
}

/// Projection of a sensor-frame point onto the image plane.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Projection {
    pub u: f64,
    pub v: f64,
    pub depth_mm: f64,
}

/// Back-projects a (possibly fractional) pixel with depth in millimetres.
pub fn backproject_pixel(u: f64, v: f64, depth_mm: f64, k: &Intrinsics) -> Vec3 {
    let z = depth_mm / 1000.0;
    Vec3::new((u - k.cx) / k.fx * z, (v - k.cy) / k.fy * z, z)
}

/// One point per valid pixel, in row-major scan order.
pub fn backproject(img: &DepthImage) -> PointCloud {
    let k = img.intrinsics();
    let mut points = Vec::with_capacity(img.valid_count());
    for v in 0..k.height {
        for u in 0..k.width {
            let d = img.get(u, v);
            if d > 0 {
                points.push(backproject_pixel(u as f64, v as f64, d as f64, k));
            }
        }
    }
    PointCloud { points }
}

/// `None` when the point is behind the camera or lands outside the image.
pub fn project(p: &Vec3, k: &Intrinsics) -> Option<Projection> {
    if !(p.z > 0.0) {
        return None;
    }
    let u = k.fx * p.x / p.z + k.cx;
    let v = k.fy * p.y / p.z + k.cy;
    if !k.contains(u, v) {
        return None;
    }
    Some(Projection { u, v, depth_mm: 1000.0 * p.z })
}

/// Points within `radius` of `center` (inclusive), order preserved.
pub fn filter_radius(c: &PointCloud, center: &Vec3, radius: f64) -> PointCloud {
    PointCloud {
        points: c.points.iter().filter(|p| (*p - center).norm() <= radius).copied().collect(),
    }
}

/// Replaces the points of every occupied `cell`-sized voxel by their
/// centroid. Output is ordered by voxel index.
pub fn voxel_downsample(c: &PointCloud, cell: f64) -> PointCloud {
    let mut cells: BTreeMap<(i64, i64, i64), (Vec3, usize)> = BTreeMap::new();
    for p in &c.points {
        let key = ((p.x / cell).floor() as i64, (p.y / cell).floor() as i64, (p.z / cell).floor() as i64);
        let entry = cells.entry(key).or_insert((Vec3::zeros(), 0));
        entry.0 += p;
        entry.1 += 1;
    }
    PointCloud { points: cells.into_values().map(|(sum, n)| sum / n as f64).collect() }
}
