use serde::{Deserialize, Serialize};

use super::CalibrationError;
use crate::geometry::{align_least_squares, RigidTransform, Vec3};
use crate::kdtree::KdTree;
use crate::sensor::{voxel_downsample, PointCloud};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct IcpParams {
    pub max_iterations: usize,
    /// Stop once the RMS improves by less than this (metres).
    pub convergence_eps: f64,
    /// Correspondences farther apart are discarded; 0 disables rejection.
    pub max_correspondence_dist: f64,
    /// Voxel size applied to both clouds first; 0 disables downsampling.
    pub downsample_cell: f64,
}

impl Default for IcpParams {
    fn default() -> Self {
        IcpParams { max_iterations: 50, convergence_eps: 1e-5, max_correspondence_dist: 0.08, downsample_cell: 0.02 }
    }
}

impl IcpParams {
    pub fn validate(&self) -> Result<(), CalibrationError> {
        let bad = |m: &str| Err(CalibrationError::InvalidParams(m.into()));
        if self.max_iterations < 1 {
            return bad("max_iterations must be at least 1");
        }
        if !(self.convergence_eps > 0.0) {
            return bad("convergence_eps must be positive");
        }
        if !(self.max_correspondence_dist >= 0.0) || !(self.downsample_cell >= 0.0) {
            return bad("distances must be non-negative");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IcpResult {
    /// Maps source coordinates into the target frame.
    pub transform: RigidTransform,
    /// RMS distance of the accepted correspondences under `transform`.
    pub rms: f64,
    /// Number of alignment updates performed.
    pub iterations: usize,
    pub converged: bool,
    /// RMS of the correspondence set found at each step, ending with `rms`.
    pub rms_history: Vec<f64>,
    pub source_points: usize,
    pub target_points: usize,
}

struct Correspondences {
    pairs: Vec<(Vec3, Vec3)>,
    rms: f64,
}

fn correspond(src: &[Vec3], tgt: &[Vec3], tree: &KdTree, t: &RigidTransform, max_dist: f64) -> Correspondences {
    let max_sq = if max_dist > 0.0 { max_dist * max_dist } else { f64::INFINITY };
    let mut pairs = Vec::with_capacity(src.len());
    let mut sum_sq = 0.0;
    for p in src {
        let moved = t.apply(p);
        let (i, d2) = tree.nearest(&moved).expect("non-empty target");
        if d2 <= max_sq {
            pairs.push((*p, tgt[i]));
            sum_sq += d2;
        }
    }
    let rms = if pairs.is_empty() { f64::NAN } else { (sum_sq / pairs.len() as f64).sqrt() };
    Correspondences { pairs, rms }
}

/// Point-to-point ICP: nearest-neighbour correspondences, optional distance
/// rejection, closed-form rigid update; stops when the RMS improves by less
/// than `convergence_eps` or after `max_iterations` updates.
pub fn icp(
    source: &PointCloud,
    target: &PointCloud,
    init: &RigidTransform,
    params: &IcpParams,
) -> Result<IcpResult, CalibrationError> {
    params.validate()?;
    let (src, tgt) = if params.downsample_cell > 0.0 {
        (voxel_downsample(source, params.downsample_cell), voxel_downsample(target, params.downsample_cell))
    } else {
        (source.clone(), target.clone())
    };
    if src.is_empty() || tgt.is_empty() {
        return Err(CalibrationError::EmptyCloud {
            sensor_id: if src.is_empty() { "source" } else { "target" }.into(),
        });
    }
    let tree = KdTree::build(tgt.points());

    let mut t = *init;
    let mut history: Vec<f64> = Vec::new();
    let mut iterations = 0;
    let mut converged = false;
    let mut current = correspond(src.points(), tgt.points(), &tree, &t, params.max_correspondence_dist);
    loop {
        if current.pairs.is_empty() {
            return Err(CalibrationError::Divergence(iterations));
        }
        if let Some(prev) = history.last() {
            if prev - current.rms < params.convergence_eps {
                converged = true;
            }
        }
        history.push(current.rms);
        if converged || iterations == params.max_iterations {
            break;
        }
        t = align_least_squares(&current.pairs).map_err(CalibrationError::Alignment)?;
        iterations += 1;
        current = correspond(src.points(), tgt.points(), &tree, &t, params.max_correspondence_dist);
    }

    Ok(IcpResult {
        transform: t,
        rms: current.rms,
        iterations,
        converged,
        rms_history: history,
        source_points: src.len(),
        target_points: tgt.len(),
    })
}
