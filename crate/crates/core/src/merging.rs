//! Confidence-weighted merging of matched skeletons and assembly of fused
//! frames.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::formats::{self, FormatError};
use crate::geometry::Vec3;
use crate::matching::MatchOutcome;
use crate::skeleton::wire::BodyWire;
use crate::skeleton::{Axes, Confidence, Joint, JointId, Skeleton};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MergeError {
    #[error("cannot merge joint {0} with joint {1}")]
    JointMismatch(JointId, JointId),
    #[error("weights must be non-negative and non-decreasing with confidence")]
    InvalidWeights,
}

/// Weight assigned to each reported confidence level.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct WeightTable {
    pub none: f64,
    pub low: f64,
    pub medium: f64,
    pub high: f64,
}

impl Default for WeightTable {
    fn default() -> Self {
        WeightTable { none: 0.0, low: 0.25, medium: 0.5, high: 1.0 }
    }
}

impl WeightTable {
    pub fn validate(&self) -> Result<(), MergeError> {
        let w = [self.none, self.low, self.medium, self.high];
        if w.iter().all(|v| *v >= 0.0 && v.is_finite()) && w.windows(2).all(|p| p[0] <= p[1]) {
            Ok(())
        } else {
            Err(MergeError::InvalidWeights)
        }
    }

    pub fn weight(&self, c: Confidence) -> f64 {
        match c {
            Confidence::None => self.none,
            Confidence::Low => self.low,
            Confidence::Medium => self.medium,
            Confidence::High => self.high,
        }
    }
}

/// Weight under the default table.
pub fn weight_of(c: Confidence) -> f64 {
    WeightTable::default().weight(c)
}

fn toward(from: &Vec3, to: &Vec3, f: f64) -> Vec3 {
    from + (to - from) * f
}

/// Merges two observations of the same joint with the default weights.
pub fn merge_joint(i: &Joint, j: &Joint) -> Result<Joint, MergeError> {
    merge_joint_with(i, j, &WeightTable::default())
}

/// `p_m = p_i + w_j/(w_i + w_j)·(p_j − p_i)`, and likewise for each axis,
/// followed by re-orthonormalization of the axes. A side with zero weight
/// is ignored entirely; if both weights are zero the two sides count
/// equally and the result has confidence `None`.
pub fn merge_joint_with(i: &Joint, j: &Joint, table: &WeightTable) -> Result<Joint, MergeError> {
    if i.id != j.id {
        return Err(MergeError::JointMismatch(i.id, j.id));
    }
    let (wi, wj) = (table.weight(i.confidence), table.weight(j.confidence));
    let confidence = i.confidence.max(j.confidence);
    if wi + wj > 0.0 {
        if wj == 0.0 {
            return Ok(Joint { confidence, ..*i });
        }
        if wi == 0.0 {
            return Ok(Joint { confidence, ..*j });
        }
    }
    let (f, confidence) = if wi + wj > 0.0 { (wj / (wi + wj), confidence) } else { (0.5, Confidence::None) };
    let raw = Axes {
        x: toward(&i.axes.x, &j.axes.x, f),
        y: toward(&i.axes.y, &j.axes.y, f),
        z: toward(&i.axes.z, &j.axes.z, f),
    };
    // opposing axes average to nothing; keep the better-weighted side then
    let axes = raw.orthonormalized().unwrap_or(if wj > wi { j.axes } else { i.axes });
    Ok(Joint { id: i.id, position: toward(&i.position, &j.position, f), axes, confidence })
}

/// Joint-wise merge; joints seen by one side only are copied.
pub fn merge_skeletons(a: &Skeleton, b: &Skeleton, fused_id: u32) -> Skeleton {
    merge_skeletons_with(a, b, fused_id, &WeightTable::default())
}

pub fn merge_skeletons_with(a: &Skeleton, b: &Skeleton, fused_id: u32, table: &WeightTable) -> Skeleton {
    let mut joints = Vec::with_capacity(JointId::ALL.len());
    for id in JointId::ALL {
        match (a.joint(id), b.joint(id)) {
            (Some(ja), Some(jb)) => joints.push(merge_joint_with(ja, jb, table).expect("same joint id")),
            (Some(j), None) | (None, Some(j)) => joints.push(*j),
            (None, None) => {}
        }
    }
    Skeleton::new(fused_id, joints).expect("both inputs carry a pelvis")
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Source {
    pub sensor_id: String,
    pub body_id: u32,
}

/// Where a fused person came from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Provenance {
    Merged { sources: Vec<Source>, distance: f64 },
    Isolated { sensor_id: String, body_id: u32 },
}

impl Provenance {
    pub fn sources(&self) -> Vec<Source> {
        match self {
            Provenance::Merged { sources, .. } => sources.clone(),
            Provenance::Isolated { sensor_id, body_id } => {
                vec![Source { sensor_id: sensor_id.clone(), body_id: *body_id }]
            }
        }
    }

    pub fn is_merged(&self) -> bool {
        matches!(self, Provenance::Merged { .. })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FusedPerson {
    pub skeleton: Skeleton,
    pub provenance: Provenance,
}

impl FusedPerson {
    /// A single sensor's skeleton, not yet merged with anything.
    pub fn observed(sensor_id: &str, skeleton: Skeleton) -> Self {
        let provenance = Provenance::Isolated { sensor_id: sensor_id.into(), body_id: skeleton.body_id };
        FusedPerson { skeleton, provenance }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FusedFrame {
    pub timestamp_us: i64,
    pub persons: Vec<FusedPerson>,
}

impl FusedFrame {
    pub fn skeletons(&self) -> Vec<Skeleton> {
        self.persons.iter().map(|p| p.skeleton.clone()).collect()
    }
}

/// Builds the fused frame for one matching outcome between `side_a` and
/// `side_b`.
///
/// Matched pairs are merged and come first, by ascending pair distance;
/// unmatched persons follow unchanged, ordered by their first source
/// `(sensor_id, body_id)`. Merged persons get fresh ids above every input id.
pub fn fuse_frame(
    side_a: &[FusedPerson],
    side_b: &[FusedPerson],
    outcome: &MatchOutcome,
    t_us: i64,
    table: &WeightTable,
) -> FusedFrame {
    let first_id = side_a.iter().chain(side_b).map(|p| p.skeleton.body_id + 1).max().unwrap_or(0);
    let mut persons = Vec::with_capacity(outcome.pairs.len() + outcome.isolated_a.len() + outcome.isolated_b.len());
    for (next_id, pair) in (first_id..).zip(&outcome.pairs) {
        let (pa, pb) = (&side_a[pair.a], &side_b[pair.b]);
        let mut sources = pa.provenance.sources();
        sources.extend(pb.provenance.sources());
        persons.push(FusedPerson {
            skeleton: merge_skeletons_with(&pa.skeleton, &pb.skeleton, next_id, table),
            provenance: Provenance::Merged { sources, distance: pair.distance },
        });
    }
    let mut isolated: Vec<&FusedPerson> = outcome
        .isolated_a
        .iter()
        .map(|&i| &side_a[i])
        .chain(outcome.isolated_b.iter().map(|&j| &side_b[j]))
        .collect();
    isolated.sort_by_key(|p| p.provenance.sources().into_iter().next());
    persons.extend(isolated.into_iter().cloned());
    FusedFrame { timestamp_us: t_us, persons }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PersonWire {
    #[serde(flatten)]
    pub body: BodyWire,
    pub provenance: Provenance,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FusedFrameWire {
    pub timestamp_us: i64,
    pub persons: Vec<PersonWire>,
}

impl From<&FusedFrame> for FusedFrameWire {
    fn from(f: &FusedFrame) -> Self {
        FusedFrameWire {
            timestamp_us: f.timestamp_us,
            persons: f
                .persons
                .iter()
                .map(|p| PersonWire { body: BodyWire::from(&p.skeleton), provenance: p.provenance.clone() })
                .collect(),
        }
    }
}

pub fn encode_fused(frames: &[FusedFrame]) -> String {
    let mut out = String::new();
    for f in frames {
        out.push_str(&serde_json::to_string(&FusedFrameWire::from(f)).expect("serializable frame"));
        out.push('\n');
    }
    out
}

pub fn write_fused(path: &Path, frames: &[FusedFrame]) -> Result<(), FormatError> {
    formats::write_atomic(path, encode_fused(frames).as_bytes())
}

pub fn read_fused(path: &Path) -> Result<Vec<FusedFrame>, FormatError> {
    let text = formats::read_string(path)?;
    let mut frames = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let err = |m: String| FormatError::parse(path, Some(i + 1), m);
        let w: FusedFrameWire = serde_json::from_str(line).map_err(|e| err(e.to_string()))?;
        let persons = w
            .persons
            .iter()
            .map(|p| {
                Skeleton::try_from(&p.body).map(|skeleton| FusedPerson { skeleton, provenance: p.provenance.clone() })
            })
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| err(e.to_string()))?;
        frames.push(FusedFrame { timestamp_us: w.timestamp_us, persons });
    }
    Ok(frames)
}
