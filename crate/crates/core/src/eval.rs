//! Scoring fused output against simulator ground truth.

use std::collections::{BTreeMap, BTreeSet};

use serde::Serialize;
use thiserror::Error;

use crate::geometry::Vec3;
use crate::merging::FusedFrame;
use crate::simulator::{GroundTruth, GroundTruthFrame};
use crate::skeleton::Confidence;

/// Fused and ground-truth timestamps further apart than this do not align.
pub const DEFAULT_TIME_TOLERANCE_US: i64 = 1_000;

#[derive(Debug, Error, PartialEq)]
pub enum EvalError {
    #[error("fused frame at {t_us} us has no ground-truth frame within {tolerance_us} us")]
    TimestampMismatch { t_us: i64, tolerance_us: i64 },
    #[error("ground truth has no frames")]
    EmptyGroundTruth,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PersonMetrics {
    pub coverage: f64,
    pub rms_joint_error: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StreamMetrics {
    /// Ticks at which every fused person maps to one true person and no
    /// true person is split across fused persons.
    pub matching_accuracy: f64,
    /// Represented (person, tick) pairs over all (person, tick) pairs.
    pub coverage: f64,
    /// RMS 3D joint error over joints reported with confidence above `none`.
    pub rms_joint_error: Option<f64>,
    /// Same, restricted to ticks where every sensor reported the person.
    pub rms_joint_error_jointly_visible: Option<f64>,
    pub per_person: BTreeMap<usize, PersonMetrics>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalReport {
    pub ticks: usize,
    pub persons: usize,
    pub fused: StreamMetrics,
    #[serde(skip_serializing_if = "BTreeMap::is_empty")]
    pub single_sensor: BTreeMap<String, StreamMetrics>,
}

#[derive(Default)]
struct SqAcc {
    sum: f64,
    n: usize,
}

impl SqAcc {
    fn add(&mut self, d2: f64) {
        self.sum += d2;
        self.n += 1;
    }

    fn rms(&self) -> Option<f64> {
        (self.n > 0).then(|| (self.sum / self.n as f64).sqrt())
    }
}

fn align(gt: &GroundTruth, t_us: i64, tolerance_us: i64) -> Result<&GroundTruthFrame, EvalError> {
    let i = gt.frames.partition_point(|f| f.timestamp_us < t_us);
    [i.checked_sub(1), Some(i)]
        .into_iter()
        .flatten()
        .filter_map(|k| gt.frames.get(k))
        .filter(|f| (f.timestamp_us - t_us).abs() <= tolerance_us)
        .min_by_key(|f| (f.timestamp_us - t_us).abs())
        .ok_or(EvalError::TimestampMismatch { t_us, tolerance_us })
}

/// Ticks at which each true person was reported by every sensor, taken
/// from the merged provenance of a fused stream.
pub fn jointly_visible(fused: &[FusedFrame], gt: &GroundTruth) -> BTreeSet<(i64, usize)> {
    let all: BTreeSet<&str> = gt.sensors.iter().map(|s| s.sensor_id.as_str()).collect();
    let mut out = BTreeSet::new();
    for f in fused {
        let mut seen: BTreeMap<usize, BTreeSet<String>> = BTreeMap::new();
        for p in &f.persons {
            for s in p.provenance.sources() {
                if let Some(person) = gt.person_of(&s.sensor_id, s.body_id) {
                    seen.entry(person).or_default().insert(s.sensor_id);
                }
            }
        }
        for (person, sensors) in seen {
            if all.iter().all(|s| sensors.contains(*s)) {
                out.insert((f.timestamp_us, person));
            }
        }
    }
    out
}

/// Scores one stream of fused frames. `joint_ticks` selects the
/// (tick, person) pairs that count towards the jointly-visible RMS.
pub fn score(
    frames: &[FusedFrame],
    gt: &GroundTruth,
    joint_ticks: &BTreeSet<(i64, usize)>,
    tolerance_us: i64,
) -> Result<StreamMetrics, EvalError> {
    if gt.frames.is_empty() {
        return Err(EvalError::EmptyGroundTruth);
    }
    let mut correct = 0usize;
    let mut total = SqAcc::default();
    let mut joint = SqAcc::default();
    let mut per_person: BTreeMap<usize, (usize, usize, SqAcc)> = BTreeMap::new();
    for f in frames {
        let truth = align(gt, f.timestamp_us, tolerance_us)?;
        for p in &truth.persons {
            per_person.entry(p.person).or_insert((0, 0, SqAcc::default())).1 += 1;
        }
        let mut ok = true;
        let mut represented: BTreeSet<usize> = BTreeSet::new();
        for fp in &f.persons {
            let people: BTreeSet<Option<usize>> =
                fp.provenance.sources().iter().map(|s| gt.person_of(&s.sensor_id, s.body_id)).collect();
            let single = match people.iter().collect::<Vec<_>>().as_slice() {
                [Some(p)] => Some(*p),
                _ => None,
            };
            let Some(person) = single else {
                ok = false;
                continue;
            };
            if !represented.insert(person) {
                ok = false;
                continue;
            }
            let Some(tp) = truth.persons.iter().find(|p| p.person == person) else { continue };
            let entry = per_person.entry(person).or_insert((0, 0, SqAcc::default()));
            entry.0 += 1;
            let counts_joint = joint_ticks.contains(&(f.timestamp_us, person));
            for j in fp.skeleton.joints().iter().filter(|j| j.confidence > Confidence::None) {
                let Some(tj) = tp.joints.iter().find(|t| t.id == j.id) else { continue };
                let d2 = (j.position - Vec3::from(tj.pos)).norm_squared();
                total.add(d2);
                entry.2.add(d2);
                if counts_joint {
                    joint.add(d2);
                }
            }
        }
        if ok {
            correct += 1;
        }
    }
    let person_ticks: usize = per_person.values().map(|v| v.1).sum();
    let covered: usize = per_person.values().map(|v| v.0).sum();
    Ok(StreamMetrics {
        matching_accuracy: if frames.is_empty() { 0.0 } else { correct as f64 / frames.len() as f64 },
        coverage: if person_ticks == 0 { 0.0 } else { covered as f64 / person_ticks as f64 },
        rms_joint_error: total.rms(),
        rms_joint_error_jointly_visible: joint.rms(),
        per_person: per_person
            .into_iter()
            .map(|(k, (c, n, acc))| {
                (k, PersonMetrics { coverage: if n == 0 { 0.0 } else { c as f64 / n as f64 }, rms_joint_error: acc.rms() })
            })
            .collect(),
    })
}

/// Scores the fused stream and, when given, single-sensor streams computed
/// at the same ticks.
pub fn evaluate(
    fused: &[FusedFrame],
    gt: &GroundTruth,
    singles: &BTreeMap<String, Vec<FusedFrame>>,
    tolerance_us: i64,
) -> Result<EvalReport, EvalError> {
    let joint_ticks = jointly_visible(fused, gt);
    let fused_metrics = score(fused, gt, &joint_ticks, tolerance_us)?;
    let mut single_sensor = BTreeMap::new();
    for (id, frames) in singles {
        single_sensor.insert(id.clone(), score(frames, gt, &joint_ticks, tolerance_us)?);
    }
    Ok(EvalReport { ticks: fused.len(), persons: gt.correspondences.len(), fused: fused_metrics, single_sensor })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::RigidTransform;
    use crate::merging::{FusedPerson, Provenance, Source};
    use crate::simulator::{BodyCorrespondence, GroundTruthJoint, GroundTruthPerson, GroundTruthSensor};
    use crate::skeleton::{Axes, Joint, JointId, Skeleton};

    fn gt() -> GroundTruth {
        let sensor = |id: &str| GroundTruthSensor {
            sensor_id: id.into(),
            pose: RigidTransform::identity(),
            extrinsic: RigidTransform::identity(),
        };
        let corr = |p: usize, a: u32, b: u32| BodyCorrespondence {
            person: p,
            body_ids: [("a".to_string(), a), ("b".to_string(), b)].into_iter().collect(),
        };
        let frame = |t: i64| GroundTruthFrame {
            timestamp_us: t,
            persons: (0..2)
                .map(|p| GroundTruthPerson {
                    person: p,
                    joints: vec![GroundTruthJoint { id: JointId::Pelvis, pos: [p as f64, 0.0, 3.0] }],
                })
                .collect(),
        };
        GroundTruth {
            seed: 0,
            reference_sensor: "a".into(),
            sensors: vec![sensor("a"), sensor("b")],
            correspondences: vec![corr(0, 100, 201), corr(1, 101, 200)],
            frames: vec![frame(0), frame(33_333)],
        }
    }

    fn merged(id: u32, x: f64, a: u32, b: u32) -> FusedPerson {
        FusedPerson {
            skeleton: Skeleton::new(
                id,
                vec![Joint::new(JointId::Pelvis, Vec3::new(x, 0.0, 3.0), Axes::identity(), Confidence::High)],
            )
            .unwrap(),
            provenance: Provenance::Merged {
                sources: vec![Source { sensor_id: "a".into(), body_id: a }, Source { sensor_id: "b".into(), body_id: b }],
                distance: 0.0,
            },
        }
    }

    #[test]
    fn perfect_fusion_scores_perfectly() {
        let g = gt();
        let fused: Vec<FusedFrame> = [0, 33_333]
            .iter()
            .map(|&t| FusedFrame { timestamp_us: t, persons: vec![merged(1, 0.0, 100, 201), merged(2, 1.0, 101, 200)] })
            .collect();
        let r = evaluate(&fused, &g, &BTreeMap::new(), DEFAULT_TIME_TOLERANCE_US).unwrap();
        assert_eq!(r.fused.matching_accuracy, 1.0);
        assert_eq!(r.fused.coverage, 1.0);
        assert_eq!(r.fused.rms_joint_error, Some(0.0));
        assert_eq!(r.fused.rms_joint_error_jointly_visible, Some(0.0));
    }

    #[test]
    fn wrong_pairing_and_misses_are_counted() {
        let g = gt();
        let fused = vec![
            FusedFrame { timestamp_us: 0, persons: vec![merged(1, 0.0, 100, 200)] },
            FusedFrame { timestamp_us: 33_333, persons: vec![merged(1, 0.3, 100, 201)] },
        ];
        let r = evaluate(&fused, &g, &BTreeMap::new(), DEFAULT_TIME_TOLERANCE_US).unwrap();
        assert_eq!(r.fused.matching_accuracy, 0.5);
        assert_eq!(r.fused.coverage, 0.25);
        assert!((r.fused.rms_joint_error.unwrap() - 0.3).abs() < 1e-12);
    }

    #[test]
    fn misaligned_timestamps_are_an_error() {
        let fused = vec![FusedFrame { timestamp_us: 10_000, persons: vec![] }];
        assert_eq!(
            evaluate(&fused, &gt(), &BTreeMap::new(), DEFAULT_TIME_TOLERANCE_US).unwrap_err(),
            EvalError::TimestampMismatch { t_us: 10_000, tolerance_us: DEFAULT_TIME_TOLERANCE_US }
        );
    }
}
