//! End-to-end processing of a recorded session: calibration from the
//! depth capture, then per-tick resampling, matching and merging.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::calibration::{calibrate_captures, CalibrationConfig, CalibrationError, CalibrationResult, IcpParams, SensorCapture};
use crate::formats::{read_depth, read_json, FormatError};
use crate::geometry::RigidTransform;
use crate::matching::{fuse_match_history, match_skeletons, MatchConfig, MatchError, MatchHistory};
use crate::merging::{fuse_frame, FusedFrame, FusedPerson, MergeError, Source, WeightTable};
use crate::sensor::DepthImage;
use crate::simulator::{SessionDepth, SessionManifest};
use crate::skeleton::{
    filter_skeletons, read_stream, transform_frame, Confidence, SensorStream, SkeletonError, TrackingAreaConfig,
    DEFAULT_HOLD_US,
};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Format(#[from] FormatError),
    #[error("{path}: {source}")]
    Stream { path: PathBuf, source: SkeletonError },
    #[error("calibration failed: {0}")]
    Calibration(#[from] CalibrationError),
    #[error("session sensor {0:?} has no extrinsic in the calibration file")]
    UnknownSensor(String),
    #[error("session has no sensor {0:?}")]
    MissingSensor(String),
    #[error("depth stage ({0}): the session has no depth capture for this sensor")]
    MissingDepth(String),
    #[error("invalid config: {0}")]
    Config(String),
}

impl From<MatchError> for PipelineError {
    fn from(e: MatchError) -> Self {
        PipelineError::Config(e.to_string())
    }
}

impl From<MergeError> for PipelineError {
    fn from(e: MergeError) -> Self {
        PipelineError::Config(e.to_string())
    }
}

/// Every tunable of the pipeline in one JSON document. Missing fields take
/// their defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub icp: IcpParams,
    /// Crop radius around the reference person for calibration clouds, metres.
    pub person_radius: f64,
    pub icp_runs: usize,
    /// Joints below this confidence are ignored by the skeleton estimate.
    pub min_confidence: Confidence,
    pub matching: MatchConfig,
    pub tracking_area: TrackingAreaConfig,
    pub weights: WeightTable,
    pub tick_hz: f64,
    pub hold_us: i64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        let c = CalibrationConfig::default();
        PipelineConfig {
            icp: c.icp,
            person_radius: c.person_radius,
            icp_runs: c.icp_runs,
            min_confidence: c.min_confidence,
            matching: MatchConfig::default(),
            tracking_area: TrackingAreaConfig::default(),
            weights: WeightTable::default(),
            tick_hz: 30.0,
            hold_us: DEFAULT_HOLD_US,
        }
    }
}

impl PipelineConfig {
    pub fn load(path: &Path) -> Result<Self, PipelineError> {
        let cfg: PipelineConfig = read_json(path)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn calibration(&self) -> CalibrationConfig {
        CalibrationConfig {
            icp: self.icp,
            person_radius: self.person_radius,
            icp_runs: self.icp_runs,
            min_confidence: self.min_confidence,
        }
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        self.calibration().validate()?;
        self.matching.validate()?;
        self.weights.validate()?;
        self.tracking_area.validate().map_err(|e| PipelineError::Config(e.to_string()))?;
        if !(self.tick_hz > 0.0 && self.tick_hz.is_finite()) {
            return Err(PipelineError::Config("tick_hz must be positive".into()));
        }
        if self.hold_us < 0 {
            return Err(PipelineError::Config("hold_us must be non-negative".into()));
        }
        Ok(())
    }
}

/// A session directory loaded into memory (depth images stay on disk).
#[derive(Debug, Clone)]
pub struct Session {
    pub dir: PathBuf,
    pub manifest: SessionManifest,
    pub streams: Vec<SensorStream>,
}

impl Session {
    pub fn load(dir: &Path) -> Result<Self, PipelineError> {
        let manifest: SessionManifest = read_json(&dir.join(SessionManifest::FILE))?;
        let mut streams = Vec::with_capacity(manifest.sensors.len());
        for s in &manifest.sensors {
            let path = dir.join(&s.stream);
            let frames = read_stream(&path)?;
            let stream = SensorStream::new(s.sensor_id.clone(), frames).map_err(|source| PipelineError::Stream { path, source })?;
            streams.push(stream);
        }
        if !manifest.sensors.iter().any(|s| s.sensor_id == manifest.reference_sensor) {
            return Err(PipelineError::MissingSensor(manifest.reference_sensor.clone()));
        }
        Ok(Session { dir: dir.to_path_buf(), manifest, streams })
    }

    pub fn stream(&self, sensor_id: &str) -> Option<&SensorStream> {
        self.streams.iter().find(|s| s.sensor_id() == sensor_id)
    }

    pub fn sensor_ids(&self) -> Vec<&str> {
        self.streams.iter().map(|s| s.sensor_id()).collect()
    }

    fn depth_entries(&self, sensor_id: &str) -> &[SessionDepth] {
        self.manifest.sensors.iter().find(|s| s.sensor_id == sensor_id).map(|s| s.depth.as_slice()).unwrap_or(&[])
    }

    fn load_depth(&self, d: &SessionDepth) -> Result<DepthImage, PipelineError> {
        Ok(read_depth(&self.dir.join(&d.pgm), &self.dir.join(&d.meta))?.0)
    }

    /// What every sensor saw at the reference sensor's first depth capture.
    /// Other sensors' skeletons are resampled to that instant and paired
    /// with their depth image closest in time.
    pub fn calibration_captures(&self, hold_us: i64) -> Result<Vec<SensorCapture>, PipelineError> {
        let reference = &self.manifest.reference_sensor;
        let ref_depth = self
            .depth_entries(reference)
            .first()
            .ok_or_else(|| PipelineError::MissingDepth(reference.clone()))?;
        let t = ref_depth.timestamp_us;
        let mut out = Vec::with_capacity(self.streams.len());
        for stream in &self.streams {
            let id = stream.sensor_id();
            let depth = self.depth_entries(id).iter().min_by_key(|d| ((d.timestamp_us - t).abs(), d.timestamp_us));
            let depth = depth.map(|d| self.load_depth(d)).transpose()?;
            out.push(SensorCapture { sensor_id: id.to_string(), skeletons: stream.sample(t, hold_us), depth });
        }
        Ok(out)
    }
}

/// Calibrates every session sensor against the session's reference sensor.
pub fn calibrate_session(session: &Session, cfg: &PipelineConfig) -> Result<CalibrationResult, PipelineError> {
    cfg.validate()?;
    let captures = session.calibration_captures(cfg.hold_us)?;
    Ok(calibrate_captures(&captures, &session.manifest.reference_sensor, &cfg.calibration())?)
}

/// Tick times from the reference stream's first to last timestamp.
pub fn fusion_ticks(session: &Session, tick_hz: f64) -> Vec<i64> {
    let Some((t0, t1)) = session.stream(&session.manifest.reference_sensor).and_then(|s| s.time_span()) else {
        return Vec::new();
    };
    (0..)
        .map(|k: i64| t0 + (k as f64 * 1e6 / tick_hz).round() as i64)
        .take_while(|&t| t <= t1)
        .collect()
}

/// Keeps fused person ids stable across ticks by remembering which id each
/// `(sensor, body)` source last contributed to.
#[derive(Debug, Default, Clone)]
pub struct IdRegistry {
    by_source: BTreeMap<Source, u32>,
    taken: BTreeSet<u32>,
}

impl IdRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    /// Relabels `persons` in place; ids are unique within the slice.
    pub fn assign(&mut self, persons: &mut [FusedPerson]) {
        let mut used = BTreeSet::new();
        for p in persons.iter_mut() {
            let sources = p.provenance.sources();
            let known = sources.iter().filter_map(|s| self.by_source.get(s).copied()).find(|id| !used.contains(id));
            let id = known.unwrap_or_else(|| {
                let own = sources.first().map(|s| s.body_id);
                match own {
                    Some(b) if !self.taken.contains(&b) && !used.contains(&b) => b,
                    _ => self.taken.iter().chain(used.iter()).max().map_or(0, |m| m + 1),
                }
            });
            for s in sources {
                self.by_source.entry(s).or_insert(id);
            }
            self.taken.insert(id);
            used.insert(id);
            p.skeleton = p.skeleton.clone().with_body_id(id);
        }
    }
}

/// A sensor stream paired with its extrinsic (sensor → world).
pub struct PlacedStream<'a> {
    pub stream: &'a SensorStream,
    pub extrinsic: &'a RigidTransform,
}

/// Fuses the given streams at each tick. The first stream's persons seed
/// the fold; each further stream is matched against the running result.
pub fn fuse_streams(streams: &[PlacedStream<'_>], ticks: &[i64], cfg: &PipelineConfig) -> Vec<FusedFrame> {
    let mut registry = IdRegistry::new();
    let mut histories = vec![MatchHistory::new(); streams.len()];
    let mut out = Vec::with_capacity(ticks.len());
    for &t in ticks {
        let mut current: Vec<FusedPerson> = Vec::new();
        for (k, ps) in streams.iter().enumerate() {
            let world = transform_frame(ps.extrinsic, &ps.stream.sample(t, cfg.hold_us));
            let kept = filter_skeletons(&world, ps.extrinsic, &cfg.tracking_area);
            let observed: Vec<FusedPerson> =
                kept.into_skeletons().into_iter().map(|s| FusedPerson::observed(ps.stream.sensor_id(), s)).collect();
            if k == 0 {
                current = observed;
                registry.assign(&mut current);
                continue;
            }
            let side_a: Vec<_> = current.iter().map(|p| p.skeleton.clone()).collect();
            let side_b: Vec<_> = observed.iter().map(|p| p.skeleton.clone()).collect();
            let outcome = match_skeletons(&side_a, &side_b, &cfg.matching, &histories[k]);
            histories[k] = fuse_match_history(&outcome);
            current = fuse_frame(&current, &observed, &outcome, t, &cfg.weights).persons;
            registry.assign(&mut current);
        }
        out.push(FusedFrame { timestamp_us: t, persons: current });
    }
    out
}

/// Fuses a whole session with the reference sensor first and the others
/// in session order.
pub fn fuse_session(
    session: &Session,
    calibration: &CalibrationResult,
    cfg: &PipelineConfig,
) -> Result<Vec<FusedFrame>, PipelineError> {
    cfg.validate()?;
    let placed = placed_streams(session, calibration)?;
    Ok(fuse_streams(&placed, &fusion_ticks(session, cfg.tick_hz), cfg))
}

/// Session streams with their extrinsics, reference sensor first.
pub fn placed_streams<'a>(
    session: &'a Session,
    calibration: &'a CalibrationResult,
) -> Result<Vec<PlacedStream<'a>>, PipelineError> {
    let mut placed = Vec::with_capacity(session.streams.len());
    let reference = &session.manifest.reference_sensor;
    let order = session
        .streams
        .iter()
        .filter(|s| s.sensor_id() == reference)
        .chain(session.streams.iter().filter(|s| s.sensor_id() != reference));
    for stream in order {
        let extrinsic = calibration
            .extrinsic(stream.sensor_id())
            .ok_or_else(|| PipelineError::UnknownSensor(stream.sensor_id().to_string()))?;
        placed.push(PlacedStream { stream, extrinsic });
    }
    Ok(placed)
}
