//! The `skelfuse` command line. Data goes to files or stdout, diagnostics
//! to stderr; any failure exits non-zero.
//!
//! Configuration precedence: built-in defaults, then the `--config` file,
//! then command-specific flags.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use crate::calibration::CalibrationResult;
use crate::eval::{evaluate, DEFAULT_TIME_TOLERANCE_US};
use crate::formats::{read_depth, read_json, write_json, write_ply};
use crate::merging::{read_fused, write_fused};
use crate::pipeline::{
    calibrate_session, fuse_session, fuse_streams, placed_streams, PipelineConfig, Session,
};
use crate::sensor::backproject;
use crate::simulator::{generate_session, GroundTruth, Scene};

#[derive(Debug, Parser)]
#[command(name = "skelfuse", version, about = "Multi-sensor skeleton calibration and fusion")]
pub struct Cli {
    /// Pipeline configuration file (JSON).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Overrides the scene's random seed (simulate only; other commands are deterministic).
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[arg(long, short, global = true)]
    pub verbose: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic session from a scene file.
    Simulate {
        scene: PathBuf,
        #[arg(long, short)]
        out: PathBuf,
    },
    /// Convert a depth image to a PLY point cloud.
    Cloud {
        depth_pgm: PathBuf,
        /// Metadata sidecar; defaults to the PGM path with a .json extension.
        #[arg(long)]
        meta: Option<PathBuf>,
        #[arg(long, short)]
        out: PathBuf,
    },
    /// Compute sensor extrinsics from a session's calibration capture.
    Calibrate {
        session: PathBuf,
        #[arg(long, short)]
        out: PathBuf,
        #[command(flatten)]
        overrides: CalibrateFlags,
    },
    /// Fuse a session's skeleton streams into one stream.
    Fuse {
        session: PathBuf,
        #[arg(long)]
        calibration: PathBuf,
        #[arg(long, short)]
        out: PathBuf,
        #[command(flatten)]
        overrides: FuseFlags,
    },
    /// Score a fused stream against ground truth; prints JSON.
    Eval {
        fused: PathBuf,
        ground_truth: PathBuf,
        /// With --calibration, also score each sensor on its own.
        #[arg(long, requires = "calibration")]
        session: Option<PathBuf>,
        #[arg(long, requires = "session")]
        calibration: Option<PathBuf>,
        #[arg(long, default_value_t = DEFAULT_TIME_TOLERANCE_US)]
        tolerance_us: i64,
    },
}

#[derive(Debug, Args, Default)]
pub struct CalibrateFlags {
    #[arg(long)]
    pub icp_runs: Option<usize>,
    #[arg(long)]
    pub person_radius: Option<f64>,
    #[arg(long)]
    pub max_correspondence_dist: Option<f64>,
}

#[derive(Debug, Args, Default)]
pub struct FuseFlags {
    #[arg(long)]
    pub tick_hz: Option<f64>,
    #[arg(long)]
    pub hold_us: Option<i64>,
    #[arg(long)]
    pub d_easy: Option<f64>,
    #[arg(long)]
    pub d_max: Option<f64>,
}

fn load_config(path: Option<&Path>) -> Result<PipelineConfig> {
    match path {
        Some(p) => PipelineConfig::load(p).with_context(|| format!("loading config {}", p.display())),
        None => Ok(PipelineConfig::default()),
    }
}

fn finish(cfg: PipelineConfig) -> Result<PipelineConfig> {
    cfg.validate()?;
    Ok(cfg)
}

/// Runs one parsed command line; the returned text is written to stdout.
pub fn run(cli: &Cli) -> Result<String> {
    let log = |msg: String| {
        if cli.verbose {
            eprintln!("{msg}");
        }
    };
    match &cli.command {
        Command::Simulate { scene, out } => {
            let mut s: Scene = read_json(scene)?;
            if let Some(seed) = cli.seed {
                s.noise.seed = seed;
            }
            log(format!("simulating {} sensors, {} bodies", s.sensors.len(), s.bodies.len()));
            let summary = generate_session(&s, out).with_context(|| format!("writing session to {}", out.display()))?;
            Ok(format!(
                "session {}: {} sensors, {} frames per sensor, {} depth images, {} persons, seed {}\n",
                out.display(),
                summary.sensors,
                summary.frames_per_sensor,
                summary.depth_images,
                summary.persons,
                summary.seed
            ))
        }
        Command::Cloud { depth_pgm, meta, out } => {
            let meta = meta.clone().unwrap_or_else(|| crate::formats::sidecar_path(depth_pgm));
            let (img, m) = read_depth(depth_pgm, &meta)?;
            log(format!("depth {}x{} from sensor {:?} at {} us", m.width, m.height, m.sensor_id, m.timestamp_us));
            let cloud = backproject(&img);
            write_ply(out, &cloud)?;
            Ok(format!("{} points written to {}\n", cloud.len(), out.display()))
        }
        Command::Calibrate { session, out, overrides } => {
            let mut cfg = load_config(cli.config.as_deref())?;
            if let Some(v) = overrides.icp_runs {
                cfg.icp_runs = v;
            }
            if let Some(v) = overrides.person_radius {
                cfg.person_radius = v;
            }
            if let Some(v) = overrides.max_correspondence_dist {
                cfg.icp.max_correspondence_dist = v;
            }
            let cfg = finish(cfg)?;
            let s = Session::load(session)?;
            let result = calibrate_session(&s, &cfg)?;
            write_json(out, &result)?;
            let mut text = String::new();
            for (id, d) in &result.diagnostics {
                let refined = result.extrinsic(id).expect("diagnosed sensors are calibrated");
                let (da, dt) = d.initial.error_to(refined);
                text.push_str(&format!(
                    "{id}: {} joints, clouds {}/{} points, refinement moved {:.3} deg / {:.4} m",
                    d.joints_used,
                    d.source_points,
                    d.target_points,
                    da.to_degrees(),
                    dt
                ));
                for (k, r) in d.icp_runs.iter().enumerate() {
                    text.push_str(&format!("; run {}: rms {:.4} m after {} iterations", k + 1, r.rms, r.iterations));
                }
                text.push('\n');
            }
            Ok(text)
        }
        Command::Fuse { session, calibration, out, overrides } => {
            let mut cfg = load_config(cli.config.as_deref())?;
            if let Some(v) = overrides.tick_hz {
                cfg.tick_hz = v;
            }
            if let Some(v) = overrides.hold_us {
                cfg.hold_us = v;
            }
            if let Some(v) = overrides.d_easy {
                cfg.matching.d_easy = v;
            }
            if let Some(v) = overrides.d_max {
                cfg.matching.d_max = v;
            }
            let cfg = finish(cfg)?;
            let s = Session::load(session)?;
            let calib: CalibrationResult = read_json(calibration)?;
            let frames = fuse_session(&s, &calib, &cfg)?;
            write_fused(out, &frames)?;
            let persons: usize = frames.iter().map(|f| f.persons.len()).sum();
            Ok(format!("{} fused frames, {} person observations written to {}\n", frames.len(), persons, out.display()))
        }
        Command::Eval { fused, ground_truth, session, calibration, tolerance_us } => {
            let cfg = finish(load_config(cli.config.as_deref())?)?;
            let frames = read_fused(fused)?;
            if frames.is_empty() {
                bail!("{} contains no fused frames", fused.display());
            }
            let gt: GroundTruth = read_json(ground_truth)?;
            let mut singles = BTreeMap::new();
            if let (Some(session), Some(calibration)) = (session, calibration) {
                let s = Session::load(session)?;
                let calib: CalibrationResult = read_json(calibration)?;
                let ticks: Vec<i64> = frames.iter().map(|f| f.timestamp_us).collect();
                for placed in placed_streams(&s, &calib)? {
                    let id = placed.stream.sensor_id().to_string();
                    singles.insert(id, fuse_streams(&[placed], &ticks, &cfg));
                }
            }
            log(format!("scoring {} ticks against {} persons", frames.len(), gt.correspondences.len()));
            let report = evaluate(&frames, &gt, &singles, *tolerance_us)?;
            Ok(serde_json::to_string_pretty(&report)? + "\n")
        }
    }
}

/// Parses the process arguments, runs, and returns the exit code.
pub fn main() -> i32 {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(out) => {
            print!("{out}");
            0
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            1
        }
    }
}
