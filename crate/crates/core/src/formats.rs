//! File formats: 16-bit binary PGM depth images with JSON sidecars, ASCII
//! PLY point clouds, and the atomic write helper every writer goes through.

use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::Vec3;
use crate::sensor::{DepthImage, Intrinsics, PointCloud, SensorError};

#[derive(Debug, Error)]
pub enum FormatError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("{path}{}: {message}", line.map(|l| format!(":{l}")).unwrap_or_default())]
    Parse { path: PathBuf, line: Option<usize>, message: String },
}

impl FormatError {
    pub fn io(path: &Path, source: io::Error) -> Self {
        FormatError::Io { path: path.to_path_buf(), source }
    }

    pub fn parse(path: &Path, line: Option<usize>, message: impl Into<String>) -> Self {
        FormatError::Parse { path: path.to_path_buf(), line, message: message.into() }
    }
}

/// Writes via a temporary sibling file and a rename, creating parent
/// directories as needed.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), FormatError> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| FormatError::io(parent, e))?;
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    fs::write(&tmp, bytes).map_err(|e| FormatError::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| FormatError::io(path, e))
}

pub fn read_bytes(path: &Path) -> Result<Vec<u8>, FormatError> {
    fs::read(path).map_err(|e| FormatError::io(path, e))
}

pub fn read_string(path: &Path) -> Result<String, FormatError> {
    fs::read_to_string(path).map_err(|e| FormatError::io(path, e))
}

/// Parses a whole JSON document, reporting the failing line.
pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, FormatError> {
    let text = read_string(path)?;
    serde_json::from_str(&text).map_err(|e| FormatError::parse(path, Some(e.line()), e.to_string()))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), FormatError> {
    let mut text = serde_json::to_string_pretty(value).expect("serializable value");
    text.push('\n');
    write_atomic(path, text.as_bytes())
}

/// Sidecar describing a depth image.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DepthMeta {
    pub width: u32,
    pub height: u32,
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub sensor_id: String,
    pub timestamp_us: i64,
}

impl DepthMeta {
    pub fn new(k: &Intrinsics, sensor_id: &str, timestamp_us: i64) -> Self {
        DepthMeta {
            width: k.width,
            height: k.height,
            fx: k.fx,
            fy: k.fy,
            cx: k.cx,
            cy: k.cy,
            sensor_id: sensor_id.to_string(),
            timestamp_us,
        }
    }

    pub fn intrinsics(&self) -> Result<Intrinsics, SensorError> {
        Intrinsics::new(self.width, self.height, self.fx, self.fy, self.cx, self.cy)
    }
}

/// Binary P5 with maxval 65535, big-endian samples.
pub fn encode_pgm(width: u32, height: u32, data: &[u16]) -> Vec<u8> {
    let mut out = format!("P5\n{width} {height}\n65535\n").into_bytes();
    out.reserve(data.len() * 2);
    for d in data {
        out.extend_from_slice(&d.to_be_bytes());
    }
    out
}

/// Decodes a 16-bit P5 image into `(width, height, samples)`. Any maxval
/// other than 65535 is rejected.
pub fn decode_pgm(bytes: &[u8]) -> Result<(u32, u32, Vec<u16>), String> {
    let mut pos = 0usize;
    let mut fields = Vec::with_capacity(4);
    while fields.len() < 4 {
        // whitespace and comments between header tokens
        loop {
            match bytes.get(pos) {
                Some(b) if b.is_ascii_whitespace() => pos += 1,
                Some(b'#') => {
                    while let Some(&b) = bytes.get(pos) {
                        pos += 1;
                        if b == b'\n' {
                            break;
                        }
                    }
                }
                Some(_) => break,
                None => return Err("truncated header".into()),
            }
        }
        let start = pos;
        while bytes.get(pos).is_some_and(|b| !b.is_ascii_whitespace()) {
            pos += 1;
        }
        fields.push(std::str::from_utf8(&bytes[start..pos]).map_err(|_| "header is not ASCII")?.to_string());
    }
    if fields[0] != "P5" {
        return Err(format!("unsupported magic {:?}, expected P5", fields[0]));
    }
    let parse = |s: &str, what: &str| s.parse::<u32>().map_err(|_| format!("invalid {what} {s:?}"));
    let width = parse(&fields[1], "width")?;
    let height = parse(&fields[2], "height")?;
    let maxval = parse(&fields[3], "maxval")?;
    if maxval != 65535 {
        return Err(format!("maxval must be 65535, got {maxval}"));
    }
    // exactly one whitespace byte separates the header from the raster
    if !bytes.get(pos).is_some_and(|b| b.is_ascii_whitespace()) {
        return Err("truncated header".into());
    }
    pos += 1;
    let n = width as usize * height as usize;
    let raster = &bytes[pos..];
    if raster.len() != 2 * n {
        return Err(format!("raster has {} bytes, expected {}", raster.len(), 2 * n));
    }
    let data = raster.chunks_exact(2).map(|c| u16::from_be_bytes([c[0], c[1]])).collect();
    Ok((width, height, data))
}

/// Path of the JSON sidecar next to a PGM: `foo.pgm` → `foo.json`.
pub fn sidecar_path(pgm: &Path) -> PathBuf {
    pgm.with_extension("json")
}

pub fn write_depth(pgm: &Path, img: &DepthImage, sensor_id: &str, timestamp_us: i64) -> Result<(), FormatError> {
    let k = img.intrinsics();
    write_atomic(pgm, &encode_pgm(k.width, k.height, img.data()))?;
    write_json(&sidecar_path(pgm), &DepthMeta::new(k, sensor_id, timestamp_us))
}

/// Loads a depth image and its metadata; sizes must agree.
pub fn read_depth(pgm: &Path, meta: &Path) -> Result<(DepthImage, DepthMeta), FormatError> {
    let meta_value: DepthMeta = read_json(meta)?;
    let k = meta_value.intrinsics().map_err(|e| FormatError::parse(meta, None, e.to_string()))?;
    let (w, h, data) = decode_pgm(&read_bytes(pgm)?).map_err(|m| FormatError::parse(pgm, None, m))?;
    if (w, h) != (k.width, k.height) {
        return Err(FormatError::parse(
            pgm,
            None,
            format!("image is {w}x{h} but metadata says {}x{}", k.width, k.height),
        ));
    }
    let img = DepthImage::new(k, data).map_err(|e| FormatError::parse(pgm, None, e.to_string()))?;
    Ok((img, meta_value))
}

/// ASCII PLY with float x, y, z per vertex, six decimals.
pub fn encode_ply(cloud: &PointCloud) -> String {
    let mut out = String::with_capacity(64 + cloud.len() * 32);
    out.push_str("ply\nformat ascii 1.0\n");
    let _ = writeln!(out, "element vertex {}", cloud.len());
    out.push_str("property float x\nproperty float y\nproperty float z\nend_header\n");
    for p in cloud.points() {
        let _ = writeln!(out, "{:.6} {:.6} {:.6}", p.x, p.y, p.z);
    }
    out
}

pub fn write_ply(path: &Path, cloud: &PointCloud) -> Result<(), FormatError> {
    write_atomic(path, encode_ply(cloud).as_bytes())
}

/// Reads the vertex positions written by [`encode_ply`].
pub fn decode_ply(text: &str) -> Result<PointCloud, (usize, String)> {
    let mut lines = text.lines().enumerate();
    let mut count = None;
    let mut header_ok = false;
    match lines.next() {
        Some((_, "ply")) => {}
        _ => return Err((1, "missing ply magic".into())),
    }
    for (i, line) in lines.by_ref() {
        let line = line.trim();
        if line == "end_header" {
            header_ok = true;
            break;
        }
        if let Some(rest) = line.strip_prefix("format ") {
            if rest != "ascii 1.0" {
                return Err((i + 1, format!("unsupported format {rest:?}")));
            }
        } else if let Some(rest) = line.strip_prefix("element vertex ") {
            count = Some(rest.parse::<usize>().map_err(|_| (i + 1, "bad vertex count".to_string()))?);
        }
    }
    if !header_ok {
        return Err((0, "missing end_header".into()));
    }
    let count = count.ok_or((0, "missing vertex element".to_string()))?;
    let mut points = Vec::with_capacity(count);
    for (i, line) in lines.take(count) {
        let vals: Result<Vec<f64>, _> = line.split_whitespace().take(3).map(str::parse).collect();
        match vals {
            Ok(v) if v.len() == 3 => points.push(Vec3::new(v[0], v[1], v[2])),
            _ => return Err((i + 1, "malformed vertex".into())),
        }
    }
    if points.len() != count {
        return Err((0, format!("expected {count} vertices, found {}", points.len())));
    }
    PointCloud::new(points).map_err(|e| (0, e.to_string()))
}
