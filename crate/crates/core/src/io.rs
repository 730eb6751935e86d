//! File formats and configuration loading.
//!
//! Detection, ground-truth, and track files are line-delimited JSON with a
//! one-line schema header, one object per line, ordered by (sequence,
//! frame). An optional `sequence` field partitions multi-sequence files;
//! tracking and evaluation treat sequences independently. Configuration
//! files are flat TOML.
//!
//! When a detection file is read for tracking, each sequence's frame axis is
//! the contiguous range between its first and last frame: a frame with no
//! rows still counts as one update opportunity (fixed-rate capture).

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::{validate_detection, Detection};
use crate::eval::GtAnnotation;
use crate::pipeline::{FrameOutput, TrackRecord};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum FileError {
    /// Content error; the message always carries the path and 1-based line.
    #[error("{path}:{line}: {msg}")]
    Parse {
        path: String,
        line: usize,
        msg: String,
    },
    #[error("i/o failure on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// Semantic configuration error (value out of range, inconsistent fields).
#[derive(Debug, Error, PartialEq)]
#[error("config error: {0}")]
pub struct ConfigError(pub String);

fn io_err(path: &Path, source: std::io::Error) -> FileError {
    FileError::Io {
        path: path.display().to_string(),
        source,
    }
}

fn parse_err(path: &Path, line: usize, msg: impl Into<String>) -> FileError {
    FileError::Parse {
        path: path.display().to_string(),
        line,
        msg: msg.into(),
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    schema: String,
    version: u32,
}

#[derive(Debug, Serialize, Deserialize)]
struct DetectionRow {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    sequence: Option<String>,
    frame: u64,
    class: String,
    x: f64,
    y: f64,
    z: f64,
    l: f64,
    w: f64,
    h: f64,
    yaw: f64,
    score: f64,
}

#[derive(Debug, Serialize, Deserialize)]
struct GtRow {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    sequence: Option<String>,
    frame: u64,
    instance_id: u64,
    class: String,
    x: f64,
    y: f64,
    z: f64,
    l: f64,
    w: f64,
    h: f64,
    yaw: f64,
}

#[derive(Debug, Serialize, Deserialize)]
struct TrackRow {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    sequence: Option<String>,
    frame: u64,
    track_id: u64,
    class: String,
    x: f64,
    y: f64,
    z: f64,
    l: f64,
    w: f64,
    h: f64,
    yaw: f64,
    score: f64,
    active: bool,
}

fn write_lines(path: &Path, schema: &str, lines: Vec<String>) -> Result<(), FileError> {
    let mut out = String::new();
    let header = Header {
        schema: schema.to_string(),
        version: FORMAT_VERSION,
    };
    out.push_str(&serde_json::to_string(&header).expect("header serializes"));
    out.push('\n');
    for line in lines {
        out.push_str(&line);
        out.push('\n');
    }
    let mut file = fs::File::create(path).map_err(|e| io_err(path, e))?;
    file.write_all(out.as_bytes()).map_err(|e| io_err(path, e))
}

/// Reads and checks the header, then parses each remaining non-empty line.
fn read_rows<T: DeserializeOwned>(path: &Path, schema: &str) -> Result<Vec<(usize, T)>, FileError> {
    let content = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    let mut lines = content.lines().enumerate();
    let (_, header_line) = lines
        .next()
        .ok_or_else(|| parse_err(path, 1, "empty file, expected schema header"))?;
    let header: Header = serde_json::from_str(header_line)
        .map_err(|e| parse_err(path, 1, format!("bad schema header: {e}")))?;
    if header.schema != schema {
        return Err(parse_err(
            path,
            1,
            format!("schema is `{}`, expected `{}`", header.schema, schema),
        ));
    }
    if header.version != FORMAT_VERSION {
        return Err(parse_err(
            path,
            1,
            format!("unsupported format version {}", header.version),
        ));
    }
    let mut rows = Vec::new();
    for (idx, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let lineno = idx + 1;
        let row: T =
            serde_json::from_str(line).map_err(|e| parse_err(path, lineno, e.to_string()))?;
        rows.push((lineno, row));
    }
    Ok(rows)
}

fn seq_key(sequence: Option<String>) -> String {
    sequence.unwrap_or_default()
}

fn check_frame_order(
    path: &Path,
    line: usize,
    last: &mut BTreeMap<String, u64>,
    seq: &str,
    frame: u64,
) -> Result<(), FileError> {
    if let Some(&prev) = last.get(seq) {
        if frame < prev {
            return Err(parse_err(
                path,
                line,
                format!("frame {frame} after frame {prev} in sequence `{seq}`"),
            ));
        }
    }
    last.insert(seq.to_string(), frame);
    Ok(())
}

/// Detections grouped per sequence over a contiguous frame axis.
pub type DetectionStreams = BTreeMap<String, Vec<(u64, Vec<Detection>)>>;

pub fn write_detections(
    path: &Path,
    streams: &BTreeMap<String, Vec<Detection>>,
) -> Result<(), FileError> {
    let mut lines = Vec::new();
    for (seq, dets) in streams {
        let sequence = (!seq.is_empty()).then(|| seq.clone());
        for d in dets {
            let row = DetectionRow {
                sequence: sequence.clone(),
                frame: d.frame,
                class: d.class_label.clone(),
                x: d.cx,
                y: d.cy,
                z: d.cz,
                l: d.length,
                w: d.width,
                h: d.height,
                yaw: d.yaw,
                score: d.score,
            };
            lines.push(serde_json::to_string(&row).expect("row serializes"));
        }
    }
    write_lines(path, "detections", lines)
}

pub fn read_detections(path: &Path) -> Result<DetectionStreams, FileError> {
    let rows: Vec<(usize, DetectionRow)> = read_rows(path, "detections")?;
    let mut last = BTreeMap::new();
    let mut by_seq: BTreeMap<String, BTreeMap<u64, Vec<Detection>>> = BTreeMap::new();
    for (line, row) in rows {
        let seq = seq_key(row.sequence);
        check_frame_order(path, line, &mut last, &seq, row.frame)?;
        let det = Detection {
            frame: row.frame,
            class_label: row.class,
            cx: row.x,
            cy: row.y,
            cz: row.z,
            length: row.l,
            width: row.w,
            height: row.h,
            yaw: row.yaw,
            score: row.score,
        };
        let det = validate_detection(det).map_err(|e| parse_err(path, line, e.to_string()))?;
        by_seq
            .entry(seq)
            .or_default()
            .entry(row.frame)
            .or_default()
            .push(det);
    }
    Ok(by_seq
        .into_iter()
        .map(|(seq, frames)| {
            let first = *frames.keys().next().expect("non-empty sequence");
            let last = *frames.keys().next_back().expect("non-empty sequence");
            let mut filled = Vec::with_capacity((last - first + 1) as usize);
            let mut frames = frames;
            for f in first..=last {
                filled.push((f, frames.remove(&f).unwrap_or_default()));
            }
            (seq, filled)
        })
        .collect())
}

pub fn write_gt(
    path: &Path,
    streams: &BTreeMap<String, Vec<GtAnnotation>>,
) -> Result<(), FileError> {
    let mut lines = Vec::new();
    for (seq, annotations) in streams {
        let sequence = (!seq.is_empty()).then(|| seq.clone());
        for g in annotations {
            let row = GtRow {
                sequence: sequence.clone(),
                frame: g.frame,
                instance_id: g.instance_id,
                class: g.class_label.clone(),
                x: g.cx,
                y: g.cy,
                z: g.cz,
                l: g.length,
                w: g.width,
                h: g.height,
                yaw: g.yaw,
            };
            lines.push(serde_json::to_string(&row).expect("row serializes"));
        }
    }
    write_lines(path, "ground_truth", lines)
}

pub fn read_gt(path: &Path) -> Result<BTreeMap<String, Vec<GtAnnotation>>, FileError> {
    let rows: Vec<(usize, GtRow)> = read_rows(path, "ground_truth")?;
    let mut last = BTreeMap::new();
    let mut by_seq: BTreeMap<String, Vec<GtAnnotation>> = BTreeMap::new();
    for (line, row) in rows {
        let seq = seq_key(row.sequence);
        check_frame_order(path, line, &mut last, &seq, row.frame)?;
        for (name, v) in [("x", row.x), ("y", row.y), ("z", row.z), ("yaw", row.yaw)] {
            if !v.is_finite() {
                return Err(parse_err(path, line, format!("non-finite {name}")));
            }
        }
        by_seq.entry(seq).or_default().push(GtAnnotation {
            frame: row.frame,
            instance_id: row.instance_id,
            class_label: row.class,
            cx: row.x,
            cy: row.y,
            cz: row.z,
            length: row.l,
            width: row.w,
            height: row.h,
            yaw: row.yaw,
        });
    }
    Ok(by_seq)
}

pub fn write_tracks(
    path: &Path,
    streams: &BTreeMap<String, Vec<FrameOutput>>,
) -> Result<(), FileError> {
    let mut lines = Vec::new();
    for (seq, frames) in streams {
        let sequence = (!seq.is_empty()).then(|| seq.clone());
        for frame in frames {
            for t in &frame.tracks {
                let row = TrackRow {
                    sequence: sequence.clone(),
                    frame: frame.frame,
                    track_id: t.id,
                    class: t.class_label.clone(),
                    x: t.cx,
                    y: t.cy,
                    z: t.cz,
                    l: t.length,
                    w: t.width,
                    h: t.height,
                    yaw: t.yaw,
                    score: t.score,
                    active: t.active,
                };
                lines.push(serde_json::to_string(&row).expect("row serializes"));
            }
        }
    }
    write_lines(path, "tracks", lines)
}

pub fn read_tracks(path: &Path) -> Result<BTreeMap<String, Vec<FrameOutput>>, FileError> {
    let rows: Vec<(usize, TrackRow)> = read_rows(path, "tracks")?;
    let mut last = BTreeMap::new();
    let mut by_seq: BTreeMap<String, BTreeMap<u64, Vec<TrackRecord>>> = BTreeMap::new();
    for (line, row) in rows {
        let seq = seq_key(row.sequence);
        check_frame_order(path, line, &mut last, &seq, row.frame)?;
        if !(0.0..=1.0).contains(&row.score) {
            return Err(parse_err(
                path,
                line,
                format!("score {} outside [0, 1]", row.score),
            ));
        }
        by_seq
            .entry(seq)
            .or_default()
            .entry(row.frame)
            .or_default()
            .push(TrackRecord {
                id: row.track_id,
                class_label: row.class,
                cx: row.x,
                cy: row.y,
                cz: row.z,
                length: row.l,
                width: row.w,
                height: row.h,
                yaw: row.yaw,
                score: row.score,
                active: row.active,
            });
    }
    Ok(by_seq
        .into_iter()
        .map(|(seq, frames)| {
            let outputs = frames
                .into_iter()
                .map(|(frame, tracks)| FrameOutput { frame, tracks })
                .collect();
            (seq, outputs)
        })
        .collect())
}

fn toml_line(content: &str, err: &toml::de::Error) -> usize {
    err.span()
        .map(|span| {
            content[..span.start.min(content.len())]
                .lines()
                .count()
                .max(1)
        })
        .unwrap_or(1)
}

/// Loads any TOML-encoded configuration value.
pub fn load_toml<T: DeserializeOwned>(path: &Path) -> Result<T, FileError> {
    let content = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    toml::from_str(&content).map_err(|e| parse_err(path, toml_line(&content, &e), e.message()))
}

/// Serializes a configuration value to TOML.
pub fn to_toml<T: Serialize>(value: &T) -> String {
    toml::to_string(value).expect("config serializes")
}
