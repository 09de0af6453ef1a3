use std::f64::consts::PI;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use super::{Frame, FrameSequence, LabelSource, ObjectClass, ObjectLabel, Point, SensorMeta};
use crate::error::{Error, Result};

/// x, y, z, intensity as little-endian `f32`.
pub const BYTES_PER_POINT: usize = 16;

const LABEL_TOKENS: usize = 9;

/// Decodes one frame file. Records whose coordinates are all zero or not
/// finite are sensor no-returns and become padding.
pub fn decode_frame(bytes: &[u8]) -> Option<Vec<Point>> {
    if !bytes.len().is_multiple_of(BYTES_PER_POINT) {
        return None;
    }
    let points = bytes
        .chunks_exact(BYTES_PER_POINT)
        .map(|rec| {
            let f = |i: usize| f32::from_le_bytes(rec[i * 4..i * 4 + 4].try_into().unwrap());
            let (x, y, z) = (f(0), f(1), f(2));
            if !(x.is_finite() && y.is_finite() && z.is_finite()) || (x == 0.0 && y == 0.0 && z == 0.0)
            {
                Point::PADDING
            } else {
                Point::new(x, y, z)
            }
        })
        .collect();
    Some(points)
}

pub fn encode_frame(points: &[Point]) -> Vec<u8> {
    let mut out = Vec::with_capacity(points.len() * BYTES_PER_POINT);
    for p in points {
        let rec = if p.padding {
            [0.0f32; 4]
        } else {
            [p.x, p.y, p.z, 0.0]
        };
        for v in rec {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

pub fn write_frame_file(path: &Path, points: &[Point]) -> Result<()> {
    fs::write(path, encode_frame(points)).map_err(|e| Error::io(path, e))
}

/// Sorted `(stem, path)` pairs of every `.bin` file in `dir`.
pub fn frame_stems(dir: &Path) -> Result<Vec<(String, PathBuf)>> {
    list_with_extension(dir, "bin")
}

fn list_with_extension(dir: &Path, ext: &str) -> Result<Vec<(String, PathBuf)>> {
    let entries = fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut files = Vec::new();
    for entry in entries {
        let entry = entry.map_err(|e| Error::io(dir, e))?;
        let path = entry.path();
        if !path.is_file() || path.extension().and_then(|e| e.to_str()) != Some(ext) {
            continue;
        }
        let Some(stem) = path.file_stem().and_then(|s| s.to_str()) else {
            continue;
        };
        files.push((stem.to_owned(), path));
    }
    files.sort_by(|a, b| a.1.file_name().cmp(&b.1.file_name()));
    Ok(files)
}

/// Loads every `.bin` frame in `dir`, ordered by file name. Units are left
/// as stored.
pub fn load_frame_sequence(dir: &Path, meta: SensorMeta) -> Result<FrameSequence> {
    if !dir.is_dir() {
        return Err(Error::io(
            dir,
            std::io::Error::new(std::io::ErrorKind::NotFound, "frame directory not found"),
        ));
    }
    let files = frame_stems(dir)?;
    let mut frames = Vec::with_capacity(files.len());
    for (t, (stem, path)) in files.into_iter().enumerate() {
        let bytes = fs::read(&path).map_err(|e| Error::io(&path, e))?;
        let points = decode_frame(&bytes).ok_or(Error::MalformedFrame {
            path: path.clone(),
            len: bytes.len(),
        })?;
        frames.push(Frame::new(t + 1, stem, points));
    }
    FrameSequence::new(frames, meta)
}

/// Labels of one frame, keyed by the frame's file stem.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameLabels {
    pub stem: String,
    pub labels: Vec<ObjectLabel>,
}

impl FrameLabels {
    pub fn new(stem: impl Into<String>, labels: Vec<ObjectLabel>) -> Self {
        FrameLabels {
            stem: stem.into(),
            labels,
        }
    }
}

pub fn render_labels(labels: &[ObjectLabel]) -> String {
    let mut out = String::new();
    for l in labels {
        writeln!(
            out,
            "{} {:.6} {:.6} {:.6} {:.6} {:.6} {:.6} {:.6} {:.6}",
            l.class,
            l.center_x,
            l.center_y,
            l.center_z,
            l.length,
            l.width,
            l.height,
            l.yaw,
            l.score
        )
        .unwrap();
    }
    out
}

pub fn write_label_file(path: &Path, labels: &[ObjectLabel]) -> Result<()> {
    fs::write(path, render_labels(labels)).map_err(|e| Error::io(path, e))
}

/// Writes `<stem>.txt` for every frame into `dir`, creating it if needed.
pub fn write_labels(dir: &Path, frames: &[FrameLabels]) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    for f in frames {
        write_label_file(&dir.join(format!("{}.txt", f.stem)), &f.labels)?;
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelParseError {
    /// 1-based.
    pub line: usize,
    pub reason: String,
}

/// Parses the text of one label file. Blank lines are ignored.
pub fn parse_labels(text: &str, source: LabelSource) -> Result<Vec<ObjectLabel>, LabelParseError> {
    let mut labels = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let err = |reason: String| LabelParseError {
            line: idx + 1,
            reason,
        };
        let tokens: Vec<&str> = line.split_whitespace().collect();
        if tokens.len() != LABEL_TOKENS {
            return Err(err(format!(
                "expected {LABEL_TOKENS} tokens, found {}",
                tokens.len()
            )));
        }
        let class: ObjectClass = tokens[0].parse().map_err(err)?;
        let mut v = [0.0f64; LABEL_TOKENS - 1];
        for (slot, tok) in v.iter_mut().zip(&tokens[1..]) {
            *slot = tok
                .parse::<f64>()
                .ok()
                .filter(|x| x.is_finite())
                .ok_or_else(|| err(format!("unparsable number '{tok}'")))?;
        }
        let [cx, cy, cz, length, width, height, yaw, score] = v;
        if !(length > 0.0 && width > 0.0 && height > 0.0) {
            return Err(err("box dimensions must be positive".into()));
        }
        if !(0.0..=1.0).contains(&score) {
            return Err(err(format!("score {score} outside [0, 1]")));
        }
        // Six-decimal rounding can push a yaw just below -π or up to π.
        if yaw.abs() > PI + 1e-6 {
            return Err(err(format!("yaw {yaw} outside [-pi, pi)")));
        }
        let label = if width > length {
            ObjectLabel::new([cx, cy, cz], [length, width, height], yaw, class, score, source)
        } else {
            ObjectLabel {
                center_x: cx,
                center_y: cy,
                center_z: cz,
                length,
                width,
                height,
                yaw,
                class,
                score,
                source,
            }
        };
        labels.push(label);
    }
    Ok(labels)
}

pub fn read_label_file(path: &Path, source: LabelSource) -> Result<Vec<ObjectLabel>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_labels(&text, source).map_err(|e| Error::MalformedLabel {
        path: path.to_owned(),
        line: e.line,
        reason: e.reason,
    })
}

/// Reads every `.txt` label file in `dir`, ordered by stem.
pub fn read_labels(dir: &Path, source: LabelSource) -> Result<Vec<FrameLabels>> {
    list_with_extension(dir, "txt")?
        .into_iter()
        .map(|(stem, path)| Ok(FrameLabels::new(stem, read_label_file(&path, source)?)))
        .collect()
}
