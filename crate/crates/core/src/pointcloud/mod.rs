//! Frames, labels and teacher configuration shared by every stage, plus the
//! on-disk frame and label formats.

mod config;
mod io;
mod label;

pub use config::{CropBounds, SensorMeta, TeacherConfig};
pub use io::{
    decode_frame, encode_frame, frame_stems, load_frame_sequence, parse_labels, read_label_file,
    read_labels, render_labels, write_frame_file, write_label_file, write_labels, FrameLabels,
    LabelParseError, BYTES_PER_POINT,
};
pub use label::{normalize_yaw, LabelSource, ObjectClass, ObjectLabel};

use crate::error::{Error, Result};

/// One LiDAR return in sensor-centered meters.
///
/// A padding point stands in for a missing return (or a point removed by a
/// later stage) so that index `j` of a frame keeps referring to the same beam.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Point {
    pub x: f32,
    pub y: f32,
    pub z: f32,
    pub padding: bool,
}

impl Point {
    pub const PADDING: Point = Point {
        x: 0.0,
        y: 0.0,
        z: 0.0,
        padding: true,
    };

    pub fn new(x: f32, y: f32, z: f32) -> Self {
        Point {
            x,
            y,
            z,
            padding: false,
        }
    }

    pub fn is_padding(&self) -> bool {
        self.padding
    }

    /// Euclidean distance from the sensor origin.
    #[inline]
    pub fn range(&self) -> f64 {
        let (x, y, z) = (self.x as f64, self.y as f64, self.z as f64);
        (x * x + y * y + z * z).sqrt()
    }

    pub fn coords(&self) -> [f64; 3] {
        [self.x as f64, self.y as f64, self.z as f64]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    /// 1-based position in the sequence.
    pub timestamp_index: usize,
    /// File stem the frame was loaded from; label files reuse it.
    pub stem: String,
    pub points: Vec<Point>,
}

impl Frame {
    pub fn new(timestamp_index: usize, stem: impl Into<String>, points: Vec<Point>) -> Self {
        Frame {
            timestamp_index,
            stem: stem.into(),
            points,
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn data_points(&self) -> impl Iterator<Item = (usize, &Point)> {
        self.points.iter().enumerate().filter(|(_, p)| !p.padding)
    }

    pub fn data_count(&self) -> usize {
        self.points.iter().filter(|p| !p.padding).count()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FrameSequence {
    pub frames: Vec<Frame>,
    pub meta: SensorMeta,
}

impl FrameSequence {
    pub fn new(frames: Vec<Frame>, meta: SensorMeta) -> Result<Self> {
        if frames.is_empty() {
            return Err(Error::EmptySequence);
        }
        if frames
            .windows(2)
            .any(|w| w[0].timestamp_index >= w[1].timestamp_index)
        {
            return Err(Error::Invariant(
                "timestamp indices must be strictly increasing".into(),
            ));
        }
        Ok(FrameSequence { frames, meta })
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    /// Common point count of all frames, if they agree.
    pub fn uniform_arity(&self) -> Option<usize> {
        let n = self.frames.first()?.len();
        self.frames.iter().all(|f| f.len() == n).then_some(n)
    }
}
