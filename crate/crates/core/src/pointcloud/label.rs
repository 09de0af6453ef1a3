use std::f64::consts::{FRAC_PI_2, PI, TAU};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ObjectClass {
    Vehicle,
    Pedestrian,
}

impl ObjectClass {
    pub const ALL: [ObjectClass; 2] = [ObjectClass::Vehicle, ObjectClass::Pedestrian];

    pub fn as_str(&self) -> &'static str {
        match self {
            ObjectClass::Vehicle => "Vehicle",
            ObjectClass::Pedestrian => "Pedestrian",
        }
    }
}

impl fmt::Display for ObjectClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ObjectClass {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "Vehicle" => Ok(ObjectClass::Vehicle),
            "Pedestrian" => Ok(ObjectClass::Pedestrian),
            other => Err(format!("unknown class '{other}'")),
        }
    }
}

/// Where a label came from: the statistical teacher or an external detector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum LabelSource {
    Teacher,
    External,
}

/// Wraps an angle into `[-π, π)`.
pub fn normalize_yaw(yaw: f64) -> f64 {
    let mut a = yaw - TAU * ((yaw + PI) / TAU).floor();
    if a >= PI {
        a -= TAU;
    }
    if a < -PI {
        a = -PI;
    }
    a
}

/// An oriented 3D box with a class and a confidence score.
///
/// `length` is the extent along `yaw`, and is kept `>= width`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObjectLabel {
    pub center_x: f64,
    pub center_y: f64,
    pub center_z: f64,
    pub length: f64,
    pub width: f64,
    pub height: f64,
    pub yaw: f64,
    pub class: ObjectClass,
    pub score: f64,
    pub source: LabelSource,
}

impl ObjectLabel {
    /// Builds a label, swapping length and width (and turning the yaw by a
    /// quarter turn) when needed so that `length >= width`.
    pub fn new(
        center: [f64; 3],
        dims: [f64; 3],
        yaw: f64,
        class: ObjectClass,
        score: f64,
        source: LabelSource,
    ) -> Self {
        let [mut length, mut width, height] = dims;
        let mut yaw = yaw;
        if width > length {
            std::mem::swap(&mut length, &mut width);
            yaw += FRAC_PI_2;
        }
        ObjectLabel {
            center_x: center[0],
            center_y: center[1],
            center_z: center[2],
            length,
            width,
            height,
            yaw: normalize_yaw(yaw),
            class,
            score,
            source,
        }
    }

    pub fn center(&self) -> [f64; 3] {
        [self.center_x, self.center_y, self.center_z]
    }

    pub fn dims(&self) -> [f64; 3] {
        [self.length, self.width, self.height]
    }

    pub fn volume(&self) -> f64 {
        self.length * self.width * self.height
    }

    /// Distance from the sensor origin to the box center.
    pub fn center_range(&self) -> f64 {
        let [x, y, z] = self.center();
        (x * x + y * y + z * z).sqrt()
    }

    pub fn base_length(&self) -> f64 {
        self.length.max(self.width)
    }

    /// Footprint corners, counter-clockwise.
    pub fn footprint(&self) -> [[f64; 2]; 4] {
        let (s, c) = self.yaw.sin_cos();
        let (hl, hw) = (self.length / 2.0, self.width / 2.0);
        [(hl, hw), (-hl, hw), (-hl, -hw), (hl, -hw)].map(|(u, v)| {
            [
                self.center_x + u * c - v * s,
                self.center_y + u * s + v * c,
            ]
        })
    }

    pub fn z_range(&self) -> (f64, f64) {
        let h = self.height / 2.0;
        (self.center_z - h, self.center_z + h)
    }

    pub fn with_source(mut self, source: LabelSource) -> Self {
        self.source = source;
        self
    }
}
