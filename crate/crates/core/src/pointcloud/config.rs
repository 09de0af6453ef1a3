use serde::{Deserialize, Serialize};

use super::Point;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SensorMeta {
    pub name: String,
    pub rays_horizontal: usize,
    pub rays_vertical: usize,
    /// Hz.
    pub frequency: f64,
    /// Multiplier converting source units to meters.
    #[serde(default = "one")]
    pub unit_scale: f64,
}

fn one() -> f64 {
    1.0
}

impl SensorMeta {
    /// Ouster OS1-64 profile: 1024 x 64 beams at 10 Hz.
    pub fn os1_64() -> Self {
        SensorMeta {
            name: "OS1-64".into(),
            rays_horizontal: 1024,
            rays_vertical: 64,
            frequency: 10.0,
            unit_scale: 1.0,
        }
    }

    pub fn beam_count(&self) -> usize {
        self.rays_horizontal * self.rays_vertical
    }

    pub fn validate(&self, n_total: usize) -> Result<()> {
        if !(self.unit_scale > 0.0 && self.unit_scale.is_finite()) {
            return Err(Error::Config(format!(
                "sensor '{}': unit_scale must be positive",
                self.name
            )));
        }
        if !(self.frequency > 0.0) {
            return Err(Error::Config(format!(
                "sensor '{}': frequency must be positive",
                self.name
            )));
        }
        if self.beam_count() > n_total {
            return Err(Error::Config(format!(
                "sensor '{}': {} beams exceed n_total = {}",
                self.name,
                self.beam_count(),
                n_total
            )));
        }
        Ok(())
    }
}

/// Closed axis-aligned cuboid, in meters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CropBounds {
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
    pub z_min: f64,
    pub z_max: f64,
}

impl CropBounds {
    pub fn new(min: [f64; 3], max: [f64; 3]) -> Result<Self> {
        let b = CropBounds {
            x_min: min[0],
            x_max: max[0],
            y_min: min[1],
            y_max: max[1],
            z_min: min[2],
            z_max: max[2],
        };
        b.validate()?;
        Ok(b)
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.x_min < self.x_max && self.y_min < self.y_max && self.z_min < self.z_max;
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("degenerate crop bounds {self:?}")))
        }
    }

    pub fn contains_xyz(&self, x: f64, y: f64, z: f64) -> bool {
        self.x_min <= x
            && x <= self.x_max
            && self.y_min <= y
            && y <= self.y_max
            && self.z_min <= z
            && z <= self.z_max
    }

    pub fn contains(&self, p: &Point) -> bool {
        self.contains_xyz(p.x as f64, p.y as f64, p.z as f64)
    }
}

impl Default for CropBounds {
    fn default() -> Self {
        CropBounds {
            x_min: -50.0,
            x_max: 50.0,
            y_min: -50.0,
            y_max: 50.0,
            z_min: -10.0,
            z_max: 10.0,
        }
    }
}

/// Hyper-parameters of one statistical teacher.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TeacherConfig {
    pub n_total: usize,
    pub n_query: usize,
    pub n_bin: usize,
    pub n_tall: usize,
    /// Meters.
    pub d_threshold: f64,
    /// DBSCAN neighborhood radius, meters.
    pub epsilon: f64,
    pub min_pts: usize,
    pub l_min: f64,
    pub h_min: f64,
    pub beta_min: f64,
    pub crop: CropBounds,
}

impl Default for TeacherConfig {
    fn default() -> Self {
        TeacherConfig {
            n_total: 65536,
            n_query: 50,
            n_bin: 10,
            n_tall: 3,
            d_threshold: 0.2,
            epsilon: 0.7,
            min_pts: 5,
            l_min: 0.3,
            h_min: 0.5,
            beta_min: 0.2,
            crop: CropBounds::default(),
        }
    }
}

impl TeacherConfig {
    /// Checks the parameter invariants. `frames` is the sequence length when
    /// known, for the `n_query <= T` check.
    pub fn validate(&self, frames: Option<usize>) -> Result<()> {
        let fail = |msg: String| Err(Error::Config(msg));
        if self.n_total == 0 || self.n_query == 0 || self.n_bin == 0 || self.n_tall == 0 {
            return fail("n_total, n_query, n_bin and n_tall must be positive".into());
        }
        if self.n_tall > self.n_bin {
            return fail(format!(
                "n_tall = {} exceeds n_bin = {}",
                self.n_tall, self.n_bin
            ));
        }
        if self.min_pts == 0 {
            return fail("min_pts must be at least 1".into());
        }
        for (name, v) in [
            ("d_threshold", self.d_threshold),
            ("epsilon", self.epsilon),
            ("l_min", self.l_min),
            ("h_min", self.h_min),
            ("beta_min", self.beta_min),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return fail(format!("{name} must be positive, got {v}"));
            }
        }
        if let Some(t) = frames {
            if self.n_query > t {
                return fail(format!("n_query = {} exceeds {} frames", self.n_query, t));
            }
        }
        self.crop.validate()
    }
}
