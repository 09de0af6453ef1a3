//! Synthetic roadside scenes with exact ground truth.
//!
//! A stationary spinning sensor casts one ray per beam per frame against a
//! static set (ground plane, vertical walls, poles, foliage crowns) and a set
//! of moving actors (oriented cuboids and vertical cylinders). Each frame
//! yields the returned points in beam order, a per-beam mask telling
//! background from foreground, and the actors' oriented boxes.

use std::f64::consts::TAU;
use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pointcloud::{
    write_frame_file, write_labels, CropBounds, Frame, FrameLabels, FrameSequence, LabelSource,
    ObjectClass, ObjectLabel, Point, SensorMeta, TeacherConfig,
};

/// Per-beam ground-truth mask values.
pub const MASK_MISS: u8 = 0;
pub const MASK_BACKGROUND: u8 = 1;
pub const MASK_FOREGROUND: u8 = 2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimSensor {
    pub name: String,
    /// World position of the sensor; emitted points are relative to it.
    pub origin: [f64; 3],
    pub rays_horizontal: usize,
    pub rays_vertical: usize,
    /// Degrees.
    pub vfov_lower: f64,
    pub vfov_upper: f64,
    pub frequency: f64,
    /// Standard deviation of additive range noise, meters.
    pub range_noise: f64,
    pub max_range: f64,
    pub n_total: usize,
}

impl SimSensor {
    /// OS1-64-like profile mounted 4 m above the ground.
    pub fn os1_64() -> Self {
        SimSensor {
            name: "OS1-64".into(),
            origin: [0.0, 0.0, 4.0],
            rays_horizontal: 1024,
            rays_vertical: 64,
            vfov_lower: -22.5,
            vfov_upper: 22.5,
            frequency: 10.0,
            range_noise: 0.01,
            max_range: 120.0,
            n_total: 65536,
        }
    }

    pub fn meta(&self) -> SensorMeta {
        SensorMeta {
            name: self.name.clone(),
            rays_horizontal: self.rays_horizontal,
            rays_vertical: self.rays_vertical,
            frequency: self.frequency,
            unit_scale: 1.0,
        }
    }

    pub fn beam_count(&self) -> usize {
        self.rays_horizontal * self.rays_vertical
    }

    /// Azimuth and elevation (radians) of beam `j`. Beams are laid out column
    /// by column; row 0 is the lowest elevation.
    pub fn beam_angles(&self, j: usize) -> (f64, f64) {
        let col = j / self.rays_vertical;
        let row = j % self.rays_vertical;
        let az = TAU * col as f64 / self.rays_horizontal as f64;
        let el = if self.rays_vertical == 1 {
            (self.vfov_lower + self.vfov_upper) / 2.0
        } else {
            self.vfov_lower + (self.vfov_upper - self.vfov_lower) * row as f64 / (self.rays_vertical - 1) as f64
        };
        (az, el.to_radians())
    }

    fn directions(&self) -> Vec<[f64; 3]> {
        (0..self.beam_count())
            .map(|j| {
                let (az, el) = self.beam_angles(j);
                [el.cos() * az.cos(), el.cos() * az.sin(), el.sin()]
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Wall {
    pub start: [f64; 2],
    pub end: [f64; 2],
    pub z_min: f64,
    pub z_max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Pole {
    pub center: [f64; 2],
    pub radius: f64,
    pub z_min: f64,
    pub z_max: f64,
}

/// A vertical cylinder of leaves. Each frame a ray passes through it with
/// probability `transmission`; otherwise it returns with Gaussian range
/// jitter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Foliage {
    pub center: [f64; 2],
    pub radius: f64,
    pub z_min: f64,
    pub z_max: f64,
    pub jitter: f64,
    #[serde(default)]
    pub transmission: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "lowercase", deny_unknown_fields)]
pub enum ActorShape {
    Cuboid { length: f64, width: f64, height: f64 },
    Cylinder { radius: f64, height: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Actor {
    #[serde(flatten)]
    pub shape: ActorShape,
    /// Defaults to Vehicle for cuboids, Pedestrian for cylinders.
    #[serde(default)]
    pub class: Option<ObjectClass>,
    /// Ground-plane path; the actor stops at the last waypoint.
    pub waypoints: Vec<[f64; 2]>,
    /// m/s.
    pub speed: f64,
}

impl Actor {
    pub fn class(&self) -> ObjectClass {
        self.class.unwrap_or(match self.shape {
            ActorShape::Cuboid { .. } => ObjectClass::Vehicle,
            ActorShape::Cylinder { .. } => ObjectClass::Pedestrian,
        })
    }

    fn height(&self) -> f64 {
        match self.shape {
            ActorShape::Cuboid { height, .. } | ActorShape::Cylinder { height, .. } => height,
        }
    }

    /// Position and heading after `time` seconds.
    pub fn pose_at(&self, time: f64) -> ([f64; 2], f64) {
        let mut remaining = (self.speed * time).max(0.0);
        let mut heading = 0.0;
        for w in self.waypoints.windows(2) {
            let (dx, dy) = (w[1][0] - w[0][0], w[1][1] - w[0][1]);
            let len = dx.hypot(dy);
            if len == 0.0 {
                continue;
            }
            heading = dy.atan2(dx);
            if remaining <= len {
                let f = remaining / len;
                return ([w[0][0] + f * dx, w[0][1] + f * dy], heading);
            }
            remaining -= len;
        }
        (*self.waypoints.last().expect("validated non-empty"), heading)
    }
}

fn default_truth_min_points() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneSpec {
    pub seed: u64,
    /// Number of frames to render.
    pub frames: usize,
    pub sensor: SimSensor,
    /// World z of the ground plane; no ground when absent.
    #[serde(default)]
    pub ground_z: Option<f64>,
    #[serde(default)]
    pub walls: Vec<Wall>,
    #[serde(default)]
    pub poles: Vec<Pole>,
    #[serde(default)]
    pub foliage: Vec<Foliage>,
    #[serde(default)]
    pub actors: Vec<Actor>,
    /// An actor is reported in a frame's truth only with at least this many
    /// returns.
    #[serde(default = "default_truth_min_points")]
    pub truth_min_points: usize,
}

impl SceneSpec {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let spec: SceneSpec = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("scene spec serializes")
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(m));
        if self.frames == 0 {
            return fail("scene needs at least one frame".into());
        }
        let s = &self.sensor;
        if s.rays_horizontal == 0 || s.rays_vertical == 0 {
            return fail("sensor needs at least one beam".into());
        }
        if s.beam_count() > s.n_total {
            return fail(format!("{} beams exceed n_total = {}", s.beam_count(), s.n_total));
        }
        if !(s.frequency > 0.0 && s.max_range > 0.0 && s.range_noise >= 0.0 && s.vfov_lower <= s.vfov_upper) {
            return fail("sensor frequency, max_range, range_noise or VFOV out of range".into());
        }
        if s.origin.iter().any(|v| !v.is_finite()) {
            return fail("sensor origin must be finite".into());
        }
        for w in &self.walls {
            if w.start == w.end || !(w.z_min < w.z_max) {
                return fail(format!("degenerate wall {w:?}"));
            }
        }
        for p in &self.poles {
            if !(p.radius > 0.0 && p.z_min < p.z_max) {
                return fail(format!("degenerate pole {p:?}"));
            }
        }
        for f in &self.foliage {
            if !(f.radius > 0.0 && f.z_min < f.z_max && f.jitter >= 0.0 && (0.0..=1.0).contains(&f.transmission)) {
                return fail(format!("invalid foliage {f:?}"));
            }
        }
        for a in &self.actors {
            let dims_ok = match a.shape {
                ActorShape::Cuboid { length, width, height } => length > 0.0 && width > 0.0 && height > 0.0,
                ActorShape::Cylinder { radius, height } => radius > 0.0 && height > 0.0,
            };
            if !dims_ok || a.waypoints.is_empty() || !(a.speed >= 0.0) {
                return fail(format!("invalid actor {a:?}"));
            }
        }
        Ok(())
    }

    /// Moving cuboid and two moving cylinders in front of walls, poles and
    /// two jittering tree crowns, seen by an OS1-64-like sensor. The actors
    /// start outside `default_crop()` and enter it after the first 50 frames.
    pub fn default_scene() -> Self {
        let ground = 0.0;
        SceneSpec {
            seed: 7,
            frames: 200,
            sensor: SimSensor::os1_64(),
            ground_z: Some(ground),
            walls: vec![
                Wall { start: [-60.0, 24.0], end: [60.0, 24.0], z_min: ground, z_max: 8.0 },
                Wall { start: [-40.0, -15.0], end: [10.0, -15.0], z_min: ground, z_max: 6.0 },
            ],
            poles: vec![
                Pole { center: [6.0, 10.0], radius: 0.15, z_min: ground, z_max: 6.0 },
                Pole { center: [-14.0, 10.0], radius: 0.15, z_min: ground, z_max: 6.0 },
                Pole { center: [15.0, 20.0], radius: 0.25, z_min: ground, z_max: 2.6 },
                Pole { center: [-20.0, 20.0], radius: 0.25, z_min: ground, z_max: 2.6 },
            ],
            foliage: vec![
                Foliage { center: [15.0, 20.0], radius: 2.0, z_min: 2.5, z_max: 6.0, jitter: 0.02, transmission: 0.3 },
                Foliage { center: [-20.0, 20.0], radius: 2.5, z_min: 2.5, z_max: 6.5, jitter: 0.02, transmission: 0.3 },
            ],
            actors: vec![
                Actor {
                    shape: ActorShape::Cuboid { length: 4.5, width: 1.8, height: 1.5 },
                    class: None,
                    waypoints: vec![[-80.0, 14.0], [80.0, 14.0]],
                    speed: 7.0,
                },
                Actor {
                    shape: ActorShape::Cylinder { radius: 0.3, height: 1.75 },
                    class: None,
                    waypoints: vec![[-38.0, 11.5], [40.0, 11.5]],
                    speed: 1.4,
                },
                Actor {
                    shape: ActorShape::Cylinder { radius: 0.3, height: 1.7 },
                    class: None,
                    waypoints: vec![[40.0, 18.0], [-40.0, 18.0]],
                    speed: 1.6,
                },
            ],
            truth_min_points: 5,
        }
    }

    /// Teacher settings for `default_scene()`. The roof of a passing car is
    /// sampled about a meter behind the top of its near side, so the
    /// neighborhood radius is wider than the generic default.
    pub fn default_teacher() -> TeacherConfig {
        TeacherConfig {
            n_total: SimSensor::os1_64().n_total,
            n_query: 50,
            n_bin: 10,
            n_tall: 3,
            d_threshold: 0.2,
            epsilon: 1.2,
            crop: Self::default_crop(),
            ..TeacherConfig::default()
        }
    }

    /// Region scored on `default_scene()`: the crop shrunk by a vehicle
    /// length at both x ends, so boxes clipped by the crop are not scored.
    pub fn default_eval_region() -> CropBounds {
        CropBounds {
            x_min: -25.0,
            x_max: 25.0,
            ..Self::default_crop()
        }
    }

    /// Sensor-relative crop matching `default_scene()`.
    pub fn default_crop() -> CropBounds {
        CropBounds {
            x_min: -30.0,
            x_max: 30.0,
            y_min: -16.0,
            y_max: 25.0,
            z_min: -4.3,
            z_max: 4.0,
        }
    }
}

/// Output of [`render_sequence`].
#[derive(Debug, Clone, PartialEq)]
pub struct SimulatedScene {
    pub sequence: FrameSequence,
    /// Per frame, one `MASK_*` value per point index.
    pub masks: Vec<Vec<u8>>,
    pub truth: Vec<FrameLabels>,
}

#[derive(Debug, Clone, Copy)]
enum Hit {
    Static,
    Foliage(usize),
    Actor(usize),
}

/// Actor placed for one frame, in world coordinates.
struct PlacedActor {
    shape: ActorShape,
    center: [f64; 2],
    heading: f64,
    base_z: f64,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Renders every frame. The random stream of frame `f` depends only on
/// `(seed, f)`, so frames render in parallel and reproducibly.
pub fn render_sequence(spec: &SceneSpec) -> Result<SimulatedScene> {
    spec.validate()?;
    let dirs = spec.sensor.directions();
    let rendered: Vec<(Frame, Vec<u8>, FrameLabels)> = (0..spec.frames)
        .into_par_iter()
        .map(|f| render_frame(spec, &dirs, f))
        .collect();
    let mut frames = Vec::with_capacity(rendered.len());
    let mut masks = Vec::with_capacity(rendered.len());
    let mut truth = Vec::with_capacity(rendered.len());
    for (frame, mask, labels) in rendered {
        frames.push(frame);
        masks.push(mask);
        truth.push(labels);
    }
    Ok(SimulatedScene {
        sequence: FrameSequence::new(frames, spec.sensor.meta())?,
        masks,
        truth,
    })
}

pub fn frame_stem(f: usize) -> String {
    format!("frame_{f:06}")
}

fn render_frame(spec: &SceneSpec, dirs: &[[f64; 3]], f: usize) -> (Frame, Vec<u8>, FrameLabels) {
    let sensor = &spec.sensor;
    let mut rng = ChaCha8Rng::seed_from_u64(splitmix64(spec.seed ^ splitmix64(f as u64)));
    let time = f as f64 / sensor.frequency;
    let ground = spec.ground_z.unwrap_or(0.0);
    let actors: Vec<PlacedActor> = spec
        .actors
        .iter()
        .map(|a| {
            let (center, heading) = a.pose_at(time);
            PlacedActor {
                shape: a.shape,
                center,
                heading,
                base_z: ground,
            }
        })
        .collect();
    let noise = (sensor.range_noise > 0.0).then(|| Normal::new(0.0, sensor.range_noise).unwrap());

    let o = sensor.origin;
    let mut points = vec![Point::PADDING; sensor.n_total];
    let mut mask = vec![MASK_MISS; sensor.n_total];
    let mut hits_per_actor = vec![0usize; actors.len()];

    for (j, d) in dirs.iter().enumerate() {
        let mut best: Option<(f64, Hit)> = None;
        let consider = |t: Option<f64>, hit: Hit, best: &mut Option<(f64, Hit)>| {
            if let Some(t) = t {
                if t > 1e-9 && t <= sensor.max_range && best.is_none_or(|(b, _)| t < b) {
                    *best = Some((t, hit));
                }
            }
        };
        if let Some(g) = spec.ground_z {
            consider(ray_plane_z(o, d, g), Hit::Static, &mut best);
        }
        for w in &spec.walls {
            consider(ray_wall(o, d, w), Hit::Static, &mut best);
        }
        for p in &spec.poles {
            consider(ray_cylinder(o, d, p.center, p.radius, p.z_min, p.z_max), Hit::Static, &mut best);
        }
        for (k, a) in actors.iter().enumerate() {
            consider(ray_actor(o, d, a), Hit::Actor(k), &mut best);
        }
        for (k, leaf) in spec.foliage.iter().enumerate() {
            let t = ray_cylinder(o, d, leaf.center, leaf.radius, leaf.z_min, leaf.z_max);
            if t.is_some_and(|t| best.is_none_or(|(b, _)| t < b)) && rng.random::<f64>() >= leaf.transmission {
                consider(t, Hit::Foliage(k), &mut best);
            }
        }
        let Some((mut range, hit)) = best else {
            continue;
        };
        if let Hit::Foliage(k) = hit {
            let jitter = spec.foliage[k].jitter;
            if jitter > 0.0 {
                range += Normal::new(0.0, jitter).unwrap().sample(&mut rng);
            }
        }
        if let Some(n) = &noise {
            range += n.sample(&mut rng);
        }
        if range <= 0.0 {
            continue;
        }
        points[j] = Point::new((d[0] * range) as f32, (d[1] * range) as f32, (d[2] * range) as f32);
        if points[j].x == 0.0 && points[j].y == 0.0 && points[j].z == 0.0 {
            points[j] = Point::PADDING;
            continue;
        }
        mask[j] = match hit {
            Hit::Actor(k) => {
                hits_per_actor[k] += 1;
                MASK_FOREGROUND
            }
            _ => MASK_BACKGROUND,
        };
    }

    let mut labels = Vec::new();
    for (k, (spec_actor, placed)) in spec.actors.iter().zip(&actors).enumerate() {
        if hits_per_actor[k] < spec.truth_min_points.max(1) {
            continue;
        }
        let h = spec_actor.height();
        let center = [
            placed.center[0] - o[0],
            placed.center[1] - o[1],
            placed.base_z + h / 2.0 - o[2],
        ];
        let dims = match placed.shape {
            ActorShape::Cuboid { length, width, height } => [length, width, height],
            ActorShape::Cylinder { radius, height } => [2.0 * radius, 2.0 * radius, height],
        };
        labels.push(ObjectLabel::new(
            center,
            dims,
            placed.heading,
            spec_actor.class(),
            1.0,
            LabelSource::Teacher,
        ));
    }
    let stem = frame_stem(f);
    (
        Frame::new(f + 1, stem.clone(), points),
        mask,
        FrameLabels::new(stem, labels),
    )
}

fn ray_plane_z(o: [f64; 3], d: &[f64; 3], z: f64) -> Option<f64> {
    (d[2] != 0.0).then(|| (z - o[2]) / d[2])
}

fn ray_wall(o: [f64; 3], d: &[f64; 3], w: &Wall) -> Option<f64> {
    let e = [w.end[0] - w.start[0], w.end[1] - w.start[1]];
    let denom = d[0] * e[1] - d[1] * e[0];
    if denom == 0.0 {
        return None;
    }
    let q = [w.start[0] - o[0], w.start[1] - o[1]];
    let t = (q[0] * e[1] - q[1] * e[0]) / denom;
    let s = (q[0] * d[1] - q[1] * d[0]) / denom;
    let z = o[2] + t * d[2];
    ((0.0..=1.0).contains(&s) && z >= w.z_min && z <= w.z_max).then_some(t)
}

/// Nearest entry of a vertical capped cylinder.
fn ray_cylinder(o: [f64; 3], d: &[f64; 3], c: [f64; 2], r: f64, z_min: f64, z_max: f64) -> Option<f64> {
    let (px, py) = (o[0] - c[0], o[1] - c[1]);
    let mut best: Option<f64> = None;
    let mut take = |t: f64| {
        if t > 0.0 && best.is_none_or(|b| t < b) {
            best = Some(t);
        }
    };
    let a = d[0] * d[0] + d[1] * d[1];
    if a > 0.0 {
        let b = 2.0 * (px * d[0] + py * d[1]);
        let cc = px * px + py * py - r * r;
        let disc = b * b - 4.0 * a * cc;
        if disc >= 0.0 {
            let sq = disc.sqrt();
            for t in [(-b - sq) / (2.0 * a), (-b + sq) / (2.0 * a)] {
                let z = o[2] + t * d[2];
                if z >= z_min && z <= z_max {
                    take(t);
                }
            }
        }
    }
    if d[2] != 0.0 {
        for zc in [z_min, z_max] {
            let t = (zc - o[2]) / d[2];
            let (x, y) = (px + t * d[0], py + t * d[1]);
            if x * x + y * y <= r * r {
                take(t);
            }
        }
    }
    best
}

fn ray_actor(o: [f64; 3], d: &[f64; 3], a: &PlacedActor) -> Option<f64> {
    match a.shape {
        ActorShape::Cylinder { radius, height } => ray_cylinder(o, d, a.center, radius, a.base_z, a.base_z + height),
        ActorShape::Cuboid { length, width, height } => {
            let (s, c) = a.heading.sin_cos();
            let (px, py) = (o[0] - a.center[0], o[1] - a.center[1]);
            let lo = [c * px + s * py, -s * px + c * py, o[2] - a.base_z];
            let ld = [c * d[0] + s * d[1], -s * d[0] + c * d[1], d[2]];
            let half = [length / 2.0, width / 2.0];
            let mut t_near = f64::NEG_INFINITY;
            let mut t_far = f64::INFINITY;
            for k in 0..3 {
                let (min, max) = if k < 2 { (-half[k], half[k]) } else { (0.0, height) };
                if ld[k] == 0.0 {
                    if lo[k] < min || lo[k] > max {
                        return None;
                    }
                    continue;
                }
                let (t1, t2) = ((min - lo[k]) / ld[k], (max - lo[k]) / ld[k]);
                t_near = t_near.max(t1.min(t2));
                t_far = t_far.min(t1.max(t2));
            }
            (t_near <= t_far && t_near > 0.0).then_some(t_near)
        }
    }
}

/// Writes `frames/*.bin`, `masks/*.mask` and `labels/*.txt` under `dir`.
pub fn write_scene(scene: &SimulatedScene, dir: &Path) -> Result<()> {
    let frames_dir = dir.join("frames");
    let masks_dir = dir.join("masks");
    for d in [&frames_dir, &masks_dir] {
        fs::create_dir_all(d).map_err(|e| Error::io(d, e))?;
    }
    for (frame, mask) in scene.sequence.frames.iter().zip(&scene.masks) {
        write_frame_file(&frames_dir.join(format!("{}.bin", frame.stem)), &frame.points)?;
        let path = masks_dir.join(format!("{}.mask", frame.stem));
        fs::write(&path, mask).map_err(|e| Error::io(&path, e))?;
    }
    write_labels(&dir.join("labels"), &scene.truth)
}
