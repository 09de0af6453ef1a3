//! Box fitting, size-heuristic validation and Vehicle/Pedestrian
//! classification of clusters.

use std::f64::consts::PI;
use std::fmt;

use crate::clustering::Cluster;
use crate::error::{Error, Result};
use crate::geometry::{convex_hull, Vec2};
use crate::pointcloud::{Frame, LabelSource, ObjectClass, ObjectLabel, TeacherConfig};

/// Smallest extent a fitted box may have along any axis, meters.
pub const MIN_EXTENT: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FittedBox {
    pub center: [f64; 3],
    /// Extent along `yaw`; never smaller than `width`.
    pub length: f64,
    pub width: f64,
    pub height: f64,
    /// Long-axis heading in `[-π/2, π/2)`.
    pub yaw: f64,
    pub base_length: f64,
    pub point_count: usize,
}

impl FittedBox {
    pub fn footprint_area(&self) -> f64 {
        self.length * self.width
    }

    pub fn to_label(&self, class: ObjectClass, score: f64, source: LabelSource) -> ObjectLabel {
        ObjectLabel {
            center_x: self.center[0],
            center_y: self.center[1],
            center_z: self.center[2],
            length: self.length,
            width: self.width,
            height: self.height,
            yaw: self.yaw,
            class,
            score,
            source,
        }
    }

    /// Whether `p` lies inside the box grown by `margin` on every side.
    pub fn contains(&self, p: [f64; 3], margin: f64) -> bool {
        let (s, c) = self.yaw.sin_cos();
        let (dx, dy) = (p[0] - self.center[0], p[1] - self.center[1]);
        let u = dx * c + dy * s;
        let v = -dx * s + dy * c;
        u.abs() <= self.length / 2.0 + margin
            && v.abs() <= self.width / 2.0 + margin
            && (p[2] - self.center[2]).abs() <= self.height / 2.0 + margin
    }
}

/// Wraps an axis direction into `[-π/2, π/2)`.
fn axis_angle(theta: f64) -> f64 {
    let mut a = theta - PI * ((theta + PI / 2.0) / PI).floor();
    if a >= PI / 2.0 {
        a -= PI;
    }
    a
}

/// Minimum-area oriented rectangle of the XY projection (rotating calipers
/// over the hull edges) extruded over the cluster's z-extent.
pub fn fit_bbox(cluster: &Cluster, frame: &Frame) -> Result<FittedBox> {
    if cluster.point_indices.is_empty() {
        return Err(Error::EmptyCluster);
    }
    let mut xy: Vec<Vec2> = Vec::with_capacity(cluster.point_indices.len());
    let (mut z_lo, mut z_hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for &i in &cluster.point_indices {
        let p = frame.points.get(i).ok_or_else(|| {
            Error::Invariant(format!("cluster index {i} outside frame of {} points", frame.len()))
        })?;
        let [x, y, z] = p.coords();
        xy.push([x, y]);
        z_lo = z_lo.min(z);
        z_hi = z_hi.max(z);
    }
    let (center_xy, length, width, yaw) = min_area_rectangle(&convex_hull(&xy));
    Ok(FittedBox {
        center: [center_xy[0], center_xy[1], (z_lo + z_hi) / 2.0],
        length,
        width,
        height: (z_hi - z_lo).max(MIN_EXTENT),
        yaw,
        base_length: length,
        point_count: cluster.point_indices.len(),
    })
}

/// Returns `(center, length, width, yaw)` with `length >= width`.
fn min_area_rectangle(hull: &[Vec2]) -> (Vec2, f64, f64, f64) {
    match hull.len() {
        0 => ([0.0, 0.0], MIN_EXTENT, MIN_EXTENT, 0.0),
        1 => (hull[0], MIN_EXTENT, MIN_EXTENT, 0.0),
        2 => {
            let (a, b) = (hull[0], hull[1]);
            let (dx, dy) = (b[0] - a[0], b[1] - a[1]);
            let len = dx.hypot(dy).max(MIN_EXTENT);
            let center = [(a[0] + b[0]) / 2.0, (a[1] + b[1]) / 2.0];
            (center, len, MIN_EXTENT, axis_angle(dy.atan2(dx)))
        }
        n => {
            let mut best: Option<(f64, Vec2, f64, f64, f64)> = None;
            for i in 0..n {
                let (a, b) = (hull[i], hull[(i + 1) % n]);
                let (dx, dy) = (b[0] - a[0], b[1] - a[1]);
                let norm = dx.hypot(dy);
                if norm == 0.0 {
                    continue;
                }
                let u = [dx / norm, dy / norm];
                let v = [-u[1], u[0]];
                let (mut u_lo, mut u_hi, mut v_lo, mut v_hi) =
                    (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
                for p in hull {
                    let pu = p[0] * u[0] + p[1] * u[1];
                    let pv = p[0] * v[0] + p[1] * v[1];
                    u_lo = u_lo.min(pu);
                    u_hi = u_hi.max(pu);
                    v_lo = v_lo.min(pv);
                    v_hi = v_hi.max(pv);
                }
                let (eu, ev) = (u_hi - u_lo, v_hi - v_lo);
                let area = eu * ev;
                if best.as_ref().is_some_and(|b| b.0 <= area) {
                    continue;
                }
                let (cu, cv) = ((u_lo + u_hi) / 2.0, (v_lo + v_hi) / 2.0);
                let center = [cu * u[0] + cv * v[0], cu * u[1] + cv * v[1]];
                let (length, width, axis) = if eu >= ev { (eu, ev, u) } else { (ev, eu, v) };
                best = Some((area, center, length, width, axis[1].atan2(axis[0])));
            }
            let (_, center, length, width, yaw) = best.expect("hull with three vertices has an edge");
            (center, length.max(MIN_EXTENT), width.max(MIN_EXTENT), axis_angle(yaw))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RejectReason {
    BaseTooShort,
    TooLow,
    AmbiguousShape,
}

impl fmt::Display for RejectReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RejectReason::BaseTooShort => "base_length<l_min",
            RejectReason::TooLow => "height<h_min",
            RejectReason::AmbiguousShape => "|base_length-height|<beta_min",
        })
    }
}

/// First failed size predicate, if any.
pub fn check_bbox(b: &FittedBox, cfg: &TeacherConfig) -> Option<RejectReason> {
    if b.base_length < cfg.l_min {
        Some(RejectReason::BaseTooShort)
    } else if b.height < cfg.h_min {
        Some(RejectReason::TooLow)
    } else if (b.base_length - b.height).abs() < cfg.beta_min {
        Some(RejectReason::AmbiguousShape)
    } else {
        None
    }
}

pub fn validate_bbox(b: &FittedBox, cfg: &TeacherConfig) -> bool {
    check_bbox(b, cfg).is_none()
}

/// Vehicles are longer than tall, pedestrians taller than long.
pub fn classify(b: &FittedBox) -> ObjectClass {
    if b.base_length > b.height {
        ObjectClass::Vehicle
    } else {
        ObjectClass::Pedestrian
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Reject {
    pub frame_index: usize,
    pub cluster_index: usize,
    pub base_length: f64,
    pub height: f64,
    pub reason: RejectReason,
}

impl fmt::Display for Reject {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "frame {} cluster {} base_length {:.6} height {:.6} failed {}",
            self.frame_index, self.cluster_index, self.base_length, self.height, self.reason
        )
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct FrameAnnotation {
    pub labels: Vec<ObjectLabel>,
    pub rejects: Vec<Reject>,
}

/// Fit, validate and classify each cluster in order. Teacher labels carry
/// score 1.
pub fn annotate_frame(frame: &Frame, clusters: &[Cluster], cfg: &TeacherConfig) -> Result<FrameAnnotation> {
    let mut out = FrameAnnotation::default();
    for (k, cluster) in clusters.iter().enumerate() {
        let b = fit_bbox(cluster, frame)?;
        match check_bbox(&b, cfg) {
            None => out
                .labels
                .push(b.to_label(classify(&b), 1.0, LabelSource::Teacher)),
            Some(reason) => out.rejects.push(Reject {
                frame_index: frame.timestamp_index,
                cluster_index: k,
                base_length: b.base_length,
                height: b.height,
                reason,
            }),
        }
    }
    Ok(out)
}
