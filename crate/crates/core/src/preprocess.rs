//! Unit unification, fixed-arity padding, cuboid cropping and cross-dataset
//! alignment.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pointcloud::{CropBounds, Frame, FrameSequence, ObjectLabel, Point};

/// Maps a point `p` to `scale * p + translation`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct UnificationTransform {
    pub translation: [f64; 3],
    pub scale: f64,
}

impl Default for UnificationTransform {
    fn default() -> Self {
        UnificationTransform::IDENTITY
    }
}

impl UnificationTransform {
    pub const IDENTITY: UnificationTransform = UnificationTransform {
        translation: [0.0; 3],
        scale: 1.0,
    };

    pub fn validate(&self) -> Result<()> {
        if !(self.scale > 0.0 && self.scale.is_finite()) {
            return Err(Error::Config(format!(
                "transform scale must be positive, got {}",
                self.scale
            )));
        }
        if self.translation.iter().any(|t| !t.is_finite()) {
            return Err(Error::Config("transform translation must be finite".into()));
        }
        Ok(())
    }

    pub fn apply_point(&self, p: &Point) -> Point {
        if p.padding {
            return *p;
        }
        let [tx, ty, tz] = self.translation;
        let s = self.scale;
        Point::new(
            (s * p.x as f64 + tx) as f32,
            (s * p.y as f64 + ty) as f32,
            (s * p.z as f64 + tz) as f32,
        )
    }

    /// Centers map like points, dimensions scale, yaw is unchanged.
    pub fn apply_label(&self, l: &ObjectLabel) -> ObjectLabel {
        let s = self.scale;
        let [tx, ty, tz] = self.translation;
        ObjectLabel {
            center_x: s * l.center_x + tx,
            center_y: s * l.center_y + ty,
            center_z: s * l.center_z + tz,
            length: s * l.length,
            width: s * l.width,
            height: s * l.height,
            ..*l
        }
    }
}

/// Scales every coordinate to meters and resets the sequence's unit scale.
pub fn unify_units(mut seq: FrameSequence) -> FrameSequence {
    let s = seq.meta.unit_scale;
    if s != 1.0 {
        let t = UnificationTransform {
            translation: [0.0; 3],
            scale: s,
        };
        for frame in &mut seq.frames {
            for p in &mut frame.points {
                *p = t.apply_point(p);
            }
        }
    }
    seq.meta.unit_scale = 1.0;
    seq
}

/// Appends padding points until the frame holds exactly `n_total` points.
pub fn pad_frame(mut frame: Frame, n_total: usize) -> Result<Frame> {
    if frame.points.len() > n_total {
        return Err(Error::FrameExceedsTotal {
            len: frame.points.len(),
            n_total,
        });
    }
    frame.points.resize(n_total, Point::PADDING);
    Ok(frame)
}

/// Replaces every point outside the closed cuboid with padding. The frame
/// keeps its arity so indices stay aligned across frames.
pub fn crop_frame(mut frame: Frame, bounds: &CropBounds) -> Frame {
    for p in &mut frame.points {
        if !p.padding && !bounds.contains(p) {
            *p = Point::PADDING;
        }
    }
    frame
}

/// Applies `transforms[k]` to every data point of `seqs[k]`.
pub fn unify_datasets(
    seqs: Vec<FrameSequence>,
    transforms: &[UnificationTransform],
) -> Result<Vec<FrameSequence>> {
    if seqs.len() != transforms.len() {
        return Err(Error::LengthMismatch {
            what: "datasets vs transforms",
            left: seqs.len(),
            right: transforms.len(),
        });
    }
    seqs.into_iter()
        .zip(transforms)
        .map(|(mut seq, t)| {
            t.validate()?;
            for frame in &mut seq.frames {
                for p in &mut frame.points {
                    *p = t.apply_point(p);
                }
            }
            Ok(seq)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pointcloud::SensorMeta;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn seq_of(points: Vec<Point>, unit_scale: f64) -> FrameSequence {
        let meta = SensorMeta {
            unit_scale,
            ..SensorMeta::os1_64()
        };
        FrameSequence::new(vec![Frame::new(1, "f", points)], meta).unwrap()
    }

    fn cube(lo: f64, hi: f64) -> CropBounds {
        CropBounds::new([lo; 3], [hi; 3]).unwrap()
    }

    fn random_points(n: usize, half: f32, seed: u64) -> Vec<Point> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| {
                Point::new(
                    rng.random_range(-half..half),
                    rng.random_range(-half..half),
                    rng.random_range(-half..half),
                )
            })
            .collect()
    }

    fn dist(a: &Point, b: &Point) -> f64 {
        let d = [a.x - b.x, a.y - b.y, a.z - b.z].map(|v| v as f64);
        (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt()
    }

    #[test]
    fn unit_scale_one_is_identity() {
        let pts = random_points(50, 10.0, 1);
        let out = unify_units(seq_of(pts.clone(), 1.0));
        assert_eq!(out.frames[0].points, pts);
    }

    #[test]
    fn centimeters_to_meters() {
        let out = unify_units(seq_of(vec![Point::new(100.0, 0.0, 0.0)], 0.01));
        assert_eq!(out.frames[0].points[0], Point::new(1.0, 0.0, 0.0));
        assert_eq!(out.meta.unit_scale, 1.0);
    }

    #[test]
    fn pairwise_distances_scale() {
        let pts = random_points(40, 50.0, 2);
        let s = 0.3048;
        let out = unify_units(seq_of(pts.clone(), s));
        let q = &out.frames[0].points;
        for i in 0..pts.len() {
            for j in 0..i {
                let before = dist(&pts[i], &pts[j]) * s;
                let after = dist(&q[i], &q[j]);
                assert!((before - after).abs() <= 1e-5 * before.max(1.0));
            }
        }
    }

    #[test]
    fn padding_to_n_total() {
        let f = Frame::new(1, "f", random_points(3, 1.0, 3));
        let padded = pad_frame(f.clone(), 5).unwrap();
        assert_eq!(padded.points.len(), 5);
        assert_eq!(&padded.points[..3], &f.points[..]);
        assert!(padded.points[3..].iter().all(|p| *p == Point::PADDING));

        assert_eq!(pad_frame(f.clone(), 3).unwrap(), f);
        let err = pad_frame(f, 2).unwrap_err();
        assert!(err.to_string().contains("frame exceeds N_total"));
    }

    #[test]
    fn full_os1_frame_needs_no_padding() {
        let meta = SensorMeta::os1_64();
        let n = meta.beam_count();
        assert_eq!(n, 65536);
        let f = Frame::new(1, "f", vec![Point::new(1.0, 1.0, 1.0); n]);
        let out = pad_frame(f, n).unwrap();
        assert!(out.points.iter().all(|p| !p.padding));
    }

    #[test]
    fn crop_keeps_inside_and_boundary() {
        let b = CropBounds::new([-1.0, -2.0, -3.0], [1.0, 2.0, 3.0]).unwrap();
        let inside = vec![Point::new(0.5, 0.5, 0.5), Point::new(-1.0, -2.0, -3.0), Point::new(1.0, 2.0, 3.0)];
        let f = Frame::new(1, "f", inside.clone());
        assert_eq!(crop_frame(f, &b).points, inside);

        let f = Frame::new(1, "f", vec![Point::new(1.0001, 0.0, 0.0), Point::PADDING]);
        let out = crop_frame(f, &b);
        assert!(out.points.iter().all(|p| p.padding));
        assert_eq!(out.points.len(), 2);
    }

    #[test]
    fn crop_volume_ratio() {
        // A [-5,5]^3 box inside [-10,10]^3 holds 1/8 of the volume.
        let pts = random_points(100_000, 10.0, 4);
        let out = crop_frame(Frame::new(1, "f", pts), &cube(-5.0, 5.0));
        let kept = out.data_count() as f64 / 100_000.0;
        assert!((kept - 0.125).abs() <= 0.02, "kept fraction {kept}");
    }

    #[test]
    fn unify_identity_and_translation() {
        let pts = random_points(200, 5.0, 5);
        let out = unify_datasets(vec![seq_of(pts.clone(), 1.0)], &[UnificationTransform::IDENTITY]).unwrap();
        assert_eq!(out[0].frames[0].points, pts);

        let t = UnificationTransform {
            translation: [-5.0, 0.0, 0.0],
            scale: 1.0,
        };
        let out = unify_datasets(vec![seq_of(pts.clone(), 1.0)], &[t]).unwrap();
        let centroid = |ps: &[Point]| {
            let n = ps.len() as f64;
            ps.iter().fold([0.0; 3], |acc, p| {
                [acc[0] + p.x as f64 / n, acc[1] + p.y as f64 / n, acc[2] + p.z as f64 / n]
            })
        };
        let (a, b) = (centroid(&pts), centroid(&out[0].frames[0].points));
        assert!((b[0] - a[0] + 5.0).abs() < 1e-5);
        assert!((b[1] - a[1]).abs() < 1e-5 && (b[2] - a[2]).abs() < 1e-5);
    }

    #[test]
    fn unify_scale_two_doubles_aabb() {
        let pts = random_points(300, 3.0, 6);
        let aabb = |ps: &[Point]| {
            let mut lo = [f64::INFINITY; 3];
            let mut hi = [f64::NEG_INFINITY; 3];
            for p in ps {
                for (k, v) in p.coords().into_iter().enumerate() {
                    lo[k] = lo[k].min(v);
                    hi[k] = hi[k].max(v);
                }
            }
            [hi[0] - lo[0], hi[1] - lo[1], hi[2] - lo[2]]
        };
        let t = UnificationTransform {
            translation: [10.0, -3.0, 1.0],
            scale: 2.0,
        };
        let out = unify_datasets(vec![seq_of(pts.clone(), 1.0)], &[t]).unwrap();
        let (a, b) = (aabb(&pts), aabb(&out[0].frames[0].points));
        for k in 0..3 {
            assert!((b[k] - 2.0 * a[k]).abs() < 1e-5);
        }
    }

    #[test]
    fn unify_rejects_mismatch_and_keeps_padding() {
        let err = unify_datasets(vec![seq_of(vec![], 1.0)], &[]).unwrap_err();
        assert!(matches!(err, Error::LengthMismatch { .. }));
        let t = UnificationTransform {
            translation: [1.0, 1.0, 1.0],
            scale: 3.0,
        };
        let out = unify_datasets(vec![seq_of(vec![Point::PADDING], 1.0)], &[t]).unwrap();
        assert_eq!(out[0].frames[0].points[0], Point::PADDING);
    }

    fn arb_points() -> impl Strategy<Value = Vec<Point>> {
        prop::collection::vec(
            (prop::array::uniform3(-20.0..20.0f32), prop::bool::weighted(0.2)).prop_map(
                |([x, y, z], pad)| if pad { Point::PADDING } else { Point::new(x, y, z) },
            ),
            0..60,
        )
    }

    proptest! {
        #[test]
        fn crop_idempotent_and_never_creates_points(pts in arb_points(), lo in -10.0..0.0f64, hi in 0.1..10.0f64) {
            let b = cube(lo, hi);
            let once = crop_frame(Frame::new(1, "f", pts.clone()), &b);
            let twice = crop_frame(once.clone(), &b);
            prop_assert_eq!(&once, &twice);
            for (a, c) in pts.iter().zip(&once.points) {
                if a.padding {
                    prop_assert!(c.padding);
                }
            }
        }

        #[test]
        fn scaling_commutes_with_padding(pts in arb_points(), extra in 0usize..10, s in 0.01..100.0f64) {
            let n = pts.len() + extra;
            let a = unify_units(seq_of(pad_frame(Frame::new(1, "f", pts.clone()), n).unwrap().points, s));
            let mut b = unify_units(seq_of(pts, s));
            b.frames[0] = pad_frame(b.frames[0].clone(), n).unwrap();
            prop_assert_eq!(a, b);
        }

        #[test]
        fn unify_preserves_distance_ratios(raw in prop::collection::vec(prop::array::uniform3(-20.0..20.0f32), 3..20),
                                           s in 0.1..10.0f64, t in prop::array::uniform3(-50.0..50.0f64)) {
            let pts: Vec<Point> = raw.iter().map(|&[x, y, z]| Point::new(x, y, z)).collect();
            let out = unify_datasets(vec![seq_of(pts.clone(), 1.0)], &[UnificationTransform { translation: t, scale: s }]).unwrap();
            let q = &out[0].frames[0].points;
            let (d0, e0) = (dist(&pts[0], &pts[1]), dist(&q[0], &q[1]));
            let (d1, e1) = (dist(&pts[1], &pts[2]), dist(&q[1], &q[2]));
            prop_assume!(d0 > 1e-2 && d1 > 1e-2);
            prop_assert!((d0 / d1 - e0 / e1).abs() <= 1e-3 * (d0 / d1).max(1.0));
        }
    }
}
