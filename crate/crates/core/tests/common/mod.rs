//! Independent reference implementations and random instance generators
//! shared by the integration tests and the acceptance harness.
#![allow(dead_code)]

use num_rational::BigRational;
use num_traits::{Signed, ToPrimitive, Zero};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use roadside_teacher::pointcloud::{Frame, FrameSequence, Point, SensorMeta};

/// Exact value of a finite double.
pub fn rational(x: f64) -> BigRational {
    BigRational::from_float(x).expect("finite")
}

/// Nearest double to `r`, ties to even.
pub fn round_rational(r: &BigRational) -> f64 {
    let guess = r.to_f64().expect("in range");
    let mut best = guess;
    let mut best_err = (rational(guess) - r).abs();
    for cand in [guess.next_down(), guess.next_up()] {
        let err = (rational(cand) - r).abs();
        let even = cand.to_bits() & 1 == 0;
        if err < best_err || (err == best_err && even) {
            best = cand;
            best_err = err;
        }
    }
    best
}

/// Per index: `(d_min, d_max, width, counts, means)` or `None` when the index
/// never returned.
pub type NaiveIndex = Option<(f64, f64, f64, Vec<u32>, Vec<f64>)>;

/// Literal double loop over indices and query frames: distances, range,
/// bin width, floor binning with the last bin closed, exact member sums,
/// mean clamped to the member span.
pub fn naive_histogram(frames: &[Vec<Point>], n_bin: usize) -> Vec<NaiveIndex> {
    let n_total = frames[0].len();
    let mut out = Vec::with_capacity(n_total);
    for i in 0..n_total {
        let mut dist = Vec::new();
        for frame in frames {
            let p = frame[i];
            if p.padding {
                continue;
            }
            let (x, y, z) = (p.x as f64, p.y as f64, p.z as f64);
            dist.push((x * x + y * y + z * z).sqrt());
        }
        if dist.is_empty() {
            out.push(None);
            continue;
        }
        let mut d_min = dist[0];
        let mut d_max = dist[0];
        for &d in &dist {
            if d < d_min {
                d_min = d;
            }
            if d > d_max {
                d_max = d;
            }
        }
        let w = if d_max == d_min { 0.0 } else { (d_max - d_min) / n_bin as f64 };
        let mut sums = vec![BigRational::zero(); n_bin];
        let mut counts = vec![0u32; n_bin];
        let mut lo = vec![f64::INFINITY; n_bin];
        let mut hi = vec![f64::NEG_INFINITY; n_bin];
        for &d in &dist {
            let k = if w == 0.0 {
                0
            } else {
                let f = ((d - d_min) / w).floor();
                if f < 0.0 {
                    0
                } else if f as usize >= n_bin {
                    n_bin - 1
                } else {
                    f as usize
                }
            };
            sums[k] += rational(d);
            counts[k] += 1;
            lo[k] = lo[k].min(d);
            hi[k] = hi[k].max(d);
        }
        let means = (0..n_bin)
            .map(|k| {
                if counts[k] == 0 {
                    0.0
                } else {
                    let s = round_rational(&sums[k]);
                    (s / counts[k] as f64).max(lo[k]).min(hi[k])
                }
            })
            .collect();
        out.push(Some((d_min, d_max, w, counts, means)));
    }
    out
}

/// Tall-bin selection by repeated maximum search: highest count first, the
/// lowest index among equal counts.
pub fn naive_select(hist: &[NaiveIndex], n_tall: usize) -> Vec<Vec<f64>> {
    hist.iter()
        .map(|h| {
            let Some((_, _, _, counts, means)) = h else {
                return Vec::new();
            };
            let mut used = vec![false; counts.len()];
            let mut out = Vec::new();
            while out.len() < n_tall {
                let mut best: Option<usize> = None;
                for k in 0..counts.len() {
                    if used[k] || counts[k] == 0 {
                        continue;
                    }
                    if best.is_none() || counts[k] > counts[best.unwrap()] {
                        best = Some(k);
                    }
                }
                match best {
                    Some(k) => {
                        used[k] = true;
                        out.push(means[k]);
                    }
                    None => break,
                }
            }
            out
        })
        .collect()
}

/// Keeps a point unless it is padding or within `d_threshold` of one of its
/// own index's tall distances.
pub fn naive_filter(frame: &[Point], tall: &[Vec<f64>], d_threshold: f64) -> Vec<Point> {
    let mut out = Vec::with_capacity(frame.len());
    for (i, p) in frame.iter().enumerate() {
        if p.padding {
            out.push(Point::PADDING);
            continue;
        }
        let (x, y, z) = (p.x as f64, p.y as f64, p.z as f64);
        let d = (x * x + y * y + z * z).sqrt();
        let mut background = false;
        for &t in &tall[i] {
            if (d - t).abs() <= d_threshold {
                background = true;
            }
        }
        out.push(if background { Point::PADDING } else { *p });
    }
    out
}

/// Textbook DBSCAN with O(n^2) neighborhood queries over the non-padding
/// points, seeds in ascending index and depth-first expansion. Returns
/// clusters of point indices, each sorted, ordered by smallest member, plus
/// sorted noise.
pub fn brute_dbscan(points: &[Point], eps: f64, min_pts: usize) -> (Vec<Vec<usize>>, Vec<usize>) {
    let data: Vec<usize> = (0..points.len()).filter(|&i| !points[i].padding).collect();
    let neighbors = |i: usize| -> Vec<usize> {
        let a = points[i];
        data.iter()
            .copied()
            .filter(|&j| {
                let b = points[j];
                let (dx, dy, dz) = (
                    a.x as f64 - b.x as f64,
                    a.y as f64 - b.y as f64,
                    a.z as f64 - b.z as f64,
                );
                dx * dx + dy * dy + dz * dz <= eps * eps
            })
            .collect()
    };
    const UNSEEN: i64 = -2;
    const NOISE: i64 = -1;
    let mut label = vec![UNSEEN; points.len()];
    let mut next = 0i64;
    for &p in &data {
        if label[p] != UNSEEN {
            continue;
        }
        let n = neighbors(p);
        if n.len() < min_pts {
            label[p] = NOISE;
            continue;
        }
        let c = next;
        next += 1;
        label[p] = c;
        let mut stack = n;
        while let Some(q) = stack.pop() {
            if label[q] == NOISE {
                label[q] = c;
            }
            if label[q] != UNSEEN {
                continue;
            }
            label[q] = c;
            let nq = neighbors(q);
            if nq.len() >= min_pts {
                stack.extend(nq);
            }
        }
    }
    let mut clusters = vec![Vec::new(); next as usize];
    let mut noise = Vec::new();
    for &p in &data {
        match label[p] {
            NOISE => noise.push(p),
            c => clusters[c as usize].push(p),
        }
    }
    clusters.sort_by_key(|c| c[0]);
    (clusters, noise)
}

/// Point at range `d` along a random direction.
pub fn point_at_range(rng: &mut ChaCha8Rng, d: f64) -> Point {
    loop {
        let v: [f64; 3] = std::array::from_fn(|_| rng.random_range(-1.0..1.0));
        let n = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
        if n > 0.1 && n <= 1.0 {
            let p = Point::new((v[0] / n * d) as f32, (v[1] / n * d) as f32, (v[2] / n * d) as f32);
            if p.range() > 0.0 {
                return p;
            }
        }
    }
}

/// Random query sequence with static, repeated-level, noisy and padded
/// indices, so degenerate ranges, ties at `d_max` and empty bins all occur.
pub fn random_sequence(rng: &mut ChaCha8Rng, n_query: usize, n_total: usize) -> FrameSequence {
    let mut frames = vec![Vec::with_capacity(n_total); n_query];
    for _ in 0..n_total {
        let kind = rng.random_range(0..5);
        let d = rng.random_range(1.0..60.0);
        let base = point_at_range(rng, d);
        let levels: Vec<Point> = (0..3)
            .map(|_| {
                let d = rng.random_range(1.0..60.0);
                point_at_range(rng, d)
            })
            .collect();
        for frame in frames.iter_mut() {
            let p = match kind {
                0 => base,
                1 => levels[rng.random_range(0..levels.len())],
                2 => {
                    let d = rng.random_range(0.5..80.0);
                    point_at_range(rng, d)
                }
                3 if rng.random_bool(0.5) => Point::PADDING,
                3 => levels[rng.random_range(0..2)],
                _ => Point::new(
                    base.x + rng.random_range(-0.05..0.05),
                    base.y + rng.random_range(-0.05..0.05),
                    base.z,
                ),
            };
            frame.push(p);
        }
    }
    let frames = frames
        .into_iter()
        .enumerate()
        .map(|(k, pts)| Frame::new(k + 1, format!("q{k:03}"), pts))
        .collect();
    FrameSequence::new(frames, test_meta(n_total)).unwrap()
}

pub fn test_meta(n_total: usize) -> SensorMeta {
    SensorMeta {
        name: "test".into(),
        rays_horizontal: n_total,
        rays_vertical: 1,
        frequency: 10.0,
        unit_scale: 1.0,
    }
}

/// Frame of up to `max_points` points in a few dense blobs plus scattered
/// points and padding.
pub fn random_cluster_frame(rng: &mut ChaCha8Rng, max_points: usize) -> Frame {
    let n = rng.random_range(1..=max_points);
    let blobs: Vec<([f64; 3], f64)> = (0..rng.random_range(1..6))
        .map(|_| {
            (
                std::array::from_fn(|_| rng.random_range(-15.0..15.0)),
                rng.random_range(0.2..2.0),
            )
        })
        .collect();
    let points = (0..n)
        .map(|_| {
            let r: f64 = rng.random();
            if r < 0.05 {
                Point::PADDING
            } else if r < 0.25 {
                Point::new(
                    rng.random_range(-20.0..20.0),
                    rng.random_range(-20.0..20.0),
                    rng.random_range(-3.0..3.0),
                )
            } else {
                let (c, s) = blobs[rng.random_range(0..blobs.len())];
                Point::new(
                    (c[0] + rng.random_range(-s..s)) as f32,
                    (c[1] + rng.random_range(-s..s)) as f32,
                    (c[2] + rng.random_range(-s / 2.0..s / 2.0)) as f32,
                )
            }
        })
        .collect();
    Frame::new(1, "f", points)
}

/// Canonical form of a clustering: sorted member lists ordered by smallest
/// member.
pub fn canonical(clusters: &[Vec<usize>]) -> Vec<Vec<usize>> {
    let mut c: Vec<Vec<usize>> = clusters
        .iter()
        .map(|m| {
            let mut m = m.clone();
            m.sort_unstable();
            m
        })
        .collect();
    c.sort_by_key(|m| m[0]);
    c
}
