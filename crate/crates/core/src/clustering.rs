//! 3D DBSCAN over the data points of one frame.

use std::collections::{HashMap, VecDeque};

use crate::pointcloud::Frame;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Cluster {
    pub frame_index: usize,
    /// Ascending indices into the frame's points.
    pub point_indices: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Clustering {
    /// Ordered by the index of each cluster's seed point.
    pub clusters: Vec<Cluster>,
    /// Ascending.
    pub noise: Vec<usize>,
}

/// Uniform hash grid. Cells are marginally wider than `epsilon`, so any two
/// points within `epsilon` sit in the same or adjacent cells.
struct Grid {
    cell: f64,
    cells: HashMap<[i64; 3], Vec<usize>>,
}

impl Grid {
    fn new(coords: &[(usize, [f64; 3])], epsilon: f64) -> Self {
        let cell = epsilon * (1.0 + 1e-9);
        let mut cells: HashMap<[i64; 3], Vec<usize>> = HashMap::new();
        for (slot, (_, c)) in coords.iter().enumerate() {
            cells.entry(Self::key(cell, c)).or_default().push(slot);
        }
        Grid { cell, cells }
    }

    fn key(cell: f64, c: &[f64; 3]) -> [i64; 3] {
        c.map(|v| (v / cell).floor() as i64)
    }

    /// Slots (positions in `coords`) within the closed `epsilon` ball,
    /// including `slot` itself.
    fn neighbors(&self, coords: &[(usize, [f64; 3])], slot: usize, eps_sq: f64, out: &mut Vec<usize>) {
        out.clear();
        let c = coords[slot].1;
        let [kx, ky, kz] = Self::key(self.cell, &c);
        for dx in -1..=1 {
            for dy in -1..=1 {
                for dz in -1..=1 {
                    let Some(bucket) = self.cells.get(&[kx + dx, ky + dy, kz + dz]) else {
                        continue;
                    };
                    out.extend(
                        bucket
                            .iter()
                            .copied()
                            .filter(|&o| within(&c, &coords[o].1, eps_sq)),
                    );
                }
            }
        }
        out.sort_unstable();
    }
}

#[inline]
fn within(a: &[f64; 3], b: &[f64; 3], eps_sq: f64) -> bool {
    let (dx, dy, dz) = (a[0] - b[0], a[1] - b[1], a[2] - b[2]);
    dx * dx + dy * dy + dz * dz <= eps_sq
}

const UNVISITED: usize = usize::MAX;
const NOISE: usize = usize::MAX - 1;

/// Clusters the frame's data points. Seeds are taken in ascending point
/// index, so a border point reachable from two clusters joins the one seeded
/// first.
pub fn dbscan(frame: &Frame, epsilon: f64, min_pts: usize) -> Clustering {
    let coords: Vec<(usize, [f64; 3])> = frame.data_points().map(|(i, p)| (i, p.coords())).collect();
    let grid = Grid::new(&coords, epsilon);
    let eps_sq = epsilon * epsilon;
    let min_pts = min_pts.max(1);

    let mut label = vec![UNVISITED; coords.len()];
    let mut members: Vec<Vec<usize>> = Vec::new();
    let mut nbrs = Vec::new();
    let mut queue = VecDeque::new();

    for seed in 0..coords.len() {
        if label[seed] != UNVISITED {
            continue;
        }
        grid.neighbors(&coords, seed, eps_sq, &mut nbrs);
        if nbrs.len() < min_pts {
            label[seed] = NOISE;
            continue;
        }
        let id = members.len();
        members.push(vec![seed]);
        label[seed] = id;
        queue.extend(nbrs.iter().copied());
        while let Some(q) = queue.pop_front() {
            match label[q] {
                NOISE => {
                    label[q] = id;
                    members[id].push(q);
                    continue;
                }
                UNVISITED => {}
                _ => continue,
            }
            label[q] = id;
            members[id].push(q);
            grid.neighbors(&coords, q, eps_sq, &mut nbrs);
            if nbrs.len() >= min_pts {
                queue.extend(nbrs.iter().copied().filter(|&o| label[o] == UNVISITED || label[o] == NOISE));
            }
        }
    }

    let clusters = members
        .into_iter()
        .map(|slots| {
            let mut point_indices: Vec<usize> = slots.into_iter().map(|s| coords[s].0).collect();
            point_indices.sort_unstable();
            Cluster {
                frame_index: frame.timestamp_index,
                point_indices,
            }
        })
        .collect();
    let noise = (0..coords.len())
        .filter(|&s| label[s] == NOISE)
        .map(|s| coords[s].0)
        .collect();
    Clustering { clusters, noise }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pointcloud::Point;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn ball(rng: &mut ChaCha8Rng, center: [f32; 3], r: f32, n: usize) -> Vec<Point> {
        (0..n)
            .map(|_| loop {
                let d: [f32; 3] = std::array::from_fn(|_| rng.random_range(-r..r));
                if d.iter().map(|v| v * v).sum::<f32>() <= r * r {
                    break Point::new(center[0] + d[0], center[1] + d[1], center[2] + d[2]);
                }
            })
            .collect()
    }

    #[test]
    fn tight_ball_is_one_cluster() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let f = Frame::new(1, "f", ball(&mut rng, [3.0, 3.0, 0.0], 0.1, 10));
        let c = dbscan(&f, 0.5, 4);
        assert_eq!(c.clusters.len(), 1);
        assert_eq!(c.clusters[0].point_indices, (0..10).collect::<Vec<_>>());
        assert!(c.noise.is_empty());
    }

    #[test]
    fn two_balls_and_isolated_noise() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut pts = ball(&mut rng, [0.0, 0.0, 0.0], 0.2, 10);
        pts.extend(ball(&mut rng, [10.0, 0.0, 0.0], 0.2, 10));
        for k in 0..5 {
            pts.push(Point::new(-20.0 + 3.0 * k as f32, 25.0, 1.0));
        }
        let c = dbscan(&Frame::new(1, "f", pts), 0.5, 4);
        assert_eq!(c.clusters.len(), 2);
        assert_eq!(c.clusters[0].point_indices, (0..10).collect::<Vec<_>>());
        assert_eq!(c.clusters[1].point_indices, (10..20).collect::<Vec<_>>());
        assert_eq!(c.noise, (20..25).collect::<Vec<_>>());
    }

    #[test]
    fn min_pts_one_leaves_no_noise() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let pts: Vec<Point> = (0..50)
            .map(|_| Point::new(rng.random_range(-30.0..30.0), rng.random_range(-30.0..30.0), 0.0))
            .collect();
        let c = dbscan(&Frame::new(1, "f", pts), 0.1, 1);
        assert!(c.noise.is_empty());
        assert_eq!(c.clusters.iter().map(|c| c.point_indices.len()).sum::<usize>(), 50);
    }

    #[test]
    fn boundary_distance_is_a_neighbor() {
        let pts = [Point::new(0.0, 0.0, 0.0), Point::new(0.5, 0.0, 0.0)];
        let f = Frame::new(1, "f", vec![Point::PADDING, pts[0], pts[1]]);
        // (0,0,0) data points are legal in memory even though files treat them as no-returns.
        let c = dbscan(&f, 0.5, 2);
        assert_eq!(c.clusters.len(), 1);
        assert_eq!(c.clusters[0].point_indices, vec![1, 2]);
    }

    #[test]
    fn border_point_goes_to_first_seeded_cluster() {
        // Index 4 is a border point reachable from both dense groups.
        let mut pts: Vec<Point> = [0.0, 0.1, 0.2, 0.3, 1.05].map(|x| Point::new(x, 0.0, 0.0)).to_vec();
        pts.extend([1.8, 1.9, 2.0, 2.1].map(|x| Point::new(x, 0.0, 0.0)));
        let c = dbscan(&Frame::new(1, "f", pts), 0.8, 4);
        assert_eq!(c.clusters.len(), 2);
        assert_eq!(c.clusters[0].point_indices, vec![0, 1, 2, 3, 4]);
        assert_eq!(c.clusters[1].point_indices, vec![5, 6, 7, 8]);
    }

    proptest! {
        #[test]
        fn partition_and_scale_covariance(
            raw in prop::collection::vec((prop::array::uniform3(-5.0..5.0f32), prop::bool::weighted(0.1)), 0..120),
            eps in 0.2..1.5f64,
            min_pts in 1usize..6,
        ) {
            let pts: Vec<Point> = raw.iter().map(|&([x, y, z], pad)| if pad { Point::PADDING } else { Point::new(x, y, z) }).collect();
            let f = Frame::new(1, "f", pts.clone());
            let c = dbscan(&f, eps, min_pts);
            let mut all: Vec<usize> = c.clusters.iter().flat_map(|c| c.point_indices.iter().copied()).collect();
            all.extend(&c.noise);
            all.sort_unstable();
            let data: Vec<usize> = f.data_points().map(|(i, _)| i).collect();
            prop_assert_eq!(all, data);
            for cl in &c.clusters {
                prop_assert!(!cl.point_indices.is_empty());
            }

            // Power-of-two scaling is exact in floating point.
            let scaled: Vec<Point> = pts.iter().map(|p| if p.padding { *p } else { Point::new(p.x * 4.0, p.y * 4.0, p.z * 4.0) }).collect();
            let c4 = dbscan(&Frame::new(1, "f", scaled), eps * 4.0, min_pts);
            prop_assert_eq!(c4, c);
        }
    }
}
