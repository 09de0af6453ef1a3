//! Per-beam distance histograms over the query frames, tall-bin background
//! model, and background removal.
//!
//! Every point index `i` is treated as one fixed beam of a stationary
//! sensor. The ranges it returned during the query frames are binned into
//! `n_bin` equal-width bins between their minimum and maximum; the most
//! populated bins are the surfaces that beam normally sees. A later return
//! within `d_threshold` of one of those surfaces is background.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::pointcloud::{Frame, FrameSequence, Point};

/// Keeps the first `n_query` frames.
pub fn extract_query_frames(seq: &FrameSequence, n_query: usize) -> Result<FrameSequence> {
    if n_query > seq.len() {
        return Err(Error::QueryExceedsSequence {
            n_query,
            frames: seq.len(),
        });
    }
    if n_query == 0 {
        return Err(Error::EmptySequence);
    }
    FrameSequence::new(seq.frames[..n_query].to_vec(), seq.meta.clone())
}

/// Histogram of the ranges observed at one point index.
#[derive(Debug, Clone, PartialEq)]
pub struct IndexHistogram {
    /// Number of non-padding ranges binned.
    pub observed: u32,
    pub d_min: f64,
    pub d_max: f64,
    /// Zero when the range is degenerate (`d_min == d_max`).
    pub bin_width: f64,
    pub bin_count: Vec<u32>,
    /// Mean of the member ranges; zero for empty bins.
    pub bin_mean: Vec<f64>,
}

impl IndexHistogram {
    fn empty(n_bin: usize) -> Self {
        IndexHistogram {
            observed: 0,
            d_min: 0.0,
            d_max: 0.0,
            bin_width: 0.0,
            bin_count: vec![0; n_bin],
            bin_mean: vec![0.0; n_bin],
        }
    }

    pub fn is_degenerate(&self) -> bool {
        self.observed > 0 && self.d_min == self.d_max
    }

    /// Bin of range `d`; `d == d_max` lands in the last bin.
    pub fn bin_of(&self, d: f64) -> usize {
        let n_bin = self.bin_count.len();
        if self.bin_width == 0.0 {
            return 0;
        }
        let k = ((d - self.d_min) / self.bin_width).floor();
        if k <= 0.0 {
            0
        } else {
            (k as usize).min(n_bin - 1)
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DistanceHistogram {
    pub n_total: usize,
    pub n_bin: usize,
    pub n_query: usize,
    pub per_index: Vec<IndexHistogram>,
}

impl DistanceHistogram {
    pub fn index(&self, i: usize) -> &IndexHistogram {
        &self.per_index[i]
    }
}

/// Builds the per-index range histogram over the query frames. Padding
/// points contribute nothing.
pub fn build_histogram(query: &FrameSequence, n_bin: usize) -> Result<DistanceHistogram> {
    if query.is_empty() {
        return Err(Error::EmptySequence);
    }
    if n_bin == 0 {
        return Err(Error::Config("n_bin must be at least 1".into()));
    }
    let n_total = query.frames[0].len();
    for f in &query.frames {
        if f.len() != n_total {
            return Err(Error::ArityMismatch {
                expected: n_total,
                found: f.len(),
            });
        }
    }
    let ranges: Vec<Vec<f64>> = query
        .frames
        .par_iter()
        .map(|f| {
            f.points
                .iter()
                .map(|p| if p.padding { f64::NAN } else { p.range() })
                .collect()
        })
        .collect();

    let per_index = (0..n_total)
        .into_par_iter()
        .map_init(Vec::new, |buf: &mut Vec<f64>, i| {
            buf.clear();
            buf.extend(ranges.iter().map(|r| r[i]).filter(|d| !d.is_nan()));
            index_histogram(buf, n_bin)
        })
        .collect();

    Ok(DistanceHistogram {
        n_total,
        n_bin,
        n_query: query.len(),
        per_index,
    })
}

fn index_histogram(ranges: &[f64], n_bin: usize) -> IndexHistogram {
    let mut h = IndexHistogram::empty(n_bin);
    if ranges.is_empty() {
        return h;
    }
    h.observed = ranges.len() as u32;
    h.d_min = ranges.iter().copied().fold(f64::INFINITY, f64::min);
    h.d_max = ranges.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if h.d_max > h.d_min {
        h.bin_width = (h.d_max - h.d_min) / n_bin as f64;
    }
    let mut members: Vec<Vec<f64>> = vec![Vec::new(); n_bin];
    for &d in ranges {
        members[h.bin_of(d)].push(d);
    }
    for (k, m) in members.iter().enumerate() {
        if m.is_empty() {
            continue;
        }
        h.bin_count[k] = m.len() as u32;
        h.bin_mean[k] = bin_mean(m);
    }
    h
}

/// Correctly rounded mean, clamped to the members' span. The exact sum makes
/// the result independent of frame order.
fn bin_mean(members: &[f64]) -> f64 {
    let lo = members.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = members.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    (exact_sum(members) / members.len() as f64).clamp(lo, hi)
}

/// Correctly rounded floating-point sum (Shewchuk's partials with
/// round-half-even correction).
fn exact_sum(values: &[f64]) -> f64 {
    let mut partials: Vec<f64> = Vec::new();
    for &v in values {
        let mut x = v;
        let mut kept = 0;
        for j in 0..partials.len() {
            let mut y = partials[j];
            if x.abs() < y.abs() {
                std::mem::swap(&mut x, &mut y);
            }
            let hi = x + y;
            let lo = y - (hi - x);
            if lo != 0.0 {
                partials[kept] = lo;
                kept += 1;
            }
            x = hi;
        }
        partials.truncate(kept);
        partials.push(x);
    }
    let Some(mut n) = partials.len().checked_sub(1) else {
        return 0.0;
    };
    let mut hi = partials[n];
    let mut lo = 0.0;
    while n > 0 {
        let x = hi;
        n -= 1;
        let y = partials[n];
        hi = x + y;
        lo = y - (hi - x);
        if lo != 0.0 {
            break;
        }
    }
    if n > 0 && ((lo < 0.0 && partials[n - 1] < 0.0) || (lo > 0.0 && partials[n - 1] > 0.0)) {
        let y = lo * 2.0;
        let x = hi + y;
        if y == x - hi {
            hi = x;
        }
    }
    hi
}

/// Representative background ranges per point index.
#[derive(Debug, Clone, PartialEq)]
pub struct BackgroundModel {
    pub n_total: usize,
    pub n_tall: usize,
    /// Means of the tallest occupied bins, tallest first.
    pub tall_distances: Vec<Vec<f64>>,
}

/// Picks, per index, the means of the `n_tall` most populated bins. Equal
/// counts are ordered by bin index.
pub fn select_background(hist: &DistanceHistogram, n_tall: usize) -> Result<BackgroundModel> {
    if n_tall > hist.n_bin {
        return Err(Error::Config(format!(
            "n_tall = {n_tall} exceeds n_bin = {}",
            hist.n_bin
        )));
    }
    let tall_distances = hist
        .per_index
        .par_iter()
        .map(|h| {
            let mut bins: Vec<usize> = (0..h.bin_count.len())
                .filter(|&k| h.bin_count[k] > 0)
                .collect();
            bins.sort_by(|&a, &b| h.bin_count[b].cmp(&h.bin_count[a]).then(a.cmp(&b)));
            bins.iter().take(n_tall).map(|&k| h.bin_mean[k]).collect()
        })
        .collect();
    Ok(BackgroundModel {
        n_total: hist.n_total,
        n_tall,
        tall_distances,
    })
}

impl BackgroundModel {
    pub fn is_background(&self, index: usize, p: &Point, d_threshold: f64) -> bool {
        if p.padding {
            return true;
        }
        let d = p.range();
        self.tall_distances[index]
            .iter()
            .any(|t| (d - t).abs() <= d_threshold)
    }

    fn check_arity(&self, frame: &Frame) -> Result<()> {
        if frame.len() != self.n_total {
            return Err(Error::ArityMismatch {
                expected: self.n_total,
                found: frame.len(),
            });
        }
        Ok(())
    }

    /// Per index: `true` for background or padding.
    pub fn background_mask(&self, frame: &Frame, d_threshold: f64) -> Result<Vec<bool>> {
        self.check_arity(frame)?;
        Ok(frame
            .points
            .iter()
            .enumerate()
            .map(|(i, p)| self.is_background(i, p, d_threshold))
            .collect())
    }
}

/// Replaces background points with padding.
pub fn filter_frame(frame: &Frame, model: &BackgroundModel, d_threshold: f64) -> Result<Frame> {
    model.check_arity(frame)?;
    let points = frame
        .points
        .iter()
        .enumerate()
        .map(|(i, p)| {
            if model.is_background(i, p, d_threshold) {
                Point::PADDING
            } else {
                *p
            }
        })
        .collect();
    Ok(Frame {
        timestamp_index: frame.timestamp_index,
        stem: frame.stem.clone(),
        points,
    })
}

const MODEL_MAGIC: &[u8; 8] = b"DHDPBGM\0";
const MODEL_VERSION: u32 = 1;

impl BackgroundModel {
    /// Sidecar layout, little-endian: magic, `u32` version, `u32` n_total,
    /// `u32` n_tall, then per index a `u8` count followed by that many `f64`.
    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(20 + self.n_total * (1 + 8 * self.n_tall));
        out.extend_from_slice(MODEL_MAGIC);
        out.extend_from_slice(&MODEL_VERSION.to_le_bytes());
        out.extend_from_slice(&(self.n_total as u32).to_le_bytes());
        out.extend_from_slice(&(self.n_tall as u32).to_le_bytes());
        for tall in &self.tall_distances {
            out.push(tall.len() as u8);
            for d in tall {
                out.extend_from_slice(&d.to_le_bytes());
            }
        }
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let bad = |msg: &str| Error::MalformedModel(msg.to_owned());
        let mut reader = ByteReader { rest: bytes };
        if reader.take(8)? != MODEL_MAGIC {
            return Err(bad("bad magic"));
        }
        let version = reader.u32()?;
        if version != MODEL_VERSION {
            return Err(Error::MalformedModel(format!("unsupported version {version}")));
        }
        let n_total = reader.u32()? as usize;
        let n_tall = reader.u32()? as usize;
        if n_tall > u8::MAX as usize {
            return Err(bad("n_tall too large"));
        }
        // Each record is at least one byte.
        if n_total > reader.rest.len() {
            return Err(bad("truncated"));
        }
        let mut tall_distances = Vec::with_capacity(n_total);
        for _ in 0..n_total {
            let count = reader.take(1)?[0] as usize;
            if count > n_tall {
                return Err(bad("record longer than n_tall"));
            }
            let tall: Vec<f64> = reader
                .take(count * 8)?
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                .collect();
            if tall.iter().any(|d| !d.is_finite() || *d < 0.0) {
                return Err(bad("non-finite or negative distance"));
            }
            tall_distances.push(tall);
        }
        if !reader.rest.is_empty() {
            return Err(bad("trailing bytes"));
        }
        Ok(BackgroundModel {
            n_total,
            n_tall,
            tall_distances,
        })
    }
}

struct ByteReader<'a> {
    rest: &'a [u8],
}

impl<'a> ByteReader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.rest.len() < n {
            return Err(Error::MalformedModel("truncated".into()));
        }
        let (head, rest) = self.rest.split_at(n);
        self.rest = rest;
        Ok(head)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
}
