//! Detection scoring: oriented 3D IoU, greedy score-ordered matching,
//! all-point interpolated average precision and recall.

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::fmt::{self, Write as _};
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::geometry::{clip_convex, polygon_area};
use crate::pointcloud::{read_labels, CropBounds, FrameLabels, LabelSource, ObjectClass, ObjectLabel};

pub const DEFAULT_THRESHOLDS: [f64; 3] = [0.25, 0.3, 0.5];

/// Drops every label whose center lies outside `region`, on each frame.
pub fn restrict_to_region(frames: &[FrameLabels], region: &CropBounds) -> Vec<FrameLabels> {
    frames
        .iter()
        .map(|f| {
            let labels = f
                .labels
                .iter()
                .filter(|l| region.contains_xyz(l.center_x, l.center_y, l.center_z))
                .copied()
                .collect();
            FrameLabels::new(f.stem.clone(), labels)
        })
        .collect()
}

/// Intersection over union of two yaw-oriented boxes.
pub fn iou_3d(a: &ObjectLabel, b: &ObjectLabel) -> f64 {
    let (a_lo, a_hi) = a.z_range();
    let (b_lo, b_hi) = b.z_range();
    let dz = a_hi.min(b_hi) - a_lo.max(b_lo);
    if dz <= 0.0 {
        return 0.0;
    }
    let (fa, fb) = (a.footprint(), b.footprint());
    // Averaging both clipping orders keeps the result exactly symmetric.
    let area = (polygon_area(&clip_convex(&fa, &fb)) + polygon_area(&clip_convex(&fb, &fa))) / 2.0;
    if area <= 0.0 {
        return 0.0;
    }
    let inter = area * dz;
    let union = a.volume() + b.volume() - inter;
    if union <= 0.0 {
        return 0.0;
    }
    (inter / union).clamp(0.0, 1.0)
}

/// Ranking of predictions: higher score first, then nearer to the sensor.
fn rank_order(a: &ObjectLabel, b: &ObjectLabel) -> Ordering {
    b.score
        .total_cmp(&a.score)
        .then(a.center_range().total_cmp(&b.center_range()))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Matching {
    /// Prediction indices in ranking order.
    pub order: Vec<usize>,
    /// Per prediction (input order): the matched truth index.
    pub matched: Vec<Option<usize>>,
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
}

/// Greedy one-to-one matching for a single frame and class. Each prediction,
/// in ranking order, takes the unmatched truth of highest IoU at or above
/// `iou_threshold`.
pub fn match_detections(pred: &[ObjectLabel], truth: &[ObjectLabel], iou_threshold: f64) -> Matching {
    let mut order: Vec<usize> = (0..pred.len()).collect();
    order.sort_by(|&i, &j| rank_order(&pred[i], &pred[j]).then(i.cmp(&j)));
    let mut taken = vec![false; truth.len()];
    let mut matched = vec![None; pred.len()];
    for &i in &order {
        let mut best: Option<(usize, f64)> = None;
        for (j, t) in truth.iter().enumerate() {
            if taken[j] {
                continue;
            }
            let iou = iou_3d(&pred[i], t);
            if iou >= iou_threshold && best.is_none_or(|(_, b)| iou > b) {
                best = Some((j, iou));
            }
        }
        if let Some((j, _)) = best {
            taken[j] = true;
            matched[i] = Some(j);
        }
    }
    let tp = matched.iter().filter(|m| m.is_some()).count();
    Matching {
        order,
        matched,
        tp,
        fp: pred.len() - tp,
        fn_: truth.len() - tp,
    }
}

/// One ranked prediction after matching.
#[derive(Debug, Clone, PartialEq)]
pub struct RankedDetection {
    pub score: f64,
    pub range: f64,
    pub frame: String,
    pub rank_in_frame: usize,
    pub true_positive: bool,
}

impl RankedDetection {
    fn order(a: &Self, b: &Self) -> Ordering {
        b.score
            .total_cmp(&a.score)
            .then(a.range.total_cmp(&b.range))
            .then_with(|| a.frame.cmp(&b.frame))
            .then(a.rank_in_frame.cmp(&b.rank_in_frame))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ApResult {
    pub ap: f64,
    /// False when there were no reference objects; `ap` is then 0.
    pub defined: bool,
}

/// Area under the precision-recall curve with all-point interpolation
/// (precision at recall `r` is the best precision at any recall `>= r`).
pub fn average_precision(detections: &[RankedDetection], n_truth: usize) -> ApResult {
    if n_truth == 0 {
        return ApResult {
            ap: 0.0,
            defined: false,
        };
    }
    let mut dets: Vec<&RankedDetection> = detections.iter().collect();
    dets.sort_by(|a, b| RankedDetection::order(a, b));
    let mut recall = Vec::with_capacity(dets.len());
    let mut precision = Vec::with_capacity(dets.len());
    let mut tp = 0usize;
    for (k, d) in dets.iter().enumerate() {
        if d.true_positive {
            tp += 1;
        }
        recall.push(tp as f64 / n_truth as f64);
        precision.push(tp as f64 / (k + 1) as f64);
    }
    for k in (0..precision.len().saturating_sub(1)).rev() {
        precision[k] = precision[k].max(precision[k + 1]);
    }
    let mut ap = 0.0;
    let mut prev_recall = 0.0;
    for (r, p) in recall.iter().zip(&precision) {
        if *r > prev_recall {
            ap += (r - prev_recall) * p;
            prev_recall = *r;
        }
    }
    ApResult {
        ap: ap.clamp(0.0, 1.0),
        defined: true,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ThresholdResult {
    pub iou_threshold: f64,
    pub ap: f64,
    pub ap_defined: bool,
    pub recall: f64,
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassReport {
    pub class: ObjectClass,
    pub results: Vec<ThresholdResult>,
}

impl ClassReport {
    pub fn at(&self, iou_threshold: f64) -> Option<&ThresholdResult> {
        self.results.iter().find(|r| r.iou_threshold == iou_threshold)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub thresholds: Vec<f64>,
    pub classes: Vec<ClassReport>,
}

impl EvalReport {
    pub fn class(&self, class: ObjectClass) -> &ClassReport {
        self.classes
            .iter()
            .find(|c| c.class == class)
            .expect("every class is reported")
    }

    /// Machine-readable form: one CSV record per (class, threshold).
    pub fn to_csv(&self) -> String {
        let mut out = String::from("class,iou_threshold,ap,recall,tp,fp,fn,ap_defined\n");
        for c in &self.classes {
            for r in &c.results {
                writeln!(
                    out,
                    "{},{:.6},{:.6},{:.6},{},{},{},{}",
                    c.class, r.iou_threshold, r.ap, r.recall, r.tp, r.fp, r.fn_, r.ap_defined
                )
                .unwrap();
            }
        }
        out
    }

    /// Writes `report.csv` and `report.txt` into `dir`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let csv = dir.join("report.csv");
        fs::write(&csv, self.to_csv()).map_err(|e| Error::io(&csv, e))?;
        let txt = dir.join("report.txt");
        fs::write(&txt, self.to_string()).map_err(|e| Error::io(&txt, e))
    }
}

impl fmt::Display for EvalReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "{:<11} {:>6} {:>9} {:>9} {:>6} {:>6} {:>6}",
            "class", "IoU", "AP", "recall", "TP", "FP", "FN"
        )?;
        for c in &self.classes {
            for r in &c.results {
                let ap = if r.ap_defined {
                    format!("{:.4}", r.ap)
                } else {
                    "n/a".to_owned()
                };
                writeln!(
                    f,
                    "{:<11} {:>6.2} {:>9} {:>9.4} {:>6} {:>6} {:>6}",
                    c.class.as_str(),
                    r.iou_threshold,
                    ap,
                    r.recall,
                    r.tp,
                    r.fp,
                    r.fn_
                )?;
            }
        }
        Ok(())
    }
}

/// Scores predictions against reference labels, pooled over frames.
///
/// Frames are paired by stem. An empty prediction set counts as no
/// detections on every frame; otherwise both sides must list the same stems.
pub fn evaluate_frames(pred: &[FrameLabels], truth: &[FrameLabels], thresholds: &[f64]) -> Result<EvalReport> {
    if thresholds.iter().any(|t| !(0.0..=1.0).contains(t)) {
        return Err(Error::Config(format!("IoU thresholds must lie in [0, 1]: {thresholds:?}")));
    }
    let truth_map: BTreeMap<&str, &[ObjectLabel]> =
        truth.iter().map(|f| (f.stem.as_str(), f.labels.as_slice())).collect();
    let pred_map: BTreeMap<&str, &[ObjectLabel]> =
        pred.iter().map(|f| (f.stem.as_str(), f.labels.as_slice())).collect();
    if !pred.is_empty() {
        let mut missing: Vec<String> = truth_map
            .keys()
            .filter(|s| !pred_map.contains_key(*s))
            .map(|s| format!("{s} (no prediction file)"))
            .collect();
        missing.extend(
            pred_map
                .keys()
                .filter(|s| !truth_map.contains_key(*s))
                .map(|s| format!("{s} (no reference file)")),
        );
        if !missing.is_empty() {
            return Err(Error::UnmatchedFrames(missing));
        }
    }

    let mut classes = Vec::new();
    for class in ObjectClass::ALL {
        let mut results = Vec::with_capacity(thresholds.len());
        for &thr in thresholds {
            let mut dets = Vec::new();
            let (mut tp, mut fp, mut fn_, mut n_truth) = (0, 0, 0, 0);
            for (stem, t_all) in &truth_map {
                let t: Vec<ObjectLabel> = t_all.iter().filter(|l| l.class == class).copied().collect();
                let p: Vec<ObjectLabel> = pred_map
                    .get(stem)
                    .map(|p| p.iter().filter(|l| l.class == class).copied().collect())
                    .unwrap_or_default();
                let m = match_detections(&p, &t, thr);
                for (rank, &i) in m.order.iter().enumerate() {
                    dets.push(RankedDetection {
                        score: p[i].score,
                        range: p[i].center_range(),
                        frame: (*stem).to_owned(),
                        rank_in_frame: rank,
                        true_positive: m.matched[i].is_some(),
                    });
                }
                tp += m.tp;
                fp += m.fp;
                fn_ += m.fn_;
                n_truth += t.len();
            }
            let ap = average_precision(&dets, n_truth);
            results.push(ThresholdResult {
                iou_threshold: thr,
                ap: ap.ap,
                ap_defined: ap.defined,
                recall: if n_truth == 0 { 0.0 } else { tp as f64 / n_truth as f64 },
                tp,
                fp,
                fn_,
            });
        }
        classes.push(ClassReport { class, results });
    }
    Ok(EvalReport {
        thresholds: thresholds.to_vec(),
        classes,
    })
}

/// Reads both label directories and scores them.
pub fn evaluate(pred_dir: &Path, truth_dir: &Path, thresholds: &[f64]) -> Result<EvalReport> {
    let pred = read_labels(pred_dir, LabelSource::External)?;
    let truth = read_labels(truth_dir, LabelSource::Teacher)?;
    evaluate_frames(&pred, &truth, thresholds)
}
