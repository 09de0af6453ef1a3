//! End-to-end orchestration: one teacher per dataset, superset merging and
//! the file-based iterative training loop.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use log::{info, warn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::annotator::{annotate_frame, Reject};
use crate::background::{build_histogram, extract_query_frames, filter_frame, select_background};
use crate::clustering::dbscan;
use crate::error::{Error, Result};
use crate::evaluation::{evaluate_frames, restrict_to_region, EvalReport, DEFAULT_THRESHOLDS};
use crate::pointcloud::{
    load_frame_sequence, read_labels, write_frame_file, write_labels, CropBounds, FrameLabels,
    LabelSource, SensorMeta, TeacherConfig,
};
use crate::preprocess::{crop_frame, pad_frame, unify_units, UnificationTransform};
use crate::simulator::{render_sequence, write_scene, SceneSpec};

/// One teacher: where its frames live and how to label them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetConfig {
    /// Output sub-directory and provenance tag.
    pub name: String,
    pub frames: PathBuf,
    pub sensor: SensorMeta,
    #[serde(default)]
    pub teacher: TeacherConfig,
    /// Mapping into the superset's common frame.
    #[serde(default)]
    pub transform: UnificationTransform,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateConfig {
    /// Scene file; the built-in default scene when absent.
    #[serde(default)]
    pub scene: Option<PathBuf>,
    pub output: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvaluateConfig {
    pub predictions: PathBuf,
    pub reference: PathBuf,
    pub output: PathBuf,
    #[serde(default = "default_thresholds")]
    pub thresholds: Vec<f64>,
    /// Only labels centered inside this region are scored, on both sides.
    #[serde(default)]
    pub region: Option<CropBounds>,
}

fn default_thresholds() -> Vec<f64> {
    DEFAULT_THRESHOLDS.to_vec()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IterateConfig {
    pub previous: PathBuf,
    pub predictions: PathBuf,
    #[serde(default = "default_min_score")]
    pub min_score: f64,
}

fn default_min_score() -> f64 {
    0.5
}

fn default_jobs() -> usize {
    1
}

/// Declarative configuration shared by all subcommands. Relative paths are
/// resolved against the directory of the configuration file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub output_root: PathBuf,
    /// Round index the iterative loop starts from when no manifest exists.
    #[serde(default)]
    pub iteration: usize,
    /// Worker threads; 0 means one per core.
    #[serde(default = "default_jobs")]
    pub jobs: usize,
    /// Seeds the simulator.
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default, rename = "dataset")]
    pub datasets: Vec<DatasetConfig>,
    #[serde(default)]
    pub simulate: Option<SimulateConfig>,
    #[serde(default)]
    pub evaluate: Option<EvaluateConfig>,
    #[serde(default)]
    pub iterate: Option<IterateConfig>,
}

impl PipelineConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    /// Parses `path` and resolves relative paths against its directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let mut cfg = Self::from_toml_str(&text)?;
        cfg.resolve_paths(path.parent().unwrap_or(Path::new(".")));
        Ok(cfg)
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.output_root);
        for d in &mut self.datasets {
            fix(&mut d.frames);
        }
        if let Some(s) = &mut self.simulate {
            if let Some(scene) = &mut s.scene {
                fix(scene);
            }
            fix(&mut s.output);
        }
        if let Some(e) = &mut self.evaluate {
            fix(&mut e.predictions);
            fix(&mut e.reference);
            fix(&mut e.output);
        }
        if let Some(i) = &mut self.iterate {
            fix(&mut i.previous);
            fix(&mut i.predictions);
        }
    }

    /// Checks the dataset list used by `annotate` and `merge`.
    pub fn validate_datasets(&self) -> Result<()> {
        if self.datasets.is_empty() {
            return Err(Error::Config("no [[dataset]] entries".into()));
        }
        let mut seen = BTreeSet::new();
        for d in &self.datasets {
            let valid_name = !d.name.is_empty()
                && d.name != "superset"
                && !d.name.starts_with("round_")
                && d.name.chars().all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_');
            if !valid_name {
                return Err(Error::Config(format!("invalid dataset name '{}'", d.name)));
            }
            if !seen.insert(&d.name) {
                return Err(Error::Config(format!("duplicate dataset name '{}'", d.name)));
            }
            d.teacher.validate(None)?;
            d.sensor.validate(d.teacher.n_total)?;
            d.transform.validate()?;
        }
        Ok(())
    }

    pub fn dataset_dir(&self, name: &str) -> PathBuf {
        self.output_root.join(name)
    }
}

/// Counters for one teacher run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct TeacherStats {
    pub frames: usize,
    /// Data points after cropping.
    pub points: usize,
    pub removed: usize,
    pub clusters: usize,
    pub accepted: usize,
    pub rejected: usize,
}

impl TeacherStats {
    pub fn removed_percent(&self) -> f64 {
        if self.points == 0 {
            0.0
        } else {
            100.0 * self.removed as f64 / self.points as f64
        }
    }

    pub fn render(&self) -> String {
        format!(
            "frames {}\npoints {}\nremoved {}\nremoved_percent {:.6}\nclusters {}\naccepted {}\nrejected {}\n",
            self.frames,
            self.points,
            self.removed,
            self.removed_percent(),
            self.clusters,
            self.accepted,
            self.rejected
        )
    }
}

/// In-memory result of a teacher run.
#[derive(Debug, Clone, PartialEq)]
pub struct TeacherOutput {
    pub labels: Vec<FrameLabels>,
    pub rejects: Vec<Reject>,
    pub stats: TeacherStats,
}

/// Runs the teacher on an already loaded sequence.
pub fn teach_sequence(
    seq: crate::pointcloud::FrameSequence,
    cfg: &TeacherConfig,
) -> Result<(TeacherOutput, crate::background::BackgroundModel)> {
    cfg.validate(Some(seq.len()))?;
    seq.meta.validate(cfg.n_total)?;
    let seq = unify_units(seq);
    let meta = seq.meta.clone();
    let frames = seq
        .frames
        .into_iter()
        .map(|f| pad_frame(f, cfg.n_total).map(|f| crop_frame(f, &cfg.crop)))
        .collect::<Result<Vec<_>>>()?;
    let seq = crate::pointcloud::FrameSequence::new(frames, meta)?;

    let query = extract_query_frames(&seq, cfg.n_query)?;
    let hist = build_histogram(&query, cfg.n_bin)?;
    let model = select_background(&hist, cfg.n_tall)?;

    let per_frame = seq
        .frames
        .par_iter()
        .map(|frame| {
            let filtered = filter_frame(frame, &model, cfg.d_threshold)?;
            let clustering = dbscan(&filtered, cfg.epsilon, cfg.min_pts);
            let ann = annotate_frame(&filtered, &clustering.clusters, cfg)?;
            let stats = TeacherStats {
                frames: 1,
                points: frame.data_count(),
                removed: frame.data_count() - filtered.data_count(),
                clusters: clustering.clusters.len(),
                accepted: ann.labels.len(),
                rejected: ann.rejects.len(),
            };
            Ok((FrameLabels::new(frame.stem.clone(), ann.labels), ann.rejects, stats))
        })
        .collect::<Result<Vec<_>>>()?;

    let mut out = TeacherOutput {
        labels: Vec::with_capacity(per_frame.len()),
        rejects: Vec::new(),
        stats: TeacherStats::default(),
    };
    for (labels, rejects, s) in per_frame {
        out.labels.push(labels);
        out.rejects.extend(rejects);
        out.stats.frames += s.frames;
        out.stats.points += s.points;
        out.stats.removed += s.removed;
        out.stats.clusters += s.clusters;
        out.stats.accepted += s.accepted;
        out.stats.rejected += s.rejected;
    }
    Ok((out, model))
}

/// Loads, labels and writes one dataset under `out_dir`:
/// `labels/`, `stats.txt`, `rejects.log` and `background.model`.
pub fn run_teacher(ds: &DatasetConfig, out_dir: &Path) -> Result<TeacherStats> {
    let seq = load_frame_sequence(&ds.frames, ds.sensor.clone())?;
    let (out, model) = teach_sequence(seq, &ds.teacher)?;

    let labels_dir = out_dir.join("labels");
    if labels_dir.exists() {
        fs::remove_dir_all(&labels_dir).map_err(|e| Error::io(&labels_dir, e))?;
    }
    write_labels(&labels_dir, &out.labels)?;
    let write = |name: &str, bytes: &[u8]| {
        let p = out_dir.join(name);
        fs::write(&p, bytes).map_err(|e| Error::io(&p, e))
    };
    write("stats.txt", out.stats.render().as_bytes())?;
    let mut log = String::new();
    for r in &out.rejects {
        writeln!(log, "{r}").unwrap();
    }
    write("rejects.log", log.as_bytes())?;
    write("background.model", &model.encode())?;
    info!(
        "{}: {} frames, {:.2}% points removed, {} clusters, {} boxes, {} rejected",
        ds.name,
        out.stats.frames,
        out.stats.removed_percent(),
        out.stats.clusters,
        out.stats.accepted,
        out.stats.rejected
    );
    Ok(out.stats)
}

/// Runs `f` on a pool of `jobs` worker threads (0 means one per core).
pub fn with_jobs<R: Send>(jobs: usize, f: impl FnOnce() -> R + Send) -> Result<R> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| Error::Invariant(format!("thread pool: {e}")))?;
    Ok(pool.install(f))
}

/// Runs every dataset's teacher, up to `cfg.jobs` at a time. A failing
/// dataset does not affect the others; results come back in config order.
pub fn annotate(cfg: &PipelineConfig) -> Result<Vec<(String, Result<TeacherStats>)>> {
    cfg.validate_datasets()?;
    with_jobs(cfg.jobs, || {
        cfg.datasets
            .par_iter()
            .map(|ds| {
                let dir = cfg.dataset_dir(&ds.name);
                let res = fs::create_dir_all(&dir)
                    .map_err(|e| Error::io(&dir, e))
                    .and_then(|_| run_teacher(ds, &dir));
                if let Err(e) = &res {
                    warn!("{}: {e}", ds.name);
                }
                (ds.name.clone(), res)
            })
            .collect()
    })
}

/// A labeled dataset to merge.
#[derive(Debug, Clone)]
pub struct MergeInput {
    pub name: String,
    pub frames: PathBuf,
    pub labels: PathBuf,
    pub sensor: SensorMeta,
}

/// One row of the superset index.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IndexEntry {
    pub dataset: String,
    pub source_stem: String,
    pub stem: String,
    pub labels: usize,
}

/// Writes transformed frames and labels of every input into
/// `out/frames` and `out/labels` as `<dataset>__<stem>`, plus `out/index.txt`.
/// Labels are concatenated; overlapping teachers are not deduplicated.
pub fn merge_supersets(
    inputs: &[MergeInput],
    transforms: &[UnificationTransform],
    out: &Path,
) -> Result<Vec<IndexEntry>> {
    if inputs.len() != transforms.len() {
        return Err(Error::LengthMismatch {
            what: "datasets and transforms",
            left: inputs.len(),
            right: transforms.len(),
        });
    }
    for t in transforms {
        t.validate()?;
    }
    let frames_out = out.join("frames");
    let labels_out = out.join("labels");
    for d in [&frames_out, &labels_out] {
        if d.exists() {
            fs::remove_dir_all(d).map_err(|e| Error::io(d, e))?;
        }
        fs::create_dir_all(d).map_err(|e| Error::io(d, e))?;
    }

    let mut index = Vec::new();
    for (input, t) in inputs.iter().zip(transforms) {
        let seq = unify_units(load_frame_sequence(&input.frames, input.sensor.clone())?);
        let labels: BTreeMap<String, Vec<_>> = read_labels(&input.labels, LabelSource::Teacher)?
            .into_iter()
            .map(|fl| (fl.stem, fl.labels))
            .collect();
        let stems: BTreeSet<&String> = seq.frames.iter().map(|f| &f.stem).collect();
        let orphans: Vec<String> = labels.keys().filter(|s| !stems.contains(s)).cloned().collect();
        if !orphans.is_empty() {
            return Err(Error::UnmatchedFrames(
                orphans.into_iter().map(|s| format!("{}/{s} (no frame file)", input.name)).collect(),
            ));
        }
        for frame in &seq.frames {
            let stem = format!("{}__{}", input.name, frame.stem);
            let points: Vec<_> = frame.points.iter().map(|p| t.apply_point(p)).collect();
            write_frame_file(&frames_out.join(format!("{stem}.bin")), &points)?;
            let mapped: Vec<_> = labels
                .get(&frame.stem)
                .map(|ls| ls.iter().map(|l| t.apply_label(l)).collect())
                .unwrap_or_default();
            crate::pointcloud::write_label_file(&labels_out.join(format!("{stem}.txt")), &mapped)?;
            index.push(IndexEntry {
                dataset: input.name.clone(),
                source_stem: frame.stem.clone(),
                stem,
                labels: mapped.len(),
            });
        }
    }
    let mut text = String::from("stem\tdataset\tsource_stem\tlabels\n");
    for e in &index {
        writeln!(text, "{}\t{}\t{}\t{}", e.stem, e.dataset, e.source_stem, e.labels).unwrap();
    }
    let p = out.join("index.txt");
    fs::write(&p, text).map_err(|e| Error::io(&p, e))?;
    Ok(index)
}

/// Merges the `annotate` outputs of every configured dataset into
/// `<output_root>/superset`.
pub fn merge(cfg: &PipelineConfig) -> Result<Vec<IndexEntry>> {
    cfg.validate_datasets()?;
    let inputs: Vec<MergeInput> = cfg
        .datasets
        .iter()
        .map(|d| MergeInput {
            name: d.name.clone(),
            frames: d.frames.clone(),
            labels: cfg.dataset_dir(&d.name).join("labels"),
            sensor: d.sensor.clone(),
        })
        .collect();
    let transforms: Vec<_> = cfg.datasets.iter().map(|d| d.transform).collect();
    merge_supersets(&inputs, &transforms, &cfg.output_root.join("superset"))
}

/// Renders the configured scene (the default scene when none is given) into
/// the output directory, with a copy of the effective scene file. `seed`
/// overrides the scene's own.
pub fn run_simulation(cfg: &SimulateConfig, seed: Option<u64>) -> Result<SceneSpec> {
    let mut spec = match &cfg.scene {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
            SceneSpec::from_toml_str(&text)?
        }
        None => SceneSpec::default_scene(),
    };
    if let Some(seed) = seed {
        spec.seed = seed;
    }
    let scene = render_sequence(&spec)?;
    write_scene(&scene, &cfg.output)?;
    let p = cfg.output.join("scene.toml");
    fs::write(&p, spec.to_toml_string()).map_err(|e| Error::io(&p, e))?;
    info!(
        "rendered {} frames, {} truth boxes",
        scene.sequence.len(),
        scene.truth.iter().map(|t| t.labels.len()).sum::<usize>()
    );
    Ok(spec)
}

/// Scores the configured predictions against the reference labels and
/// writes `report.csv` and `report.txt` to the output directory.
pub fn run_evaluation(cfg: &EvaluateConfig) -> Result<EvalReport> {
    if cfg.thresholds.is_empty() || cfg.thresholds.iter().any(|t| !(0.0..=1.0).contains(t)) {
        return Err(Error::Config("thresholds must be non-empty and lie in [0, 1]".into()));
    }
    if let Some(r) = &cfg.region {
        r.validate()?;
    }
    let mut pred = read_labels(&cfg.predictions, LabelSource::External)?;
    let mut truth = read_labels(&cfg.reference, LabelSource::External)?;
    if let Some(r) = &cfg.region {
        pred = restrict_to_region(&pred, r);
        truth = restrict_to_region(&truth, r);
    }
    let report = evaluate_frames(&pred, &truth, &cfg.thresholds)?;
    report.write(&cfg.output)?;
    Ok(report)
}

pub const MANIFEST: &str = "rounds.txt";

#[derive(Debug, Clone, PartialEq)]
pub struct RoundOutcome {
    pub round: usize,
    pub labels_dir: PathBuf,
    pub kept: usize,
    pub dropped: usize,
}

fn read_rounds(manifest: &Path) -> Result<Vec<(usize, String)>> {
    let text = match fs::read_to_string(manifest) {
        Ok(t) => t,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Vec::new()),
        Err(e) => return Err(Error::io(manifest, e)),
    };
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| {
            let mut it = l.split('\t');
            let round = it.next().and_then(|r| r.parse().ok());
            match (round, it.next()) {
                (Some(r), Some(dir)) => Ok((r, dir.to_string())),
                _ => Err(Error::Invariant(format!("{}: bad manifest line '{l}'", manifest.display()))),
            }
        })
        .collect()
}

/// Turns external predictions into the next round's ground truth under
/// `<out_root>/round_<k>/labels` and appends round `k` to the manifest.
/// `k` continues the manifest, or starts at `start_round + 1`.
///
/// Output stems are those of `previous`; a stem without a prediction file
/// gets an empty label file.
pub fn iterate(
    previous: &Path,
    predictions: &Path,
    out_root: &Path,
    min_score: f64,
    start_round: usize,
) -> Result<RoundOutcome> {
    if !(0.0..=1.0).contains(&min_score) {
        return Err(Error::Config(format!("min_score must lie in [0, 1], got {min_score}")));
    }
    let prev_stems: Vec<String> = read_labels(previous, LabelSource::Teacher)?
        .into_iter()
        .map(|fl| fl.stem)
        .collect();
    if prev_stems.is_empty() {
        return Err(Error::EmptySequence);
    }
    let mut preds: BTreeMap<String, Vec<_>> = read_labels(predictions, LabelSource::External)?
        .into_iter()
        .map(|fl| (fl.stem, fl.labels))
        .collect();
    let known: BTreeSet<&String> = prev_stems.iter().collect();
    let unknown: Vec<String> = preds
        .keys()
        .filter(|s| !known.contains(s))
        .map(|s| format!("{s} (no previous label file)"))
        .collect();
    if !unknown.is_empty() {
        return Err(Error::UnmatchedFrames(unknown));
    }

    let (mut kept, mut dropped, mut missing) = (0, 0, 0);
    let next: Vec<FrameLabels> = prev_stems
        .iter()
        .map(|stem| {
            let labels = preds.remove(stem).unwrap_or_else(|| {
                missing += 1;
                Vec::new()
            });
            let before = labels.len();
            let labels: Vec<_> = labels.into_iter().filter(|l| l.score >= min_score).collect();
            kept += labels.len();
            dropped += before - labels.len();
            FrameLabels::new(stem.clone(), labels)
        })
        .collect();
    if missing > 0 {
        warn!("{missing} frames have no prediction file; writing empty labels");
    }
    if kept == 0 {
        warn!("no predictions reach score {min_score}; next round has no labels");
    }

    let manifest = out_root.join(MANIFEST);
    let rounds = read_rounds(&manifest)?;
    let round = rounds.last().map_or(start_round, |r| r.0) + 1;
    let dir_name = format!("round_{round}");
    let round_dir = out_root.join(&dir_name);
    if round_dir.exists() {
        return Err(Error::Invariant(format!("{} already exists", round_dir.display())));
    }
    let labels_dir = round_dir.join("labels");
    write_labels(&labels_dir, &next)?;
    let mut text = String::new();
    for (r, d) in &rounds {
        writeln!(text, "{r}\t{d}").unwrap();
    }
    writeln!(text, "{round}\t{dir_name}").unwrap();
    fs::write(&manifest, text).map_err(|e| Error::io(&manifest, e))?;
    info!("round {round}: kept {kept}, dropped {dropped}");
    Ok(RoundOutcome {
        round,
        labels_dir,
        kept,
        dropped,
    })
}
