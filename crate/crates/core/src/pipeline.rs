//! Staged, resumable end-to-end run: consistency, ground-truth selection,
//! flow cache, window sampling, training, scoring, detection, evaluation
//! and figures. A stage is skipped when all its outputs are newer than all
//! its inputs.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::classifier::{score_sequence, train_logistic, window_pc_input, LogisticModel, PcInput, TrainConfig};
use crate::container::{read_tensor_file, write_atomic, write_tensor_file};
use crate::data::{fill_consistency, parse_annotations, select_gt, serialize_annotations, AnnotationSet, GtPolicy};
use crate::error::{Error, Result};
use crate::eval::{default_thresholds, evaluate_corpus, ClassMetric, EvalMode, EvalReport, VideoEval, PRIMARY_THRESHOLD};
use crate::flow::FlowConfig;
use crate::postprocess::{scores_to_boundaries, DetectionConfig, ScoreSequence};
use crate::report::{render_class_bars, render_timeline, TimelineSpec};
use crate::tables::{read_boundaries_csv, read_scores_csv, write_boundaries_csv, write_scores_csv};
use crate::window::{
    candidate_timestamps, extract_window, flow_file_name, label_windows, read_manifest, subsample_backgrounds,
    write_flow_file, write_manifest, FlowProvider, FrameSequence, FrameSource, Label, ManifestRow, VideoStore, Window,
    WindowSpec,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub annotations: PathBuf,
    /// Holds one `<video_id>/` frame directory per video.
    pub frames: PathBuf,
    pub work_dir: PathBuf,

    pub gt_policy: String,
    pub consistency_threshold: f64,
    pub recompute_consistency: bool,

    pub flow_levels: usize,
    pub flow_scale: f64,
    pub flow_iterations: usize,
    pub flow_poly_window: usize,
    pub flow_poly_sigma: f64,
    pub flow_window: usize,

    pub m: usize,
    pub stride: f64,
    pub image_side: usize,
    pub label_tolerance: f64,
    /// Background windows kept per boundary window.
    pub background_ratio: f64,

    pub learning_rate: f64,
    pub decay_factor: f64,
    pub decay_every: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,

    pub smooth_sigma: f64,
    pub score_threshold: f64,
    pub min_separation: f64,

    pub workers: usize,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        let flow = FlowConfig::default();
        let window = WindowSpec::default();
        let train = TrainConfig::default();
        let detect = DetectionConfig::default();
        Self {
            annotations: PathBuf::from("annotations.json"),
            frames: PathBuf::from("frames"),
            work_dir: PathBuf::from("work"),
            gt_policy: "highest".into(),
            consistency_threshold: PRIMARY_THRESHOLD,
            recompute_consistency: false,
            flow_levels: flow.pyramid_levels,
            flow_scale: flow.pyramid_scale,
            flow_iterations: flow.iterations_per_level,
            flow_poly_window: flow.poly_window,
            flow_poly_sigma: flow.poly_sigma,
            flow_window: flow.averaging_window,
            m: window.m,
            stride: window.candidate_stride,
            image_side: window.image_side,
            label_tolerance: window.label_tolerance,
            background_ratio: 3.0,
            learning_rate: train.learning_rate,
            decay_factor: train.decay_factor,
            decay_every: train.decay_every,
            epochs: train.epochs,
            batch_size: train.batch_size,
            seed: train.seed,
            smooth_sigma: detect.smooth_sigma,
            score_threshold: detect.score_threshold,
            min_separation: detect.min_separation,
            workers: 1,
        }
    }
}

impl PipelineConfig {
    /// Parses flat `key = value` lines; `#` starts a comment. Relative paths
    /// are resolved against `base`.
    pub fn parse(text: &str, base: &Path) -> Result<Self> {
        let mut map = serde_json::Map::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| Error::Parse {
                line: n + 1,
                column: 1,
                message: format!("expected key = value, got '{line}'"),
            })?;
            let (key, value) = (key.trim(), value.trim());
            let json = if let Ok(v) = value.parse::<u64>() {
                serde_json::Value::from(v)
            } else if let Ok(v) = value.parse::<f64>() {
                serde_json::Value::from(v)
            } else if let Ok(v) = value.parse::<bool>() {
                serde_json::Value::from(v)
            } else {
                serde_json::Value::from(value)
            };
            if map.insert(key.to_string(), json).is_some() {
                return Err(Error::Parse {
                    line: n + 1,
                    column: 1,
                    message: format!("duplicate key '{key}'"),
                });
            }
        }
        let mut config: Self = serde_json::from_value(serde_json::Value::Object(map)).map_err(|e| Error::Parse {
            line: 0,
            column: 0,
            message: format!("config: {e}"),
        })?;
        for p in [&mut config.annotations, &mut config.frames, &mut config.work_dir] {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, path.parent().unwrap_or(Path::new(".")))
    }

    /// The `key = value` form accepted by [`PipelineConfig::parse`].
    pub fn to_text(&self) -> String {
        let value = serde_json::to_value(self).expect("config is serializable");
        let mut out = String::new();
        for (k, v) in value.as_object().expect("config is an object") {
            let v = match v {
                serde_json::Value::String(s) => s.clone(),
                other => other.to_string(),
            };
            out.push_str(&format!("{k} = {v}\n"));
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        self.flow_config().validate()?;
        self.window_spec().validate()?;
        self.train_config().validate()?;
        self.gt_policy()?;
        if !(self.consistency_threshold > 0.0 && self.consistency_threshold <= 1.0) {
            return Err(Error::Domain("consistency_threshold must be in (0,1]".into()));
        }
        if !(self.background_ratio >= 0.0) {
            return Err(Error::Domain("background_ratio must be non-negative".into()));
        }
        if self.workers == 0 {
            return Err(Error::Domain("workers must be >= 1".into()));
        }
        Ok(())
    }

    pub fn flow_config(&self) -> FlowConfig {
        FlowConfig {
            pyramid_levels: self.flow_levels,
            pyramid_scale: self.flow_scale,
            iterations_per_level: self.flow_iterations,
            poly_window: self.flow_poly_window,
            poly_sigma: self.flow_poly_sigma,
            averaging_window: self.flow_window,
        }
    }

    pub fn window_spec(&self) -> WindowSpec {
        WindowSpec {
            m: self.m,
            candidate_stride: self.stride,
            image_side: self.image_side,
            label_tolerance: self.label_tolerance,
        }
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            learning_rate: self.learning_rate,
            decay_factor: self.decay_factor,
            decay_every: self.decay_every,
            epochs: self.epochs,
            batch_size: self.batch_size,
            seed: self.seed,
        }
    }

    pub fn detection_config(&self) -> DetectionConfig {
        DetectionConfig {
            smooth_sigma: self.smooth_sigma,
            score_threshold: self.score_threshold,
            min_separation: self.min_separation,
        }
    }

    pub fn gt_policy(&self) -> Result<GtPolicy> {
        self.gt_policy.parse()
    }
}

/// File layout under the work directory.
#[derive(Debug, Clone)]
pub struct WorkLayout {
    pub root: PathBuf,
}

impl WorkLayout {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }
    /// Settings a stage depends on, used for freshness.
    pub fn stage_config(&self, stage: &str) -> PathBuf {
        self.root.join("config").join(format!("{stage}.cfg"))
    }
    pub fn consistency(&self) -> PathBuf {
        self.root.join("consistency.json")
    }
    pub fn gt(&self) -> PathBuf {
        self.root.join("gt.csv")
    }
    pub fn flow_dir(&self, video_id: &str) -> PathBuf {
        self.root.join("flow").join(video_id)
    }
    pub fn flow_marker(&self, video_id: &str) -> PathBuf {
        self.flow_dir(video_id).join("complete")
    }
    pub fn samples_dir(&self) -> PathBuf {
        self.root.join("samples")
    }
    pub fn manifest(&self) -> PathBuf {
        self.samples_dir().join("manifest.csv")
    }
    pub fn model(&self) -> PathBuf {
        self.root.join("model.json")
    }
    pub fn train_log(&self) -> PathBuf {
        self.root.join("train_log.csv")
    }
    pub fn scores(&self) -> PathBuf {
        self.root.join("scores.csv")
    }
    pub fn predictions(&self) -> PathBuf {
        self.root.join("predictions.csv")
    }
    pub fn eval_dir(&self) -> PathBuf {
        self.root.join("eval")
    }
    pub fn eval_summary(&self) -> PathBuf {
        self.eval_dir().join("summary.json")
    }
    pub fn report_dir(&self) -> PathBuf {
        self.root.join("report")
    }
    pub fn run_manifest(&self) -> PathBuf {
        self.root.join("run_manifest.json")
    }
}

fn mtime(path: &Path) -> Option<SystemTime> {
    std::fs::metadata(path).and_then(|m| m.modified()).ok()
}

/// True when every output exists and none is older than any existing input.
pub fn is_fresh(inputs: &[PathBuf], outputs: &[PathBuf]) -> bool {
    let newest_input = inputs.iter().filter_map(|p| mtime(p)).max();
    let oldest_output = outputs.iter().map(|p| mtime(p)).collect::<Option<Vec<_>>>();
    match (newest_input, oldest_output) {
        (_, None) => false,
        (None, Some(_)) => true,
        (Some(i), Some(outs)) => outs.into_iter().min().is_none_or(|o| o >= i),
    }
}

fn create_dir(path: &Path) -> Result<()> {
    std::fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(parent) = path.parent() {
        create_dir(parent)?;
    }
    write_atomic(path, text.as_bytes())
}

pub fn load_annotations(path: &Path) -> Result<Vec<AnnotationSet>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_annotations(&text)
}

pub fn fill_all_consistency(sets: &mut [AnnotationSet], threshold: f64, recompute: bool) -> Result<()> {
    sets.iter_mut().try_for_each(|s| fill_consistency(s, threshold, recompute))
}

pub fn select_all_gt(sets: &[AnnotationSet], policy: GtPolicy) -> Result<BTreeMap<String, Vec<f64>>> {
    sets.iter()
        .map(|s| select_gt(s, policy).map(|b| (b.video_id, b.timestamps)))
        .collect()
}

/// Writes `flow_%06d.gebt` for frames 1.. of a video, then a completion marker.
pub fn compute_flow_cache(seq: &FrameSequence, dir: &Path, config: &FlowConfig) -> Result<()> {
    create_dir(dir)?;
    let provider = FlowProvider::compute(*config);
    let store = VideoStore::load(seq, &provider)?;
    for (i, field) in store.flows.iter().enumerate().skip(1) {
        write_flow_file(&dir.join(flow_file_name(i)), field)?;
    }
    write_atomic(&dir.join("complete"), b"")
}

/// Labels every candidate of a video against `gt`, keeps all boundary windows
/// and a seeded subsample of background windows, and writes their tensors to
/// `samples_dir/<video_id>/`. Manifest paths are relative to `samples_dir`.
pub fn sample_video(
    source: &dyn FrameSource,
    set: &AnnotationSet,
    gt: &[f64],
    spec: &WindowSpec,
    background_ratio: f64,
    seed: u64,
    samples_dir: &Path,
) -> Result<Vec<ManifestRow>> {
    let meta = &set.meta;
    let candidates = candidate_timestamps(meta, spec.candidate_stride)?;
    let labeling = label_windows(&candidates, gt, spec.label_tolerance)?;
    let keep = subsample_backgrounds(&labeling.labels, background_ratio, seed, &meta.video_id);
    create_dir(&samples_dir.join(&meta.video_id))?;
    let mut rows = Vec::with_capacity(keep.len());
    for k in keep {
        let t = candidates[k];
        let window = extract_window(source, meta, spec, t)?;
        let rgb_path = format!("{}/w{k:05}_rgb.gebt", meta.video_id);
        let flow_path = format!("{}/w{k:05}_flow.gebt", meta.video_id);
        write_tensor_file(&samples_dir.join(&rgb_path), &window.rgb.dims, &window.rgb.data)?;
        write_tensor_file(&samples_dir.join(&flow_path), &window.flow.dims, &window.flow.data)?;
        rows.push(ManifestRow {
            video_id: meta.video_id.clone(),
            t,
            label: labeling.labels[k],
            rgb_path,
            flow_path,
        });
    }
    Ok(rows)
}

/// Reads the window tensors listed in a manifest and builds classifier inputs.
pub fn load_training_set(rows: &[ManifestRow], base: &Path) -> Result<Vec<(PcInput, bool)>> {
    rows.par_iter()
        .map(|row| {
            let resolve = |p: &str| {
                let p = PathBuf::from(p);
                if p.is_relative() {
                    base.join(p)
                } else {
                    p
                }
            };
            let rgb = read_tensor_file(&resolve(&row.rgb_path))?;
            let flow = read_tensor_file(&resolve(&row.flow_path))?;
            if rgb.dims.len() != 4 || flow.dims.len() != 4 || rgb.dims[0] != flow.dims[0] {
                return Err(Error::DimensionMismatch(format!(
                    "window tensors for {} at t={} have dims {:?} and {:?}",
                    row.video_id, row.t, rgb.dims, flow.dims
                )));
            }
            let window = Window {
                t: row.t,
                frame_indices: (0..rgb.dims[0]).collect(),
                rgb,
                flow,
            };
            Ok((window_pc_input(&window)?, row.label == Label::Boundary))
        })
        .collect()
}

/// Scores every candidate timestamp of one video.
pub fn score_video(source: &dyn FrameSource, set: &AnnotationSet, spec: &WindowSpec, model: &LogisticModel) -> Result<ScoreSequence> {
    let meta = &set.meta;
    let inputs = candidate_timestamps(meta, spec.candidate_stride)?
        .into_iter()
        .map(|t| Ok((t, window_pc_input(&extract_window(source, meta, spec, t)?)?)))
        .collect::<Result<Vec<_>>>()?;
    score_sequence(model, &meta.video_id, &inputs)
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalOptions {
    pub mode: EvalMode,
    pub thresholds: Vec<f64>,
    pub primary: f64,
    pub class_metric: ClassMetric,
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self {
            mode: EvalMode::Relative,
            thresholds: default_thresholds(),
            primary: PRIMARY_THRESHOLD,
            class_metric: ClassMetric::F1,
        }
    }
}

/// Evaluates predictions against selected ground truth. Videos without
/// predictions count as empty; a prediction for a video absent from the
/// annotations is an error.
pub fn evaluate_predictions(
    sets: &[AnnotationSet],
    gt: &BTreeMap<String, Vec<f64>>,
    predictions: &BTreeMap<String, Vec<f64>>,
    options: &EvalOptions,
) -> Result<EvalReport> {
    if let Some(id) = predictions.keys().find(|id| !sets.iter().any(|s| &s.meta.video_id == *id)) {
        return Err(Error::VideoMismatch(format!("predictions reference unknown video '{id}'")));
    }
    let empty = Vec::new();
    let videos: Vec<VideoEval<'_>> = sets
        .iter()
        .map(|s| VideoEval {
            video_id: &s.meta.video_id,
            class_label: &s.meta.class_label,
            duration: s.meta.duration,
            predictions: predictions.get(&s.meta.video_id).unwrap_or(&empty),
            ground_truth: gt.get(&s.meta.video_id).unwrap_or(&empty),
        })
        .collect();
    evaluate_corpus(&videos, options.mode, &options.thresholds, options.primary, options.class_metric)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalSummary {
    pub mode: String,
    pub threshold: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl EvalSummary {
    pub fn from_report(report: &EvalReport) -> Self {
        let p = report.primary();
        Self {
            mode: report.mode.name().to_string(),
            threshold: p.threshold,
            precision: p.precision,
            recall: p.recall,
            f1: p.f1,
        }
    }
}

pub fn write_eval_outputs(dir: &Path, report: &EvalReport) -> Result<()> {
    create_dir(dir)?;
    let mut buf = Vec::new();
    report.write_global_csv(&mut buf)?;
    write_atomic(&dir.join("global.csv"), &buf)?;
    buf.clear();
    report.write_per_video_csv(&mut buf)?;
    write_atomic(&dir.join("per_video.csv"), &buf)?;
    buf.clear();
    report.write_per_class_csv(&mut buf)?;
    write_atomic(&dir.join("per_class.csv"), &buf)?;
    let summary = serde_json::to_string_pretty(&EvalSummary::from_report(report)).expect("summary is serializable");
    write_atomic(&dir.join("summary.json"), summary.as_bytes())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub name: String,
    pub ran: bool,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool_version: String,
    pub config: PipelineConfig,
    pub inputs: Vec<PathBuf>,
    /// Outputs of completed stages; all exist when the manifest is written.
    pub outputs: Vec<PathBuf>,
    /// Completed stages in order.
    pub stages: Vec<StageRecord>,
    pub total_seconds: f64,
    pub error: Option<String>,
    pub summary: Option<EvalSummary>,
}

pub const STAGES: [&str; 9] = [
    "consistency",
    "select_gt",
    "flow",
    "sample",
    "train",
    "score",
    "detect",
    "eval",
    "report",
];

/// Config keys each stage reads.
pub fn stage_keys(stage: &str) -> &'static [&'static str] {
    match stage {
        "consistency" => &["annotations", "consistency_threshold", "recompute_consistency"],
        "select_gt" => &["gt_policy"],
        "flow" => &[
            "frames",
            "flow_levels",
            "flow_scale",
            "flow_iterations",
            "flow_poly_window",
            "flow_poly_sigma",
            "flow_window",
        ],
        "sample" => &["m", "stride", "image_side", "label_tolerance", "background_ratio", "seed"],
        "train" => &["learning_rate", "decay_factor", "decay_every", "epochs", "batch_size", "seed"],
        "score" => &["m", "stride", "image_side"],
        "detect" => &["smooth_sigma", "score_threshold", "min_separation"],
        _ => &[],
    }
}

pub struct Pipeline {
    pub config: PipelineConfig,
    pub layout: WorkLayout,
    pub force: bool,
}

impl Pipeline {
    pub fn new(config: PipelineConfig) -> Result<Self> {
        config.validate()?;
        let layout = WorkLayout::new(&config.work_dir);
        Ok(Self {
            config,
            layout,
            force: false,
        })
    }

    pub fn run(&self) -> Result<RunManifest> {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(self.config.workers)
            .build()
            .map_err(|e| Error::Domain(format!("thread pool: {e}")))?;
        pool.install(|| self.run_stages())
    }

    fn run_stages(&self) -> Result<RunManifest> {
        let start = Instant::now();
        create_dir(&self.layout.root)?;
        // Rewritten only on change so unchanged settings keep stages fresh.
        let values = serde_json::to_value(&self.config).expect("config is serializable");
        for name in STAGES {
            let mut text = String::new();
            for key in stage_keys(name) {
                text.push_str(&format!("{key} = {}\n", values[*key]));
            }
            let path = self.layout.stage_config(name);
            if std::fs::read_to_string(&path).ok().as_deref() != Some(text.as_str()) {
                write_text(&path, &text)?;
            }
        }

        let mut manifest = RunManifest {
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            config: self.config.clone(),
            inputs: vec![self.config.annotations.clone(), self.config.frames.clone()],
            outputs: Vec::new(),
            stages: Vec::with_capacity(STAGES.len()),
            total_seconds: 0.0,
            error: None,
            summary: None,
        };
        let mut failure = None;
        for name in STAGES {
            let t0 = Instant::now();
            match self.run_stage(name) {
                Ok(ran) => {
                    manifest.stages.push(StageRecord {
                        name: name.to_string(),
                        ran,
                        seconds: t0.elapsed().as_secs_f64(),
                    });
                    manifest.outputs.extend(self.stage_outputs(name)?);
                }
                Err(e) => {
                    manifest.error = Some(format!("stage {name}: {e}"));
                    failure = Some(e);
                    break;
                }
            }
        }
        manifest.summary = std::fs::read_to_string(self.layout.eval_summary())
            .ok()
            .and_then(|s| serde_json::from_str(&s).ok());
        manifest.total_seconds = start.elapsed().as_secs_f64();
        write_text(
            &self.layout.run_manifest(),
            &serde_json::to_string_pretty(&manifest).expect("manifest is serializable"),
        )?;
        match failure {
            Some(e) => Err(e),
            None => Ok(manifest),
        }
    }

    fn sets(&self) -> Result<Vec<AnnotationSet>> {
        load_annotations(&self.layout.consistency())
    }

    fn sequence(&self, set: &AnnotationSet) -> Result<FrameSequence> {
        FrameSequence::open(set.meta.clone(), self.config.frames.join(&set.meta.video_id))
    }

    fn store(&self, set: &AnnotationSet) -> Result<VideoStore> {
        let provider = FlowProvider::cached(self.layout.flow_dir(&set.meta.video_id), self.config.flow_config());
        VideoStore::load(&self.sequence(set)?, &provider)
    }

    fn flow_markers(&self) -> Result<Vec<PathBuf>> {
        Ok(self.sets()?.iter().map(|s| self.layout.flow_marker(&s.meta.video_id)).collect())
    }

    fn stage_inputs(&self, name: &str) -> Result<Vec<PathBuf>> {
        let l = &self.layout;
        let mut inputs = vec![l.stage_config(name)];
        match name {
            "consistency" => inputs.push(self.config.annotations.clone()),
            "select_gt" | "flow" => inputs.push(l.consistency()),
            "sample" => {
                inputs.push(l.gt());
                inputs.extend(self.flow_markers()?);
            }
            "train" => inputs.push(l.manifest()),
            "score" => {
                inputs.push(l.model());
                inputs.extend(self.flow_markers()?);
            }
            "detect" => inputs.push(l.scores()),
            "eval" => inputs.extend([l.predictions(), l.gt()]),
            "report" => inputs.push(l.eval_summary()),
            _ => return Err(Error::Domain(format!("unknown stage '{name}'"))),
        }
        Ok(inputs)
    }

    fn stage_outputs(&self, name: &str) -> Result<Vec<PathBuf>> {
        let l = &self.layout;
        Ok(match name {
            "consistency" => vec![l.consistency()],
            "select_gt" => vec![l.gt()],
            "flow" => self.flow_markers()?,
            "sample" => vec![l.manifest()],
            "train" => vec![l.model(), l.train_log()],
            "score" => vec![l.scores()],
            "detect" => vec![l.predictions()],
            "eval" => ["global.csv", "per_video.csv", "per_class.csv", "summary.json"]
                .iter()
                .map(|f| l.eval_dir().join(f))
                .collect(),
            "report" => vec![l.report_dir().join("classes.svg")],
            _ => return Err(Error::Domain(format!("unknown stage '{name}'"))),
        })
    }

    /// Runs one stage unless its outputs are fresh; returns whether it ran.
    pub fn run_stage(&self, name: &str) -> Result<bool> {
        let inputs = self.stage_inputs(name)?;
        let outputs = self.stage_outputs(name)?;
        if !self.force && is_fresh(&inputs, &outputs) {
            return Ok(false);
        }
        match name {
            "consistency" => self.stage_consistency(),
            "select_gt" => self.stage_select_gt(),
            "flow" => self.stage_flow(),
            "sample" => self.stage_sample(),
            "train" => self.stage_train(),
            "score" => self.stage_score(),
            "detect" => self.stage_detect(),
            "eval" => self.stage_eval(),
            _ => self.stage_report(),
        }?;
        Ok(true)
    }

    fn stage_consistency(&self) -> Result<()> {
        let mut sets = load_annotations(&self.config.annotations)?;
        fill_all_consistency(&mut sets, self.config.consistency_threshold, self.config.recompute_consistency)?;
        write_text(&self.layout.consistency(), &serialize_annotations(&sets))
    }

    fn stage_select_gt(&self) -> Result<()> {
        let gt = select_all_gt(&self.sets()?, self.config.gt_policy()?)?;
        write_boundaries_csv(&self.layout.gt(), &gt)
    }

    fn stage_flow(&self) -> Result<()> {
        let sets = self.sets()?;
        let inputs = self.stage_inputs("flow")?;
        sets.par_iter().try_for_each(|set| {
            let id = &set.meta.video_id;
            let seq = self.sequence(set)?;
            let marker = self.layout.flow_marker(id);
            if !self.force && is_fresh(&inputs, &[marker]) {
                return Ok(());
            }
            compute_flow_cache(&seq, &self.layout.flow_dir(id), &self.config.flow_config())
        })
    }

    fn stage_sample(&self) -> Result<()> {
        let sets = self.sets()?;
        let gt = read_boundaries_csv(&self.layout.gt())?;
        let spec = self.config.window_spec();
        let empty = Vec::new();
        let rows = sets
            .par_iter()
            .map(|set| {
                let store = self.store(set)?;
                sample_video(
                    &store,
                    set,
                    gt.get(&set.meta.video_id).unwrap_or(&empty),
                    &spec,
                    self.config.background_ratio,
                    self.config.seed,
                    &self.layout.samples_dir(),
                )
            })
            .collect::<Result<Vec<_>>>()?;
        write_manifest(&self.layout.manifest(), &rows.concat())
    }

    fn stage_train(&self) -> Result<()> {
        let rows = read_manifest(&self.layout.manifest())?;
        let data = load_training_set(&rows, &self.layout.samples_dir())?;
        let outcome = train_logistic(&data, &self.config.train_config())?;
        let mut log = String::from("epoch,loss\n");
        for (e, loss) in outcome.epoch_losses.iter().enumerate() {
            log.push_str(&format!("{e},{loss}\n"));
        }
        write_text(&self.layout.train_log(), &log)?;
        write_text(&self.layout.model(), &outcome.model.to_json())
    }

    fn stage_score(&self) -> Result<()> {
        let text = std::fs::read_to_string(self.layout.model()).map_err(|e| Error::io(self.layout.model(), e))?;
        let model = LogisticModel::from_json(&text)?;
        let spec = self.config.window_spec();
        let sets = self.sets()?;
        let seqs = sets
            .par_iter()
            .map(|set| score_video(&self.store(set)?, set, &spec, &model))
            .collect::<Result<Vec<_>>>()?;
        write_scores_csv(&self.layout.scores(), &seqs)
    }

    fn stage_detect(&self) -> Result<()> {
        let config = self.config.detection_config();
        let predictions = read_scores_csv(&self.layout.scores())?
            .iter()
            .map(|s| scores_to_boundaries(s, &config).map(|b| (b.video_id, b.timestamps)))
            .collect::<Result<BTreeMap<_, _>>>()?;
        write_boundaries_csv(&self.layout.predictions(), &predictions)
    }

    fn stage_eval(&self) -> Result<()> {
        let sets = self.sets()?;
        let gt = read_boundaries_csv(&self.layout.gt())?;
        let predictions = read_boundaries_csv(&self.layout.predictions())?;
        let report = evaluate_predictions(&sets, &gt, &predictions, &EvalOptions::default())?;
        write_eval_outputs(&self.layout.eval_dir(), &report)
    }

    fn stage_report(&self) -> Result<()> {
        let sets = self.sets()?;
        let gt = read_boundaries_csv(&self.layout.gt())?;
        let predictions = read_boundaries_csv(&self.layout.predictions())?;
        let report = evaluate_predictions(&sets, &gt, &predictions, &EvalOptions::default())?;
        let dir = self.layout.report_dir();
        create_dir(&dir.join("timelines"))?;
        let classes: Vec<(String, f64)> = report.per_class.iter().map(|(c, s)| (c.clone(), s.mean)).collect();
        let title = format!("mean F1 per class at threshold {PRIMARY_THRESHOLD}");
        write_text(&dir.join("classes.svg"), &render_class_bars(&title, &classes)?)?;
        let empty = Vec::new();
        for set in &sets {
            let id = &set.meta.video_id;
            let spec = TimelineSpec::new(id.as_str(), set.meta.duration)
                .track("ground truth", gt.get(id).unwrap_or(&empty).clone())
                .track("prediction", predictions.get(id).unwrap_or(&empty).clone());
            write_text(&dir.join("timelines").join(format!("{id}.svg")), &render_timeline(&spec)?)?;
        }
        Ok(())
    }
}
