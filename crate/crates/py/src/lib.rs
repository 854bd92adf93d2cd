//! Python bindings. Sequences cross the boundary as plain lists; images and
//! flow fields are flat row-major lists with explicit width and height.

use std::collections::HashMap;
use std::path::PathBuf;

use pyo3::create_exception;
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::PyBytes;

use gebd_core::classifier::{self, PcInput, TrainConfig};
use gebd_core::container;
use gebd_core::data::{self, GtPolicy};
use gebd_core::eval::{self, MatchPolicy};
use gebd_core::flow::{self, FlowConfig, FlowField};
use gebd_core::frame::GrayImage;
use gebd_core::pipeline::{Pipeline, PipelineConfig};
use gebd_core::postprocess::{self, DetectionConfig, ScoreSequence};
use gebd_core::synth::{self, SynthConfig};

create_exception!(gebd, GebdError, PyValueError);

fn err(e: impl std::fmt::Display) -> PyErr {
    GebdError::new_err(e.to_string())
}

#[pyclass(name = "AnnotationSet", module = "gebd", from_py_object)]
#[derive(Clone)]
struct PyAnnotationSet {
    inner: data::AnnotationSet,
}

#[pymethods]
impl PyAnnotationSet {
    #[getter]
    fn video_id(&self) -> &str {
        &self.inner.meta.video_id
    }

    #[getter]
    fn class_label(&self) -> &str {
        &self.inner.meta.class_label
    }

    #[getter]
    fn duration(&self) -> f64 {
        self.inner.meta.duration
    }

    #[getter]
    fn fps(&self) -> f64 {
        self.inner.meta.fps
    }

    #[getter]
    fn num_frames(&self) -> usize {
        self.inner.meta.num_frames
    }

    #[getter]
    fn annotator_ids(&self) -> Vec<String> {
        self.inner.tracks.iter().map(|t| t.annotator_id.clone()).collect()
    }

    /// Stored consistency per track, `None` where absent.
    #[getter]
    fn consistency(&self) -> Vec<Option<f64>> {
        self.inner.tracks.iter().map(|t| t.f1_consistency).collect()
    }

    /// Normalized timestamps of one annotator.
    fn boundaries(&self, annotator_id: &str) -> PyResult<Vec<f64>> {
        let track = self
            .inner
            .track(annotator_id)
            .ok_or_else(|| err(format!("no annotator '{annotator_id}'")))?;
        data::normalize_track(track, &self.inner.meta)
            .map(|b| b.timestamps)
            .map_err(err)
    }

    #[pyo3(signature = (threshold = data::DEFAULT_CONSISTENCY_THRESHOLD))]
    fn compute_consistency(&self, threshold: f64) -> PyResult<Vec<(String, f64)>> {
        data::compute_f1_consistency(&self.inner, threshold).map_err(err)
    }

    #[pyo3(signature = (threshold = data::DEFAULT_CONSISTENCY_THRESHOLD, recompute = false))]
    fn fill_consistency(&mut self, threshold: f64, recompute: bool) -> PyResult<()> {
        data::fill_consistency(&mut self.inner, threshold, recompute).map_err(err)
    }

    /// `policy` is `"highest"` or `"weighted:SEED"`.
    #[pyo3(signature = (policy = "highest"))]
    fn select_gt(&self, policy: &str) -> PyResult<Vec<f64>> {
        let policy: GtPolicy = policy.parse().map_err(err)?;
        data::select_gt(&self.inner, policy).map(|b| b.timestamps).map_err(err)
    }

    fn __repr__(&self) -> String {
        format!(
            "AnnotationSet(video_id={:?}, duration={}, tracks={})",
            self.inner.meta.video_id,
            self.inner.meta.duration,
            self.inner.tracks.len()
        )
    }
}

#[pyfunction]
fn parse_annotations(text: &str) -> PyResult<Vec<PyAnnotationSet>> {
    let sets = data::parse_annotations(text).map_err(err)?;
    Ok(sets.into_iter().map(|inner| PyAnnotationSet { inner }).collect())
}

#[pyfunction]
fn serialize_annotations(sets: Vec<PyAnnotationSet>) -> String {
    let sets: Vec<data::AnnotationSet> = sets.into_iter().map(|s| s.inner).collect();
    data::serialize_annotations(&sets)
}

#[pyclass(name = "Prf", module = "gebd", frozen, get_all, skip_from_py_object)]
#[derive(Clone, Copy)]
struct PyPrf {
    precision: f64,
    recall: f64,
    f1: f64,
    threshold: f64,
}

impl From<eval::Prf> for PyPrf {
    fn from(p: eval::Prf) -> Self {
        Self {
            precision: p.precision,
            recall: p.recall,
            f1: p.f1,
            threshold: p.threshold,
        }
    }
}

#[pymethods]
impl PyPrf {
    fn __repr__(&self) -> String {
        format!(
            "Prf(precision={:.4}, recall={:.4}, f1={:.4}, threshold={})",
            self.precision, self.recall, self.f1, self.threshold
        )
    }
}

#[pyclass(name = "MatchResult", module = "gebd", frozen, get_all)]
struct PyMatchResult {
    pairs: Vec<(usize, usize)>,
    distances: Vec<f64>,
    num_predictions: usize,
    num_ground_truth: usize,
    threshold: f64,
}

#[pymethods]
impl PyMatchResult {
    fn prf(&self) -> PyPrf {
        eval::Prf::from_counts(self.pairs.len(), self.num_predictions, self.num_ground_truth, self.threshold).into()
    }

    fn __len__(&self) -> usize {
        self.pairs.len()
    }
}

fn wrap_match(m: eval::MatchResult, threshold: f64) -> PyMatchResult {
    PyMatchResult {
        pairs: m.pairs,
        distances: m.distances,
        num_predictions: m.num_predictions,
        num_ground_truth: m.num_ground_truth,
        threshold,
    }
}

#[pyfunction]
fn rel_dis(predicted: f64, ground_truth: f64, duration: f64) -> PyResult<f64> {
    eval::rel_dis(predicted, ground_truth, duration).map_err(err)
}

#[pyfunction]
#[pyo3(signature = (predictions, ground_truth, duration, threshold = eval::PRIMARY_THRESHOLD, policy = "optimal"))]
fn match_boundaries(
    predictions: Vec<f64>,
    ground_truth: Vec<f64>,
    duration: f64,
    threshold: f64,
    policy: &str,
) -> PyResult<PyMatchResult> {
    let policy: MatchPolicy = policy.parse().map_err(err)?;
    let m = eval::match_boundaries(&predictions, &ground_truth, duration, threshold, policy).map_err(err)?;
    Ok(wrap_match(m, threshold))
}

#[pyfunction]
#[pyo3(signature = (predictions, ground_truth, window, policy = "optimal"))]
fn absolute_window_match(
    predictions: Vec<f64>,
    ground_truth: Vec<f64>,
    window: f64,
    policy: &str,
) -> PyResult<PyMatchResult> {
    let policy: MatchPolicy = policy.parse().map_err(err)?;
    let m = eval::absolute_window_match(&predictions, &ground_truth, window, policy).map_err(err)?;
    Ok(wrap_match(m, window))
}

#[pyfunction]
fn f1_from_pr(precision: f64, recall: f64) -> f64 {
    eval::f1_from_pr(precision, recall)
}

#[pyfunction]
#[pyo3(signature = (predictions, ground_truth, duration, thresholds = None))]
fn sweep_thresholds(
    predictions: Vec<f64>,
    ground_truth: Vec<f64>,
    duration: f64,
    thresholds: Option<Vec<f64>>,
) -> PyResult<Vec<PyPrf>> {
    let thresholds = thresholds.unwrap_or_else(eval::default_thresholds);
    let rows = eval::sweep_thresholds(&predictions, &ground_truth, duration, &thresholds).map_err(err)?;
    Ok(rows.into_iter().map(PyPrf::from).collect())
}

fn gray(pixels: Vec<f32>, width: usize, height: usize) -> PyResult<GrayImage> {
    GrayImage::new(width, height, pixels).map_err(err)
}

/// Dense flow from `frame1` to `frame2`, returned interleaved as `[dx, dy, ...]`.
#[pyfunction]
#[pyo3(signature = (
    frame1, frame2, width, height,
    pyramid_levels = 3, pyramid_scale = 0.5, iterations = 3,
    poly_window = 5, poly_sigma = 1.1, averaging_window = 15,
))]
#[allow(clippy::too_many_arguments)]
fn farneback_flow(
    frame1: Vec<f32>,
    frame2: Vec<f32>,
    width: usize,
    height: usize,
    pyramid_levels: usize,
    pyramid_scale: f64,
    iterations: usize,
    poly_window: usize,
    poly_sigma: f64,
    averaging_window: usize,
) -> PyResult<Vec<f32>> {
    let config = FlowConfig {
        pyramid_levels,
        pyramid_scale,
        iterations_per_level: iterations,
        poly_window,
        poly_sigma,
        averaging_window,
    };
    let a = gray(frame1, width, height)?;
    let b = gray(frame2, width, height)?;
    flow::farneback_flow(&a, &b, &config).map(|f| f.data).map_err(err)
}

/// `(mean magnitude, max magnitude, 8-bin direction histogram)`.
#[pyfunction]
fn flow_stats(flow: Vec<f32>, width: usize, height: usize) -> PyResult<(f64, f64, Vec<f64>)> {
    let field = FlowField::new(width, height, flow).map_err(err)?;
    let s = flow::flow_stats(&field);
    Ok((s.mean_magnitude, s.max_magnitude, s.angle_histogram.to_vec()))
}

#[pyfunction]
fn write_tensor<'py>(py: Python<'py>, dims: Vec<usize>, data: Vec<f32>) -> PyResult<Bound<'py, PyBytes>> {
    let bytes = container::write_tensor(&dims, &data).map_err(err)?;
    Ok(PyBytes::new(py, &bytes))
}

#[pyfunction]
fn read_tensor(bytes: &[u8]) -> PyResult<(Vec<usize>, Vec<f32>)> {
    let t = container::read_tensor(bytes).map_err(err)?;
    Ok((t.dims, t.data))
}

#[pyclass(name = "LogisticModel", module = "gebd", skip_from_py_object)]
#[derive(Clone)]
struct PyLogisticModel {
    inner: classifier::LogisticModel,
}

#[pymethods]
impl PyLogisticModel {
    /// An untrained model of the given input dimension; every score is 0.5.
    #[new]
    fn new(dim: usize) -> Self {
        Self {
            inner: classifier::LogisticModel::zeros(dim),
        }
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        classifier::LogisticModel::from_json(text)
            .map(|inner| Self { inner })
            .map_err(err)
    }

    fn to_json(&self) -> String {
        self.inner.to_json()
    }

    #[getter]
    fn weights(&self) -> Vec<f64> {
        self.inner.weights.clone()
    }

    #[getter]
    fn bias(&self) -> f64 {
        self.inner.bias
    }

    fn margin(&self, x: Vec<f64>) -> PyResult<f64> {
        self.inner.margin(&x).map_err(err)
    }

    fn score(&self, x: Vec<f64>) -> PyResult<f64> {
        self.inner.score(&x).map_err(err)
    }

    fn score_many(&self, xs: Vec<Vec<f64>>) -> PyResult<Vec<f64>> {
        xs.iter().map(|x| self.inner.score(x).map_err(err)).collect()
    }
}

/// Trains on `features[i]` with label `labels[i]`; returns the model and per-epoch losses.
#[pyfunction]
#[pyo3(signature = (
    features, labels, learning_rate = 1e-4, decay_factor = 0.1, decay_every = 10,
    epochs = 16, batch_size = 16, seed = 0,
))]
#[allow(clippy::too_many_arguments)]
fn train_logistic(
    features: Vec<Vec<f64>>,
    labels: Vec<bool>,
    learning_rate: f64,
    decay_factor: f64,
    decay_every: usize,
    epochs: usize,
    batch_size: usize,
    seed: u64,
) -> PyResult<(PyLogisticModel, Vec<f64>)> {
    if features.len() != labels.len() {
        return Err(err(format!("{} feature rows but {} labels", features.len(), labels.len())));
    }
    let dataset: Vec<(PcInput, bool)> = features.into_iter().map(PcInput).zip(labels).collect();
    let config = TrainConfig {
        learning_rate,
        decay_factor,
        decay_every,
        epochs,
        batch_size,
        seed,
    };
    let out = classifier::train_logistic(&dataset, &config).map_err(err)?;
    Ok((PyLogisticModel { inner: out.model }, out.epoch_losses))
}

#[pyfunction]
#[pyo3(signature = (timestamps, scores, smooth_sigma = 1.0, score_threshold = 0.5, min_separation = 0.5))]
fn detect_boundaries(
    timestamps: Vec<f64>,
    scores: Vec<f64>,
    smooth_sigma: f64,
    score_threshold: f64,
    min_separation: f64,
) -> PyResult<Vec<f64>> {
    let seq = ScoreSequence::new("", timestamps, scores).map_err(err)?;
    let config = DetectionConfig {
        smooth_sigma,
        score_threshold,
        min_separation,
    };
    postprocess::scores_to_boundaries(&seq, &config)
        .map(|b| b.timestamps)
        .map_err(err)
}

/// Writes a synthetic corpus under `root`; returns the planted boundaries per video.
#[pyfunction]
#[pyo3(signature = (root, videos = 30, seed = 7, duration = 10.0, fps = 10.0, side = 64))]
fn generate_synth(
    py: Python<'_>,
    root: PathBuf,
    videos: usize,
    seed: u64,
    duration: f64,
    fps: f64,
    side: usize,
) -> PyResult<HashMap<String, Vec<f64>>> {
    let config = SynthConfig {
        num_videos: videos,
        seed,
        duration,
        fps,
        side,
        ..SynthConfig::default()
    };
    let corpus = py
        .detach(|| synth::generate_corpus(&root, &config))
        .map_err(err)?;
    Ok(corpus.planted.into_iter().collect())
}

fn override_value(value: &Bound<'_, PyAny>) -> PyResult<String> {
    if let Ok(b) = value.extract::<bool>() {
        return Ok(b.to_string());
    }
    Ok(value.str()?.to_string())
}

/// Runs every stage on the corpus at `root` and returns the run manifest as JSON.
/// `overrides` maps configuration keys to values, e.g. `{"image_side": 32}`.
#[pyfunction]
#[pyo3(signature = (root, overrides = None, force = false))]
fn run_pipeline(
    py: Python<'_>,
    root: PathBuf,
    overrides: Option<HashMap<String, Bound<'_, PyAny>>>,
    force: bool,
) -> PyResult<String> {
    let mut text = String::new();
    for (key, value) in overrides.unwrap_or_default() {
        text.push_str(&format!("{key} = {}\n", override_value(&value)?));
    }
    let config = PipelineConfig::parse(&text, &root).map_err(err)?;
    let mut pipeline = Pipeline::new(config).map_err(err)?;
    pipeline.force = force;
    let manifest = py.detach(|| pipeline.run()).map_err(err)?;
    serde_json::to_string(&manifest).map_err(err)
}

#[pymodule]
fn gebd(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("GebdError", m.py().get_type::<GebdError>())?;
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    m.add_class::<PyAnnotationSet>()?;
    m.add_class::<PyPrf>()?;
    m.add_class::<PyMatchResult>()?;
    m.add_class::<PyLogisticModel>()?;
    m.add_function(wrap_pyfunction!(parse_annotations, m)?)?;
    m.add_function(wrap_pyfunction!(serialize_annotations, m)?)?;
    m.add_function(wrap_pyfunction!(rel_dis, m)?)?;
    m.add_function(wrap_pyfunction!(match_boundaries, m)?)?;
    m.add_function(wrap_pyfunction!(absolute_window_match, m)?)?;
    m.add_function(wrap_pyfunction!(f1_from_pr, m)?)?;
    m.add_function(wrap_pyfunction!(sweep_thresholds, m)?)?;
    m.add_function(wrap_pyfunction!(farneback_flow, m)?)?;
    m.add_function(wrap_pyfunction!(flow_stats, m)?)?;
    m.add_function(wrap_pyfunction!(write_tensor, m)?)?;
    m.add_function(wrap_pyfunction!(read_tensor, m)?)?;
    m.add_function(wrap_pyfunction!(train_logistic, m)?)?;
    m.add_function(wrap_pyfunction!(detect_boundaries, m)?)?;
    m.add_function(wrap_pyfunction!(generate_synth, m)?)?;
    m.add_function(wrap_pyfunction!(run_pipeline, m)?)?;
    Ok(())
}
