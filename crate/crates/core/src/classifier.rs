//! Pairwise boundary classifier on hand-crafted frame features.
//!
//! Each frame contributes a 27-dimensional feature (flow magnitude stats,
//! flow direction histogram, intensity histogram, frame difference). The
//! classifier input concatenates the mean feature of the `m` frames before
//! a candidate with the mean of the `m` frames from it onward, and a
//! standardized logistic model is trained with Adam and a step-decay
//! learning-rate schedule.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flow::{flow_stats, FlowField};
use crate::postprocess::ScoreSequence;
use crate::window::Window;

pub const FEATURE_DIM: usize = 27;
pub const INTENSITY_BINS: usize = 16;
pub const FEATURE_SCHEMA_VERSION: u32 = 1;

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;

/// Layout: `[flow mean, flow max, angle hist x8, intensity hist x16, frame diff]`.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameFeature(pub [f64; FEATURE_DIM]);

#[derive(Debug, Clone, PartialEq)]
pub struct PcInput(pub Vec<f64>);

/// Features of one frame. `rgb` and `prev` are planar `[3, S, S]` slices,
/// `flow` is planar `[2, S, S]`.
pub fn frame_features(rgb: &[f32], flow: &[f32], prev: Option<&[f32]>) -> Result<FrameFeature> {
    if rgb.len() % 3 != 0 || rgb.is_empty() {
        return Err(Error::DimensionMismatch(format!("rgb slice length {} is not 3 * pixels", rgb.len())));
    }
    let pixels = rgb.len() / 3;
    if flow.len() != 2 * pixels {
        return Err(Error::DimensionMismatch(format!(
            "flow slice has {} values, expected {}",
            flow.len(),
            2 * pixels
        )));
    }
    if let Some(p) = prev {
        if p.len() != rgb.len() {
            return Err(Error::DimensionMismatch(format!(
                "previous frame has {} values, expected {}",
                p.len(),
                rgb.len()
            )));
        }
    }

    let mut f = [0.0; FEATURE_DIM];
    let interleaved: Vec<f32> = flow[..pixels]
        .iter()
        .zip(&flow[pixels..])
        .flat_map(|(&dx, &dy)| [dx, dy])
        .collect();
    let stats = flow_stats(&FlowField {
        width: pixels,
        height: 1,
        data: interleaved,
    });
    f[0] = stats.mean_magnitude;
    f[1] = stats.max_magnitude;
    f[2..10].copy_from_slice(&stats.angle_histogram);

    let (r, rest) = rgb.split_at(pixels);
    let (g, b) = rest.split_at(pixels);
    let mut hist = [0.0; INTENSITY_BINS];
    for i in 0..pixels {
        let luma = 0.299 * r[i] as f64 + 0.587 * g[i] as f64 + 0.114 * b[i] as f64;
        hist[intensity_bin(luma)] += 1.0;
    }
    for (dst, h) in f[10..26].iter_mut().zip(hist) {
        *dst = h / pixels as f64;
    }

    f[26] = match prev {
        Some(p) => rgb.iter().zip(p).map(|(a, b)| (a - b).abs() as f64).sum::<f64>() / rgb.len() as f64,
        None => 0.0,
    };
    Ok(FrameFeature(f))
}

pub fn intensity_bin(v: f64) -> usize {
    ((v * INTENSITY_BINS as f64).floor().max(0.0) as usize).min(INTENSITY_BINS - 1)
}

/// Mean of the `before` features followed by the mean of the `after` features.
pub fn pc_concat(before: &[FrameFeature], after: &[FrameFeature], m: usize) -> Result<PcInput> {
    if before.len() != m || after.len() != m {
        return Err(Error::DimensionMismatch(format!(
            "expected {m} features per side, got {} before and {} after",
            before.len(),
            after.len()
        )));
    }
    if m == 0 {
        return Err(Error::Domain("m must be >= 1".into()));
    }
    let mut out = vec![0.0; 2 * FEATURE_DIM];
    for (half, side) in [before, after].iter().enumerate() {
        for feat in side.iter() {
            for (k, v) in feat.0.iter().enumerate() {
                out[half * FEATURE_DIM + k] += v;
            }
        }
    }
    out.iter_mut().for_each(|v| *v /= m as f64);
    Ok(PcInput(out))
}

/// Classifier input for a window: frame differences are taken within the window.
pub fn window_pc_input(window: &Window) -> Result<PcInput> {
    let n = window.len();
    if n == 0 || n % 2 != 0 {
        return Err(Error::DimensionMismatch(format!("window has {n} frames, expected an even count")));
    }
    let feats = (0..n)
        .map(|k| {
            let prev = (k > 0).then(|| window.rgb_slice(k - 1));
            frame_features(window.rgb_slice(k), window.flow_slice(k), prev)
        })
        .collect::<Result<Vec<_>>>()?;
    let m = n / 2;
    pc_concat(&feats[..m], &feats[m..], m)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub decay_factor: f64,
    pub decay_every: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-4,
            decay_factor: 0.1,
            decay_every: 10,
            epochs: 16,
            batch_size: 16,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0) {
            return Err(Error::Domain("learning_rate must be positive".into()));
        }
        if !(self.decay_factor > 0.0 && self.decay_factor <= 1.0) {
            return Err(Error::Domain("decay_factor must be in (0,1]".into()));
        }
        if self.decay_every == 0 || self.batch_size == 0 {
            return Err(Error::Domain("decay_every and batch_size must be >= 1".into()));
        }
        Ok(())
    }

    /// Learning rate used during `epoch` (0-based).
    pub fn learning_rate_at(&self, epoch: usize) -> f64 {
        self.learning_rate * self.decay_factor.powi((epoch / self.decay_every) as i32)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Standardizer {
    pub fn identity(dim: usize) -> Self {
        Self {
            mean: vec![0.0; dim],
            std: vec![1.0; dim],
        }
    }

    /// Per-dimension z-score; zero-variance dimensions keep unit scale.
    pub fn fit(rows: &[&[f64]]) -> Self {
        let dim = rows[0].len();
        let n = rows.len() as f64;
        let mut mean = vec![0.0; dim];
        for r in rows {
            for (m, v) in mean.iter_mut().zip(r.iter()) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut var = vec![0.0; dim];
        for r in rows {
            for ((s, v), m) in var.iter_mut().zip(r.iter()).zip(&mean) {
                *s += (v - m) * (v - m);
            }
        }
        let std = var
            .into_iter()
            .map(|s| {
                let sd = (s / n).sqrt();
                if sd > 0.0 {
                    sd
                } else {
                    1.0
                }
            })
            .collect();
        Self { mean, std }
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(&self.mean)
            .zip(&self.std)
            .map(|((v, m), s)| (v - m) / s)
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogisticModel {
    pub schema_version: u32,
    pub weights: Vec<f64>,
    pub bias: f64,
    pub standardizer: Standardizer,
    pub train_config: TrainConfig,
}

impl LogisticModel {
    pub fn zeros(dim: usize) -> Self {
        Self {
            schema_version: FEATURE_SCHEMA_VERSION,
            weights: vec![0.0; dim],
            bias: 0.0,
            standardizer: Standardizer::identity(dim),
            train_config: TrainConfig::default(),
        }
    }

    pub fn dim(&self) -> usize {
        self.weights.len()
    }

    pub fn margin(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.dim() {
            return Err(Error::DimensionMismatch(format!(
                "input has {} features, model expects {}",
                x.len(),
                self.dim()
            )));
        }
        let z = self.standardizer.apply(x);
        Ok(margin(&self.weights, self.bias, &z))
    }

    pub fn score(&self, x: &[f64]) -> Result<f64> {
        self.margin(x).map(sigmoid)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("model is serializable")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let model: Self = serde_json::from_str(text).map_err(|e| Error::Parse {
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        })?;
        if model.schema_version != FEATURE_SCHEMA_VERSION {
            return Err(Error::Domain(format!(
                "model schema version {} unsupported (expected {FEATURE_SCHEMA_VERSION})",
                model.schema_version
            )));
        }
        let d = model.weights.len();
        if model.standardizer.mean.len() != d || model.standardizer.std.len() != d {
            return Err(Error::DimensionMismatch("standardizer length differs from weights".into()));
        }
        if model.weights.iter().chain([&model.bias]).any(|v| !v.is_finite()) {
            return Err(Error::Domain("model has non-finite parameters".into()));
        }
        Ok(model)
    }
}

#[inline]
fn margin(weights: &[f64], bias: f64, z: &[f64]) -> f64 {
    weights.iter().zip(z).map(|(w, v)| w * v).sum::<f64>() + bias
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `-[y ln s + (1-y) ln(1-s)]` with `s = sigmoid(z)`, computed without overflow.
fn bce(z: f64, y: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p() - y * z
}

/// Mean cross-entropy and its gradient (`[d/dw..., d/db]`) over standardized rows.
pub fn loss_and_gradient(weights: &[f64], bias: f64, rows: &[Vec<f64>], labels: &[f64]) -> (f64, Vec<f64>) {
    let d = weights.len();
    let mut grad = vec![0.0; d + 1];
    let mut loss = 0.0;
    for (x, &y) in rows.iter().zip(labels) {
        let z = margin(weights, bias, x);
        loss += bce(z, y);
        let r = sigmoid(z) - y;
        for (g, v) in grad[..d].iter_mut().zip(x) {
            *g += r * v;
        }
        grad[d] += r;
    }
    let n = rows.len() as f64;
    grad.iter_mut().for_each(|g| *g /= n);
    (loss / n, grad)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    pub model: LogisticModel,
    /// Full-dataset mean loss after each epoch.
    pub epoch_losses: Vec<f64>,
}

pub fn train_logistic(dataset: &[(PcInput, bool)], config: &TrainConfig) -> Result<TrainOutcome> {
    config.validate()?;
    if dataset.is_empty() {
        return Err(Error::Training("empty training set".into()));
    }
    let positives = dataset.iter().filter(|(_, y)| *y).count();
    if positives == 0 || positives == dataset.len() {
        return Err(Error::Training("training set must contain both labels".into()));
    }
    let dim = dataset[0].0 .0.len();
    if let Some((i, _)) = dataset.iter().enumerate().find(|(_, (x, _))| x.0.len() != dim) {
        return Err(Error::DimensionMismatch(format!("sample {i} has a different feature length")));
    }
    if dataset.iter().any(|(x, _)| x.0.iter().any(|v| !v.is_finite())) {
        return Err(Error::Training("non-finite feature value in training set".into()));
    }

    let raw: Vec<&[f64]> = dataset.iter().map(|(x, _)| x.0.as_slice()).collect();
    let standardizer = Standardizer::fit(&raw);
    let rows: Vec<Vec<f64>> = raw.iter().map(|x| standardizer.apply(x)).collect();
    let labels: Vec<f64> = dataset.iter().map(|(_, y)| if *y { 1.0 } else { 0.0 }).collect();

    let mut params = vec![0.0; dim + 1];
    let mut m1 = vec![0.0; dim + 1];
    let mut m2 = vec![0.0; dim + 1];
    let mut step = 0i32;
    let mut order: Vec<usize> = (0..rows.len()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut epoch_losses = Vec::with_capacity(config.epochs);
    let mut batch_rows = Vec::with_capacity(config.batch_size);
    let mut batch_labels = Vec::with_capacity(config.batch_size);

    for epoch in 0..config.epochs {
        let lr = config.learning_rate_at(epoch);
        order.shuffle(&mut rng);
        for chunk in order.chunks(config.batch_size) {
            batch_rows.clear();
            batch_labels.clear();
            for &i in chunk {
                batch_rows.push(rows[i].clone());
                batch_labels.push(labels[i]);
            }
            let (_, grad) = loss_and_gradient(&params[..dim], params[dim], &batch_rows, &batch_labels);
            step += 1;
            let c1 = 1.0 - ADAM_BETA1.powi(step);
            let c2 = 1.0 - ADAM_BETA2.powi(step);
            for k in 0..=dim {
                m1[k] = ADAM_BETA1 * m1[k] + (1.0 - ADAM_BETA1) * grad[k];
                m2[k] = ADAM_BETA2 * m2[k] + (1.0 - ADAM_BETA2) * grad[k] * grad[k];
                params[k] -= lr * (m1[k] / c1) / ((m2[k] / c2).sqrt() + ADAM_EPS);
            }
        }
        let (loss, _) = loss_and_gradient(&params[..dim], params[dim], &rows, &labels);
        if !loss.is_finite() {
            return Err(Error::Training(format!(
                "non-finite loss at epoch {epoch} (lr {lr}, step {step}, |w| max {:.3e})",
                params.iter().fold(0.0f64, |a, v| a.max(v.abs()))
            )));
        }
        epoch_losses.push(loss);
    }

    let bias = params.pop().expect("bias present");
    Ok(TrainOutcome {
        model: LogisticModel {
            schema_version: FEATURE_SCHEMA_VERSION,
            weights: params,
            bias,
            standardizer,
            train_config: *config,
        },
        epoch_losses,
    })
}

/// Scores timestamped inputs of one video in timestamp order.
pub fn score_sequence(model: &LogisticModel, video_id: &str, inputs: &[(f64, PcInput)]) -> Result<ScoreSequence> {
    let mut ordered: Vec<&(f64, PcInput)> = inputs.iter().collect();
    ordered.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut timestamps = Vec::with_capacity(ordered.len());
    let mut scores = Vec::with_capacity(ordered.len());
    for (t, x) in ordered {
        timestamps.push(*t);
        scores.push(model.score(&x.0)?);
    }
    ScoreSequence::new(video_id, timestamps, scores)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn planar_constant(side: usize, rgb: [f32; 3]) -> Vec<f32> {
        rgb.iter().flat_map(|&c| std::iter::repeat_n(c, side * side)).collect()
    }

    #[test]
    fn constant_frame_features() {
        let rgb = planar_constant(4, [0.53, 0.53, 0.53]);
        let flow = vec![0.0; 32];
        let f = frame_features(&rgb, &flow, Some(&rgb)).unwrap();
        assert_eq!(f.0[0], 0.0);
        assert_eq!(f.0[1], 0.0);
        assert!(f.0[2..10].iter().all(|&h| h == 0.125));
        assert_eq!(f.0[10..26].iter().filter(|&&h| h > 0.0).count(), 1);
        assert_eq!(f.0[10 + 8], 1.0);
        assert_eq!(f.0[26], 0.0);
    }

    #[test]
    fn constant_flow_magnitude() {
        let rgb = planar_constant(3, [0.1, 0.2, 0.3]);
        let mut flow = vec![3.0; 9];
        flow.extend(vec![4.0; 9]);
        let f = frame_features(&rgb, &flow, None).unwrap();
        assert!((f.0[0] - 5.0).abs() < 1e-9);
        assert!((f.0[1] - 5.0).abs() < 1e-9);
    }

    #[test]
    fn feature_dimension_errors() {
        let rgb = planar_constant(3, [0.1; 3]);
        assert!(frame_features(&rgb, &[0.0; 10], None).is_err());
        assert!(frame_features(&rgb, &[0.0; 18], Some(&rgb[..9])).is_err());
    }

    fn feat(v: f64) -> FrameFeature {
        FrameFeature([v; FEATURE_DIM])
    }

    #[test]
    fn pc_concat_examples() {
        let before: Vec<_> = [1.0, 2.0, 3.0, 4.0, 5.0].iter().map(|&v| feat(v)).collect();
        let after: Vec<_> = [3.0, 4.0, 5.0, 6.0, 7.0].iter().map(|&v| feat(v)).collect();
        let x = pc_concat(&before, &after, 5).unwrap();
        assert_eq!(x.0.len(), 2 * FEATURE_DIM);
        assert_eq!(x.0[0], 3.0);
        assert_eq!(x.0[FEATURE_DIM], 5.0);
        let same = pc_concat(&before, &before, 5).unwrap();
        assert_eq!(same.0[..FEATURE_DIM], same.0[FEATURE_DIM..]);
        let one = pc_concat(&[feat(2.0)], &[feat(9.0)], 1).unwrap();
        assert_eq!((one.0[0], one.0[FEATURE_DIM]), (2.0, 9.0));
        assert!(pc_concat(&before, &after[..4], 5).is_err());
    }

    #[test]
    fn zero_model_scores_half() {
        let model = LogisticModel::zeros(4);
        assert_eq!(model.score(&[1.0, -3.0, 7.0, 0.2]).unwrap(), 0.5);
        assert!(model.score(&[1.0]).is_err());
    }

    #[test]
    fn saturation() {
        let mut model = LogisticModel::zeros(2);
        model.weights = vec![50.0, 0.0];
        assert!(model.score(&[1.0, 0.0]).unwrap() > 0.99);
    }

    #[test]
    fn schedule() {
        let c = TrainConfig::default();
        assert_eq!(c.learning_rate_at(0), 1e-4);
        assert_eq!(c.learning_rate_at(9), 1e-4);
        assert!((c.learning_rate_at(10) - 1e-5).abs() < 1e-20);
        assert!((c.learning_rate_at(15) - 1e-5).abs() < 1e-20);
    }

    #[test]
    fn single_class_rejected() {
        let data = vec![(PcInput(vec![1.0]), true), (PcInput(vec![2.0]), true)];
        assert!(matches!(train_logistic(&data, &TrainConfig::default()), Err(Error::Training(_))));
    }

    #[test]
    fn model_json_round_trip() {
        let mut model = LogisticModel::zeros(3);
        model.weights = vec![0.1, -1.0 / 3.0, 2.5e-7];
        model.bias = -0.7;
        let back = LogisticModel::from_json(&model.to_json()).unwrap();
        assert_eq!(back, model);
    }

    #[test]
    fn score_sequence_orders_by_time() {
        let mut model = LogisticModel::zeros(1);
        model.weights = vec![1.0];
        let inputs = vec![(2.0, PcInput(vec![1.0])), (1.0, PcInput(vec![-1.0]))];
        let s = score_sequence(&model, "v", &inputs).unwrap();
        assert_eq!(s.timestamps, vec![1.0, 2.0]);
        assert!(s.scores[0] < 0.5 && s.scores[1] > 0.5);
    }
}
