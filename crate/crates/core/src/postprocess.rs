//! Score smoothing and peak picking: per-candidate boundary probabilities
//! to boundary timestamps.

use serde::{Deserialize, Serialize};

use crate::data::BoundaryList;
use crate::error::{Error, Result};
use crate::frame::{gaussian_kernel, reflect};

const SEPARATION_EPS: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct ScoreSequence {
    pub video_id: String,
    pub timestamps: Vec<f64>,
    pub scores: Vec<f64>,
}

impl ScoreSequence {
    pub fn new(video_id: impl Into<String>, timestamps: Vec<f64>, scores: Vec<f64>) -> Result<Self> {
        let video_id = video_id.into();
        if timestamps.len() != scores.len() {
            return Err(Error::validation(
                &video_id,
                "scores",
                format!("{} timestamps but {} scores", timestamps.len(), scores.len()),
            ));
        }
        if timestamps.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::validation(&video_id, "timestamps", "must be strictly ascending"));
        }
        if scores.iter().any(|s| !s.is_finite()) {
            return Err(Error::validation(&video_id, "scores", "non-finite score"));
        }
        Ok(Self {
            video_id,
            timestamps,
            scores,
        })
    }

    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectionConfig {
    /// Gaussian sigma in candidate steps; 0 disables smoothing.
    pub smooth_sigma: f64,
    pub score_threshold: f64,
    /// Minimum distance in seconds between kept boundaries.
    pub min_separation: f64,
}

impl Default for DetectionConfig {
    fn default() -> Self {
        Self {
            smooth_sigma: 1.0,
            score_threshold: 0.5,
            min_separation: 0.5,
        }
    }
}

pub fn smooth_scores(seq: &ScoreSequence, sigma: f64) -> ScoreSequence {
    if !(sigma > 0.0) || seq.is_empty() {
        return seq.clone();
    }
    let kernel = gaussian_kernel(sigma);
    let r = (kernel.len() / 2) as isize;
    let n = seq.len();
    let scores = (0..n)
        .map(|i| {
            kernel
                .iter()
                .enumerate()
                .map(|(k, w)| w * seq.scores[reflect(i as isize + k as isize - r, n)])
                .sum()
        })
        .collect();
    ScoreSequence {
        video_id: seq.video_id.clone(),
        timestamps: seq.timestamps.clone(),
        scores,
    }
}

/// Indices of strict local maxima; a flat run counts once, at its left end.
/// Positions outside the sequence compare as negative infinity.
pub fn local_maxima(scores: &[f64]) -> Vec<usize> {
    let n = scores.len();
    let mut out = Vec::new();
    let mut i = 0;
    while i < n {
        let mut j = i + 1;
        while j < n && scores[j] == scores[i] {
            j += 1;
        }
        let left = if i > 0 { scores[i - 1] } else { f64::NEG_INFINITY };
        let right = if j < n { scores[j] } else { f64::NEG_INFINITY };
        if scores[i] > left && scores[i] > right {
            out.push(i);
        }
        i = j;
    }
    out
}

pub fn detect_peaks(seq: &ScoreSequence, config: &DetectionConfig) -> BoundaryList {
    let mut peaks: Vec<usize> = local_maxima(&seq.scores)
        .into_iter()
        .filter(|&i| seq.scores[i] >= config.score_threshold)
        .collect();
    // Highest score first; earlier timestamp wins ties.
    peaks.sort_by(|&a, &b| seq.scores[b].total_cmp(&seq.scores[a]).then(a.cmp(&b)));
    let mut kept: Vec<usize> = Vec::new();
    for p in peaks {
        let t = seq.timestamps[p];
        let clear = kept
            .iter()
            .all(|&k| (seq.timestamps[k] - t).abs() >= config.min_separation - SEPARATION_EPS);
        if clear {
            kept.push(p);
        }
    }
    kept.sort_unstable();
    BoundaryList {
        video_id: seq.video_id.clone(),
        timestamps: kept.into_iter().map(|i| seq.timestamps[i]).collect(),
    }
}

pub fn scores_to_boundaries(seq: &ScoreSequence, config: &DetectionConfig) -> Result<BoundaryList> {
    if !(config.min_separation >= 0.0) {
        return Err(Error::Domain("min_separation must be non-negative".into()));
    }
    if !(config.smooth_sigma >= 0.0) {
        return Err(Error::Domain("smooth_sigma must be non-negative".into()));
    }
    Ok(detect_peaks(&smooth_scores(seq, config.smooth_sigma), config))
}
