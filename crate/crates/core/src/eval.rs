//! Relative-distance (Rel.Dis) boundary matching and precision/recall/F1.
//!
//! A prediction may be paired with a ground-truth boundary when
//! `|p - g| / duration <= threshold`. The default matcher returns a
//! maximum-cardinality one-to-one pairing; among those it minimizes the
//! summed distance and then takes the lexicographically smallest pair list.

use std::collections::BTreeMap;
use std::io::Write;

use crate::error::{Error, Result};

/// Primary relative threshold ("F1@5%").
pub const PRIMARY_THRESHOLD: f64 = 0.05;

/// Slack on the admissibility test so pairs exactly at the threshold match
/// despite rounding in `|p - g| / duration`.
const ADMIT_EPS: f64 = 1e-12;
const COST_EPS: f64 = 1e-12;

/// Default sweep grid 0.05, 0.10, ..., 0.50.
pub fn default_thresholds() -> Vec<f64> {
    (1..=10).map(|k| k as f64 / 20.0).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum MatchPolicy {
    #[default]
    Optimal,
    GreedyNearest,
}

impl std::str::FromStr for MatchPolicy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "optimal" => Ok(MatchPolicy::Optimal),
            "greedy" | "greedy_nearest" => Ok(MatchPolicy::GreedyNearest),
            _ => Err(Error::Domain(format!("unknown match policy '{s}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MatchResult {
    /// `(prediction index, ground-truth index)`, ascending by prediction index.
    pub pairs: Vec<(usize, usize)>,
    /// Distance of each pair: relative (fraction of duration) for Rel.Dis
    /// matching, seconds for absolute-window matching.
    pub distances: Vec<f64>,
    pub num_predictions: usize,
    pub num_ground_truth: usize,
}

impl MatchResult {
    pub fn matched(&self) -> usize {
        self.pairs.len()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Prf {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub threshold: f64,
}

pub fn harmonic_f1(precision: f64, recall: f64) -> f64 {
    if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    }
}

impl Prf {
    pub fn from_counts(matched: usize, predictions: usize, ground_truth: usize, threshold: f64) -> Self {
        let precision = if predictions > 0 { matched as f64 / predictions as f64 } else { 0.0 };
        let recall = if ground_truth > 0 { matched as f64 / ground_truth as f64 } else { 0.0 };
        Prf {
            precision,
            recall,
            f1: harmonic_f1(precision, recall),
            threshold,
        }
    }
}

pub fn rel_dis(predicted: f64, ground_truth: f64, duration: f64) -> Result<f64> {
    if !(duration > 0.0) {
        return Err(Error::Domain(format!("duration must be positive, got {duration}")));
    }
    Ok((predicted - ground_truth).abs() / duration)
}

fn check_sorted(values: &[f64], what: &str) -> Result<()> {
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::validation("-", what, "non-finite timestamp"));
    }
    if values.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::validation("-", what, "timestamps must be sorted ascending"));
    }
    Ok(())
}

/// Matching problem with distance `|p - g| / scale` and admissibility
/// `distance <= limit`.
struct Problem<'a> {
    preds: &'a [f64],
    gts: &'a [f64],
    scale: f64,
    limit: f64,
}

impl Problem<'_> {
    fn distance(&self, i: usize, j: usize) -> f64 {
        (self.preds[i] - self.gts[j]).abs() / self.scale
    }

    fn admissible(&self, d: f64) -> bool {
        d <= self.limit + ADMIT_EPS
    }

    fn solve(&self, policy: MatchPolicy) -> MatchResult {
        let (pairs, distances) = match policy {
            MatchPolicy::Optimal => self.optimal(),
            MatchPolicy::GreedyNearest => self.greedy(),
        };
        MatchResult {
            pairs,
            distances,
            num_predictions: self.preds.len(),
            num_ground_truth: self.gts.len(),
        }
    }

    fn greedy(&self) -> (Vec<(usize, usize)>, Vec<f64>) {
        let mut taken = vec![false; self.gts.len()];
        let mut pairs = Vec::new();
        let mut dists = Vec::new();
        for i in 0..self.preds.len() {
            let mut best: Option<(usize, f64)> = None;
            for j in (0..self.gts.len()).filter(|&j| !taken[j]) {
                let d = self.distance(i, j);
                if self.admissible(d) && best.is_none_or(|(_, bd)| d < bd) {
                    best = Some((j, d));
                }
            }
            if let Some((j, d)) = best {
                taken[j] = true;
                pairs.push((i, j));
                dists.push(d);
            }
        }
        (pairs, dists)
    }

    // On a line an optimal matching can always be uncrossed without losing
    // admissibility or increasing cost, and uncrossing makes the pair list
    // lexicographically smaller. So a DP over order-preserving matchings
    // reaches the global optimum, and the lex-smallest optimum is among them.
    fn optimal(&self) -> (Vec<(usize, usize)>, Vec<f64>) {
        let n = self.preds.len();
        let m = self.gts.len();
        let w = m + 1;
        // best[i * w + j]: (count, cost) over preds[i..] and gts[j..].
        let mut best = vec![(0usize, 0.0f64); (n + 1) * w];
        for i in (0..n).rev() {
            for j in (0..m).rev() {
                let mut v = better(best[(i + 1) * w + j], best[i * w + j + 1]);
                let d = self.distance(i, j);
                if self.admissible(d) {
                    let (c, cost) = best[(i + 1) * w + j + 1];
                    v = better(v, (c + 1, cost + d));
                }
                best[i * w + j] = v;
            }
        }

        let mut pairs = Vec::new();
        let mut dists = Vec::new();
        let (mut i, mut j) = (0, 0);
        'outer: while i < n && j < m && best[i * w + j].0 > 0 {
            let target = best[i * w + j];
            for a in i..n {
                for b in j..m {
                    let d = self.distance(a, b);
                    if !self.admissible(d) {
                        continue;
                    }
                    let (c, cost) = best[(a + 1) * w + b + 1];
                    if same((c + 1, cost + d), target) {
                        pairs.push((a, b));
                        dists.push(d);
                        i = a + 1;
                        j = b + 1;
                        continue 'outer;
                    }
                }
            }
            unreachable!("dp value has no realizing pair");
        }
        (pairs, dists)
    }
}

fn better(a: (usize, f64), b: (usize, f64)) -> (usize, f64) {
    if b.0 > a.0 || (b.0 == a.0 && b.1 < a.1 - COST_EPS) {
        b
    } else {
        a
    }
}

fn same(a: (usize, f64), b: (usize, f64)) -> bool {
    a.0 == b.0 && (a.1 - b.1).abs() <= COST_EPS
}

/// Pairs predictions with ground truth under the Rel.Dis threshold.
pub fn match_boundaries(
    predictions: &[f64],
    ground_truth: &[f64],
    duration: f64,
    threshold: f64,
    policy: MatchPolicy,
) -> Result<MatchResult> {
    if !(duration > 0.0) {
        return Err(Error::Domain(format!("duration must be positive, got {duration}")));
    }
    if !(threshold > 0.0 && threshold <= 1.0) {
        return Err(Error::Domain(format!("threshold must be in (0,1], got {threshold}")));
    }
    check_sorted(predictions, "predictions")?;
    check_sorted(ground_truth, "ground_truth")?;
    Ok(Problem {
        preds: predictions,
        gts: ground_truth,
        scale: duration,
        limit: threshold,
    }
    .solve(policy))
}

/// Duration-independent variant: a pair is admissible when `|p - g| <= window` seconds.
pub fn absolute_window_match(
    predictions: &[f64],
    ground_truth: &[f64],
    window: f64,
    policy: MatchPolicy,
) -> Result<MatchResult> {
    if !(window > 0.0) {
        return Err(Error::Domain(format!("window must be positive, got {window}")));
    }
    check_sorted(predictions, "predictions")?;
    check_sorted(ground_truth, "ground_truth")?;
    Ok(Problem {
        preds: predictions,
        gts: ground_truth,
        scale: 1.0,
        limit: window,
    }
    .solve(policy))
}

pub fn prf_from_match(m: &MatchResult, threshold: f64) -> Prf {
    Prf::from_counts(m.matched(), m.num_predictions, m.num_ground_truth, threshold)
}

/// F1 from precision and recall given in percent.
pub fn f1_from_pr(precision: f64, recall: f64) -> f64 {
    harmonic_f1(precision, recall)
}

fn check_thresholds(thresholds: &[f64], upper: f64) -> Result<()> {
    if thresholds.is_empty() {
        return Err(Error::Domain("threshold list is empty".into()));
    }
    if thresholds.iter().any(|&t| !(t > 0.0 && t <= upper)) {
        return Err(Error::Domain(format!("thresholds must lie in (0, {upper}]")));
    }
    if thresholds.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Domain("thresholds must be strictly ascending".into()));
    }
    Ok(())
}

pub fn sweep_thresholds(
    predictions: &[f64],
    ground_truth: &[f64],
    duration: f64,
    thresholds: &[f64],
) -> Result<Vec<Prf>> {
    check_thresholds(thresholds, 1.0)?;
    thresholds
        .iter()
        .map(|&t| {
            match_boundaries(predictions, ground_truth, duration, t, MatchPolicy::Optimal)
                .map(|m| prf_from_match(&m, t))
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EvalMode {
    /// Thresholds are fractions of the video duration.
    Relative,
    /// Thresholds are absolute windows in seconds.
    AbsoluteWindow,
}

impl EvalMode {
    pub fn name(&self) -> &'static str {
        match self {
            EvalMode::Relative => "relative",
            EvalMode::AbsoluteWindow => "absolute_window",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ClassMetric {
    #[default]
    F1,
    Recall,
}

/// One video's inputs to corpus evaluation.
#[derive(Debug, Clone)]
pub struct VideoEval<'a> {
    pub video_id: &'a str,
    pub class_label: &'a str,
    pub duration: f64,
    pub predictions: &'a [f64],
    pub ground_truth: &'a [f64],
}

#[derive(Debug, Clone, PartialEq)]
pub struct VideoScore {
    pub class_label: String,
    pub prf: Vec<Prf>,
    /// Matched-pair count per threshold.
    pub matched: Vec<usize>,
    pub num_predictions: usize,
    pub num_ground_truth: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassSummary {
    pub mean: f64,
    pub n_videos: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub mode: EvalMode,
    pub thresholds: Vec<f64>,
    pub primary_index: usize,
    /// Micro-averaged over the corpus: summed pairs over summed counts.
    pub global: Vec<Prf>,
    pub per_video: BTreeMap<String, VideoScore>,
    pub per_class: BTreeMap<String, ClassSummary>,
}

impl EvalReport {
    pub fn primary(&self) -> Prf {
        self.global[self.primary_index]
    }

    pub fn write_global_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        write_row(&mut w, ["threshold", "precision", "recall", "f1"].map(String::from))?;
        for p in &self.global {
            write_row(&mut w, [p.threshold, p.precision, p.recall, p.f1].map(|v| v.to_string()))?;
        }
        w.flush().map_err(|e| Error::io("csv", e))
    }

    pub fn write_per_video_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        write_row(
            &mut w,
            ["video_id", "class_label", "threshold", "precision", "recall", "f1", "matched", "num_predictions", "num_ground_truth"]
                .map(String::from),
        )?;
        for (id, v) in &self.per_video {
            for (p, matched) in v.prf.iter().zip(&v.matched) {
                write_row(
                    &mut w,
                    [
                        id.clone(),
                        v.class_label.clone(),
                        p.threshold.to_string(),
                        p.precision.to_string(),
                        p.recall.to_string(),
                        p.f1.to_string(),
                        matched.to_string(),
                        v.num_predictions.to_string(),
                        v.num_ground_truth.to_string(),
                    ],
                )?;
            }
        }
        w.flush().map_err(|e| Error::io("csv", e))
    }

    pub fn write_per_class_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        write_row(&mut w, ["class", "mean_f1", "n_videos"].map(String::from))?;
        for (class, s) in &self.per_class {
            write_row(&mut w, [class.clone(), s.mean.to_string(), s.n_videos.to_string()])?;
        }
        w.flush().map_err(|e| Error::io("csv", e))
    }
}

fn write_row<W: Write, const N: usize>(w: &mut csv::Writer<W>, row: [String; N]) -> Result<()> {
    w.write_record(&row).map_err(|e| Error::Domain(format!("csv write failed: {e}")))
}

/// Evaluates a corpus at every threshold. `primary` selects the threshold
/// used for per-class means; it must be one of `thresholds`.
pub fn evaluate_corpus(
    videos: &[VideoEval<'_>],
    mode: EvalMode,
    thresholds: &[f64],
    primary: f64,
    class_metric: ClassMetric,
) -> Result<EvalReport> {
    let upper = match mode {
        EvalMode::Relative => 1.0,
        EvalMode::AbsoluteWindow => f64::INFINITY,
    };
    check_thresholds(thresholds, upper)?;
    let primary_index = thresholds
        .iter()
        .position(|&t| (t - primary).abs() < 1e-12)
        .ok_or_else(|| Error::Domain(format!("primary threshold {primary} not in threshold list")))?;

    let mut per_video = BTreeMap::new();
    for v in videos {
        let mut prf = Vec::with_capacity(thresholds.len());
        let mut matched = Vec::with_capacity(thresholds.len());
        for &t in thresholds {
            let m = match mode {
                EvalMode::Relative => match_boundaries(v.predictions, v.ground_truth, v.duration, t, MatchPolicy::Optimal)?,
                EvalMode::AbsoluteWindow => absolute_window_match(v.predictions, v.ground_truth, t, MatchPolicy::Optimal)?,
            };
            prf.push(prf_from_match(&m, t));
            matched.push(m.matched());
        }
        let score = VideoScore {
            class_label: v.class_label.to_string(),
            prf,
            matched,
            num_predictions: v.predictions.len(),
            num_ground_truth: v.ground_truth.len(),
        };
        if per_video.insert(v.video_id.to_string(), score).is_some() {
            return Err(Error::validation(v.video_id, "video_id", "duplicate video in evaluation"));
        }
    }

    let total_pred: usize = per_video.values().map(|v| v.num_predictions).sum();
    let total_gt: usize = per_video.values().map(|v| v.num_ground_truth).sum();
    let global = thresholds
        .iter()
        .enumerate()
        .map(|(k, &t)| {
            let matched: usize = per_video.values().map(|v| v.matched[k]).sum();
            Prf::from_counts(matched, total_pred, total_gt, t)
        })
        .collect();

    let mut sums: BTreeMap<String, (f64, usize)> = BTreeMap::new();
    for v in per_video.values() {
        let p = v.prf[primary_index];
        let value = match class_metric {
            ClassMetric::F1 => p.f1,
            ClassMetric::Recall => p.recall,
        };
        let e = sums.entry(v.class_label.clone()).or_default();
        e.0 += value;
        e.1 += 1;
    }
    let per_class = sums
        .into_iter()
        .map(|(c, (s, n))| (c, ClassSummary { mean: s / n as f64, n_videos: n }))
        .collect();

    Ok(EvalReport {
        mode,
        thresholds: thresholds.to_vec(),
        primary_index,
        global,
        per_video,
        per_class,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassRanking {
    /// Highest means first.
    pub top: Vec<(String, f64)>,
    /// Lowest means first.
    pub bottom: Vec<(String, f64)>,
    /// Set when `k` exceeded the number of classes and every class was returned.
    pub truncated: bool,
}

/// Ranks classes by the mean of a per-video metric.
pub fn per_class_report(
    per_video: &BTreeMap<String, Prf>,
    classes: &BTreeMap<String, String>,
    k: usize,
    metric: ClassMetric,
) -> Result<ClassRanking> {
    if k == 0 {
        return Err(Error::Domain("k must be at least 1".into()));
    }
    let mut sums: BTreeMap<&str, (f64, usize)> = BTreeMap::new();
    for (video, prf) in per_video {
        let class = classes
            .get(video)
            .ok_or_else(|| Error::validation(video, "class_label", "no class for video"))?;
        let value = match metric {
            ClassMetric::F1 => prf.f1,
            ClassMetric::Recall => prf.recall,
        };
        let e = sums.entry(class.as_str()).or_default();
        e.0 += value;
        e.1 += 1;
    }
    let means: Vec<(String, f64)> = sums
        .into_iter()
        .map(|(c, (s, n))| (c.to_string(), s / n as f64))
        .collect();
    Ok(rank_classes(means, k))
}

pub fn rank_classes(means: Vec<(String, f64)>, k: usize) -> ClassRanking {
    let truncated = k > means.len();
    let mut top = means.clone();
    top.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    top.truncate(k);
    let mut bottom = means;
    bottom.sort_by(|a, b| a.1.total_cmp(&b.1).then_with(|| a.0.cmp(&b.0)));
    bottom.truncate(k);
    ClassRanking { top, bottom, truncated }
}
