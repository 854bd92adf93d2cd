//! Annotation data model: per-video metadata, multi-annotator boundary
//! tracks, F1-consistency scoring and ground-truth selection.
//!
//! The on-disk form is a JSON list of video objects:
//!
//! ```json
//! [{"video_id": "v0", "class_label": "juggling", "duration": 10.0,
//!   "fps": 10.0, "num_frames": 100,
//!   "annotators": [{"annotator_id": "a0", "f1_consistency": 0.8,
//!                   "boundaries": [{"t": 2.5}, {"start": 4.0, "end": 5.0}]}]}]
//! ```

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::ser::{SerializeMap, SerializeStruct};
use serde::{Serialize, Serializer};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::eval::{self, MatchPolicy};

/// Default relative-distance threshold for annotator consistency.
pub const DEFAULT_CONSISTENCY_THRESHOLD: f64 = 0.05;

/// Timestamps closer than this are treated as the same boundary.
const COINCIDENT_EPS: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct VideoMeta {
    pub video_id: String,
    pub class_label: String,
    pub duration: f64,
    pub fps: f64,
    pub num_frames: usize,
}

impl VideoMeta {
    pub fn validate(&self) -> Result<()> {
        let id = &self.video_id;
        if !(self.duration.is_finite() && self.duration > 0.0) {
            return Err(Error::validation(id, "duration", format!("must be positive, got {}", self.duration)));
        }
        if !(self.fps.is_finite() && self.fps > 0.0) {
            return Err(Error::validation(id, "fps", format!("must be positive, got {}", self.fps)));
        }
        if self.num_frames == 0 {
            return Err(Error::validation(id, "num_frames", "must be at least 1"));
        }
        let implied = self.num_frames as f64 / self.fps;
        if (implied - self.duration).abs() > 1.0 / self.fps + 1e-9 {
            return Err(Error::validation(
                id,
                "num_frames",
                format!(
                    "{} frames at {} fps imply {:.4} s, inconsistent with duration {}",
                    self.num_frames, self.fps, implied, self.duration
                ),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RawBoundary {
    Instant(f64),
    Range { start: f64, end: f64 },
}

impl RawBoundary {
    pub fn start(&self) -> f64 {
        match *self {
            RawBoundary::Instant(t) => t,
            RawBoundary::Range { start, .. } => start,
        }
    }

    /// Single representative timestamp: the instant itself or the midpoint of a range.
    pub fn representative(&self) -> f64 {
        match *self {
            RawBoundary::Instant(t) => t,
            RawBoundary::Range { start, end } => 0.5 * (start + end),
        }
    }
}

impl Serialize for RawBoundary {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        match *self {
            RawBoundary::Instant(t) => {
                let mut map = serializer.serialize_map(Some(1))?;
                map.serialize_entry("t", &t)?;
                map.end()
            }
            RawBoundary::Range { start, end } => {
                let mut map = serializer.serialize_map(Some(2))?;
                map.serialize_entry("start", &start)?;
                map.serialize_entry("end", &end)?;
                map.end()
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AnnotatorTrack {
    pub annotator_id: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub f1_consistency: Option<f64>,
    pub boundaries: Vec<RawBoundary>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnnotationSet {
    pub meta: VideoMeta,
    pub tracks: Vec<AnnotatorTrack>,
}

impl Serialize for AnnotationSet {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        let mut s = serializer.serialize_struct("AnnotationSet", 6)?;
        s.serialize_field("video_id", &self.meta.video_id)?;
        s.serialize_field("class_label", &self.meta.class_label)?;
        s.serialize_field("duration", &self.meta.duration)?;
        s.serialize_field("fps", &self.meta.fps)?;
        s.serialize_field("num_frames", &self.meta.num_frames)?;
        s.serialize_field("annotators", &self.tracks)?;
        s.end()
    }
}

impl AnnotationSet {
    pub fn validate(&self) -> Result<()> {
        self.meta.validate()?;
        let id = &self.meta.video_id;
        if self.tracks.is_empty() {
            return Err(Error::validation(id, "annotators", "at least one annotator track is required"));
        }
        let mut seen = std::collections::BTreeSet::new();
        for track in &self.tracks {
            if !seen.insert(track.annotator_id.as_str()) {
                return Err(Error::validation(
                    id,
                    "annotator_id",
                    format!("duplicate annotator_id '{}'", track.annotator_id),
                ));
            }
            if let Some(c) = track.f1_consistency {
                if !(0.0..=1.0).contains(&c) {
                    return Err(Error::validation(id, "f1_consistency", format!("{c} outside [0,1]")));
                }
            }
            let mut prev = f64::NEG_INFINITY;
            for b in &track.boundaries {
                let (start, end) = match *b {
                    RawBoundary::Instant(t) => (t, t),
                    RawBoundary::Range { start, end } => (start, end),
                };
                if !(start.is_finite() && end.is_finite()) || start < 0.0 || end > self.meta.duration {
                    return Err(Error::validation(
                        id,
                        "boundaries",
                        format!("boundary [{start}, {end}] of annotator '{}' outside [0, duration]", track.annotator_id),
                    ));
                }
                if end < start {
                    return Err(Error::validation(
                        id,
                        "boundaries",
                        format!("range end {end} before start {start} (annotator '{}')", track.annotator_id),
                    ));
                }
                if start < prev {
                    return Err(Error::validation(
                        id,
                        "boundaries",
                        format!("boundaries of annotator '{}' are not sorted by start", track.annotator_id),
                    ));
                }
                prev = start;
            }
        }
        Ok(())
    }

    pub fn track(&self, annotator_id: &str) -> Option<&AnnotatorTrack> {
        self.tracks.iter().find(|t| t.annotator_id == annotator_id)
    }
}

/// Strictly ascending boundary timestamps (seconds) for one video.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct BoundaryList {
    pub video_id: String,
    pub timestamps: Vec<f64>,
}

impl BoundaryList {
    /// Builds a list after checking ordering and the `[0, duration]` range.
    pub fn new(video_id: impl Into<String>, timestamps: Vec<f64>, duration: f64) -> Result<Self> {
        let video_id = video_id.into();
        for (i, &t) in timestamps.iter().enumerate() {
            if !t.is_finite() || t < 0.0 || t > duration {
                return Err(Error::validation(&video_id, "timestamps", format!("{t} outside [0, {duration}]")));
            }
            if i > 0 && t <= timestamps[i - 1] {
                return Err(Error::validation(&video_id, "timestamps", "timestamps must be strictly ascending"));
            }
        }
        Ok(Self { video_id, timestamps })
    }

    pub fn len(&self) -> usize {
        self.timestamps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.timestamps.is_empty()
    }
}

fn parse_error_from(err: &serde_json::Error) -> Error {
    Error::Parse {
        line: err.line(),
        column: err.column(),
        message: err.to_string(),
    }
}

fn field<'a>(obj: &'a serde_json::Map<String, Value>, video_id: &str, name: &str) -> Result<&'a Value> {
    obj.get(name)
        .ok_or_else(|| Error::validation(video_id, name, "missing field"))
}

fn number(obj: &serde_json::Map<String, Value>, video_id: &str, name: &str) -> Result<f64> {
    field(obj, video_id, name)?
        .as_f64()
        .ok_or_else(|| Error::validation(video_id, name, "expected a number"))
}

fn string(obj: &serde_json::Map<String, Value>, video_id: &str, name: &str) -> Result<String> {
    field(obj, video_id, name)?
        .as_str()
        .map(str::to_string)
        .ok_or_else(|| Error::validation(video_id, name, "expected a string"))
}

fn parse_boundary(value: &Value, video_id: &str) -> Result<RawBoundary> {
    let obj = value
        .as_object()
        .ok_or_else(|| Error::validation(video_id, "boundaries", "boundary must be an object"))?;
    if obj.contains_key("t") {
        return Ok(RawBoundary::Instant(number(obj, video_id, "t")?));
    }
    if obj.contains_key("start") || obj.contains_key("end") {
        let start = number(obj, video_id, "start")?;
        let end = number(obj, video_id, "end")?;
        return Ok(RawBoundary::Range { start, end });
    }
    Err(Error::validation(video_id, "boundaries", "boundary needs either 't' or 'start'/'end'"))
}

fn parse_track(value: &Value, video_id: &str) -> Result<AnnotatorTrack> {
    let obj = value
        .as_object()
        .ok_or_else(|| Error::validation(video_id, "annotators", "annotator entry must be an object"))?;
    let annotator_id = string(obj, video_id, "annotator_id")?;
    let f1_consistency = match obj.get("f1_consistency") {
        None | Some(Value::Null) => None,
        Some(v) => Some(
            v.as_f64()
                .ok_or_else(|| Error::validation(video_id, "f1_consistency", "expected a number"))?,
        ),
    };
    let boundaries = field(obj, video_id, "boundaries")?
        .as_array()
        .ok_or_else(|| Error::validation(video_id, "boundaries", "expected a list"))?
        .iter()
        .map(|b| parse_boundary(b, video_id))
        .collect::<Result<Vec<_>>>()?;
    Ok(AnnotatorTrack {
        annotator_id,
        f1_consistency,
        boundaries,
    })
}

fn parse_entry(value: &Value, index: usize) -> Result<AnnotationSet> {
    let placeholder = format!("#{index}");
    let obj = value
        .as_object()
        .ok_or_else(|| Error::validation(&placeholder, "video", "video entry must be an object"))?;
    let video_id = string(obj, &placeholder, "video_id")?;
    let id = video_id.as_str();
    let num_frames = field(obj, id, "num_frames")?
        .as_u64()
        .ok_or_else(|| Error::validation(id, "num_frames", "expected a non-negative integer"))?;
    let meta = VideoMeta {
        video_id: video_id.clone(),
        class_label: string(obj, id, "class_label")?,
        duration: number(obj, id, "duration")?,
        fps: number(obj, id, "fps")?,
        num_frames: num_frames as usize,
    };
    let tracks = field(obj, id, "annotators")?
        .as_array()
        .ok_or_else(|| Error::validation(id, "annotators", "expected a list"))?
        .iter()
        .map(|t| parse_track(t, id))
        .collect::<Result<Vec<_>>>()?;
    let set = AnnotationSet { meta, tracks };
    set.validate()?;
    Ok(set)
}

/// Parses and validates an annotation JSON document.
pub fn parse_annotations(text: &str) -> Result<Vec<AnnotationSet>> {
    let root: Value = serde_json::from_str(text).map_err(|e| parse_error_from(&e))?;
    let entries = root.as_array().ok_or_else(|| Error::Parse {
        line: 1,
        column: 1,
        message: "top-level value must be a list of videos".into(),
    })?;
    let sets = entries
        .iter()
        .enumerate()
        .map(|(i, v)| parse_entry(v, i))
        .collect::<Result<Vec<_>>>()?;
    let mut ids = std::collections::BTreeSet::new();
    for set in &sets {
        if !ids.insert(set.meta.video_id.as_str()) {
            return Err(Error::validation(&set.meta.video_id, "video_id", "duplicate video_id"));
        }
    }
    Ok(sets)
}

pub fn serialize_annotations(sets: &[AnnotationSet]) -> String {
    serde_json::to_string_pretty(sets).expect("annotation sets are always serializable")
}

/// Maps each boundary to one timestamp (range midpoints), sorted with
/// coincident timestamps collapsed.
pub fn normalize_track(track: &AnnotatorTrack, meta: &VideoMeta) -> Result<BoundaryList> {
    let mut ts: Vec<f64> = track.boundaries.iter().map(RawBoundary::representative).collect();
    ts.sort_by(f64::total_cmp);
    ts.dedup_by(|a, b| (*a - *b).abs() <= COINCIDENT_EPS);
    for &t in &ts {
        if !(0.0..=meta.duration).contains(&t) {
            return Err(Error::validation(
                &meta.video_id,
                "boundaries",
                format!("normalized timestamp {t} outside [0, {}]", meta.duration),
            ));
        }
    }
    Ok(BoundaryList {
        video_id: meta.video_id.clone(),
        timestamps: ts,
    })
}

/// Mean pairwise F1 of every annotator against each of the others, in track order.
pub fn compute_f1_consistency(set: &AnnotationSet, threshold: f64) -> Result<Vec<(String, f64)>> {
    if set.tracks.len() < 2 {
        return Err(Error::ConsistencyUndefined(set.meta.video_id.clone()));
    }
    if !(threshold > 0.0 && threshold < 1.0) {
        return Err(Error::Domain(format!("consistency threshold must be in (0,1), got {threshold}")));
    }
    let normalized = set
        .tracks
        .iter()
        .map(|t| normalize_track(t, &set.meta))
        .collect::<Result<Vec<_>>>()?;
    let n = normalized.len();
    let mut out = Vec::with_capacity(n);
    for (i, track) in set.tracks.iter().enumerate() {
        let mut total = 0.0;
        for j in (0..n).filter(|&j| j != i) {
            total += pairwise_f1(&normalized[i], &normalized[j], set.meta.duration, threshold)?;
        }
        out.push((track.annotator_id.clone(), total / (n - 1) as f64));
    }
    Ok(out)
}

/// F1 of `pred` scored against `gt` under optimal relative-distance matching.
pub fn pairwise_f1(pred: &BoundaryList, gt: &BoundaryList, duration: f64, threshold: f64) -> Result<f64> {
    let m = eval::match_boundaries(&pred.timestamps, &gt.timestamps, duration, threshold, MatchPolicy::Optimal)?;
    Ok(eval::prf_from_match(&m, threshold).f1)
}

/// Populates `f1_consistency` on every track. Existing values are kept
/// unless `recompute` is set or some track of the set lacks a value.
pub fn fill_consistency(set: &mut AnnotationSet, threshold: f64, recompute: bool) -> Result<()> {
    let complete = set.tracks.iter().all(|t| t.f1_consistency.is_some());
    if complete && !recompute {
        return Ok(());
    }
    if set.tracks.len() == 1 {
        // A lone annotator is trivially self-consistent.
        set.tracks[0].f1_consistency = Some(1.0);
        return Ok(());
    }
    let scores = compute_f1_consistency(set, threshold)?;
    for (track, (_, score)) in set.tracks.iter_mut().zip(scores) {
        track.f1_consistency = Some(score);
    }
    Ok(())
}

fn consistencies(set: &AnnotationSet) -> Result<Vec<f64>> {
    set.tracks
        .iter()
        .map(|t| {
            t.f1_consistency.ok_or_else(|| Error::MissingConsistency {
                video_id: set.meta.video_id.clone(),
                annotator_id: t.annotator_id.clone(),
            })
        })
        .collect()
}

/// Index of the highest-consistency track; ties go to the smallest annotator_id.
pub fn highest_consistency_index(set: &AnnotationSet) -> Result<usize> {
    let scores = consistencies(set)?;
    let mut best = 0;
    for i in 1..scores.len() {
        let better = scores[i] > scores[best]
            || (scores[i] == scores[best] && set.tracks[i].annotator_id < set.tracks[best].annotator_id);
        if better {
            best = i;
        }
    }
    Ok(best)
}

pub fn select_gt_highest(set: &AnnotationSet) -> Result<BoundaryList> {
    let idx = highest_consistency_index(set)?;
    normalize_track(&set.tracks[idx], &set.meta)
}

/// 64-bit FNV-1a hash.
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    const OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
    const PRIME: u64 = 0x0000_0100_0000_01b3;
    bytes
        .iter()
        .fold(OFFSET, |h, &b| (h ^ u64::from(b)).wrapping_mul(PRIME))
}

/// Per-video RNG seed, independent of processing order.
pub fn video_subseed(seed: u64, video_id: &str) -> u64 {
    seed ^ fnv1a64(video_id.as_bytes())
}

/// Draws an index with probability proportional to `weights`.
pub fn weighted_index(weights: &[f64], subseed: u64) -> Option<usize> {
    let total: f64 = weights.iter().filter(|w| **w > 0.0).sum();
    if !(total > 0.0) {
        return None;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(subseed);
    let target = rng.random::<f64>() * total;
    let mut acc = 0.0;
    let mut last_positive = None;
    for (i, &w) in weights.iter().enumerate() {
        if w <= 0.0 {
            continue;
        }
        acc += w;
        last_positive = Some(i);
        if target < acc {
            return Some(i);
        }
    }
    last_positive
}

pub fn weighted_consistency_index(set: &AnnotationSet, seed: u64) -> Result<usize> {
    let scores = consistencies(set)?;
    weighted_index(&scores, video_subseed(seed, &set.meta.video_id))
        .ok_or_else(|| Error::WeightedSelectionUndefined(set.meta.video_id.clone()))
}

pub fn select_gt_weighted(set: &AnnotationSet, seed: u64) -> Result<BoundaryList> {
    let idx = weighted_consistency_index(set, seed)?;
    normalize_track(&set.tracks[idx], &set.meta)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GtPolicy {
    Highest,
    Weighted { seed: u64 },
}

impl std::str::FromStr for GtPolicy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "highest" {
            return Ok(GtPolicy::Highest);
        }
        if let Some(seed) = s.strip_prefix("weighted:") {
            let seed = seed
                .parse()
                .map_err(|_| Error::Domain(format!("invalid weighted seed '{seed}'")))?;
            return Ok(GtPolicy::Weighted { seed });
        }
        Err(Error::Domain(format!("unknown gt policy '{s}' (expected highest or weighted:SEED)")))
    }
}

pub fn select_gt(set: &AnnotationSet, policy: GtPolicy) -> Result<BoundaryList> {
    match policy {
        GtPolicy::Highest => select_gt_highest(set),
        GtPolicy::Weighted { seed } => select_gt_weighted(set, seed),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn meta(duration: f64) -> VideoMeta {
        VideoMeta {
            video_id: "v".into(),
            class_label: "c".into(),
            duration,
            fps: 10.0,
            num_frames: (duration * 10.0) as usize,
        }
    }

    fn track(id: &str, ts: &[f64], c: Option<f64>) -> AnnotatorTrack {
        AnnotatorTrack {
            annotator_id: id.into(),
            f1_consistency: c,
            boundaries: ts.iter().map(|&t| RawBoundary::Instant(t)).collect(),
        }
    }

    #[test]
    fn parses_two_annotator_file() {
        let text = r#"[{"video_id":"a","class_label":"x","duration":10.0,"fps":10,"num_frames":100,
            "annotators":[{"annotator_id":"p","boundaries":[{"t":1.0},{"t":4.0}]},
                          {"annotator_id":"q","f1_consistency":0.5,"boundaries":[{"start":2.0,"end":3.0}]}]}]"#;
        let sets = parse_annotations(text).unwrap();
        assert_eq!(sets.len(), 1);
        assert_eq!(sets[0].tracks.len(), 2);
        assert_eq!(sets[0].tracks[1].boundaries[0], RawBoundary::Range { start: 2.0, end: 3.0 });
        assert_eq!(sets[0].tracks[1].f1_consistency, Some(0.5));
    }

    #[test]
    fn negative_duration_names_field() {
        let text = r#"[{"video_id":"bad","class_label":"x","duration":-1,"fps":10,"num_frames":1,
            "annotators":[{"annotator_id":"p","boundaries":[]}]}]"#;
        match parse_annotations(text) {
            Err(Error::Validation { video_id, field, .. }) => {
                assert_eq!(video_id, "bad");
                assert_eq!(field, "duration");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn syntax_error_reports_position() {
        let err = parse_annotations("[\n{\"video_id\": }").unwrap_err();
        match err {
            Error::Parse { line, .. } => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn missing_field_and_unsorted_boundaries() {
        let missing = r#"[{"video_id":"m","class_label":"x","fps":10,"num_frames":100,"annotators":[]}]"#;
        assert!(matches!(parse_annotations(missing), Err(Error::Validation { field, .. }) if field == "duration"));
        let unsorted = r#"[{"video_id":"u","class_label":"x","duration":10,"fps":10,"num_frames":100,
            "annotators":[{"annotator_id":"p","boundaries":[{"t":5.0},{"t":1.0}]}]}]"#;
        assert!(matches!(parse_annotations(unsorted), Err(Error::Validation { field, .. }) if field == "boundaries"));
    }

    #[test]
    fn frame_count_must_match_duration() {
        let mut m = meta(10.0);
        m.num_frames = 120;
        assert!(m.validate().is_err());
        m.num_frames = 101;
        assert!(m.validate().is_ok());
    }

    #[test]
    fn normalize_midpoints_and_collapses() {
        let m = meta(10.0);
        let range = AnnotatorTrack {
            annotator_id: "a".into(),
            f1_consistency: None,
            boundaries: vec![RawBoundary::Range { start: 2.0, end: 4.0 }],
        };
        assert_eq!(normalize_track(&range, &m).unwrap().timestamps, vec![3.0]);
        assert_eq!(normalize_track(&track("a", &[1.0, 5.0], None), &m).unwrap().timestamps, vec![1.0, 5.0]);
        let mixed = AnnotatorTrack {
            annotator_id: "a".into(),
            f1_consistency: None,
            boundaries: vec![RawBoundary::Range { start: 1.0, end: 3.0 }, RawBoundary::Instant(2.0)],
        };
        assert_eq!(normalize_track(&mixed, &m).unwrap().timestamps, vec![2.0]);
    }

    #[test]
    fn normalize_is_idempotent() {
        let m = meta(10.0);
        let once = normalize_track(&track("a", &[0.5, 2.25, 7.0], None), &m).unwrap();
        let again = normalize_track(&track("a", &once.timestamps, None), &m).unwrap();
        assert_eq!(once, again);
    }

    #[test]
    fn consistency_identical_and_empty() {
        let set = AnnotationSet {
            meta: meta(10.0),
            tracks: vec![track("a", &[1.0, 5.0], None), track("b", &[1.0, 5.0], None)],
        };
        let c = compute_f1_consistency(&set, 0.05).unwrap();
        assert_eq!(c, vec![("a".into(), 1.0), ("b".into(), 1.0)]);

        let set = AnnotationSet {
            meta: meta(10.0),
            tracks: vec![track("a", &[], None), track("b", &[3.0], None)],
        };
        let c = compute_f1_consistency(&set, 0.05).unwrap();
        assert_eq!(c[0].1, 0.0);
        assert_eq!(c[1].1, 0.0);
    }

    #[test]
    fn consistency_needs_two_tracks() {
        let set = AnnotationSet {
            meta: meta(10.0),
            tracks: vec![track("a", &[1.0], None)],
        };
        assert!(matches!(compute_f1_consistency(&set, 0.05), Err(Error::ConsistencyUndefined(_))));
    }

    #[test]
    fn highest_selection_and_ties() {
        let set = AnnotationSet {
            meta: meta(10.0),
            tracks: vec![
                track("a", &[1.0], Some(0.6)),
                track("b", &[2.0], Some(0.8)),
                track("c", &[3.0], Some(0.7)),
            ],
        };
        assert_eq!(select_gt_highest(&set).unwrap().timestamps, vec![2.0]);

        let tied = AnnotationSet {
            meta: meta(10.0),
            tracks: vec![track("zed", &[1.0], Some(0.5)), track("amy", &[2.0], Some(0.5))],
        };
        assert_eq!(select_gt_highest(&tied).unwrap().timestamps, vec![2.0]);

        let single = AnnotationSet {
            meta: meta(10.0),
            tracks: vec![track("solo", &[4.0], Some(0.1))],
        };
        assert_eq!(select_gt_highest(&single).unwrap().timestamps, vec![4.0]);
    }

    #[test]
    fn highest_requires_consistency() {
        let set = AnnotationSet {
            meta: meta(10.0),
            tracks: vec![track("a", &[1.0], Some(0.6)), track("b", &[2.0], None)],
        };
        assert!(matches!(select_gt_highest(&set), Err(Error::MissingConsistency { .. })));
    }

    #[test]
    fn weighted_excludes_zero_mass_and_is_deterministic() {
        let set = AnnotationSet {
            meta: meta(10.0),
            tracks: vec![track("a", &[1.0], Some(1.0)), track("b", &[2.0], Some(0.0))],
        };
        for seed in 0..200 {
            assert_eq!(select_gt_weighted(&set, seed).unwrap().timestamps, vec![1.0]);
        }
        let set = AnnotationSet {
            meta: meta(10.0),
            tracks: vec![track("a", &[1.0], Some(0.3)), track("b", &[2.0], Some(0.7))],
        };
        assert_eq!(select_gt_weighted(&set, 99).unwrap(), select_gt_weighted(&set, 99).unwrap());

        let zero = AnnotationSet {
            meta: meta(10.0),
            tracks: vec![track("a", &[1.0], Some(0.0)), track("b", &[2.0], Some(0.0))],
        };
        assert!(matches!(select_gt_weighted(&zero, 1), Err(Error::WeightedSelectionUndefined(_))));
    }

    #[test]
    fn fnv_reference_values() {
        assert_eq!(fnv1a64(b""), 0xcbf29ce484222325);
        assert_eq!(fnv1a64(b"a"), 0xaf63dc4c8601ec8c);
        assert_eq!(fnv1a64(b"foobar"), 0x85944171f73967e8);
    }

    #[test]
    fn gt_policy_parses() {
        assert_eq!("highest".parse::<GtPolicy>().unwrap(), GtPolicy::Highest);
        assert_eq!("weighted:42".parse::<GtPolicy>().unwrap(), GtPolicy::Weighted { seed: 42 });
        assert!("weighted:x".parse::<GtPolicy>().is_err());
    }
}
