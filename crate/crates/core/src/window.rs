//! Candidate timestamps, 2m-frame RGB/flow windows and boundary labels.

use std::borrow::Cow;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::container::{self, Tensor};
use crate::data::{video_subseed, VideoMeta};
use crate::error::{Error, Result};
use crate::flow::{farneback_flow, resize_flow, FlowConfig, FlowField};
use crate::frame::{frame_file_name, load_frame, resize_rgb, to_gray, RgbImage};

/// Slack for the label-tolerance comparison.
const LABEL_EPS: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WindowSpec {
    /// Frames on each side of the candidate timestamp.
    pub m: usize,
    pub candidate_stride: f64,
    pub image_side: usize,
    pub label_tolerance: f64,
}

impl Default for WindowSpec {
    fn default() -> Self {
        Self {
            m: 5,
            candidate_stride: 0.25,
            image_side: 224,
            label_tolerance: 0.125,
        }
    }
}

impl WindowSpec {
    pub fn validate(&self) -> Result<()> {
        if self.m < 1 {
            return Err(Error::Domain("m must be >= 1".into()));
        }
        if !(self.candidate_stride > 0.0) {
            return Err(Error::Domain("candidate stride must be positive".into()));
        }
        if self.image_side < 32 {
            return Err(Error::Domain(format!("image side must be >= 32, got {}", self.image_side)));
        }
        if !(self.label_tolerance >= 0.0) {
            return Err(Error::Domain("label tolerance must be non-negative".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Boundary,
    Background,
}

impl Label {
    pub fn as_str(&self) -> &'static str {
        match self {
            Label::Boundary => "boundary",
            Label::Background => "background",
        }
    }

    pub fn is_boundary(&self) -> bool {
        matches!(self, Label::Boundary)
    }
}

impl std::str::FromStr for Label {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "boundary" => Ok(Label::Boundary),
            "background" => Ok(Label::Background),
            _ => Err(Error::Domain(format!("unknown label '{s}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledWindow {
    pub video_id: String,
    pub t: f64,
    pub frame_indices: Vec<usize>,
    pub label: Label,
}

/// Centers of a uniform grid: `(k + 0.5) * stride` for every value below the duration.
pub fn candidate_timestamps(meta: &VideoMeta, stride: f64) -> Result<Vec<f64>> {
    if !(stride > 0.0) {
        return Err(Error::Domain(format!("stride must be positive, got {stride}")));
    }
    if stride >= meta.duration {
        return Err(Error::Domain(format!(
            "stride {stride} must be shorter than the video ({} s)",
            meta.duration
        )));
    }
    Ok((0..)
        .map(|k| (k as f64 + 0.5) * stride)
        .take_while(|&t| t < meta.duration)
        .collect())
}

/// `m` frames before the center index and `m` from it onward, clamped to the video.
pub fn window_frame_indices(t: f64, meta: &VideoMeta, m: usize) -> Vec<usize> {
    let last = meta.num_frames as isize - 1;
    let center = ((t * meta.fps).round() as isize).clamp(0, last);
    (center - m as isize..center + m as isize)
        .map(|i| i.clamp(0, last) as usize)
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Labeling {
    pub labels: Vec<Label>,
    /// Ground-truth indices whose nearest candidate lay outside the tolerance
    /// and was labeled boundary anyway.
    pub forced: Vec<usize>,
}

impl Labeling {
    pub fn boundary_count(&self) -> usize {
        self.labels.iter().filter(|l| l.is_boundary()).count()
    }
}

/// A candidate is a boundary when some ground-truth timestamp lies within
/// `tolerance`; every ground-truth timestamp also claims its nearest candidate.
pub fn label_windows(candidates: &[f64], gt: &[f64], tolerance: f64) -> Result<Labeling> {
    if candidates.is_empty() {
        return Err(Error::Domain("no candidate timestamps to label".into()));
    }
    if !(tolerance >= 0.0) {
        return Err(Error::Domain(format!("tolerance must be non-negative, got {tolerance}")));
    }
    let mut labels: Vec<Label> = candidates
        .iter()
        .map(|&c| {
            let hit = gt.iter().any(|&g| (c - g).abs() <= tolerance + LABEL_EPS);
            if hit {
                Label::Boundary
            } else {
                Label::Background
            }
        })
        .collect();
    let mut forced = Vec::new();
    for (gi, &g) in gt.iter().enumerate() {
        let nearest = candidates
            .iter()
            .enumerate()
            .min_by(|a, b| (a.1 - g).abs().total_cmp(&(b.1 - g).abs()))
            .map(|(i, _)| i)
            .expect("candidates non-empty");
        if (candidates[nearest] - g).abs() > tolerance + LABEL_EPS {
            forced.push(gi);
            labels[nearest] = Label::Boundary;
        }
    }
    Ok(Labeling { labels, forced })
}

/// Keeps every boundary and up to `ratio` backgrounds per boundary (at
/// least `ratio` backgrounds for videos without boundaries), drawn with the
/// per-video seeded stream. Returns ascending candidate indices.
pub fn subsample_backgrounds(labels: &[Label], ratio: f64, seed: u64, video_id: &str) -> Vec<usize> {
    let positives: Vec<usize> = (0..labels.len()).filter(|&i| labels[i].is_boundary()).collect();
    let mut negatives: Vec<usize> = (0..labels.len()).filter(|&i| !labels[i].is_boundary()).collect();
    let quota = ((positives.len().max(1) as f64) * ratio).round() as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(video_subseed(seed, video_id));
    negatives.shuffle(&mut rng);
    negatives.truncate(quota);
    let mut keep = positives;
    keep.extend(negatives);
    keep.sort_unstable();
    keep
}

/// Frame directory of one video: `frame_000000.ppm` (or `.pgm`) onward.
#[derive(Debug, Clone)]
pub struct FrameSequence {
    pub meta: VideoMeta,
    pub dir: PathBuf,
}

impl FrameSequence {
    pub fn open(meta: VideoMeta, dir: impl Into<PathBuf>) -> Result<Self> {
        let dir = dir.into();
        let entries = std::fs::read_dir(&dir).map_err(|e| Error::io(&dir, e))?;
        let mut count = 0;
        for entry in entries {
            let name = entry.map_err(|e| Error::io(&dir, e))?.file_name();
            let name = name.to_string_lossy();
            if name.starts_with("frame_") && (name.ends_with(".ppm") || name.ends_with(".pgm")) {
                count += 1;
            }
        }
        if count != meta.num_frames {
            return Err(Error::validation(
                &meta.video_id,
                "num_frames",
                format!("{} declares {} frames but {} holds {count}", meta.video_id, meta.num_frames, dir.display()),
            ));
        }
        Ok(Self { meta, dir })
    }

    pub fn frame_path(&self, index: usize) -> Result<PathBuf> {
        for color in [true, false] {
            let p = self.dir.join(frame_file_name(index, color));
            if p.exists() {
                return Ok(p);
            }
        }
        Err(Error::MissingFrame {
            dir: self.dir.clone(),
            index,
        })
    }

    pub fn load(&self, index: usize) -> Result<RgbImage> {
        load_frame(&self.frame_path(index)?)
    }
}

pub fn flow_file_name(index: usize) -> String {
    format!("flow_{index:06}.gebt")
}

/// Flow between consecutive frames, read from an offline cache when present.
#[derive(Debug, Clone)]
pub struct FlowProvider {
    pub cache_dir: Option<PathBuf>,
    pub config: FlowConfig,
}

impl FlowProvider {
    pub fn compute(config: FlowConfig) -> Self {
        Self { cache_dir: None, config }
    }

    pub fn cached(dir: impl Into<PathBuf>, config: FlowConfig) -> Self {
        Self {
            cache_dir: Some(dir.into()),
            config,
        }
    }

    /// Flow from frame `index - 1` to frame `index`; zero for frame 0.
    pub fn flow_into(&self, seq: &FrameSequence, index: usize) -> Result<FlowField> {
        if let Some(dir) = &self.cache_dir {
            let path = dir.join(flow_file_name(index));
            if path.exists() {
                return read_flow_file(&path);
            }
        }
        let cur = seq.load(index)?;
        if index == 0 {
            return Ok(FlowField::zeros(cur.width, cur.height));
        }
        let prev = seq.load(index - 1)?;
        pair_flow(&prev, &cur, &self.config)
    }
}

pub fn pair_flow(prev: &RgbImage, cur: &RgbImage, config: &FlowConfig) -> Result<FlowField> {
    if (prev.width, prev.height) != (cur.width, cur.height) {
        return Err(Error::DimensionMismatch(format!(
            "consecutive frames differ: {}x{} vs {}x{}",
            prev.width, prev.height, cur.width, cur.height
        )));
    }
    farneback_flow(&to_gray(prev)?, &to_gray(cur)?, config)
}

pub fn write_flow_file(path: &Path, field: &FlowField) -> Result<()> {
    container::write_tensor_file(path, &[field.height, field.width, 2], &field.data)
}

pub fn read_flow_file(path: &Path) -> Result<FlowField> {
    let t = container::read_tensor_file(path)?;
    if t.dims.len() != 3 || t.dims[2] != 2 {
        return Err(Error::DimensionMismatch(format!("{} is not an [H, W, 2] flow tensor", path.display())));
    }
    FlowField::new(t.dims[1], t.dims[0], t.data)
}

/// Two-stream input around one candidate timestamp.
#[derive(Debug, Clone, PartialEq)]
pub struct Window {
    pub t: f64,
    pub frame_indices: Vec<usize>,
    /// `[2m, 3, S, S]`, channels in `[0, 1]`.
    pub rgb: Tensor,
    /// `[2m, 2, S, S]`, pixels at the resized scale.
    pub flow: Tensor,
}

impl Window {
    pub fn len(&self) -> usize {
        self.frame_indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frame_indices.is_empty()
    }

    pub fn side(&self) -> usize {
        self.rgb.dims[2]
    }

    pub fn rgb_slice(&self, k: usize) -> &[f32] {
        let n = 3 * self.side() * self.side();
        &self.rgb.data[k * n..(k + 1) * n]
    }

    pub fn flow_slice(&self, k: usize) -> &[f32] {
        let n = 2 * self.side() * self.side();
        &self.flow.data[k * n..(k + 1) * n]
    }
}

/// Source of decoded frames and consecutive-frame flow for one video.
pub trait FrameSource {
    fn frame(&self, index: usize) -> Result<Cow<'_, RgbImage>>;
    fn flow_into(&self, index: usize) -> Result<Cow<'_, FlowField>>;
}

/// Lazily reads frames from disk and flow from a [`FlowProvider`].
pub struct LazySource<'a> {
    pub seq: &'a FrameSequence,
    pub flows: &'a FlowProvider,
}

impl FrameSource for LazySource<'_> {
    fn frame(&self, index: usize) -> Result<Cow<'_, RgbImage>> {
        self.seq.load(index).map(Cow::Owned)
    }

    fn flow_into(&self, index: usize) -> Result<Cow<'_, FlowField>> {
        self.flows.flow_into(self.seq, index).map(Cow::Owned)
    }
}

/// Every frame and flow of a video held in memory.
pub struct VideoStore {
    pub meta: VideoMeta,
    pub frames: Vec<RgbImage>,
    /// `flows[i]` is the flow from frame `i - 1` to `i`; `flows[0]` is zero.
    pub flows: Vec<FlowField>,
}

impl VideoStore {
    pub fn load(seq: &FrameSequence, flows: &FlowProvider) -> Result<Self> {
        let frames = (0..seq.meta.num_frames)
            .map(|i| seq.load(i))
            .collect::<Result<Vec<_>>>()?;
        check_frame_dims(&frames)?;
        let mut out = Vec::with_capacity(frames.len());
        for i in 0..frames.len() {
            let cached = flows
                .cache_dir
                .as_ref()
                .map(|d| d.join(flow_file_name(i)))
                .filter(|p| p.exists());
            let field = match cached {
                Some(p) => read_flow_file(&p)?,
                None if i == 0 => FlowField::zeros(frames[0].width, frames[0].height),
                None => pair_flow(&frames[i - 1], &frames[i], &flows.config)?,
            };
            out.push(field);
        }
        Ok(Self {
            meta: seq.meta.clone(),
            frames,
            flows: out,
        })
    }
}

fn check_frame_dims(frames: &[RgbImage]) -> Result<()> {
    if let Some(first) = frames.first() {
        if let Some((i, f)) = frames
            .iter()
            .enumerate()
            .find(|(_, f)| (f.width, f.height) != (first.width, first.height))
        {
            return Err(Error::DimensionMismatch(format!(
                "frame {i} is {}x{}, frame 0 is {}x{}",
                f.width, f.height, first.width, first.height
            )));
        }
    }
    Ok(())
}

impl FrameSource for VideoStore {
    fn frame(&self, index: usize) -> Result<Cow<'_, RgbImage>> {
        self.frames.get(index).map(Cow::Borrowed).ok_or_else(|| Error::MissingFrame {
            dir: PathBuf::from(&self.meta.video_id),
            index,
        })
    }

    fn flow_into(&self, index: usize) -> Result<Cow<'_, FlowField>> {
        self.flows.get(index).map(Cow::Borrowed).ok_or_else(|| Error::MissingFrame {
            dir: PathBuf::from(&self.meta.video_id),
            index,
        })
    }
}

/// Builds the RGB and flow windows for candidate `t`. The first flow slot,
/// and any slot whose frame repeats the previous one, is zero.
pub fn extract_window(source: &dyn FrameSource, meta: &VideoMeta, spec: &WindowSpec, t: f64) -> Result<Window> {
    spec.validate()?;
    let indices = window_frame_indices(t, meta, spec.m);
    let s = spec.image_side;
    let slots = indices.len();
    let mut rgb = Vec::with_capacity(slots * 3 * s * s);
    let mut flow = Vec::with_capacity(slots * 2 * s * s);
    let mut dims: Option<(usize, usize)> = None;
    for (k, &idx) in indices.iter().enumerate() {
        let frame = source.frame(idx)?;
        match dims {
            None => dims = Some((frame.width, frame.height)),
            Some(d) if d != (frame.width, frame.height) => {
                return Err(Error::DimensionMismatch(format!(
                    "frame {idx} is {}x{}, expected {}x{}",
                    frame.width, frame.height, d.0, d.1
                )))
            }
            _ => {}
        }
        let resized = resize_rgb(&frame, s, s);
        for plane in resized.planes() {
            rgb.extend_from_slice(&plane.data);
        }

        let field = if k == 0 || indices[k - 1] == idx {
            FlowField::zeros(s, s)
        } else {
            let raw = source.flow_into(idx)?;
            if (raw.width, raw.height) != (frame.width, frame.height) {
                return Err(Error::DimensionMismatch(format!(
                    "flow into frame {idx} is {}x{}, frame is {}x{}",
                    raw.width, raw.height, frame.width, frame.height
                )));
            }
            resize_flow(&raw, s, s)
        };
        flow.extend(field.data.iter().step_by(2));
        flow.extend(field.data.iter().skip(1).step_by(2));
    }
    Ok(Window {
        t,
        frame_indices: indices,
        rgb: Tensor::new(vec![slots, 3, s, s], rgb)?,
        flow: Tensor::new(vec![slots, 2, s, s], flow)?,
    })
}

/// One manifest row: `video_id,t,label,rgb_path,flow_path`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestRow {
    pub video_id: String,
    pub t: f64,
    pub label: Label,
    pub rgb_path: String,
    pub flow_path: String,
}

pub fn write_manifest(path: &Path, rows: &[ManifestRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r).map_err(|e| Error::Domain(format!("manifest write failed: {e}")))?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Domain(format!("manifest write failed: {e}")))?;
    container::write_atomic(path, &bytes)
}

pub fn read_manifest(path: &Path) -> Result<Vec<ManifestRow>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| csv_error(path, e))?;
    r.deserialize().map(|row| row.map_err(|e| csv_error(path, e))).collect()
}

pub(crate) fn csv_error(path: &Path, e: csv::Error) -> Error {
    let (line, column) = e
        .position()
        .map(|p| (p.line() as usize, p.byte() as usize))
        .unwrap_or((0, 0));
    Error::Parse {
        line,
        column,
        message: format!("{}: {e}", path.display()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn meta(duration: f64, fps: f64, num_frames: usize) -> VideoMeta {
        VideoMeta {
            video_id: "v".into(),
            class_label: "c".into(),
            duration,
            fps,
            num_frames,
        }
    }

    #[test]
    fn candidate_grid() {
        let ts = candidate_timestamps(&meta(10.0, 10.0, 100), 0.25).unwrap();
        assert_eq!(ts.len(), 40);
        assert_eq!(ts[0], 0.125);
        assert_eq!(ts[39], 9.875);
        assert_eq!(candidate_timestamps(&meta(1.0, 10.0, 10), 0.5).unwrap(), vec![0.25, 0.75]);
        assert!(candidate_timestamps(&meta(1.0, 10.0, 10), 1.0).is_err());
        assert!(candidate_timestamps(&meta(1.0, 10.0, 10), 0.0).is_err());
    }

    #[test]
    fn frame_indices() {
        let m = meta(10.0, 30.0, 300);
        assert_eq!(window_frame_indices(5.0, &m, 5), (145..155).collect::<Vec<_>>());
        assert_eq!(&window_frame_indices(0.0, &m, 5)[..6], &[0, 0, 0, 0, 0, 0]);
        let tail = window_frame_indices(9.999, &m, 5);
        assert_eq!(tail[4], 298);
        assert!(tail[5..].iter().all(|&i| i == 299));
    }

    #[test]
    fn labels() {
        let l = label_windows(&[4.875, 5.125], &[5.0], 0.25).unwrap();
        assert_eq!(l.labels, vec![Label::Boundary, Label::Boundary]);
        assert!(l.forced.is_empty());
        let l = label_windows(&[1.0, 2.0, 3.0], &[], 0.1).unwrap();
        assert!(l.labels.iter().all(|x| *x == Label::Background));
        assert!(label_windows(&[], &[1.0], 0.1).is_err());
    }

    #[test]
    fn gt_claims_nearest_candidate() {
        let l = label_windows(&[0.25, 0.75, 1.25], &[1.0], 0.1).unwrap();
        assert_eq!(l.forced, vec![0]);
        assert_eq!(l.labels, vec![Label::Background, Label::Boundary, Label::Background]);
    }

    #[test]
    fn subsampling_keeps_ratio_and_is_seeded() {
        let mut labels = vec![Label::Background; 40];
        labels[7] = Label::Boundary;
        labels[30] = Label::Boundary;
        let keep = subsample_backgrounds(&labels, 3.0, 9, "vid");
        assert_eq!(keep.len(), 8);
        assert!(keep.contains(&7) && keep.contains(&30));
        assert_eq!(keep, subsample_backgrounds(&labels, 3.0, 9, "vid"));
        assert!(keep.windows(2).all(|w| w[0] < w[1]));
    }

    struct Memory {
        frames: Vec<RgbImage>,
        flows: Vec<FlowField>,
    }

    impl FrameSource for Memory {
        fn frame(&self, index: usize) -> Result<Cow<'_, RgbImage>> {
            Ok(Cow::Borrowed(&self.frames[index]))
        }
        fn flow_into(&self, index: usize) -> Result<Cow<'_, FlowField>> {
            Ok(Cow::Borrowed(&self.flows[index]))
        }
    }

    #[test]
    fn window_shapes_and_flow_scaling() {
        let n = 20;
        let src = Memory {
            frames: vec![RgbImage::filled(64, 64, [0.2, 0.4, 0.6]); n],
            flows: vec![FlowField::constant(64, 64, 4.0, 0.0); n],
        };
        let m = meta(2.0, 10.0, n);
        let spec = WindowSpec {
            image_side: 32,
            ..WindowSpec::default()
        };
        let w = extract_window(&src, &m, &spec, 1.0).unwrap();
        assert_eq!(w.rgb.dims, vec![10, 3, 32, 32]);
        assert_eq!(w.flow.dims, vec![10, 2, 32, 32]);
        assert!(w.flow_slice(0).iter().all(|&v| v == 0.0));
        let s1 = w.flow_slice(1);
        assert!(s1[..32 * 32].iter().all(|&v| (v - 2.0).abs() < 1e-6));
        assert!(s1[32 * 32..].iter().all(|&v| v == 0.0));
        assert!((w.rgb_slice(3)[0] - 0.2).abs() < 1e-6);
    }

    #[test]
    fn manifest_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("manifest.csv");
        let rows = vec![ManifestRow {
            video_id: "v0".into(),
            t: 1.125,
            label: Label::Boundary,
            rgb_path: "w/rgb.gebt".into(),
            flow_path: "w/flow.gebt".into(),
        }];
        write_manifest(&path, &rows).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("video_id,t,label,rgb_path,flow_path\n"));
        assert_eq!(read_manifest(&path).unwrap(), rows);
    }
}
