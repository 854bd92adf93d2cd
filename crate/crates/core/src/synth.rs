//! Deterministic synthetic corpus: textured scenes whose appearance and
//! motion change at planted boundaries, with jittered annotator tracks.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::data::{serialize_annotations, video_subseed, AnnotationSet, AnnotatorTrack, RawBoundary, VideoMeta};
use crate::error::{Error, Result};
use crate::frame::{frame_file_name, save_ppm, RgbImage};
use crate::tables::write_boundaries_csv;

pub const CLASS_LABELS: [&str; 6] = [
    "juggling_balls",
    "folding_clothes",
    "tumbling",
    "dribbling",
    "using_computer",
    "kicking_ball",
];

pub const ANNOTATIONS_FILE: &str = "annotations.json";
pub const FRAMES_DIR: &str = "frames";
pub const PLANTED_FILE: &str = "planted.csv";

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SynthConfig {
    pub num_videos: usize,
    pub seed: u64,
    pub duration: f64,
    pub fps: f64,
    pub side: usize,
    pub annotators: usize,
    pub jitter_sigma: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            num_videos: 30,
            seed: 7,
            duration: 10.0,
            fps: 10.0,
            side: 64,
            annotators: 5,
            jitter_sigma: 0.1,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.num_videos == 0 || self.annotators == 0 {
            return Err(Error::Domain("need at least one video and one annotator".into()));
        }
        if !(self.duration >= 5.0) || !(self.fps > 0.0) {
            return Err(Error::Domain("synthetic videos need duration >= 5 s and positive fps".into()));
        }
        if self.side < 32 {
            return Err(Error::Domain("frame side must be >= 32".into()));
        }
        if !(self.jitter_sigma >= 0.0) {
            return Err(Error::Domain("jitter sigma must be non-negative".into()));
        }
        Ok(())
    }

    pub fn num_frames(&self) -> usize {
        (self.duration * self.fps).round() as usize
    }
}

#[derive(Debug, Clone, Copy)]
struct Segment {
    tint: [f64; 3],
    waves: [(f64, f64, f64); 2],
    object_color: [f64; 3],
    velocity: (f64, f64),
}

#[derive(Debug, Clone)]
pub struct SynthVideo {
    pub meta: VideoMeta,
    /// Frame index at which each new segment starts.
    pub boundary_frames: Vec<usize>,
    segments: Vec<Segment>,
    positions: Vec<(f64, f64)>,
    side: usize,
}

const OBJECT_SIZE: f64 = 14.0;

impl SynthVideo {
    pub fn planted(&self) -> Vec<f64> {
        self.boundary_frames.iter().map(|&i| i as f64 / self.meta.fps).collect()
    }

    fn segment_of(&self, frame: usize) -> &Segment {
        let s = self.boundary_frames.iter().filter(|&&b| b <= frame).count();
        &self.segments[s]
    }

    pub fn render(&self, frame: usize) -> RgbImage {
        let seg = self.segment_of(frame);
        let (ox, oy) = self.positions[frame];
        let n = self.side;
        let mut data = Vec::with_capacity(n * n * 3);
        for y in 0..n {
            for x in 0..n {
                let (fx, fy) = (x as f64, y as f64);
                let inside = fx >= ox && fx < ox + OBJECT_SIZE && fy >= oy && fy < oy + OBJECT_SIZE;
                if inside {
                    let check = (((fx - ox) / 4.0).floor() + ((fy - oy) / 4.0).floor()) as i64 % 2 == 0;
                    let k = if check { 1.0 } else { 0.55 };
                    data.extend(seg.object_color.iter().map(|c| (c * k) as f32));
                } else {
                    let tex: f64 = seg
                        .waves
                        .iter()
                        .map(|&(kx, ky, phase)| (kx * fx + ky * fy + phase).sin())
                        .sum::<f64>()
                        / 2.0;
                    let shade = 0.7 + 0.3 * tex;
                    data.extend(seg.tint.iter().map(|c| (c * shade).clamp(0.0, 1.0) as f32));
                }
            }
        }
        RgbImage {
            width: n,
            height: n,
            data,
        }
    }
}

fn random_segment(rng: &mut ChaCha8Rng, prev: Option<&Segment>) -> Segment {
    let tint = loop {
        let t = [rng.random_range(0.15..0.95), rng.random_range(0.15..0.95), rng.random_range(0.15..0.95)];
        match prev {
            Some(p) if t.iter().zip(&p.tint).map(|(a, b)| (a - b).abs()).sum::<f64>() < 0.6 => continue,
            _ => break t,
        }
    };
    let mut wave = || {
        let wavelength = rng.random_range(8.0..20.0);
        let angle = rng.random_range(0.0..2.0 * PI);
        let k = 2.0 * PI / wavelength;
        (k * angle.cos(), k * angle.sin(), rng.random_range(0.0..2.0 * PI))
    };
    let waves = [wave(), wave()];
    let object_color = [rng.random_range(0.2..1.0), rng.random_range(0.2..1.0), rng.random_range(0.2..1.0)];
    let speed = rng.random_range(1.0..2.5);
    let heading = rng.random_range(0.0..2.0 * PI);
    Segment {
        tint,
        waves,
        object_color,
        velocity: (speed * heading.cos(), speed * heading.sin()),
    }
}

/// Sorted boundary frames at least 1.5 s apart and 1 s from either end.
fn plant_boundaries(rng: &mut ChaCha8Rng, config: &SynthConfig, n: usize) -> Vec<usize> {
    let margin = config.fps.round() as usize;
    let gap = (1.5 * config.fps).round() as usize;
    let lo = margin.max(1);
    let hi = n.saturating_sub(margin);
    let wanted = rng.random_range(2..=4usize);
    for count in (1..=wanted).rev() {
        for _ in 0..200 {
            let mut picks: Vec<usize> = (0..count).map(|_| rng.random_range(lo..hi)).collect();
            picks.sort_unstable();
            if picks.windows(2).all(|w| w[1] - w[0] >= gap) {
                return picks;
            }
        }
    }
    vec![n / 2]
}

pub fn video_id(index: usize) -> String {
    format!("synth_{index:04}")
}

pub fn plan_video(config: &SynthConfig, index: usize) -> SynthVideo {
    let id = video_id(index);
    let mut rng = ChaCha8Rng::seed_from_u64(video_subseed(config.seed, &id));
    let n = config.num_frames();
    let boundary_frames = plant_boundaries(&mut rng, config, n);
    let mut segments: Vec<Segment> = Vec::with_capacity(boundary_frames.len() + 1);
    for _ in 0..=boundary_frames.len() {
        let s = random_segment(&mut rng, segments.last());
        segments.push(s);
    }

    let limit = config.side as f64 - OBJECT_SIZE;
    let mut pos = (rng.random_range(0.0..limit), rng.random_range(0.0..limit));
    let mut vel = segments[0].velocity;
    let mut positions = Vec::with_capacity(n);
    let mut seg = 0;
    for frame in 0..n {
        if seg < boundary_frames.len() && frame == boundary_frames[seg] {
            seg += 1;
            vel = segments[seg].velocity;
        }
        if frame > 0 {
            pos.0 += vel.0;
            pos.1 += vel.1;
            if pos.0 < 0.0 || pos.0 > limit {
                vel.0 = -vel.0;
                pos.0 = pos.0.clamp(0.0, limit);
            }
            if pos.1 < 0.0 || pos.1 > limit {
                vel.1 = -vel.1;
                pos.1 = pos.1.clamp(0.0, limit);
            }
        }
        positions.push(pos);
    }

    SynthVideo {
        meta: VideoMeta {
            video_id: id,
            class_label: CLASS_LABELS[index % CLASS_LABELS.len()].to_string(),
            duration: config.duration,
            fps: config.fps,
            num_frames: n,
        },
        boundary_frames,
        segments,
        positions,
        side: config.side,
    }
}

/// Annotator tracks: every planted boundary, jittered by a normal draw truncated
/// at three sigma. The last annotator marks short ranges instead of instants.
pub fn annotate(config: &SynthConfig, video: &SynthVideo) -> Result<AnnotationSet> {
    let mut rng = ChaCha8Rng::seed_from_u64(video_subseed(config.seed ^ 0x5bd1_e995, &video.meta.video_id));
    let jitter = Normal::new(0.0, config.jitter_sigma).map_err(|e| Error::Domain(e.to_string()))?;
    let limit = 3.0 * config.jitter_sigma;
    let planted = video.planted();
    let tracks = (0..config.annotators)
        .map(|a| {
            let boundaries = planted
                .iter()
                .map(|&b| {
                    let e = loop {
                        let e: f64 = jitter.sample(&mut rng);
                        if e.abs() <= limit {
                            break e;
                        }
                    };
                    let t = (b + e).clamp(0.0, config.duration);
                    if a + 1 == config.annotators && config.annotators > 1 {
                        let half = 0.1f64.min(t).min(config.duration - t);
                        RawBoundary::Range {
                            start: t - half,
                            end: t + half,
                        }
                    } else {
                        RawBoundary::Instant(t)
                    }
                })
                .collect();
            AnnotatorTrack {
                annotator_id: format!("a{a}"),
                f1_consistency: None,
                boundaries,
            }
        })
        .collect();
    Ok(AnnotationSet {
        meta: video.meta.clone(),
        tracks,
    })
}

#[derive(Debug, Clone)]
pub struct SynthCorpus {
    pub root: PathBuf,
    pub sets: Vec<AnnotationSet>,
    pub planted: BTreeMap<String, Vec<f64>>,
}

/// Writes `annotations.json`, `planted.csv` and `frames/<video_id>/frame_*.ppm` under `root`.
pub fn generate_corpus(root: &Path, config: &SynthConfig) -> Result<SynthCorpus> {
    config.validate()?;
    let mut sets = Vec::with_capacity(config.num_videos);
    let mut planted = BTreeMap::new();
    for index in 0..config.num_videos {
        let video = plan_video(config, index);
        let dir = root.join(FRAMES_DIR).join(&video.meta.video_id);
        std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        for f in 0..video.meta.num_frames {
            save_ppm(&dir.join(frame_file_name(f, true)), &video.render(f))?;
        }
        planted.insert(video.meta.video_id.clone(), video.planted());
        sets.push(annotate(config, &video)?);
    }
    let ann = root.join(ANNOTATIONS_FILE);
    std::fs::write(&ann, serialize_annotations(&sets)).map_err(|e| Error::io(&ann, e))?;
    write_boundaries_csv(&root.join(PLANTED_FILE), &planted)?;
    Ok(SynthCorpus {
        root: root.to_path_buf(),
        sets,
        planted,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn planted_boundaries_are_spaced() {
        let config = SynthConfig::default();
        for i in 0..30 {
            let v = plan_video(&config, i);
            let p = v.planted();
            assert!((1..=4).contains(&p.len()));
            assert!(p.iter().all(|&t| (1.0..=9.0).contains(&t)));
            assert!(p.windows(2).all(|w| w[1] - w[0] >= 1.5 - 1e-9));
        }
    }

    #[test]
    fn plan_is_deterministic() {
        let config = SynthConfig::default();
        let a = plan_video(&config, 3);
        let b = plan_video(&config, 3);
        assert_eq!(a.boundary_frames, b.boundary_frames);
        assert_eq!(a.render(17), b.render(17));
    }

    #[test]
    fn frames_change_at_boundaries() {
        let config = SynthConfig::default();
        let v = plan_video(&config, 0);
        let diff = |i: usize| {
            let (a, b) = (v.render(i - 1), v.render(i));
            a.data.iter().zip(&b.data).map(|(x, y)| (x - y).abs()).sum::<f32>() / a.data.len() as f32
        };
        let b = v.boundary_frames[0];
        assert!(diff(b) > 3.0 * diff(b - 2));
    }

    #[test]
    fn tracks_cover_planted() {
        let config = SynthConfig::default();
        let v = plan_video(&config, 5);
        let set = annotate(&config, &v).unwrap();
        assert_eq!(set.tracks.len(), 5);
        for track in &set.tracks {
            for (raw, b) in track.boundaries.iter().zip(v.planted()) {
                assert!((raw.representative() - b).abs() <= 0.3 + 1e-9);
            }
        }
        assert!(matches!(set.tracks[4].boundaries[0], RawBoundary::Range { .. }));
        set.validate().unwrap();
    }
}
