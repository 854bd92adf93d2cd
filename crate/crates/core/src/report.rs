//! SVG figures: per-video boundary timelines and per-class score bars.

use std::fmt::Write as _;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct TimelineTrack {
    pub name: String,
    pub timestamps: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TimelineSpec {
    pub video_id: String,
    pub duration: f64,
    /// Drawn top to bottom in this order.
    pub tracks: Vec<TimelineTrack>,
    pub width: f64,
    pub lane_height: f64,
}

impl TimelineSpec {
    pub fn new(video_id: impl Into<String>, duration: f64) -> Self {
        Self {
            video_id: video_id.into(),
            duration,
            tracks: Vec::new(),
            width: 800.0,
            lane_height: 24.0,
        }
    }

    pub fn track(mut self, name: impl Into<String>, timestamps: Vec<f64>) -> Self {
        self.tracks.push(TimelineTrack {
            name: name.into(),
            timestamps,
        });
        self
    }

    /// Horizontal position of a timestamp.
    pub fn x(&self, t: f64) -> f64 {
        t / self.duration * self.width
    }
}

fn escape(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    for c in text.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            _ => out.push(c),
        }
    }
    out
}

const TRACK_COLORS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"];

pub fn render_timeline(spec: &TimelineSpec) -> Result<String> {
    if spec.tracks.is_empty() {
        return Err(Error::Domain(format!("timeline for {} has no tracks", spec.video_id)));
    }
    if !(spec.duration > 0.0 && spec.width > 0.0 && spec.lane_height > 0.0) {
        return Err(Error::Domain("timeline duration and size must be positive".into()));
    }
    for track in &spec.tracks {
        if let Some(t) = track.timestamps.iter().find(|t| !(0.0..=spec.duration).contains(*t)) {
            return Err(Error::validation(
                &spec.video_id,
                "timestamps",
                format!("{t} outside [0, {}] in track {}", spec.duration, track.name),
            ));
        }
    }

    let height = spec.lane_height * spec.tracks.len() as f64;
    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{:.3}" height="{:.3}" viewBox="0 0 {:.3} {:.3}">"#,
        spec.width, height, spec.width, height
    );
    let _ = writeln!(svg, "<title>{}</title>", escape(&spec.video_id));
    for (lane, track) in spec.tracks.iter().enumerate() {
        let top = lane as f64 * spec.lane_height;
        let color = TRACK_COLORS[lane % TRACK_COLORS.len()];
        let _ = writeln!(
            svg,
            r##"<g class="lane" data-name="{}"><rect x="0" y="{:.3}" width="{:.3}" height="{:.3}" fill="{}"/>"##,
            escape(&track.name),
            top,
            spec.width,
            spec.lane_height,
            if lane % 2 == 0 { "#f4f4f4" } else { "#ffffff" }
        );
        for &t in &track.timestamps {
            let x = spec.x(t);
            let _ = writeln!(
                svg,
                r#"<line class="tick" x1="{x:.3}" y1="{:.3}" x2="{x:.3}" y2="{:.3}" stroke="{color}" stroke-width="2"/>"#,
                top + 2.0,
                top + spec.lane_height - 2.0
            );
        }
        let _ = writeln!(
            svg,
            r#"<text x="2" y="{:.3}" font-size="10" font-family="sans-serif">{}</text></g>"#,
            top + 11.0,
            escape(&track.name)
        );
    }
    svg.push_str("</svg>\n");
    Ok(svg)
}

pub const BAR_AREA_WIDTH: f64 = 400.0;
const LABEL_WIDTH: f64 = 200.0;
const BAR_HEIGHT: f64 = 18.0;

/// Horizontal bars of per-class values in `[0, 1]`, drawn in the given order.
pub fn render_class_bars(title: &str, classes: &[(String, f64)]) -> Result<String> {
    if classes.is_empty() {
        return Err(Error::Domain("no classes to plot".into()));
    }
    if let Some((name, v)) = classes.iter().find(|(_, v)| !(0.0..=1.0).contains(v)) {
        return Err(Error::Domain(format!("class {name} has value {v} outside [0,1]")));
    }
    let width = LABEL_WIDTH + BAR_AREA_WIDTH + 60.0;
    let height = BAR_HEIGHT * (classes.len() as f64 + 1.0);
    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width:.3}" height="{height:.3}" viewBox="0 0 {width:.3} {height:.3}">"#
    );
    let _ = writeln!(svg, "<title>{}</title>", escape(title));
    let _ = writeln!(
        svg,
        r#"<text x="2" y="13" font-size="12" font-family="sans-serif">{}</text>"#,
        escape(title)
    );
    for (i, (name, value)) in classes.iter().enumerate() {
        let y = BAR_HEIGHT * (i as f64 + 1.0);
        let _ = writeln!(
            svg,
            r##"<g class="bar" data-name="{name}"><text x="{:.3}" y="{:.3}" font-size="11" font-family="sans-serif" text-anchor="end">{name}</text><rect x="{LABEL_WIDTH:.3}" y="{:.3}" width="{:.3}" height="{:.3}" fill="#1f77b4"/><text x="{:.3}" y="{:.3}" font-size="10" font-family="sans-serif">{value:.3}</text></g>"##,
            LABEL_WIDTH - 4.0,
            y + 13.0,
            y + 2.0,
            value * BAR_AREA_WIDTH,
            BAR_HEIGHT - 4.0,
            LABEL_WIDTH + value * BAR_AREA_WIDTH + 4.0,
            y + 13.0,
            name = escape(name),
        );
    }
    svg.push_str("</svg>\n");
    Ok(svg)
}
