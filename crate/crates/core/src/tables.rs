//! CSV tables exchanged between pipeline stages.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::container::write_atomic;
use crate::error::{Error, Result};
use crate::postprocess::ScoreSequence;
use crate::window::csv_error;

#[derive(Debug, Serialize, Deserialize)]
struct BoundaryRow {
    video_id: String,
    timestamp: f64,
}

#[derive(Debug, Serialize, Deserialize)]
struct ScoreRow {
    video_id: String,
    t: f64,
    score: f64,
}

fn to_csv<T: Serialize>(rows: impl IntoIterator<Item = T>) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for row in rows {
        w.serialize(row).map_err(|e| Error::Domain(format!("csv write failed: {e}")))?;
    }
    w.into_inner().map_err(|e| Error::Domain(format!("csv write failed: {e}")))
}

/// `video_id,timestamp` rows, videos in key order, timestamps ascending.
pub fn write_boundaries_csv(path: &Path, boundaries: &BTreeMap<String, Vec<f64>>) -> Result<()> {
    let rows = boundaries.iter().flat_map(|(id, ts)| {
        ts.iter().map(move |&t| BoundaryRow {
            video_id: id.clone(),
            timestamp: t,
        })
    });
    write_atomic(path, &to_csv(rows)?)
}

/// Groups rows by video and sorts each video's timestamps.
pub fn read_boundaries_csv(path: &Path) -> Result<BTreeMap<String, Vec<f64>>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| csv_error(path, e))?;
    let mut out: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for row in r.deserialize::<BoundaryRow>() {
        let row = row.map_err(|e| csv_error(path, e))?;
        if !row.timestamp.is_finite() {
            return Err(Error::validation(&row.video_id, "timestamp", "not finite"));
        }
        out.entry(row.video_id).or_default().push(row.timestamp);
    }
    for ts in out.values_mut() {
        ts.sort_by(f64::total_cmp);
    }
    Ok(out)
}

pub fn write_scores_csv(path: &Path, sequences: &[ScoreSequence]) -> Result<()> {
    let rows = sequences.iter().flat_map(|s| {
        s.timestamps.iter().zip(&s.scores).map(move |(&t, &score)| ScoreRow {
            video_id: s.video_id.clone(),
            t,
            score,
        })
    });
    write_atomic(path, &to_csv(rows)?)
}

pub fn read_scores_csv(path: &Path) -> Result<Vec<ScoreSequence>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| csv_error(path, e))?;
    let mut grouped: BTreeMap<String, Vec<(f64, f64)>> = BTreeMap::new();
    for row in r.deserialize::<ScoreRow>() {
        let row = row.map_err(|e| csv_error(path, e))?;
        grouped.entry(row.video_id).or_default().push((row.t, row.score));
    }
    grouped
        .into_iter()
        .map(|(id, mut rows)| {
            rows.sort_by(|a, b| a.0.total_cmp(&b.0));
            let (ts, scores) = rows.into_iter().unzip();
            ScoreSequence::new(id, ts, scores)
        })
        .collect()
}
