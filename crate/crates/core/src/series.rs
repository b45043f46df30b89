//! Frame-level occupancy series shared by every pipeline stage, plus the
//! timestamp helpers used by the CSV formats.

use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;

use chrono::{DateTime, NaiveDateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Source {
    Detector,
    TrackerSort,
    TrackerDeepsort,
    TrackerBytetrack,
    LlmFused,
}

impl Source {
    pub fn as_str(&self) -> &'static str {
        match self {
            Source::Detector => "detector",
            Source::TrackerSort => "tracker_sort",
            Source::TrackerDeepsort => "tracker_deepsort",
            Source::TrackerBytetrack => "tracker_bytetrack",
            Source::LlmFused => "llm_fused",
        }
    }
}

impl fmt::Display for Source {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Source {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "detector" => Source::Detector,
            "tracker_sort" => Source::TrackerSort,
            "tracker_deepsort" => Source::TrackerDeepsort,
            "tracker_bytetrack" => Source::TrackerBytetrack,
            "llm_fused" => Source::LlmFused,
            other => return Err(Error::Invalid(format!("unknown series source {other:?}"))),
        })
    }
}

/// One frame of an occupancy estimate. `occupied` is always `count >= 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct OccupancySample {
    pub video_id: String,
    pub frame_idx: u64,
    pub timestamp: f64,
    pub count: u32,
    pub confidence: f64,
    pub source: Source,
    pub occupied: bool,
}

impl OccupancySample {
    pub fn new(video_id: impl Into<String>, frame_idx: u64, timestamp: f64, count: u32, confidence: f64, source: Source) -> Self {
        OccupancySample {
            video_id: video_id.into(),
            frame_idx,
            timestamp,
            count,
            confidence,
            source,
            occupied: count >= 1,
        }
    }
}

const SERIES_HEADER: [&str; 7] = ["video", "frame", "ts", "count", "confidence", "source", "state"];

pub fn write_series<W: Write>(writer: W, samples: &[OccupancySample]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(SERIES_HEADER)?;
    for s in samples {
        w.write_record([
            s.video_id.clone(),
            s.frame_idx.to_string(),
            format_float(s.timestamp),
            s.count.to_string(),
            format_float(s.confidence),
            s.source.to_string(),
            u8::from(s.occupied).to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io("<series>", e))?;
    Ok(())
}

pub fn series_to_string(samples: &[OccupancySample]) -> Result<String> {
    let mut buf = Vec::new();
    write_series(&mut buf, samples)?;
    Ok(String::from_utf8(buf).expect("csv output is utf-8"))
}

/// Reads a series CSV written by [`write_series`]. The `state` column is
/// validated against the count.
pub fn read_series<R: Read>(reader: R) -> Result<Vec<OccupancySample>> {
    let src = "series";
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers()?.clone();
    if headers.iter().collect::<Vec<_>>() != SERIES_HEADER {
        return Err(Error::parse(src, 1, format!("expected header {}", SERIES_HEADER.join(","))));
    }
    let mut out = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let lineno = i + 2;
        let rec = rec.map_err(|e| Error::parse(src, lineno, e.to_string()))?;
        let bad = |what: &str| Error::parse(src, lineno, format!("bad {what}"));
        let sample = OccupancySample::new(
            rec[0].to_string(),
            rec[1].parse().map_err(|_| bad("frame"))?,
            rec[2].parse().map_err(|_| bad("ts"))?,
            rec[3].parse().map_err(|_| bad("count"))?,
            rec[4].parse().map_err(|_| bad("confidence"))?,
            rec[5].parse().map_err(|_| bad("source"))?,
        );
        let state: u8 = rec[6].parse().map_err(|_| bad("state"))?;
        if state != u8::from(sample.occupied) {
            return Err(Error::parse(src, lineno, "state disagrees with count"));
        }
        out.push(sample);
    }
    Ok(out)
}

/// Shortest round-trippable decimal form, so outputs are stable across runs.
pub fn format_float(x: f64) -> String {
    format!("{x}")
}

/// Parses an ISO-8601 timestamp to seconds since the Unix epoch (UTC).
/// Accepts RFC 3339 with offset, or a naive date-time interpreted as UTC.
pub fn parse_timestamp(s: &str) -> std::result::Result<f64, String> {
    if let Ok(dt) = DateTime::parse_from_rfc3339(s) {
        return Ok(dt.timestamp() as f64 + f64::from(dt.timestamp_subsec_nanos()) * 1e-9);
    }
    for fmt in ["%Y-%m-%dT%H:%M:%S%.f", "%Y-%m-%d %H:%M:%S%.f", "%Y-%m-%dT%H:%M"] {
        if let Ok(dt) = NaiveDateTime::parse_from_str(s, fmt) {
            let dt = dt.and_utc();
            return Ok(dt.timestamp() as f64 + f64::from(dt.timestamp_subsec_nanos()) * 1e-9);
        }
    }
    Err(format!("unrecognised timestamp {s:?}"))
}

/// Formats epoch seconds as `YYYY-MM-DDTHH:MM:SSZ` (whole seconds).
pub fn format_timestamp(t: f64) -> String {
    datetime(t).format("%Y-%m-%dT%H:%M:%SZ").to_string()
}

pub fn datetime(t: f64) -> DateTime<Utc> {
    DateTime::<Utc>::from_timestamp(t.floor() as i64, 0).unwrap_or_default()
}
