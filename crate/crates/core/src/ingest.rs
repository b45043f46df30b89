//! Parsing of detection logs, count ground truth, identity ground truth and
//! weather series.
//!
//! Every parser takes a reader so callers can feed files, stdin or in-memory
//! buffers. Parsed values are plain data and are never mutated afterwards.

use std::collections::{BTreeMap, HashMap};
use std::io::{BufRead, Read};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::series::parse_timestamp;

/// Detector confidence threshold applied when none is configured.
pub const DEFAULT_CONF_THRESHOLD: f64 = 0.5;

/// Axis-aligned box in pixels, top-left corner plus size.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BBox {
    pub x: f64,
    pub y: f64,
    pub w: f64,
    pub h: f64,
}

impl BBox {
    pub fn new(x: f64, y: f64, w: f64, h: f64) -> Self {
        BBox { x, y, w, h }
    }

    pub fn area(&self) -> f64 {
        self.w * self.h
    }

    pub fn center(&self) -> (f64, f64) {
        (self.x + self.w / 2.0, self.y + self.h / 2.0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Detection {
    pub bbox: BBox,
    pub score: f64,
    /// Unit-normalised appearance embedding, when the log carries one.
    pub embedding: Option<Vec<f64>>,
}

/// All detections of one frame together with the thresholded count `c_t`
/// and mean retained confidence `s̄_t`.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameObservation {
    pub video_id: String,
    pub frame_idx: u64,
    pub timestamp: f64,
    /// Raw detections, including those below the threshold.
    pub detections: Vec<Detection>,
    pub threshold: f64,
    pub count: u32,
    pub mean_confidence: f64,
}

impl FrameObservation {
    pub fn new(video_id: impl Into<String>, frame_idx: u64, timestamp: f64, detections: Vec<Detection>, threshold: f64) -> Self {
        let (count, sum) = detections
            .iter()
            .filter(|d| d.score >= threshold)
            .fold((0u32, 0.0), |(n, s), d| (n + 1, s + d.score));
        let mean_confidence = if count == 0 { 0.0 } else { sum / f64::from(count) };
        FrameObservation {
            video_id: video_id.into(),
            frame_idx,
            timestamp,
            detections,
            threshold,
            count,
            mean_confidence,
        }
    }

    /// Detections with score at or above the frame's threshold.
    pub fn retained(&self) -> impl Iterator<Item = &Detection> {
        self.detections.iter().filter(move |d| d.score >= self.threshold)
    }
}

#[derive(Deserialize, Serialize)]
struct RawFrame {
    video: String,
    frame: u64,
    ts: f64,
    #[serde(default)]
    dets: Vec<RawDet>,
}

#[derive(Deserialize, Serialize)]
struct RawDet {
    x: f64,
    y: f64,
    w: f64,
    h: f64,
    score: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    emb: Option<Vec<f64>>,
}

/// Parses a detection JSONL stream (one object per frame).
///
/// Output is sorted by `(video, frame)`. Missing frame indices between the
/// first and last frame of a video are materialised as empty observations
/// whose timestamp is interpolated from the neighbouring frames.
pub fn parse_detection_log<R: BufRead>(reader: R, threshold: f64) -> Result<Vec<FrameObservation>> {
    if !(0.0..=1.0).contains(&threshold) {
        return Err(Error::Config(format!("confidence threshold {threshold} outside [0,1]")));
    }
    let src = "detections";
    let mut videos: BTreeMap<String, BTreeMap<u64, (f64, Vec<Detection>, usize)>> = BTreeMap::new();
    let mut emb_dim: Option<usize> = None;

    for (i, line) in reader.lines().enumerate() {
        let lineno = i + 1;
        let line = line.map_err(|e| Error::parse(src, lineno, e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        let raw: RawFrame = serde_json::from_str(&line).map_err(|e| Error::parse(src, lineno, e.to_string()))?;
        if !raw.ts.is_finite() {
            return Err(Error::parse(src, lineno, "non-finite timestamp"));
        }
        let mut dets = Vec::with_capacity(raw.dets.len());
        for d in raw.dets {
            if !(d.w > 0.0 && d.h > 0.0) {
                return Err(Error::parse(src, lineno, format!("box size must be positive, got w={} h={}", d.w, d.h)));
            }
            if !(0.0..=1.0).contains(&d.score) {
                return Err(Error::parse(src, lineno, format!("score {} outside [0,1]", d.score)));
            }
            let embedding = match d.emb {
                None => None,
                Some(v) => {
                    match emb_dim {
                        None => emb_dim = Some(v.len()),
                        Some(n) if n != v.len() => {
                            return Err(Error::parse(src, lineno, format!("embedding length {} differs from {}", v.len(), n)));
                        }
                        _ => {}
                    }
                    Some(normalize(v).ok_or_else(|| Error::parse(src, lineno, "zero or non-finite embedding"))?)
                }
            };
            dets.push(Detection {
                bbox: BBox::new(d.x, d.y, d.w, d.h),
                score: d.score,
                embedding,
            });
        }
        let frames = videos.entry(raw.video.clone()).or_default();
        if frames.insert(raw.frame, (raw.ts, dets, lineno)).is_some() {
            return Err(Error::parse(src, lineno, format!("duplicate frame {} in video {}", raw.frame, raw.video)));
        }
    }

    let mut out = Vec::new();
    for (video, frames) in videos {
        let mut prev: Option<(u64, f64, usize)> = None;
        for (frame, (ts, dets, lineno)) in frames {
            if let Some((pf, pts, _)) = prev {
                if ts <= pts {
                    return Err(Error::parse(src, lineno, format!("timestamp {ts} of frame {frame} not after frame {pf} ({pts}) in video {video}")));
                }
                for missing in pf + 1..frame {
                    let frac = (missing - pf) as f64 / (frame - pf) as f64;
                    out.push(FrameObservation::new(video.clone(), missing, pts + frac * (ts - pts), Vec::new(), threshold));
                }
            }
            out.push(FrameObservation::new(video.clone(), frame, ts, dets, threshold));
            prev = Some((frame, ts, lineno));
        }
    }
    Ok(out)
}

fn normalize(v: Vec<f64>) -> Option<Vec<f64>> {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if !norm.is_finite() || norm == 0.0 {
        return None;
    }
    // already unit length: keep the bits so logs round-trip exactly
    if (norm - 1.0).abs() <= 1e-12 {
        return Some(v);
    }
    Some(v.into_iter().map(|x| x / norm).collect())
}

/// Serialises observations back to the detection JSONL format.
pub fn write_detection_log(observations: &[FrameObservation]) -> Result<String> {
    let mut out = String::new();
    for obs in observations {
        let raw = RawFrame {
            video: obs.video_id.clone(),
            frame: obs.frame_idx,
            ts: obs.timestamp,
            dets: obs
                .detections
                .iter()
                .map(|d| RawDet {
                    x: d.bbox.x,
                    y: d.bbox.y,
                    w: d.bbox.w,
                    h: d.bbox.h,
                    score: d.score,
                    emb: d.embedding.clone(),
                })
                .collect(),
        };
        out.push_str(&serde_json::to_string(&raw)?);
        out.push('\n');
    }
    Ok(out)
}

/// Splits a sorted observation list into per-video slices, in video order.
pub fn by_video(observations: &[FrameObservation]) -> Vec<&[FrameObservation]> {
    observations
        .chunk_by(|a, b| a.video_id == b.video_id)
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruthRecord {
    pub video_id: String,
    pub frame_idx: u64,
    pub count: u32,
}

/// Parses a `video,frame,count` CSV. Rows are returned sorted by
/// `(video, frame)`.
pub fn parse_ground_truth<R: Read>(reader: R) -> Result<Vec<GroundTruthRecord>> {
    let src = "ground truth";
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers()?.clone();
    if !headers.is_empty() && headers.iter().collect::<Vec<_>>() != ["video", "frame", "count"] {
        return Err(Error::parse(src, 1, format!("expected header video,frame,count, got {}", headers.iter().collect::<Vec<_>>().join(","))));
    }
    let mut seen: BTreeMap<(String, u64), GroundTruthRecord> = BTreeMap::new();
    for (i, rec) in rdr.records().enumerate() {
        let lineno = i + 2;
        let rec = rec.map_err(|e| Error::parse(src, lineno, e.to_string()))?;
        if rec.len() != 3 {
            return Err(Error::parse(src, lineno, format!("expected 3 fields, got {}", rec.len())));
        }
        let video = rec[0].to_string();
        let frame: u64 = rec[1].parse().map_err(|_| Error::parse(src, lineno, format!("bad frame index {:?}", &rec[1])))?;
        let count: i64 = rec[2].parse().map_err(|_| Error::parse(src, lineno, format!("bad count {:?}", &rec[2])))?;
        if count < 0 {
            return Err(Error::parse(src, lineno, format!("negative count {count}")));
        }
        let record = GroundTruthRecord {
            video_id: video.clone(),
            frame_idx: frame,
            count: u32::try_from(count).map_err(|_| Error::parse(src, lineno, "count too large"))?,
        };
        if seen.insert((video.clone(), frame), record).is_some() {
            return Err(Error::parse(src, lineno, format!("duplicate record for video {video} frame {frame}")));
        }
    }
    Ok(seen.into_values().collect())
}

/// Per-identity ground-truth trajectories of a single video.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct IdentityGroundTruth {
    /// gt_id → `(frame, box)` with strictly increasing frames.
    pub trajectories: BTreeMap<u64, Vec<(u64, BBox)>>,
}

impl IdentityGroundTruth {
    /// Ground-truth boxes present on each frame, as `(gt_id, box)`.
    pub fn by_frame(&self) -> BTreeMap<u64, Vec<(u64, BBox)>> {
        let mut frames: BTreeMap<u64, Vec<(u64, BBox)>> = BTreeMap::new();
        for (&id, traj) in &self.trajectories {
            for &(f, b) in traj {
                frames.entry(f).or_default().push((id, b));
            }
        }
        frames
    }

    /// Checks that the number of identities per frame agrees with a count
    /// ground truth for the given video, on every frame both sources cover.
    pub fn check_counts(&self, video_id: &str, counts: &[GroundTruthRecord]) -> Result<()> {
        let per_frame: HashMap<u64, usize> = self.by_frame().into_iter().map(|(f, v)| (f, v.len())).collect();
        for rec in counts.iter().filter(|r| r.video_id == video_id) {
            let n = per_frame.get(&rec.frame_idx).copied().unwrap_or(0);
            if n != rec.count as usize {
                return Err(Error::Invalid(format!(
                    "video {video_id} frame {}: {} identities but count ground truth says {}",
                    rec.frame_idx, n, rec.count
                )));
            }
        }
        Ok(())
    }
}

/// Parses a MOT-style `frame,id,x,y,w,h,...` CSV (no header) for one video.
pub fn parse_identity_ground_truth<R: Read>(reader: R) -> Result<IdentityGroundTruth> {
    let src = "identity ground truth";
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let mut trajectories: BTreeMap<u64, BTreeMap<u64, BBox>> = BTreeMap::new();
    for (i, rec) in rdr.records().enumerate() {
        let lineno = i + 1;
        let rec = rec.map_err(|e| Error::parse(src, lineno, e.to_string()))?;
        if rec.len() < 6 {
            return Err(Error::parse(src, lineno, format!("expected at least 6 fields, got {}", rec.len())));
        }
        let num = |k: usize| -> Result<f64> {
            rec[k]
                .parse::<f64>()
                .map_err(|_| Error::parse(src, lineno, format!("bad number {:?} in column {}", &rec[k], k + 1)))
        };
        let frame: u64 = rec[0].parse().map_err(|_| Error::parse(src, lineno, format!("bad frame {:?}", &rec[0])))?;
        let id: u64 = rec[1].parse().map_err(|_| Error::parse(src, lineno, format!("bad id {:?}", &rec[1])))?;
        let bbox = BBox::new(num(2)?, num(3)?, num(4)?, num(5)?);
        if !(bbox.w > 0.0 && bbox.h > 0.0) {
            return Err(Error::parse(src, lineno, "box size must be positive"));
        }
        if trajectories.entry(id).or_default().insert(frame, bbox).is_some() {
            return Err(Error::parse(src, lineno, format!("duplicate (frame {frame}, id {id})")));
        }
    }
    Ok(IdentityGroundTruth {
        trajectories: trajectories
            .into_iter()
            .map(|(id, frames)| (id, frames.into_iter().collect()))
            .collect(),
    })
}

/// Outdoor temperature samples, linearly interpolated between points and
/// clamped outside the covered range.
#[derive(Debug, Clone, PartialEq)]
pub struct WeatherSeries {
    times: Vec<f64>,
    temps_c: Vec<f64>,
}

impl WeatherSeries {
    pub fn new(points: Vec<(f64, f64)>) -> Result<Self> {
        if points.len() < 2 {
            return Err(Error::Invalid(format!("weather series needs at least 2 points, got {}", points.len())));
        }
        for w in points.windows(2) {
            if w[1].0 <= w[0].0 {
                return Err(Error::Invalid(format!("weather timestamps not increasing at {}", w[1].0)));
            }
        }
        let (times, temps_c) = points.into_iter().unzip();
        Ok(WeatherSeries { times, temps_c })
    }

    pub fn start(&self) -> f64 {
        self.times[0]
    }

    pub fn end(&self) -> f64 {
        self.times[self.times.len() - 1]
    }

    pub fn lookup(&self, t: f64) -> f64 {
        if t <= self.start() {
            return self.temps_c[0];
        }
        if t >= self.end() {
            return self.temps_c[self.temps_c.len() - 1];
        }
        let hi = self.times.partition_point(|&x| x <= t);
        let lo = hi - 1;
        let frac = (t - self.times[lo]) / (self.times[hi] - self.times[lo]);
        self.temps_c[lo] + frac * (self.temps_c[hi] - self.temps_c[lo])
    }

    pub fn points(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.times.iter().copied().zip(self.temps_c.iter().copied())
    }
}

/// Parses a `timestamp,tout_c` CSV with ISO-8601 timestamps.
pub fn parse_weather<R: Read>(reader: R) -> Result<WeatherSeries> {
    let src = "weather";
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let mut points = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let lineno = i + 2;
        let rec = rec.map_err(|e| Error::parse(src, lineno, e.to_string()))?;
        if rec.len() != 2 {
            return Err(Error::parse(src, lineno, format!("expected 2 fields, got {}", rec.len())));
        }
        let t = parse_timestamp(&rec[0]).map_err(|m| Error::parse(src, lineno, m))?;
        let v: f64 = rec[1].parse().map_err(|_| Error::parse(src, lineno, format!("bad temperature {:?}", &rec[1])))?;
        if let Some(&(prev, _)) = points.last() {
            if t <= prev {
                return Err(Error::parse(src, lineno, "timestamps must be strictly increasing"));
            }
        }
        points.push((t, v));
    }
    WeatherSeries::new(points)
}

pub fn fahrenheit_to_celsius(f: f64) -> f64 {
    (f - 32.0) * 5.0 / 9.0
}

pub fn celsius_to_fahrenheit(c: f64) -> f64 {
    c * 9.0 / 5.0 + 32.0
}
