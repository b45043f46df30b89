//! Detection-only counting and three tracking-by-detection trackers that
//! share one Kalman filter, one assignment routine and one track lifecycle.
//!
//! Track lifecycle: a new track is `Tentative` until it has been matched
//! `min_hits` times, then `Confirmed`. A track that misses a frame becomes
//! `Lost`; tentative tracks are dropped on their first miss, lost tracks are
//! dropped once unmatched for more than `max_age` frames, and a lost track
//! that is re-associated becomes `Confirmed` again with the same id.
//!
//! Occupancy is the number of confirmed tracks that were matched on the
//! current frame.

mod assignment;
mod kalman;

use std::collections::{BTreeMap, VecDeque};
use std::io::Write;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use assignment::{assign, iou, Assignment};
pub use kalman::{state_to_bbox, KalmanFilter, StateCovariance, StateVector};

use crate::error::{Error, Result};
use crate::ingest::{by_video, BBox, Detection, FrameObservation};
use crate::metrics::PredictedTracks;
use crate::series::{OccupancySample, Source};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrackerKind {
    DetectionOnly,
    Sort,
    DeepSort,
    ByteTrack,
}

impl TrackerKind {
    pub fn source(&self) -> Source {
        match self {
            TrackerKind::DetectionOnly => Source::Detector,
            TrackerKind::Sort => Source::TrackerSort,
            TrackerKind::DeepSort => Source::TrackerDeepsort,
            TrackerKind::ByteTrack => Source::TrackerBytetrack,
        }
    }
}

impl FromStr for TrackerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" | "detector" | "detection_only" => Ok(TrackerKind::DetectionOnly),
            "sort" => Ok(TrackerKind::Sort),
            "deepsort" => Ok(TrackerKind::DeepSort),
            "bytetrack" => Ok(TrackerKind::ByteTrack),
            other => Err(Error::Config(format!("unknown tracker kind {other:?}"))),
        }
    }
}

impl fmt::Display for TrackerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TrackerKind::DetectionOnly => "none",
            TrackerKind::Sort => "sort",
            TrackerKind::DeepSort => "deepsort",
            TrackerKind::ByteTrack => "bytetrack",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrackerConfig {
    /// Minimum IoU for a motion match; the assignment gate is `1 - iou_gate`.
    pub iou_gate: f64,
    pub max_age: u32,
    pub min_hits: u32,
    pub high_thresh: f64,
    pub low_thresh: f64,
    /// Weight λ of the appearance term in the DeepSORT cost.
    pub appearance_weight: f64,
    /// Maximum cosine distance for an appearance match.
    pub embedding_gate: f64,
    /// Embedding gallery capacity per track.
    pub gallery_capacity: usize,
}

impl Default for TrackerConfig {
    fn default() -> Self {
        TrackerConfig {
            iou_gate: 0.3,
            max_age: 30,
            min_hits: 3,
            high_thresh: 0.6,
            low_thresh: 0.1,
            appearance_weight: 0.5,
            embedding_gate: 0.4,
            gallery_capacity: 10,
        }
    }
}

impl TrackerConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.iou_gate > 0.0 && self.iou_gate <= 1.0) {
            return Err(Error::Config(format!("iou_gate {} outside (0,1]", self.iou_gate)));
        }
        if !(0.0 <= self.low_thresh && self.low_thresh < self.high_thresh && self.high_thresh <= 1.0) {
            return Err(Error::Config(format!(
                "need 0 <= low_thresh < high_thresh <= 1, got {} and {}",
                self.low_thresh, self.high_thresh
            )));
        }
        if !(0.0..=1.0).contains(&self.appearance_weight) {
            return Err(Error::Config(format!("appearance_weight {} outside [0,1]", self.appearance_weight)));
        }
        if self.gallery_capacity == 0 {
            return Err(Error::Config("gallery_capacity must be at least 1".into()));
        }
        Ok(())
    }

    fn iou_cost_gate(&self) -> f64 {
        1.0 - self.iou_gate
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrackStatus {
    Tentative,
    Confirmed,
    Lost,
}

#[derive(Debug, Clone)]
pub struct Track {
    pub id: u64,
    pub mean: StateVector,
    pub covariance: StateCovariance,
    pub status: TrackStatus,
    pub hits: u32,
    pub age: u32,
    pub time_since_update: u32,
    pub gallery: VecDeque<Vec<f64>>,
    /// Score of the detection that last updated this track.
    pub last_score: f64,
}

impl Track {
    pub fn bbox(&self) -> BBox {
        state_to_bbox(&self.mean)
    }
}

/// A confirmed track reported on a frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReportedTrack {
    pub id: u64,
    pub bbox: BBox,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FrameOutput {
    pub frame_idx: u64,
    pub count: u32,
    pub confidence: f64,
    pub tracks: Vec<ReportedTrack>,
}

/// Stateful tracker for one video. Ids come from a counter that can be
/// carried across videos so they are never reused within a run.
#[derive(Debug, Clone)]
pub struct Tracker {
    cfg: TrackerConfig,
    kf: KalmanFilter,
    tracks: Vec<Track>,
    next_id: u64,
}

impl Tracker {
    pub fn new(cfg: TrackerConfig) -> Self {
        Self::with_first_id(cfg, 1)
    }

    pub fn with_first_id(cfg: TrackerConfig, first_id: u64) -> Self {
        Tracker {
            cfg,
            kf: KalmanFilter::new(),
            tracks: Vec::new(),
            next_id: first_id.max(1),
        }
    }

    pub fn tracks(&self) -> &[Track] {
        &self.tracks
    }

    pub fn next_id(&self) -> u64 {
        self.next_id
    }

    pub fn config(&self) -> &TrackerConfig {
        &self.cfg
    }

    pub fn step(&mut self, kind: TrackerKind, obs: &FrameObservation) -> FrameOutput {
        match kind {
            TrackerKind::DetectionOnly => FrameOutput {
                frame_idx: obs.frame_idx,
                count: obs.count,
                confidence: obs.mean_confidence,
                tracks: Vec::new(),
            },
            TrackerKind::Sort => self.sort_step(obs),
            TrackerKind::DeepSort => self.deepsort_step(obs),
            TrackerKind::ByteTrack => self.bytetrack_step(obs),
        }
    }

    /// Motion-only association over detections retained by the frame's
    /// confidence threshold.
    pub fn sort_step(&mut self, obs: &FrameObservation) -> FrameOutput {
        let dets: Vec<&Detection> = obs.retained().collect();
        self.predict_all();
        let mut matched = vec![None; self.tracks.len()];
        let mut det_used = vec![false; dets.len()];
        self.associate_iou(&dets, &mut matched, &mut det_used, |t| t.status != TrackStatus::Tentative);
        self.associate_iou(&dets, &mut matched, &mut det_used, |t| t.status == TrackStatus::Tentative);
        self.finish_step(obs.frame_idx, &dets, &matched, &det_used)
    }

    /// Appearance-and-motion association. When the frame carries no usable
    /// embeddings (no detection has one, or no track has a gallery) this is
    /// exactly [`Tracker::sort_step`].
    pub fn deepsort_step(&mut self, obs: &FrameObservation) -> FrameOutput {
        let dets: Vec<&Detection> = obs.retained().collect();
        let appearance = dets.iter().any(|d| d.embedding.is_some())
            && self.tracks.iter().any(|t| !t.gallery.is_empty());
        if !appearance {
            return self.sort_step(obs);
        }
        self.predict_all();
        let mut matched = vec![None; self.tracks.len()];
        let mut det_used = vec![false; dets.len()];

        // Matching cascade: established tracks, most recently updated first.
        for level in 1..=self.cfg.max_age + 1 {
            self.associate(
                &dets,
                &mut matched,
                &mut det_used,
                |t| t.status != TrackStatus::Tentative && t.time_since_update == level,
                |_| true,
                appearance_cost,
                APPEARANCE_GATE,
            );
        }
        // Remaining tentative tracks and tracks missed only last frame fall
        // back to pure IoU.
        self.associate_iou(&dets, &mut matched, &mut det_used, |t| {
            t.status == TrackStatus::Tentative || t.time_since_update == 1
        });
        self.finish_step(obs.frame_idx, &dets, &matched, &det_used)
    }

    /// Two-stage association on raw scores: high-score detections first,
    /// then low-score detections recover tracks that were active last frame.
    /// Only unmatched high-score detections start new tracks.
    pub fn bytetrack_step(&mut self, obs: &FrameObservation) -> FrameOutput {
        let mut dets: Vec<&Detection> = obs.detections.iter().filter(|d| d.score >= self.cfg.high_thresh).collect();
        let n_high = dets.len();
        dets.extend(
            obs.detections
                .iter()
                .filter(|d| d.score >= self.cfg.low_thresh && d.score < self.cfg.high_thresh),
        );
        let is_high = |j: usize| j < n_high;
        self.predict_all();
        let mut matched = vec![None; self.tracks.len()];
        let mut det_used = vec![false; dets.len()];
        let gate = self.cfg.iou_cost_gate();

        self.associate(&dets, &mut matched, &mut det_used, |t| t.status != TrackStatus::Tentative, is_high, iou_cost, gate);
        // `Confirmed` here means the track was matched on the previous frame.
        self.associate(&dets, &mut matched, &mut det_used, |t| t.status == TrackStatus::Confirmed, |j| !is_high(j), iou_cost, gate);
        self.associate(&dets, &mut matched, &mut det_used, |t| t.status == TrackStatus::Tentative, is_high, iou_cost, gate);

        for used in det_used.iter_mut().skip(n_high) {
            *used = true;
        }
        self.finish_step(obs.frame_idx, &dets, &matched, &det_used)
    }

    fn predict_all(&mut self) {
        for t in &mut self.tracks {
            let (m, c) = self.kf.predict(&t.mean, &t.covariance);
            t.mean = m;
            t.covariance = c;
            t.age += 1;
            t.time_since_update += 1;
        }
    }

    fn associate_iou(
        &self,
        dets: &[&Detection],
        matched: &mut [Option<usize>],
        det_used: &mut [bool],
        select: impl Fn(&Track) -> bool,
    ) {
        self.associate(dets, matched, det_used, select, |_| true, iou_cost, self.cfg.iou_cost_gate());
    }

    /// Assigns the selected, still unmatched tracks to still unused
    /// detections and records the matches.
    fn associate(
        &self,
        dets: &[&Detection],
        matched: &mut [Option<usize>],
        det_used: &mut [bool],
        select: impl Fn(&Track) -> bool,
        select_det: impl Fn(usize) -> bool,
        cost: impl Fn(&Track, &Detection, &TrackerConfig) -> f64,
        gate: f64,
    ) {
        let rows: Vec<usize> = (0..self.tracks.len())
            .filter(|&i| matched[i].is_none() && select(&self.tracks[i]))
            .collect();
        let cols: Vec<usize> = (0..dets.len()).filter(|&j| !det_used[j] && select_det(j)).collect();
        if rows.is_empty() || cols.is_empty() {
            return;
        }
        let costs: Vec<Vec<f64>> = rows
            .iter()
            .map(|&i| cols.iter().map(|&j| cost(&self.tracks[i], dets[j], &self.cfg)).collect())
            .collect();
        for (r, c) in assign(&costs, gate).matches {
            matched[rows[r]] = Some(cols[c]);
            det_used[cols[c]] = true;
        }
    }

    fn finish_step(
        &mut self,
        frame_idx: u64,
        dets: &[&Detection],
        matched: &[Option<usize>],
        det_used: &[bool],
    ) -> FrameOutput {
        let cfg = &self.cfg;
        for (t, m) in self.tracks.iter_mut().zip(matched) {
            match m {
                Some(di) => {
                    let det = dets[*di];
                    let (mean, cov) = self.kf.update(&t.mean, &t.covariance, &det.bbox);
                    t.mean = mean;
                    t.covariance = cov;
                    t.hits += 1;
                    t.time_since_update = 0;
                    t.last_score = det.score;
                    if let Some(e) = &det.embedding {
                        t.gallery.push_back(e.clone());
                        while t.gallery.len() > cfg.gallery_capacity {
                            t.gallery.pop_front();
                        }
                    }
                    t.status = match t.status {
                        TrackStatus::Tentative if t.hits >= cfg.min_hits => TrackStatus::Confirmed,
                        TrackStatus::Tentative => TrackStatus::Tentative,
                        TrackStatus::Confirmed | TrackStatus::Lost => TrackStatus::Confirmed,
                    };
                }
                None => t.status = TrackStatus::Lost,
            }
        }
        // Tentative tracks that missed were just marked lost with fewer than
        // min_hits hits; they are dropped together with expired lost tracks.
        let max_age = cfg.max_age;
        let min_hits = cfg.min_hits;
        self.tracks.retain(|t| {
            t.status != TrackStatus::Lost || (t.hits >= min_hits && t.time_since_update <= max_age)
        });

        for (j, det) in dets.iter().enumerate() {
            if det_used[j] {
                continue;
            }
            let (mean, covariance) = self.kf.initiate(&det.bbox);
            let mut gallery = VecDeque::new();
            if let Some(e) = &det.embedding {
                gallery.push_back(e.clone());
            }
            let status = if cfg.min_hits <= 1 { TrackStatus::Confirmed } else { TrackStatus::Tentative };
            self.tracks.push(Track {
                id: self.next_id,
                mean,
                covariance,
                status,
                hits: 1,
                age: 1,
                time_since_update: 0,
                gallery,
                last_score: det.score,
            });
            self.next_id += 1;
        }

        let tracks: Vec<ReportedTrack> = self
            .tracks
            .iter()
            .filter(|t| t.status == TrackStatus::Confirmed && t.time_since_update == 0)
            .map(|t| ReportedTrack {
                id: t.id,
                bbox: t.bbox(),
                score: t.last_score,
            })
            .collect();
        let count = tracks.len() as u32;
        let confidence = if tracks.is_empty() {
            0.0
        } else {
            tracks.iter().map(|t| t.score).sum::<f64>() / tracks.len() as f64
        };
        FrameOutput {
            frame_idx,
            count,
            confidence,
            tracks,
        }
    }
}

fn iou_cost(track: &Track, det: &Detection, _: &TrackerConfig) -> f64 {
    1.0 - iou(&track.bbox(), &det.bbox)
}

/// Appearance costs are at most 1; gated pairs are pushed above this.
const APPEARANCE_GATE: f64 = 1.0;

fn appearance_cost(track: &Track, det: &Detection, cfg: &TrackerConfig) -> f64 {
    let motion = 1.0 - iou(&track.bbox(), &det.bbox);
    let infeasible = 2.0;
    if motion > cfg.iou_cost_gate() {
        return infeasible;
    }
    match (&det.embedding, track.gallery.is_empty()) {
        (Some(e), false) => {
            let dist = track
                .gallery
                .iter()
                .map(|g| 1.0 - g.iter().zip(e).map(|(a, b)| a * b).sum::<f64>())
                .fold(f64::INFINITY, f64::min);
            if dist > cfg.embedding_gate {
                return infeasible;
            }
            cfg.appearance_weight * dist + (1.0 - cfg.appearance_weight) * motion
        }
        _ => motion,
    }
}

/// Output of a tracker over a whole observation list.
#[derive(Debug, Clone, Default)]
pub struct TrackerRun {
    pub samples: Vec<OccupancySample>,
    /// Per-video frame outputs, in video order.
    pub frames: Vec<(String, Vec<FrameOutput>)>,
}

/// Runs a tracker over observations that may span several videos. Tracker
/// state is reset between videos; ids keep increasing across them.
pub fn run_tracker(observations: &[FrameObservation], kind: TrackerKind, cfg: &TrackerConfig) -> Result<TrackerRun> {
    cfg.validate()?;
    let mut run = TrackerRun::default();
    let mut next_id = 1;
    for video in by_video(observations) {
        let mut tracker = Tracker::with_first_id(cfg.clone(), next_id);
        let mut outputs = Vec::with_capacity(video.len());
        for obs in video {
            let out = tracker.step(kind, obs);
            run.samples.push(OccupancySample::new(
                obs.video_id.clone(),
                obs.frame_idx,
                obs.timestamp,
                out.count,
                out.confidence,
                kind.source(),
            ));
            outputs.push(out);
        }
        next_id = tracker.next_id();
        run.frames.push((video[0].video_id.clone(), outputs));
    }
    Ok(run)
}

/// Reported tracks of one video keyed by frame.
pub fn predicted_tracks(frames: &[FrameOutput]) -> PredictedTracks {
    let mut out: PredictedTracks = BTreeMap::new();
    for f in frames {
        out.insert(f.frame_idx, f.tracks.iter().map(|t| (t.id, t.bbox)).collect());
    }
    out
}

/// Writes reported tracks as MOT-style `frame,id,x,y,w,h,score` rows.
pub fn write_mot_tracks<W: Write>(mut w: W, frames: &[FrameOutput]) -> Result<()> {
    for f in frames {
        for t in &f.tracks {
            writeln!(w, "{},{},{},{},{},{},{}", f.frame_idx, t.id, t.bbox.x, t.bbox.y, t.bbox.w, t.bbox.h, t.score)
                .map_err(|e| Error::io("<tracks>", e))?;
        }
    }
    Ok(())
}

/// Per-frame occupancy counts from the chosen tracker.
pub fn track_series(observations: &[FrameObservation], kind: TrackerKind, cfg: &TrackerConfig) -> Result<Vec<OccupancySample>> {
    Ok(run_tracker(observations, kind, cfg)?.samples)
}

/// Parses a tracker name and runs [`track_series`].
pub fn track_series_named(observations: &[FrameObservation], kind: &str, cfg: &TrackerConfig) -> Result<Vec<OccupancySample>> {
    track_series(observations, kind.parse()?, cfg)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn det(x: f64, score: f64) -> Detection {
        Detection {
            bbox: BBox::new(x, 10.0, 20.0, 40.0),
            score,
            embedding: None,
        }
    }

    fn obs(frame: u64, dets: Vec<Detection>) -> FrameObservation {
        FrameObservation::new("v", frame, frame as f64, dets, 0.5)
    }

    #[test]
    fn confirmation_after_min_hits() {
        let cfg = TrackerConfig::default();
        let mut t = Tracker::new(cfg.clone());
        let counts: Vec<u32> = (0..6).map(|f| t.sort_step(&obs(f, vec![det(100.0, 0.9)])).count).collect();
        assert_eq!(counts, [0, 0, 1, 1, 1, 1]);
        assert_eq!(t.tracks().len(), 1);
    }

    #[test]
    fn removal_after_max_age() {
        let cfg = TrackerConfig {
            max_age: 5,
            ..TrackerConfig::default()
        };
        let mut t = Tracker::new(cfg);
        for f in 0..3 {
            t.sort_step(&obs(f, vec![det(100.0, 0.9)]));
        }
        for f in 3..8 {
            assert_eq!(t.sort_step(&obs(f, vec![])).count, 0);
            assert_eq!(t.tracks().len(), 1, "kept while within max_age");
            assert_eq!(t.tracks()[0].status, TrackStatus::Lost);
        }
        t.sort_step(&obs(8, vec![]));
        assert!(t.tracks().is_empty());
    }

    #[test]
    fn lost_track_reacquired_with_same_id() {
        let mut t = Tracker::new(TrackerConfig::default());
        for f in 0..4 {
            t.sort_step(&obs(f, vec![det(100.0, 0.9)]));
        }
        t.sort_step(&obs(4, vec![]));
        let out = t.sort_step(&obs(5, vec![det(100.0, 0.9)]));
        assert_eq!(out.tracks.len(), 1);
        assert_eq!(out.tracks[0].id, 1);
    }

    #[test]
    fn one_frame_false_positive_not_counted() {
        let mut t = Tracker::new(TrackerConfig::default());
        assert_eq!(t.sort_step(&obs(0, vec![det(100.0, 0.9)])).count, 0);
        assert_eq!(t.sort_step(&obs(1, vec![])).count, 0);
        assert!(t.tracks().is_empty());
    }

    #[test]
    fn bytetrack_low_score_does_not_spawn() {
        let mut t = Tracker::new(TrackerConfig::default());
        t.bytetrack_step(&obs(0, vec![det(100.0, 0.3)]));
        assert!(t.tracks().is_empty());
    }

    #[test]
    fn gallery_capacity_one_keeps_latest() {
        let cfg = TrackerConfig {
            gallery_capacity: 1,
            ..TrackerConfig::default()
        };
        let mut t = Tracker::new(cfg);
        let mk = |e: Vec<f64>| Detection {
            embedding: Some(e),
            ..det(100.0, 0.9)
        };
        t.deepsort_step(&obs(0, vec![mk(vec![1.0, 0.0])]));
        t.deepsort_step(&obs(1, vec![mk(vec![0.8, 0.6])]));
        let g: Vec<_> = t.tracks()[0].gallery.iter().cloned().collect();
        assert_eq!(g, vec![vec![0.8, 0.6]]);
    }

    #[test]
    fn detection_only_series_equals_counts() {
        let o = vec![obs(0, vec![det(0.0, 0.9), det(50.0, 0.2)]), obs(1, vec![]), obs(2, vec![det(0.0, 0.7)])];
        let s = track_series(&o, TrackerKind::DetectionOnly, &TrackerConfig::default()).unwrap();
        let counts: Vec<u32> = s.iter().map(|x| x.count).collect();
        assert_eq!(counts, [1, 0, 1]);
        assert!(track_series(&[], TrackerKind::Sort, &TrackerConfig::default()).unwrap().is_empty());
    }

    #[test]
    fn unknown_kind_rejected() {
        assert!(track_series_named(&[], "kalmanator", &TrackerConfig::default()).is_err());
    }

    #[test]
    fn ids_continue_across_videos() {
        let mut o: Vec<FrameObservation> = (0..4).map(|f| obs(f, vec![det(10.0, 0.9)])).collect();
        o.extend((0..4).map(|f| FrameObservation::new("w", f, f as f64, vec![det(10.0, 0.9)], 0.5)));
        let run = run_tracker(&o, TrackerKind::Sort, &TrackerConfig::default()).unwrap();
        let first = run.frames[0].1.last().unwrap().tracks[0].id;
        let second = run.frames[1].1.last().unwrap().tracks[0].id;
        assert!(second > first);
    }

    #[test]
    fn invalid_thresholds_rejected() {
        let cfg = TrackerConfig {
            low_thresh: 0.7,
            high_thresh: 0.6,
            ..TrackerConfig::default()
        };
        assert!(cfg.validate().is_err());
    }
}
