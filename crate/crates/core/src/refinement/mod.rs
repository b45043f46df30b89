//! Confidence-gated LLM refinement of frame-level counts.
//!
//! Uncertain frames are selected by simple screening rules, grouped into
//! per-video batches and sent to an LLM endpoint. Each answer replaces the
//! input count only when the LLM confidence beats the input confidence by
//! the configured margin. Any failure keeps the input value.

pub mod client;
pub mod prompt;

use std::collections::HashMap;
use std::fmt;
use std::io::Write;
use std::path::PathBuf;
use std::str::FromStr;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use base64::prelude::*;
use serde::{Deserialize, Serialize};

pub use client::{LlmClient, LlmRequest, MockBehavior, MockLlm, MockScript, ScriptDefault, ScriptedAnswer};
#[cfg(feature = "http")]
pub use client::{HttpLlmClient, MockServer};
pub use prompt::{build_prompt, parse_llm_response};

use crate::error::{Error, Result};
use crate::ingest::FrameObservation;
use crate::series::{OccupancySample, Source};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReviewReason {
    LowConf,
    Boundary,
    Spike,
}

impl ReviewReason {
    pub fn as_str(&self) -> &'static str {
        match self {
            ReviewReason::LowConf => "low_conf",
            ReviewReason::Boundary => "boundary",
            ReviewReason::Spike => "spike",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReviewItem {
    pub video_id: String,
    pub frame_idx: u64,
    pub timestamp: f64,
    pub count: u32,
    pub mean_confidence: f64,
    /// Count of the previous frame, 0 at the start of a video.
    pub prev_count: u32,
    /// Count of the next frame, 0 at the end of a video.
    pub next_count: u32,
    pub reason: ReviewReason,
    pub image_ref: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RefinementMode {
    TextOnly,
    Vision,
}

impl FromStr for RefinementMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "text" | "text_only" => Ok(RefinementMode::TextOnly),
            "vision" => Ok(RefinementMode::Vision),
            other => Err(Error::Config(format!("unknown refinement mode {other:?}"))),
        }
    }
}

impl fmt::Display for RefinementMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RefinementMode::TextOnly => "text_only",
            RefinementMode::Vision => "vision",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RefinementConfig {
    /// Confidence margin Δ the LLM must exceed the input confidence by.
    pub margin: f64,
    pub low_conf_bound: f64,
    pub spike_excess: u32,
    pub batch_size: usize,
    pub mode: RefinementMode,
    pub endpoint: Option<String>,
    pub model: String,
    pub timeout_secs: f64,
    pub retries: u32,
    /// Batches allowed in flight at once.
    pub max_in_flight: usize,
    /// Vision mode: frames are looked up as `<dir>/<video>/<frame>.jpg`.
    pub image_dir: Option<PathBuf>,
}

impl Default for RefinementConfig {
    fn default() -> Self {
        RefinementConfig {
            margin: 0.15,
            low_conf_bound: 0.6,
            spike_excess: 2,
            batch_size: 8,
            mode: RefinementMode::TextOnly,
            endpoint: None,
            model: "deepseek".into(),
            timeout_secs: 30.0,
            retries: 1,
            max_in_flight: 2,
            image_dir: None,
        }
    }
}

impl RefinementConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.margin > 0.0 && self.margin < 1.0) {
            return Err(Error::Config(format!("margin {} outside (0,1)", self.margin)));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be at least 1".into()));
        }
        if self.max_in_flight == 0 {
            return Err(Error::Config("max_in_flight must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RefinementResponse {
    pub frame_idx: u64,
    pub count: u32,
    pub confidence: f64,
}

/// Review reason for one frame, or `None`. Rules are tried in the order
/// low confidence, boundary count, spike.
pub fn review_reason(count: u32, mean_confidence: f64, prev: u32, next: u32, cfg: &RefinementConfig) -> Option<ReviewReason> {
    if count > 0 && mean_confidence < cfg.low_conf_bound {
        Some(ReviewReason::LowConf)
    } else if count <= 1 {
        Some(ReviewReason::Boundary)
    } else if count > prev.max(next).saturating_add(cfg.spike_excess) {
        Some(ReviewReason::Spike)
    } else {
        None
    }
}

/// Flags frames for review. `series` must be ordered and gap-free within
/// each video; neighbours are taken within the same video only.
pub fn select_frames_for_review(series: &[OccupancySample], cfg: &RefinementConfig) -> Vec<ReviewItem> {
    let mut items = Vec::new();
    for video in series.chunk_by(|a, b| a.video_id == b.video_id) {
        for (i, s) in video.iter().enumerate() {
            let prev = if i > 0 { video[i - 1].count } else { 0 };
            let next = video.get(i + 1).map_or(0, |n| n.count);
            if let Some(reason) = review_reason(s.count, s.confidence, prev, next, cfg) {
                items.push(ReviewItem {
                    video_id: s.video_id.clone(),
                    frame_idx: s.frame_idx,
                    timestamp: s.timestamp,
                    count: s.count,
                    mean_confidence: s.confidence,
                    prev_count: prev,
                    next_count: next,
                    reason,
                    image_ref: image_ref(cfg, &s.video_id, s.frame_idx),
                });
            }
        }
    }
    items
}

fn image_ref(cfg: &RefinementConfig, video: &str, frame: u64) -> Option<String> {
    if cfg.mode != RefinementMode::Vision {
        return None;
    }
    let path = cfg.image_dir.as_ref()?.join(video).join(format!("{frame}.jpg"));
    path.is_file().then(|| path.to_string_lossy().into_owned())
}

/// Splits review items into batches of at most `batch_size` that never mix
/// videos.
pub fn batches(items: &[ReviewItem], batch_size: usize) -> Vec<&[ReviewItem]> {
    items
        .chunk_by(|a, b| a.video_id == b.video_id)
        .flat_map(|v| v.chunks(batch_size.max(1)))
        .collect()
}

/// Confidence-margin fusion. Returns `(count, confidence)` of the winning
/// source; without a response the input is kept.
pub fn fuse(count: u32, confidence: f64, response: Option<&RefinementResponse>, margin: f64) -> (u32, f64) {
    match response {
        Some(r) if r.confidence >= confidence + margin => (r.count, r.confidence),
        _ => (count, confidence),
    }
}

/// One line of the refinement audit log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditRecord {
    pub video: String,
    pub frame: u64,
    pub reason: ReviewReason,
    pub c_t: u32,
    pub s_bar_t: f64,
    pub c_llm: Option<u32>,
    pub s_llm: Option<f64>,
    pub accepted: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, Default)]
pub struct RefinementOutcome {
    pub samples: Vec<OccupancySample>,
    /// One record per reviewed frame, ordered by `(video, frame)`.
    pub audit: Vec<AuditRecord>,
}

impl RefinementOutcome {
    pub fn failed_calls(&self) -> usize {
        self.audit.iter().filter(|a| a.error.is_some()).count()
    }
}

pub fn write_audit_log<W: Write>(mut w: W, audit: &[AuditRecord]) -> Result<()> {
    for rec in audit {
        serde_json::to_writer(&mut w, rec)?;
        w.write_all(b"\n").map_err(|e| Error::io("<audit log>", e))?;
    }
    Ok(())
}

fn request_for(batch: &[ReviewItem], cfg: &RefinementConfig) -> Result<LlmRequest> {
    let mut images = Vec::new();
    if cfg.mode == RefinementMode::Vision {
        for item in batch {
            if let Some(path) = &item.image_ref {
                let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
                images.push(BASE64_STANDARD.encode(&bytes));
            }
        }
    }
    Ok(LlmRequest {
        model: cfg.model.clone(),
        prompt: build_prompt(batch, cfg.mode),
        images,
    })
}

fn query_batch(batch: &[ReviewItem], client: &dyn LlmClient, cfg: &RefinementConfig) -> std::result::Result<Vec<RefinementResponse>, String> {
    let request = request_for(batch, cfg).map_err(|e| e.to_string())?;
    let mut last_err = String::new();
    for _ in 0..=cfg.retries {
        match client.complete(&request) {
            Ok(text) => {
                let frames: Vec<u64> = batch.iter().map(|i| i.frame_idx).collect();
                return parse_llm_response(&text, &frames).map_err(|e| format!("malformed response: {e}"));
            }
            Err(e) => last_err = e.to_string(),
        }
    }
    Err(last_err)
}

/// Refines a gap-free series. Frames not selected for review keep their
/// count, confidence and timestamp; reviewed frames are fused with the LLM
/// answer. Batches run concurrently (up to `max_in_flight`) and results are
/// merged by frame index, so output does not depend on completion order.
/// The source tag of every output sample is [`Source::LlmFused`].
pub fn refine_series(series: &[OccupancySample], client: &dyn LlmClient, cfg: &RefinementConfig) -> Result<RefinementOutcome> {
    cfg.validate()?;
    let items = select_frames_for_review(series, cfg);
    let work = batches(&items, cfg.batch_size);
    let results: Mutex<Vec<Option<std::result::Result<Vec<RefinementResponse>, String>>>> = Mutex::new(vec![None; work.len()]);
    let next = AtomicUsize::new(0);
    std::thread::scope(|scope| {
        for _ in 0..cfg.max_in_flight.min(work.len()) {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some(batch) = work.get(i) else { break };
                let r = query_batch(batch, client, cfg);
                results.lock().expect("result lock")[i] = Some(r);
            });
        }
    });
    let results = results.into_inner().expect("result lock");

    let mut fused: HashMap<(&str, u64), (u32, f64)> = HashMap::new();
    let mut audit = Vec::with_capacity(items.len());
    for (batch, result) in work.iter().zip(results) {
        let result = result.expect("every batch is processed");
        let answers: HashMap<u64, RefinementResponse> = match &result {
            Ok(rs) => rs.iter().map(|r| (r.frame_idx, *r)).collect(),
            Err(_) => HashMap::new(),
        };
        for item in batch.iter() {
            let answer = answers.get(&item.frame_idx);
            let (count, confidence) = fuse(item.count, item.mean_confidence, answer, cfg.margin);
            let accepted = answer.is_some_and(|a| a.confidence >= item.mean_confidence + cfg.margin);
            let error = match (&result, answer) {
                (Err(e), _) => Some(e.clone()),
                (Ok(_), None) => Some("frame missing from response".to_string()),
                (Ok(_), Some(_)) => None,
            };
            audit.push(AuditRecord {
                video: item.video_id.clone(),
                frame: item.frame_idx,
                reason: item.reason,
                c_t: item.count,
                s_bar_t: item.mean_confidence,
                c_llm: answer.map(|a| a.count),
                s_llm: answer.map(|a| a.confidence),
                accepted,
                error,
            });
            fused.insert((item.video_id.as_str(), item.frame_idx), (count, confidence));
        }
    }

    let samples = series
        .iter()
        .map(|s| {
            let (count, confidence) = fused
                .get(&(s.video_id.as_str(), s.frame_idx))
                .copied()
                .unwrap_or((s.count, s.confidence));
            OccupancySample::new(s.video_id.clone(), s.frame_idx, s.timestamp, count, confidence, Source::LlmFused)
        })
        .collect();
    Ok(RefinementOutcome { samples, audit })
}

/// Input series for refinement: counts from `series`, confidences replaced
/// by the detector's mean confidence of the same frame.
pub fn with_detector_confidence(series: &[OccupancySample], observations: &[FrameObservation]) -> Result<Vec<OccupancySample>> {
    let conf: HashMap<(&str, u64), f64> = observations
        .iter()
        .map(|o| ((o.video_id.as_str(), o.frame_idx), o.mean_confidence))
        .collect();
    series
        .iter()
        .map(|s| {
            let c = conf
                .get(&(s.video_id.as_str(), s.frame_idx))
                .copied()
                .ok_or_else(|| Error::Invalid(format!("no detections for video {} frame {}", s.video_id, s.frame_idx)))?;
            Ok(OccupancySample { confidence: c, ..s.clone() })
        })
        .collect()
}
