//! Prompt construction and strict response parsing.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::{RefinementMode, RefinementResponse, ReviewItem};
use crate::series::format_timestamp;

/// Markers around the machine-readable frame block inside a prompt.
pub const FRAMES_BEGIN: &str = "FRAMES_BEGIN";
pub const FRAMES_END: &str = "FRAMES_END";

/// Frame record embedded in the prompt.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptFrame {
    pub video: String,
    pub frame: u64,
    pub timestamp: String,
    pub count: u32,
    pub mean_confidence: f64,
    pub prev_count: u32,
    pub next_count: u32,
    pub reason: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub image: Option<String>,
}

pub fn build_prompt(batch: &[ReviewItem], mode: RefinementMode) -> String {
    let frames: Vec<PromptFrame> = batch
        .iter()
        .map(|it| PromptFrame {
            video: it.video_id.clone(),
            frame: it.frame_idx,
            timestamp: format_timestamp(it.timestamp),
            count: it.count,
            mean_confidence: (it.mean_confidence * 1e4).round() / 1e4,
            prev_count: it.prev_count,
            next_count: it.next_count,
            reason: it.reason.as_str().to_string(),
            image: match mode {
                RefinementMode::Vision => it.image_ref.clone(),
                RefinementMode::TextOnly => None,
            },
        })
        .collect();

    let mut p = String::new();
    p.push_str("You check person counts produced by a detector on frames from an indoor surveillance camera.\n");
    match mode {
        RefinementMode::TextOnly => p.push_str(
            "You do not see the images. Use the detector count, its mean confidence, the counts of the \
             previous and next frames, and the review reason to judge whether the count is plausible.\n",
        ),
        RefinementMode::Vision => p.push_str(
            "The attached images are the frames listed below, in the same order. Count the people you see.\n",
        ),
    }
    p.push_str("Rules:\n");
    p.push_str("- Count only humans physically present in the room.\n");
    if mode == RefinementMode::Vision {
        p.push_str("- Ignore people shown on screens, posters or reflections, and anyone outside the room boundary.\n");
    }
    p.push_str("- When uncertain, prefer the more conservative lower count.\n");
    p.push_str("- Answer with strict machine-readable JSON only. No explanations, no markdown, no extra text.\n");
    p.push_str("Frames:\n");
    p.push_str(FRAMES_BEGIN);
    p.push('\n');
    p.push_str(&serde_json::to_string(&frames).expect("prompt frames serialize"));
    p.push('\n');
    p.push_str(FRAMES_END);
    p.push('\n');
    p.push_str(&format!(
        "Return a JSON array with exactly {} element{}, one per frame above and keyed by its frame number, \
         each of the form {{\"frame\": <integer>, \"count\": <integer >= 0>, \"confidence\": <number in [0,1]>}}.\n",
        frames.len(),
        if frames.len() == 1 { "" } else { "s" }
    ));
    p
}

/// Extracts the frame block from a prompt built by [`build_prompt`].
pub fn prompt_frames(prompt: &str) -> Option<Vec<PromptFrame>> {
    let start = prompt.find(FRAMES_BEGIN)? + FRAMES_BEGIN.len();
    let end = start + prompt[start..].find(FRAMES_END)?;
    serde_json::from_str(prompt[start..end].trim()).ok()
}

/// Parses an LLM answer. Only a JSON array of `{frame, count, confidence}`
/// objects covering a subset of `expected_frames` is accepted; counts must
/// be non-negative integers and confidences are clamped to `[0,1]`.
pub fn parse_llm_response(raw: &str, expected_frames: &[u64]) -> Result<Vec<RefinementResponse>, String> {
    let value: Value = serde_json::from_str(raw.trim()).map_err(|e| format!("response is not JSON: {e}"))?;
    let items = value.as_array().ok_or("response is not a JSON array")?;
    let expected: BTreeSet<u64> = expected_frames.iter().copied().collect();
    let mut seen = BTreeSet::new();
    let mut out = Vec::with_capacity(items.len());
    for item in items {
        let obj = item.as_object().ok_or("array element is not an object")?;
        if let Some(k) = obj.keys().find(|k| !matches!(k.as_str(), "frame" | "count" | "confidence")) {
            return Err(format!("unexpected field {k:?}"));
        }
        let frame = obj
            .get("frame")
            .and_then(as_integer)
            .filter(|&f| f >= 0)
            .ok_or("missing or invalid frame")? as u64;
        if !expected.contains(&frame) {
            return Err(format!("frame {frame} was not queried"));
        }
        if !seen.insert(frame) {
            return Err(format!("frame {frame} answered twice"));
        }
        let count = obj.get("count").and_then(as_integer).ok_or("missing or non-integer count")?;
        if count < 0 {
            return Err(format!("negative count {count} for frame {frame}"));
        }
        let confidence = obj
            .get("confidence")
            .and_then(Value::as_f64)
            .ok_or("missing or non-numeric confidence")?;
        out.push(RefinementResponse {
            frame_idx: frame,
            count: u32::try_from(count).map_err(|_| "count too large")?,
            confidence: confidence.clamp(0.0, 1.0),
        });
    }
    Ok(out)
}

fn as_integer(v: &Value) -> Option<i64> {
    if let Some(i) = v.as_i64() {
        return Some(i);
    }
    let f = v.as_f64()?;
    (f.fract() == 0.0 && f.abs() < 1e15).then_some(f as i64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::refinement::ReviewReason;

    fn item(frame: u64) -> ReviewItem {
        ReviewItem {
            video_id: "v".into(),
            frame_idx: frame,
            timestamp: frame as f64,
            count: 1,
            mean_confidence: 0.4,
            prev_count: 0,
            next_count: 2,
            reason: ReviewReason::LowConf,
            image_ref: Some(format!("img/{frame}.jpg")),
        }
    }

    #[test]
    fn single_frame_prompt() {
        let p = build_prompt(&[item(5)], RefinementMode::TextOnly);
        assert_eq!(prompt_frames(&p).unwrap().len(), 1);
        assert!(p.contains("strict machine-readable JSON only"));
        assert!(p.contains("exactly 1 element,"));
        assert!(p.contains("conservative lower count"));
    }

    #[test]
    fn text_mode_has_no_images() {
        let p = build_prompt(&[item(5)], RefinementMode::TextOnly);
        assert!(!p.contains("img/5.jpg"));
        assert!(prompt_frames(&p).unwrap()[0].image.is_none());
        let v = build_prompt(&[item(5)], RefinementMode::Vision);
        assert!(v.contains("img/5.jpg"));
    }

    #[test]
    fn batch_of_eight() {
        let batch: Vec<_> = (0..8).map(item).collect();
        let p = build_prompt(&batch, RefinementMode::TextOnly);
        assert!(p.contains("exactly 8 elements"));
        let frames: Vec<u64> = prompt_frames(&p).unwrap().iter().map(|f| f.frame).collect();
        assert_eq!(frames, (0..8).collect::<Vec<_>>());
    }

    #[test]
    fn parse_accepts_strict_array() {
        let r = parse_llm_response(r#"[{"frame":5,"count":1,"confidence":0.8}]"#, &[5]).unwrap();
        assert_eq!(r, vec![RefinementResponse { frame_idx: 5, count: 1, confidence: 0.8 }]);
        let clamped = parse_llm_response(r#"[{"frame":5,"count":2.0,"confidence":1.7}]"#, &[5, 6]).unwrap();
        assert_eq!((clamped[0].count, clamped[0].confidence), (2, 1.0));
    }

    #[test]
    fn parse_rejects_everything_else() {
        assert!(parse_llm_response("There are two people.", &[5]).is_err());
        assert!(parse_llm_response(r#"[{"frame":5,"count":-1,"confidence":0.9}]"#, &[5]).is_err());
        assert!(parse_llm_response(r#"{"frame":5,"count":1,"confidence":0.9}"#, &[5]).is_err());
        assert!(parse_llm_response(r#"[{"frame":7,"count":1,"confidence":0.9}]"#, &[5]).is_err());
        assert!(parse_llm_response(r#"[{"frame":5,"count":1.5,"confidence":0.9}]"#, &[5]).is_err());
        assert!(parse_llm_response(r#"[{"frame":5,"count":1,"confidence":0.9,"why":"x"}]"#, &[5]).is_err());
        assert!(parse_llm_response("```json\n[]\n```", &[5]).is_err());
    }
}
