//! LLM endpoint clients: a deterministic in-process mock and, with the
//! `http` feature, a blocking HTTP client plus a mock server that speaks the
//! same wire contract.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::prompt::{prompt_frames, PromptFrame};
use crate::error::{Error, Result};

/// Request body sent to the endpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LlmRequest {
    pub model: String,
    pub prompt: String,
    /// Base64-encoded images, vision mode only.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub images: Vec<String>,
}

pub trait LlmClient: Sync {
    /// Returns the raw `text` field of the endpoint's answer.
    fn complete(&self, request: &LlmRequest) -> Result<String>;
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScriptedAnswer {
    pub count: u32,
    pub confidence: f64,
}

/// What a scripted mock does for frames missing from its script.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScriptDefault {
    /// Leave the frame out of the answer.
    #[default]
    Omit,
    /// Echo the detector count with confidence 1.
    Echo,
}

/// Mock script file: answers keyed by `"<frame>"` or `"<video>/<frame>"`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MockScript {
    #[serde(default)]
    pub frames: BTreeMap<String, ScriptedAnswer>,
    #[serde(default)]
    pub default: ScriptDefault,
    /// When set, returned verbatim for every call (for malformed-answer tests).
    #[serde(default)]
    pub raw: Option<String>,
}

impl MockScript {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum MockBehavior {
    /// Detector count back with confidence 1.
    Echo,
    /// The same answer for every frame.
    Fixed(ScriptedAnswer),
    /// Every call fails.
    Fail,
    Scripted(MockScript),
}

impl MockBehavior {
    /// Parses `echo`, `fail`, `fixed:<count>:<confidence>`, or a path to a
    /// script JSON file.
    pub fn from_arg(arg: &str) -> Result<Self> {
        match arg {
            "echo" => Ok(MockBehavior::Echo),
            "fail" => Ok(MockBehavior::Fail),
            _ if arg.starts_with("fixed:") => {
                let parts: Vec<&str> = arg.split(':').collect();
                let bad = || Error::Config(format!("expected fixed:<count>:<confidence>, got {arg:?}"));
                if parts.len() != 3 {
                    return Err(bad());
                }
                Ok(MockBehavior::Fixed(ScriptedAnswer {
                    count: parts[1].parse().map_err(|_| bad())?,
                    confidence: parts[2].parse().map_err(|_| bad())?,
                }))
            }
            path => Ok(MockBehavior::Scripted(MockScript::load(Path::new(path))?)),
        }
    }
}

/// Deterministic mock endpoint. It reads the frame block embedded in the
/// prompt and answers according to its behaviour.
#[derive(Debug, Clone)]
pub struct MockLlm {
    behavior: MockBehavior,
}

impl MockLlm {
    pub fn new(behavior: MockBehavior) -> Self {
        MockLlm { behavior }
    }

    pub fn respond(&self, prompt: &str) -> Result<String> {
        if let MockBehavior::Fail = self.behavior {
            return Err(Error::Llm("mock endpoint configured to fail".into()));
        }
        if let MockBehavior::Scripted(MockScript { raw: Some(raw), .. }) = &self.behavior {
            return Ok(raw.clone());
        }
        let frames = prompt_frames(prompt).ok_or_else(|| Error::Llm("prompt carries no frame block".into()))?;
        let answers: Vec<serde_json::Value> = frames
            .iter()
            .filter_map(|f| self.answer(f))
            .map(|(frame, a)| serde_json::json!({"frame": frame, "count": a.count, "confidence": a.confidence}))
            .collect();
        Ok(serde_json::to_string(&answers)?)
    }

    fn answer(&self, f: &PromptFrame) -> Option<(u64, ScriptedAnswer)> {
        let echo = ScriptedAnswer {
            count: f.count,
            confidence: 1.0,
        };
        let a = match &self.behavior {
            MockBehavior::Echo => echo,
            MockBehavior::Fixed(a) => *a,
            MockBehavior::Fail => return None,
            MockBehavior::Scripted(script) => {
                let keyed = script
                    .frames
                    .get(&format!("{}/{}", f.video, f.frame))
                    .or_else(|| script.frames.get(&f.frame.to_string()));
                match (keyed, script.default) {
                    (Some(a), _) => *a,
                    (None, ScriptDefault::Echo) => echo,
                    (None, ScriptDefault::Omit) => return None,
                }
            }
        };
        Some((f.frame, a))
    }
}

impl LlmClient for MockLlm {
    fn complete(&self, request: &LlmRequest) -> Result<String> {
        self.respond(&request.prompt)
    }
}

#[cfg(feature = "http")]
pub use http::{HttpLlmClient, MockServer};

#[cfg(feature = "http")]
mod http {
    use std::net::SocketAddr;
    use std::sync::atomic::{AtomicBool, Ordering};
    use std::sync::Arc;
    use std::thread::JoinHandle;
    use std::time::Duration;

    use super::*;

    #[derive(Deserialize)]
    struct WireAnswer {
        text: String,
    }

    /// Blocking client for `POST {model, prompt, images?}` → `{text}`.
    #[derive(Debug, Clone)]
    pub struct HttpLlmClient {
        url: String,
        agent: ureq::Agent,
    }

    impl HttpLlmClient {
        pub fn new(url: impl Into<String>, timeout: Duration) -> Self {
            HttpLlmClient {
                url: url.into(),
                agent: ureq::AgentBuilder::new().timeout(timeout).build(),
            }
        }
    }

    impl LlmClient for HttpLlmClient {
        fn complete(&self, request: &LlmRequest) -> Result<String> {
            let resp = self
                .agent
                .post(&self.url)
                .send_json(request)
                .map_err(|e| Error::Llm(format!("POST {}: {e}", self.url)))?;
            let answer: WireAnswer = resp
                .into_json()
                .map_err(|e| Error::Llm(format!("response body from {} has no text field: {e}", self.url)))?;
            Ok(answer.text)
        }
    }

    /// Local HTTP server wrapping a [`MockLlm`]. Failing behaviours answer
    /// with status 503.
    pub struct MockServer {
        addr: SocketAddr,
        stop: Arc<AtomicBool>,
        handle: Option<JoinHandle<()>>,
    }

    impl MockServer {
        /// Binds `addr` (use port 0 for an ephemeral port) and serves on a
        /// background thread until dropped.
        pub fn start(addr: &str, behavior: MockBehavior) -> Result<Self> {
            let server = tiny_http::Server::http(addr).map_err(|e| Error::Llm(format!("cannot bind {addr}: {e}")))?;
            let addr = server
                .server_addr()
                .to_ip()
                .ok_or_else(|| Error::Llm("mock server has no IP address".into()))?;
            let stop = Arc::new(AtomicBool::new(false));
            let flag = Arc::clone(&stop);
            let mock = MockLlm::new(behavior);
            let handle = std::thread::spawn(move || {
                while !flag.load(Ordering::Relaxed) {
                    match server.recv_timeout(Duration::from_millis(50)) {
                        Ok(Some(req)) => serve(&mock, req),
                        Ok(None) => {}
                        Err(_) => break,
                    }
                }
            });
            Ok(MockServer {
                addr,
                stop,
                handle: Some(handle),
            })
        }

        pub fn url(&self) -> String {
            format!("http://{}/", self.addr)
        }

        /// Blocks the calling thread for as long as the server runs.
        pub fn wait(mut self) {
            if let Some(h) = self.handle.take() {
                let _ = h.join();
            }
        }
    }

    impl Drop for MockServer {
        fn drop(&mut self) {
            self.stop.store(true, Ordering::Relaxed);
            if let Some(h) = self.handle.take() {
                let _ = h.join();
            }
        }
    }

    fn serve(mock: &MockLlm, mut req: tiny_http::Request) {
        let mut body = String::new();
        let parsed = req
            .as_reader()
            .read_to_string(&mut body)
            .ok()
            .and_then(|_| serde_json::from_str::<LlmRequest>(&body).ok());
        let (status, payload) = match parsed {
            None => (400, serde_json::json!({"error": "expected {model, prompt, images?}"})),
            Some(r) => match mock.respond(&r.prompt) {
                Ok(text) => (200, serde_json::json!({ "text": text })),
                Err(e) => (503, serde_json::json!({"error": e.to_string()})),
            },
        };
        let header = tiny_http::Header::from_bytes("Content-Type", "application/json").expect("static header");
        let response = tiny_http::Response::from_string(payload.to_string())
            .with_status_code(status)
            .with_header(header);
        let _ = req.respond(response);
    }

}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::refinement::prompt::build_prompt;
    use crate::refinement::{RefinementMode, ReviewItem, ReviewReason};

    fn prompt() -> String {
        let items: Vec<ReviewItem> = [3u64, 4]
            .iter()
            .map(|&f| ReviewItem {
                video_id: "v".into(),
                frame_idx: f,
                timestamp: 0.0,
                count: 2,
                mean_confidence: 0.3,
                prev_count: 2,
                next_count: 2,
                reason: ReviewReason::LowConf,
                image_ref: None,
            })
            .collect();
        build_prompt(&items, RefinementMode::TextOnly)
    }

    #[test]
    fn echo_and_fixed() {
        let echo = MockLlm::new(MockBehavior::Echo).respond(&prompt()).unwrap();
        assert_eq!(echo, r#"[{"confidence":1.0,"count":2,"frame":3},{"confidence":1.0,"count":2,"frame":4}]"#);
        let fixed = MockLlm::new(MockBehavior::from_arg("fixed:1:0.9").unwrap()).respond(&prompt()).unwrap();
        assert!(fixed.contains(r#""count":1"#));
        assert!(MockLlm::new(MockBehavior::Fail).respond(&prompt()).is_err());
    }

    #[test]
    fn scripted() {
        let script: MockScript = serde_json::from_str(r#"{"frames":{"v/4":{"count":0,"confidence":0.95}}}"#).unwrap();
        let out = MockLlm::new(MockBehavior::Scripted(script)).respond(&prompt()).unwrap();
        assert_eq!(out, r#"[{"confidence":0.95,"count":0,"frame":4}]"#);
    }

    #[cfg(feature = "http")]
    #[test]
    fn http_round_trip_through_mock_server() {
        let server = MockServer::start("127.0.0.1:0", MockBehavior::Echo).unwrap();
        let client = HttpLlmClient::new(server.url(), std::time::Duration::from_secs(5));
        let req = LlmRequest {
            model: "mock".into(),
            prompt: prompt(),
            images: vec![],
        };
        let text = client.complete(&req).unwrap();
        assert_eq!(text, MockLlm::new(MockBehavior::Echo).respond(&prompt()).unwrap());

        let failing = MockServer::start("127.0.0.1:0", MockBehavior::Fail).unwrap();
        let client = HttpLlmClient::new(failing.url(), std::time::Duration::from_secs(5));
        assert!(client.complete(&req).is_err());
    }
}
