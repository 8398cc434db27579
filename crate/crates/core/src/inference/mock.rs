//! Scriptable chat-completions server for tests and dry runs.
//!
//! A scenario maps clip ids to scripted answers. Two JSON forms are read;
//! the short one is a bare map:
//!
//! ```text
//! {"v1:0-5000": "<answer>Yes</answer>", "v1:5000-9000": {"fail": 2}}
//! ```
//!
//! The full form adds fallbacks, consulted in this order when a clip has no
//! entry (or its scripted failures are used up without a `then` answer):
//!
//! ```text
//! {
//!   "responses": {"v1:0-5000": {"fail": 2, "then": "<answer>Yes</answer>"},
//!                 "v2:0-5000": {"fail": "always", "status": 500}},
//!   "by_video":  {"v3": "<answer>No</answer>"},
//!   "oracle":    {"v1": [[3.0, 9.0]], "v4": []},
//!   "default":   "<answer>No</answer>",
//!   "delay_ms":  20
//! }
//! ```
//!
//! `oracle` answers Yes for a clip overlapping one of its video's annotated
//! segments and No otherwise. Scripted failures answer HTTP 503 unless
//! `status` says otherwise. Requests name their clip in the `x-clip-id`
//! header. Unresolvable clips get HTTP 404.

use std::collections::{BTreeMap, HashMap};
use std::net::SocketAddr;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use axum::extract::{DefaultBodyLimit, State};
use axum::http::{HeaderMap, StatusCode};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize};
use serde_json::{json, Value};

use super::client::CLIP_ID_HEADER;
use crate::annotations::VideoAnnotation;
use crate::label::Label;
use crate::segmenter::parse_clip_id;
use crate::time::TimeInterval;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Scripted {
    Text(String),
    Fail {
        fail: FailCount,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        then: Option<String>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        status: Option<u16>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum FailCount {
    Times(u32),
    Always(AlwaysTag),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AlwaysTag {
    Always,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct Scenario {
    #[serde(skip_serializing_if = "BTreeMap::is_empty")]
    pub responses: BTreeMap<String, Scripted>,
    #[serde(skip_serializing_if = "BTreeMap::is_empty")]
    pub by_video: BTreeMap<String, String>,
    #[serde(skip_serializing_if = "BTreeMap::is_empty")]
    pub oracle: BTreeMap<String, Vec<TimeInterval>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub default: Option<String>,
    #[serde(skip_serializing_if = "is_zero")]
    pub delay_ms: u64,
}

fn is_zero(v: &u64) -> bool {
    *v == 0
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct FullScenario {
    #[serde(default)]
    responses: BTreeMap<String, Scripted>,
    #[serde(default)]
    by_video: BTreeMap<String, String>,
    #[serde(default)]
    oracle: BTreeMap<String, Vec<TimeInterval>>,
    #[serde(default)]
    default: Option<String>,
    #[serde(default)]
    delay_ms: u64,
}

const FULL_KEYS: [&str; 5] = ["responses", "by_video", "oracle", "default", "delay_ms"];

impl<'de> Deserialize<'de> for Scenario {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let value = Value::deserialize(deserializer)?;
        let obj = value
            .as_object()
            .ok_or_else(|| D::Error::custom("scenario must be a JSON object"))?;
        if obj.keys().any(|k| FULL_KEYS.contains(&k.as_str())) {
            let full = FullScenario::deserialize(value).map_err(D::Error::custom)?;
            Ok(Scenario {
                responses: full.responses,
                by_video: full.by_video,
                oracle: full.oracle,
                default: full.default,
                delay_ms: full.delay_ms,
            })
        } else {
            let responses = BTreeMap::deserialize(value).map_err(D::Error::custom)?;
            Ok(Scenario {
                responses,
                ..Scenario::default()
            })
        }
    }
}

impl Scenario {
    /// Answers each clip with the ground truth implied by the manifest.
    pub fn oracle(annotations: &[VideoAnnotation]) -> Self {
        Scenario {
            oracle: annotations
                .iter()
                .map(|a| {
                    let segs = match a.global_label {
                        Label::Positive => a.segments.clone(),
                        Label::Negative => Vec::new(),
                    };
                    (a.video_id.clone(), segs)
                })
                .collect(),
            ..Scenario::default()
        }
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }

    fn fallback(&self, clip_id: &str) -> Option<String> {
        let parsed = parse_clip_id(clip_id);
        if let Some((video_id, _)) = parsed {
            if let Some(text) = self.by_video.get(video_id) {
                return Some(text.clone());
            }
        }
        if let Some((video_id, window)) = parsed {
            if let Some(segments) = self.oracle.get(video_id) {
                let hit = segments
                    .iter()
                    .any(|s| s.start() < window.end() && window.start() < s.end());
                return Some(if hit { "<answer>Yes</answer>" } else { "<answer>No</answer>" }.into());
            }
        }
        self.default.clone()
    }
}

/// What the mock saw in one request, minus the media payload.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RequestSummary {
    pub clip_id: Option<String>,
    pub model: Option<String>,
    pub has_video: bool,
    pub has_audio: bool,
    pub prompt: Option<String>,
    pub temperature: Option<f64>,
    pub max_tokens: Option<u64>,
    pub authorization: Option<String>,
}

#[derive(Debug, Default)]
struct MockState {
    scenario: Scenario,
    attempts: Mutex<HashMap<String, u32>>,
    in_flight: AtomicUsize,
    peak_in_flight: AtomicUsize,
    total: AtomicUsize,
    log: Mutex<Vec<RequestSummary>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MockStats {
    pub total_requests: usize,
    pub peak_in_flight: usize,
}

/// A running mock server. Dropping it stops the server.
pub struct MockServer {
    addr: SocketAddr,
    state: Arc<MockState>,
    task: Option<tokio::task::JoinHandle<()>>,
}

impl MockServer {
    /// Binds an ephemeral localhost port. Must run inside a tokio runtime.
    pub async fn start(scenario: Scenario) -> std::io::Result<Self> {
        Self::bind("127.0.0.1:0".parse().expect("literal address"), scenario).await
    }

    pub async fn bind(addr: SocketAddr, scenario: Scenario) -> std::io::Result<Self> {
        let state = Arc::new(MockState {
            scenario,
            ..MockState::default()
        });
        let listener = tokio::net::TcpListener::bind(addr).await?;
        let addr = listener.local_addr()?;
        let app = router(state.clone());
        let task = tokio::spawn(async move {
            if let Err(e) = axum::serve(listener, app).await {
                tracing::error!(error = %e, "mock server stopped");
            }
        });
        Ok(Self {
            addr,
            state,
            task: Some(task),
        })
    }

    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    /// API root to use as an endpoint `base_url`.
    pub fn base_url(&self) -> String {
        format!("http://{}/v1", self.addr)
    }

    pub fn stats(&self) -> MockStats {
        stats(&self.state)
    }

    pub fn requests(&self) -> Vec<RequestSummary> {
        self.state.log.lock().expect("log lock").clone()
    }

    /// Serves until the task is aborted or fails.
    pub async fn wait(mut self) {
        if let Some(task) = self.task.take() {
            let _ = task.await;
        }
    }
}

impl Drop for MockServer {
    fn drop(&mut self) {
        if let Some(task) = &self.task {
            task.abort();
        }
    }
}

fn stats(state: &MockState) -> MockStats {
    MockStats {
        total_requests: state.total.load(Ordering::SeqCst),
        peak_in_flight: state.peak_in_flight.load(Ordering::SeqCst),
    }
}

fn router(state: Arc<MockState>) -> Router {
    Router::new()
        .route("/v1/chat/completions", post(completions))
        .route("/stats", get(stats_handler))
        .layer(DefaultBodyLimit::max(512 * 1024 * 1024))
        .with_state(state)
}

async fn stats_handler(State(state): State<Arc<MockState>>) -> Json<MockStats> {
    Json(stats(&state))
}

struct InFlight<'a>(&'a MockState);

impl<'a> InFlight<'a> {
    fn enter(state: &'a MockState) -> Self {
        let now = state.in_flight.fetch_add(1, Ordering::SeqCst) + 1;
        state.peak_in_flight.fetch_max(now, Ordering::SeqCst);
        state.total.fetch_add(1, Ordering::SeqCst);
        InFlight(state)
    }
}

impl Drop for InFlight<'_> {
    fn drop(&mut self) {
        self.0.in_flight.fetch_sub(1, Ordering::SeqCst);
    }
}

fn summarize(headers: &HeaderMap, body: &Value) -> RequestSummary {
    let parts: Vec<&Value> = body["messages"]
        .as_array()
        .into_iter()
        .flatten()
        .filter(|m| m["role"] == "user")
        .filter_map(|m| m["content"].as_array())
        .flatten()
        .collect();
    let header = |name: &str| {
        headers
            .get(name)
            .and_then(|v| v.to_str().ok())
            .map(str::to_string)
    };
    RequestSummary {
        clip_id: header(CLIP_ID_HEADER),
        model: body["model"].as_str().map(str::to_string),
        has_video: parts.iter().any(|p| p["type"] == "video_url"),
        has_audio: parts.iter().any(|p| p["type"] == "audio_url"),
        prompt: parts
            .iter()
            .find(|p| p["type"] == "text")
            .and_then(|p| p["text"].as_str())
            .map(str::to_string),
        temperature: body["temperature"].as_f64(),
        max_tokens: body["max_tokens"].as_u64(),
        authorization: header("authorization"),
    }
}

fn error(status: StatusCode, message: &str) -> (StatusCode, Json<Value>) {
    (status, Json(json!({ "error": { "message": message } })))
}

async fn completions(
    State(state): State<Arc<MockState>>,
    headers: HeaderMap,
    Json(body): Json<Value>,
) -> (StatusCode, Json<Value>) {
    let _guard = InFlight::enter(&state);
    let summary = summarize(&headers, &body);
    state.log.lock().expect("log lock").push(summary.clone());

    if state.scenario.delay_ms > 0 {
        tokio::time::sleep(Duration::from_millis(state.scenario.delay_ms)).await;
    }
    let Some(clip_id) = summary.clip_id else {
        return error(StatusCode::BAD_REQUEST, "missing x-clip-id header");
    };
    if !summary.has_video {
        return error(StatusCode::BAD_REQUEST, "request carries no video part");
    }

    let attempt = {
        let mut attempts = state.attempts.lock().expect("attempts lock");
        let n = attempts.entry(clip_id.clone()).or_insert(0);
        *n += 1;
        *n
    };

    let scenario = &state.scenario;
    let answer = match scenario.responses.get(&clip_id) {
        Some(Scripted::Text(text)) => Some(text.clone()),
        Some(Scripted::Fail { fail, then, status }) => {
            let failing = match fail {
                FailCount::Always(_) => true,
                FailCount::Times(n) => attempt <= *n,
            };
            if failing {
                let code = status
                    .and_then(|s| StatusCode::from_u16(s).ok())
                    .unwrap_or(StatusCode::SERVICE_UNAVAILABLE);
                return error(code, "scripted failure");
            }
            then.clone().or_else(|| scenario.fallback(&clip_id))
        }
        None => scenario.fallback(&clip_id),
    };
    match answer {
        Some(text) => (
            StatusCode::OK,
            Json(json!({
                "id": format!("mock-{attempt}"),
                "object": "chat.completion",
                "model": summary.model,
                "choices": [{
                    "index": 0,
                    "message": { "role": "assistant", "content": text },
                    "finish_reason": "stop",
                }],
            })),
        ),
        None => error(StatusCode::NOT_FOUND, "no scripted response for clip"),
    }
}
