use std::path::Path;
use std::time::{Duration, Instant};

use base64::Engine as _;
use rand::Rng;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::{answer::parse_answer, ClipPrediction, InferenceError, ModelEndpoint};
use crate::dataset::PromptVariant;
use crate::segmenter::ClipRecord;

/// Header carrying the clip id, for request tracing and mock scripting.
pub const CLIP_ID_HEADER: &str = "x-clip-id";

/// How clip media reaches the endpoint.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MediaTransport {
    /// Base64 data URLs embedded in the request.
    #[default]
    Inline,
    /// `file://` URLs; the server must share the filesystem.
    FileUrl,
}

/// Exponential backoff with full jitter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Backoff {
    pub base_s: f64,
    pub factor: f64,
    pub max_s: f64,
}

impl Default for Backoff {
    fn default() -> Self {
        Self {
            base_s: 0.5,
            factor: 2.0,
            max_s: 30.0,
        }
    }
}

impl Backoff {
    /// Upper bound of the sleep before retry number `retry` (0-based).
    pub fn ceiling(&self, retry: u32) -> Duration {
        let secs = (self.base_s * self.factor.powi(retry as i32)).min(self.max_s);
        Duration::from_secs_f64(secs.max(0.0))
    }

    pub fn delay(&self, retry: u32) -> Duration {
        let ceiling = self.ceiling(retry);
        if ceiling.is_zero() {
            return ceiling;
        }
        ceiling.mul_f64(rand::rng().random::<f64>())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct InferenceOptions {
    pub transport: MediaTransport,
    pub backoff: Backoff,
    pub max_tokens: u32,
    pub temperature: f64,
    pub system: Option<String>,
}

impl Default for InferenceOptions {
    fn default() -> Self {
        Self {
            transport: MediaTransport::Inline,
            backoff: Backoff::default(),
            max_tokens: 16,
            temperature: 0.0,
            system: None,
        }
    }
}

/// Shared HTTP connection pool plus request options.
#[derive(Debug, Clone)]
pub struct ChatClient {
    http: reqwest::Client,
    options: InferenceOptions,
}

impl ChatClient {
    pub fn new(options: InferenceOptions) -> Result<Self, InferenceError> {
        let http = reqwest::Client::builder()
            .build()
            .map_err(|e| InferenceError::Config(e.to_string()))?;
        Ok(Self { http, options })
    }

    pub fn options(&self) -> &InferenceOptions {
        &self.options
    }

    /// Chat-completions body for one clip.
    pub fn request_body(
        &self,
        endpoint: &ModelEndpoint,
        clip: &ClipRecord,
        prompt: &PromptVariant,
    ) -> Result<Value, InferenceError> {
        let mut parts = vec![json!({
            "type": "video_url",
            "video_url": { "url": self.media_url(&clip.video_path)? },
        })];
        if let Some(audio) = &clip.audio_path {
            parts.push(json!({
                "type": "audio_url",
                "audio_url": { "url": self.media_url(audio)? },
            }));
        }
        parts.push(json!({ "type": "text", "text": prompt.text }));

        let mut messages = Vec::new();
        if let Some(system) = &self.options.system {
            messages.push(json!({ "role": "system", "content": system }));
        }
        messages.push(json!({ "role": "user", "content": parts }));

        Ok(json!({
            "model": endpoint.served_model(),
            "messages": messages,
            "temperature": self.options.temperature,
            "max_tokens": self.options.max_tokens,
        }))
    }

    fn media_url(&self, path: &Path) -> Result<String, InferenceError> {
        let io_err = |source| InferenceError::Io {
            path: path.to_path_buf(),
            source,
        };
        match self.options.transport {
            MediaTransport::Inline => {
                let bytes = std::fs::read(path).map_err(io_err)?;
                let b64 = base64::engine::general_purpose::STANDARD.encode(bytes);
                Ok(format!("data:{};base64,{b64}", mime_for(path)))
            }
            MediaTransport::FileUrl => {
                let abs = std::fs::canonicalize(path).map_err(io_err)?;
                Ok(format!("file://{}", abs.display()))
            }
        }
    }

    async fn send_once(
        &self,
        endpoint: &ModelEndpoint,
        clip_id: &str,
        body: &Value,
        token: Option<&str>,
    ) -> Result<String, AttemptError> {
        let mut req = self
            .http
            .post(endpoint.completions_url())
            .timeout(Duration::from_secs_f64(endpoint.timeout_s))
            .header(CLIP_ID_HEADER, clip_id)
            .json(body);
        if let Some(token) = token {
            req = req.bearer_auth(token);
        }
        let resp = req
            .send()
            .await
            .map_err(|e| AttemptError::Transport(e.to_string()))?;
        let status = resp.status();
        let text = resp
            .text()
            .await
            .map_err(|e| AttemptError::Transport(e.to_string()))?;
        if !status.is_success() {
            return Err(AttemptError::Status {
                status: status.as_u16(),
                body: truncate(&text, 500),
            });
        }
        extract_content(&text).map_err(AttemptError::Malformed)
    }
}

enum AttemptError {
    Transport(String),
    Status { status: u16, body: String },
    Malformed(String),
}

impl AttemptError {
    fn retryable(&self) -> bool {
        match self {
            AttemptError::Transport(_) => true,
            AttemptError::Status { status, .. } => *status == 429 || *status >= 500,
            AttemptError::Malformed(_) => false,
        }
    }

    fn into_error(self, attempts: u32) -> InferenceError {
        match self {
            AttemptError::Transport(message) => InferenceError::Transport { attempts, message },
            AttemptError::Status { status, body } => InferenceError::Endpoint {
                status,
                attempts,
                body,
            },
            AttemptError::Malformed(m) => InferenceError::Response(m),
        }
    }
}

/// Queries one endpoint about one clip. Transport failures and 429/5xx
/// responses are retried up to `endpoint.max_retries` times.
pub async fn predict_clip(
    client: &ChatClient,
    endpoint: &ModelEndpoint,
    clip: &ClipRecord,
    prompt: &PromptVariant,
) -> Result<ClipPrediction, InferenceError> {
    let body = client.request_body(endpoint, clip, prompt)?;
    let token = match &endpoint.auth_token_env {
        Some(var) => Some(std::env::var(var).map_err(|_| {
            InferenceError::Config(format!(
                "endpoint {}: environment variable {var} is not set",
                endpoint.model_id
            ))
        })?),
        None => None,
    };

    let mut attempts = 0;
    loop {
        attempts += 1;
        let started = Instant::now();
        match client
            .send_once(endpoint, clip.clip_id(), &body, token.as_deref())
            .await
        {
            Ok(raw_text) => {
                return Ok(ClipPrediction {
                    clip_id: clip.clip_id().to_string(),
                    video_id: clip.video_id().to_string(),
                    model_id: endpoint.model_id.clone(),
                    verdict: parse_answer(&raw_text),
                    raw_text,
                    latency_ms: started.elapsed().as_millis() as u64,
                    attempts,
                });
            }
            Err(e) if e.retryable() && attempts <= endpoint.max_retries => {
                let delay = client.options.backoff.delay(attempts - 1);
                tracing::debug!(
                    clip = clip.clip_id(),
                    model = %endpoint.model_id,
                    attempts,
                    delay_ms = delay.as_millis() as u64,
                    "retrying"
                );
                tokio::time::sleep(delay).await;
            }
            Err(e) => return Err(e.into_error(attempts)),
        }
    }
}

#[derive(Deserialize)]
struct Completion {
    choices: Vec<Choice>,
}

#[derive(Deserialize)]
struct Choice {
    message: ChoiceMessage,
}

#[derive(Deserialize)]
struct ChoiceMessage {
    #[serde(default)]
    content: Value,
}

fn extract_content(text: &str) -> Result<String, String> {
    let completion: Completion = serde_json::from_str(text).map_err(|e| e.to_string())?;
    let choice = completion
        .choices
        .into_iter()
        .next()
        .ok_or_else(|| "response has no choices".to_string())?;
    match choice.message.content {
        Value::String(s) => Ok(s),
        Value::Null => Ok(String::new()),
        // content-part arrays: concatenate the text parts
        Value::Array(parts) => Ok(parts
            .iter()
            .filter_map(|p| p.get("text").and_then(Value::as_str))
            .collect()),
        other => Err(format!("unexpected message content {other}")),
    }
}

fn mime_for(path: &Path) -> &'static str {
    match path
        .extension()
        .and_then(|e| e.to_str())
        .map(|e| e.to_ascii_lowercase())
        .as_deref()
    {
        Some("mp4") | Some("m4v") => "video/mp4",
        Some("mov") => "video/quicktime",
        Some("webm") => "video/webm",
        Some("mkv") => "video/x-matroska",
        Some("wav") => "audio/wav",
        Some("mp3") => "audio/mpeg",
        Some("flac") => "audio/flac",
        _ => "application/octet-stream",
    }
}

fn truncate(s: &str, max: usize) -> String {
    match s.char_indices().nth(max) {
        Some((idx, _)) => format!("{}…", &s[..idx]),
        None => s.to_string(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn backoff_ceiling_grows_geometrically() {
        let b = Backoff::default();
        assert_eq!(b.ceiling(0), Duration::from_millis(500));
        assert_eq!(b.ceiling(1), Duration::from_secs(1));
        assert_eq!(b.ceiling(3), Duration::from_secs(4));
        assert_eq!(b.ceiling(20), Duration::from_secs(30));
        for retry in 0..5 {
            assert!(b.delay(retry) <= b.ceiling(retry));
        }
        let none = Backoff {
            base_s: 0.0,
            ..b
        };
        assert!(none.delay(3).is_zero());
    }

    #[test]
    fn content_extraction() {
        let ok = r#"{"choices":[{"message":{"role":"assistant","content":"<answer>Yes</answer>"}}]}"#;
        assert_eq!(extract_content(ok).unwrap(), "<answer>Yes</answer>");
        let parts = r#"{"choices":[{"message":{"content":[{"type":"text","text":"<answer>"},{"type":"text","text":"No</answer>"}]}}]}"#;
        assert_eq!(extract_content(parts).unwrap(), "<answer>No</answer>");
        assert!(extract_content(r#"{"choices":[]}"#).is_err());
        assert!(extract_content("not json").is_err());
    }

    #[test]
    fn mime_types() {
        assert_eq!(mime_for(Path::new("a/b.MP4")), "video/mp4");
        assert_eq!(mime_for(Path::new("a.wav")), "audio/wav");
        assert_eq!(mime_for(Path::new("a")), "application/octet-stream");
    }

    #[test]
    fn request_body_shape() {
        let dir = tempfile::tempdir().unwrap();
        let video = dir.path().join("c.mp4");
        let audio = dir.path().join("c.wav");
        std::fs::write(&video, b"vid").unwrap();
        std::fs::write(&audio, b"aud").unwrap();
        let clip = ClipRecord {
            spec: crate::ClipSpec::new(
                "v",
                crate::TimeInterval::from_secs(0.0, 5.0).unwrap(),
                None,
            ),
            video_path: video,
            audio_path: Some(audio),
        };
        let prompt = PromptVariant {
            variant_id: "p".into(),
            text: "Is there A/H?".into(),
        };
        let client = ChatClient::new(InferenceOptions::default()).unwrap();
        let ep = ModelEndpoint::new("m1", "http://localhost:1/v1/");
        assert_eq!(ep.completions_url(), "http://localhost:1/v1/chat/completions");
        let body = client.request_body(&ep, &clip, &prompt).unwrap();
        assert_eq!(body["model"], "m1");
        assert_eq!(body["temperature"], 0.0);
        assert_eq!(body["max_tokens"], 16);
        let parts = body["messages"][0]["content"].as_array().unwrap();
        assert_eq!(parts.len(), 3);
        assert_eq!(parts[0]["video_url"]["url"], "data:video/mp4;base64,dmlk");
        assert_eq!(parts[1]["audio_url"]["url"], "data:audio/wav;base64,YXVk");
        assert_eq!(parts[2]["text"], "Is there A/H?");

        let file_client = ChatClient::new(InferenceOptions {
            transport: MediaTransport::FileUrl,
            system: Some("be brief".into()),
            ..InferenceOptions::default()
        })
        .unwrap();
        let body = file_client.request_body(&ep, &clip, &prompt).unwrap();
        assert_eq!(body["messages"][0]["role"], "system");
        let url = body["messages"][1]["content"][0]["video_url"]["url"]
            .as_str()
            .unwrap();
        assert!(url.starts_with("file:///") && url.ends_with("c.mp4"));
    }

    #[test]
    fn endpoint_checks() {
        assert!(ModelEndpoint::new("m", "http://x").check().is_ok());
        assert!(ModelEndpoint::new("", "http://x").check().is_err());
        assert!(ModelEndpoint::new("m", "ftp://x").check().is_err());
        let mut ep = ModelEndpoint::new("m", "http://x");
        ep.timeout_s = 0.0;
        assert!(ep.check().is_err());
    }
}
