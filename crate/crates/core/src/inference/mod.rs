//! Clip-level inference against chat-completions model endpoints.

mod answer;
mod batch;
mod client;
pub mod mock;

use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use answer::{parse_answer, render_verdict};
pub use batch::{run_batch, FailureRecord, PredictionSet};
pub use client::{predict_clip, Backoff, ChatClient, InferenceOptions, MediaTransport};

#[derive(Debug, Error)]
pub enum InferenceError {
    #[error("transport failure after {attempts} attempt(s): {message}")]
    Transport { attempts: u32, message: String },
    #[error("endpoint answered HTTP {status} after {attempts} attempt(s): {body}")]
    Endpoint {
        status: u16,
        attempts: u32,
        body: String,
    },
    #[error("malformed endpoint response: {0}")]
    Response(String),
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{0}")]
    Config(String),
}

/// A served model reachable over a chat-completions API.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelEndpoint {
    pub model_id: String,
    /// API root, e.g. `http://127.0.0.1:8000/v1`.
    pub base_url: String,
    /// Model name sent in the request body. Defaults to `model_id`.
    #[serde(default)]
    pub served_model: Option<String>,
    /// Environment variable holding a bearer token.
    #[serde(default)]
    pub auth_token_env: Option<String>,
    #[serde(default = "default_timeout_s")]
    pub timeout_s: f64,
    #[serde(default = "default_max_retries")]
    pub max_retries: u32,
}

fn default_timeout_s() -> f64 {
    120.0
}

fn default_max_retries() -> u32 {
    3
}

impl ModelEndpoint {
    pub fn new(model_id: &str, base_url: &str) -> Self {
        Self {
            model_id: model_id.to_string(),
            base_url: base_url.to_string(),
            served_model: None,
            auth_token_env: None,
            timeout_s: default_timeout_s(),
            max_retries: default_max_retries(),
        }
    }

    pub fn served_model(&self) -> &str {
        self.served_model.as_deref().unwrap_or(&self.model_id)
    }

    pub fn completions_url(&self) -> String {
        format!("{}/chat/completions", self.base_url.trim_end_matches('/'))
    }

    pub fn check(&self) -> Result<(), InferenceError> {
        if self.model_id.is_empty() {
            return Err(InferenceError::Config("endpoint model_id is empty".into()));
        }
        if !(self.timeout_s > 0.0 && self.timeout_s.is_finite()) {
            return Err(InferenceError::Config(format!(
                "endpoint {}: timeout_s must be positive",
                self.model_id
            )));
        }
        if !(self.base_url.starts_with("http://") || self.base_url.starts_with("https://")) {
            return Err(InferenceError::Config(format!(
                "endpoint {}: base_url {:?} is not an http(s) URL",
                self.model_id, self.base_url
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Positive,
    Negative,
    Abstain,
}

/// One model's verdict on one clip.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClipPrediction {
    pub clip_id: String,
    pub video_id: String,
    pub model_id: String,
    pub verdict: Verdict,
    pub raw_text: String,
    /// Duration of the request that produced the answer.
    pub latency_ms: u64,
    pub attempts: u32,
}
