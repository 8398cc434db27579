//! Instruction-tuning samples and fine-tuning configurations.
//!
//! Each labeled clip becomes one conversation line:
//!
//! ```text
//! {"messages":[{"role":"user","content":"<video><audio>PROMPT"},{"role":"assistant","content":"<answer>Yes</answer>"}],"videos":["clip.mp4"],"audios":["clip.wav"]}
//! ```
//!
//! The `<audio>` placeholder and `audios` key are present only when the
//! clip has a separate audio track. An optional system message is emitted
//! first when configured.

use std::fmt;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::label::Label;
use crate::segmenter::ClipRecord;

pub const ANSWER_YES: &str = "<answer>Yes</answer>";
pub const ANSWER_NO: &str = "<answer>No</answer>";

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("clip {clip_id:?} has no label")]
    Unlabeled { clip_id: String },
    #[error("{}: {source}", path.display())]
    Io {
        path: std::path::PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("unknown prompt variant {0:?}")]
    UnknownPrompt(String),
    #[error("{0}")]
    Domain(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptVariant {
    pub variant_id: String,
    pub text: String,
}

const V1_TEXT: &str = "Does the person in this video clip show ambivalence or hesitancy? \
Answer with <answer>Yes</answer> or <answer>No</answer>.";

const V2_TEXT: &str = "You are analyzing a short video clip of a person answering a question \
about changing a behavior. Ambivalence or hesitancy (A/H) is a conflicted state in which the \
person holds positive and negative attitudes at once. It often shows as a mismatch between \
facial expression, tone of voice and the words spoken, or as pauses, hedging and fluctuating \
expressions. Watch the video and listen to the audio, then decide whether the clip contains \
A/H. Reply only with <answer>Yes</answer> or <answer>No</answer>.";

/// The shipped prompt formulations, keyed by variant id.
#[derive(Debug, Clone)]
pub struct PromptRegistry {
    variants: Vec<PromptVariant>,
}

impl PromptRegistry {
    pub fn builtin() -> Self {
        Self {
            variants: vec![
                PromptVariant {
                    variant_id: "v1".into(),
                    text: V1_TEXT.into(),
                },
                PromptVariant {
                    variant_id: "v2".into(),
                    text: V2_TEXT.into(),
                },
            ],
        }
    }

    /// Adds or replaces a variant.
    pub fn insert(&mut self, variant: PromptVariant) -> Result<(), DatasetError> {
        if variant.variant_id.is_empty() || variant.text.trim().is_empty() {
            return Err(DatasetError::Domain(
                "prompt variants need a nonempty id and text".into(),
            ));
        }
        self.variants.retain(|v| v.variant_id != variant.variant_id);
        self.variants.push(variant);
        Ok(())
    }

    pub fn get(&self, variant_id: &str) -> Result<&PromptVariant, DatasetError> {
        self.variants
            .iter()
            .find(|v| v.variant_id == variant_id)
            .ok_or_else(|| DatasetError::UnknownPrompt(variant_id.to_string()))
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.variants.iter().map(|v| v.variant_id.as_str())
    }
}

pub fn answer_for(label: Label) -> &'static str {
    match label {
        Label::Positive => ANSWER_YES,
        Label::Negative => ANSWER_NO,
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InstructionSample {
    pub clip_id: String,
    pub video_ref: String,
    pub audio_ref: Option<String>,
    pub prompt: PromptVariant,
    pub target: &'static str,
}

impl InstructionSample {
    /// Renders the conversation as one JSON line (no trailing newline).
    pub fn to_json_line(&self, system: Option<&str>) -> String {
        #[derive(Serialize)]
        struct Message<'a> {
            role: &'a str,
            content: &'a str,
        }
        #[derive(Serialize)]
        struct Line<'a> {
            messages: Vec<Message<'a>>,
            videos: [&'a str; 1],
            #[serde(skip_serializing_if = "Option::is_none")]
            audios: Option<[&'a str; 1]>,
        }

        let placeholder = if self.audio_ref.is_some() {
            "<video><audio>"
        } else {
            "<video>"
        };
        let user = format!("{placeholder}{}", self.prompt.text);
        let mut messages = Vec::with_capacity(3);
        if let Some(system) = system {
            messages.push(Message {
                role: "system",
                content: system,
            });
        }
        messages.push(Message {
            role: "user",
            content: &user,
        });
        messages.push(Message {
            role: "assistant",
            content: self.target,
        });
        serde_json::to_string(&Line {
            messages,
            videos: [&self.video_ref],
            audios: self.audio_ref.as_deref().map(|a| [a]),
        })
        .expect("sample serializes")
    }
}

pub fn build_sample(
    clip: &ClipRecord,
    prompt: &PromptVariant,
) -> Result<InstructionSample, DatasetError> {
    let label = clip.label().ok_or_else(|| DatasetError::Unlabeled {
        clip_id: clip.clip_id().to_string(),
    })?;
    std::fs::metadata(&clip.video_path).map_err(|source| DatasetError::Io {
        path: clip.video_path.clone(),
        source,
    })?;
    Ok(InstructionSample {
        clip_id: clip.clip_id().to_string(),
        video_ref: clip.video_path.to_string_lossy().into_owned(),
        audio_ref: clip
            .audio_path
            .as_ref()
            .map(|p| p.to_string_lossy().into_owned()),
        prompt: prompt.clone(),
        target: answer_for(label),
    })
}

/// Writes `lines` atomically: the target either keeps its old contents or
/// receives every line, never a truncated tail.
pub fn write_lines_atomic<I, S>(lines: I, path: &Path) -> Result<usize, DatasetError>
where
    I: IntoIterator<Item = S>,
    S: AsRef<str>,
{
    let io_err = |source| DatasetError::Io {
        path: path.to_path_buf(),
        source,
    };
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    std::fs::create_dir_all(dir).map_err(io_err)?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(io_err)?;
    let mut count = 0;
    {
        let mut w = std::io::BufWriter::new(tmp.as_file_mut());
        for line in lines {
            w.write_all(line.as_ref().as_bytes()).map_err(io_err)?;
            w.write_all(b"\n").map_err(io_err)?;
            count += 1;
        }
        w.flush().map_err(io_err)?;
    }
    tmp.persist(path).map_err(|e| io_err(e.error))?;
    Ok(count)
}

pub fn write_jsonl(
    samples: &[InstructionSample],
    system: Option<&str>,
    path: &Path,
) -> Result<usize, DatasetError> {
    write_lines_atomic(samples.iter().map(|s| s.to_json_line(system)), path)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Strategy {
    Lora,
    Full,
}

impl FromStr for Strategy {
    type Err = DatasetError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "lora" => Ok(Strategy::Lora),
            "full" => Ok(Strategy::Full),
            other => Err(DatasetError::Domain(format!(
                "unknown fine-tuning strategy {other:?} (expected lora or full)"
            ))),
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Strategy::Lora => "lora",
            Strategy::Full => "full",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub strategy: Strategy,
    pub learning_rate: f64,
    pub epochs: u32,
    pub per_device_batch: u32,
    pub grad_accum: u32,
    pub lora_rank: Option<u32>,
    pub lora_alpha: Option<u32>,
    pub precision_tag: String,
    pub flash_attention: bool,
    pub max_length: u32,
}

/// Hyperparameters for a fine-tuning run. Full fine-tuning defaults to two
/// epochs and accepts an override of two or three.
pub fn emit_train_config(
    strategy: Strategy,
    epochs_override: Option<u32>,
) -> Result<TrainConfig, DatasetError> {
    let (learning_rate, epochs, lora_rank, lora_alpha) = match strategy {
        Strategy::Lora => {
            if let Some(e) = epochs_override.filter(|&e| e != 1) {
                return Err(DatasetError::Domain(format!(
                    "lora runs one epoch, got override {e}"
                )));
            }
            (1e-5, 1, Some(8), Some(32))
        }
        Strategy::Full => {
            let epochs = epochs_override.unwrap_or(2);
            if !(2..=3).contains(&epochs) {
                return Err(DatasetError::Domain(format!(
                    "full fine-tuning runs 2 or 3 epochs, got {epochs}"
                )));
            }
            (1e-6, epochs, None, None)
        }
    };
    Ok(TrainConfig {
        strategy,
        learning_rate,
        epochs,
        per_device_batch: 2,
        grad_accum: 32,
        lora_rank,
        lora_alpha,
        precision_tag: "bfloat16".into(),
        flash_attention: true,
        max_length: 32768,
    })
}

impl TrainConfig {
    /// `key=value` lines named after the training launcher's arguments.
    pub fn to_kv(&self) -> String {
        let mut out = String::new();
        let mut put = |k: &str, v: String| {
            out.push_str(k);
            out.push('=');
            out.push_str(&v);
            out.push('\n');
        };
        put("train_type", self.strategy.to_string());
        put("learning_rate", format!("{:e}", self.learning_rate));
        put("num_train_epochs", self.epochs.to_string());
        put("per_device_train_batch_size", self.per_device_batch.to_string());
        put("gradient_accumulation_steps", self.grad_accum.to_string());
        if let Some(rank) = self.lora_rank {
            put("lora_rank", rank.to_string());
        }
        if let Some(alpha) = self.lora_alpha {
            put("lora_alpha", alpha.to_string());
        }
        put("torch_dtype", self.precision_tag.clone());
        put(
            "attn_impl",
            if self.flash_attention { "flash_attn" } else { "sdpa" }.to_string(),
        );
        put("max_length", self.max_length.to_string());
        out
    }

    pub fn from_kv(text: &str) -> Result<Self, DatasetError> {
        let mut map = std::collections::HashMap::new();
        for line in text.lines().map(str::trim).filter(|l| !l.is_empty() && !l.starts_with('#')) {
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| DatasetError::Domain(format!("not a key=value line: {line:?}")))?;
            map.insert(k.trim(), v.trim());
        }
        fn get<'a>(
            map: &std::collections::HashMap<&str, &'a str>,
            key: &str,
        ) -> Result<&'a str, DatasetError> {
            map.get(key)
                .copied()
                .ok_or_else(|| DatasetError::Domain(format!("missing key {key}")))
        }
        fn num<T: FromStr>(raw: &str, key: &str) -> Result<T, DatasetError> {
            raw.parse()
                .map_err(|_| DatasetError::Domain(format!("bad value for {key}: {raw:?}")))
        }
        let opt = |key: &str| -> Result<Option<u32>, DatasetError> {
            map.get(key).map(|v| num(v, key)).transpose()
        };
        Ok(TrainConfig {
            strategy: get(&map, "train_type")?.parse()?,
            learning_rate: num(get(&map, "learning_rate")?, "learning_rate")?,
            epochs: num(get(&map, "num_train_epochs")?, "num_train_epochs")?,
            per_device_batch: num(
                get(&map, "per_device_train_batch_size")?,
                "per_device_train_batch_size",
            )?,
            grad_accum: num(
                get(&map, "gradient_accumulation_steps")?,
                "gradient_accumulation_steps",
            )?,
            lora_rank: opt("lora_rank")?,
            lora_alpha: opt("lora_alpha")?,
            precision_tag: get(&map, "torch_dtype")?.to_string(),
            flash_attention: get(&map, "attn_impl")? == "flash_attn",
            max_length: num(get(&map, "max_length")?, "max_length")?,
        })
    }
}
