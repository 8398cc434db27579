use std::path::{Path, PathBuf};
use std::time::Instant;

use ahclip_core::dataset::write_lines_atomic;
use ahclip_core::{parse_manifest, VideoAnnotation};
use anyhow::{Context, Result};
use serde::de::DeserializeOwned;
use serde::Serialize;
use tracing::info;

pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let text =
        std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l)
                .with_context(|| format!("{}:{}: malformed record", path.display(), i + 1))
        })
        .collect()
}

/// Like [`read_jsonl`], but a missing file reads as empty.
pub fn read_jsonl_opt<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    if path.exists() {
        read_jsonl(path)
    } else {
        Ok(Vec::new())
    }
}

pub fn write_jsonl<T: Serialize>(items: &[T], path: &Path) -> Result<()> {
    let lines = items
        .iter()
        .map(serde_json::to_string)
        .collect::<Result<Vec<_>, _>>()?;
    write_lines_atomic(lines, path).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

pub fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    write_lines_atomic([text], path).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

pub struct Manifest {
    pub annotations: Vec<VideoAnnotation>,
    pub dir: PathBuf,
}

impl Manifest {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading manifest {}", path.display()))?;
        let annotations =
            parse_manifest(&text).with_context(|| format!("in manifest {}", path.display()))?;
        let dir = path
            .parent()
            .filter(|p| !p.as_os_str().is_empty())
            .unwrap_or(Path::new("."))
            .to_path_buf();
        Ok(Self { annotations, dir })
    }

    /// Media paths in the manifest are relative to the manifest itself.
    pub fn media_path(&self, ann: &VideoAnnotation) -> PathBuf {
        let p = Path::new(&ann.media_path);
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.dir.join(p)
        }
    }
}

/// Runs `f` and logs how long the stage took.
pub fn timed<T>(stage: &str, f: impl FnOnce() -> Result<T>) -> Result<T> {
    let start = Instant::now();
    let out = f();
    info!(
        stage,
        elapsed_ms = start.elapsed().as_millis() as u64,
        ok = out.is_ok(),
        "stage finished"
    );
    out
}

/// Creates `dir` and returns its absolute form.
pub fn prepare_dir(dir: &Path) -> Result<PathBuf> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    dir.canonicalize()
        .with_context(|| format!("resolving {}", dir.display()))
}

/// Writes `text` to stdout, reporting a closed pipe as an error.
pub fn emit_stdout(text: &str) -> Result<()> {
    use std::io::Write;
    let mut out = std::io::stdout().lock();
    out.write_all(text.as_bytes())
        .and_then(|()| out.flush())
        .context("writing to stdout")
}
