use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use ahclip_core::dataset::Strategy;
use ahclip_core::inference::MediaTransport;
use ahclip_core::media::MediaConfig;
use ahclip_core::{AbstainPolicy, Millis, ModelEndpoint, SegmentationPolicy, TiePolicy};
use anyhow::{bail, Context, Result};
use serde::Deserialize;

/// Run configuration read from a TOML file. Every field is optional;
/// subcommand flags take precedence over it.
#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub manifest: Option<PathBuf>,
    pub media_out_dir: Option<PathBuf>,
    pub dataset_out: Option<PathBuf>,
    pub segmentation: PolicyOverrides,
    pub prompt_variant: String,
    pub system_prompt: Option<String>,
    pub strategies: Vec<Strategy>,
    pub endpoints: Vec<ModelEndpoint>,
    pub max_in_flight: usize,
    pub transport: MediaTransport,
    pub tie_policy: TiePolicy,
    pub abstain_policy: AbstainPolicy,
    pub seed: u64,
    pub media: MediaConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            manifest: None,
            media_out_dir: None,
            dataset_out: None,
            segmentation: PolicyOverrides::default(),
            prompt_variant: "v1".into(),
            system_prompt: None,
            strategies: vec![Strategy::Lora, Strategy::Full],
            endpoints: Vec::new(),
            max_in_flight: 4,
            transport: MediaTransport::Inline,
            tie_policy: TiePolicy::Positive,
            abstain_policy: AbstainPolicy::Negative,
            seed: 0,
            media: MediaConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, Deserialize, clap::Args)]
#[serde(default, deny_unknown_fields)]
pub struct PolicyOverrides {
    /// Maximum clip length in seconds.
    #[arg(long = "clip-len")]
    pub clip_len_s: Option<f64>,
    /// Shortest trailing remainder kept, in seconds.
    #[arg(long = "min-tail")]
    pub min_tail_s: Option<f64>,
    #[arg(long)]
    pub rescue_empty: Option<bool>,
    /// Split negative training videos into clips (otherwise one clip each).
    #[arg(long)]
    pub split_negatives: Option<bool>,
}

impl PolicyOverrides {
    pub fn or(self, fallback: PolicyOverrides) -> PolicyOverrides {
        PolicyOverrides {
            clip_len_s: self.clip_len_s.or(fallback.clip_len_s),
            min_tail_s: self.min_tail_s.or(fallback.min_tail_s),
            rescue_empty: self.rescue_empty.or(fallback.rescue_empty),
            split_negatives: self.split_negatives.or(fallback.split_negatives),
        }
    }

    pub fn apply(self, mut base: SegmentationPolicy) -> Result<SegmentationPolicy> {
        if let Some(s) = self.clip_len_s {
            base.clip_len = Millis::from_secs(s).context("clip length")?;
        }
        if let Some(s) = self.min_tail_s {
            base.min_tail = Millis::from_secs(s).context("minimum tail")?;
        }
        if let Some(b) = self.rescue_empty {
            base.rescue_empty = b;
        }
        if let Some(b) = self.split_negatives {
            base.split_negatives = b;
        }
        base.check()?;
        Ok(base)
    }
}

impl RunConfig {
    /// Loads `path`, resolving relative paths against its directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        let mut cfg: RunConfig =
            toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))?;
        let base = path.parent().unwrap_or(Path::new("."));
        for p in [&mut cfg.manifest, &mut cfg.media_out_dir, &mut cfg.dataset_out]
            .into_iter()
            .flatten()
        {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        cfg.check()?;
        Ok(cfg)
    }

    pub fn load_or_default(path: Option<&Path>) -> Result<Self> {
        match path {
            Some(p) => Self::load(p),
            None => Ok(Self::default()),
        }
    }

    pub fn check(&self) -> Result<()> {
        let paths: Vec<&PathBuf> = [&self.manifest, &self.media_out_dir, &self.dataset_out]
            .into_iter()
            .flatten()
            .collect();
        let unique: BTreeSet<&PathBuf> = paths.iter().copied().collect();
        if unique.len() != paths.len() {
            bail!("manifest, media_out_dir and dataset_out must be distinct paths");
        }
        if self.max_in_flight == 0 {
            bail!("max_in_flight must be at least 1");
        }
        let ids: BTreeSet<&str> = self.endpoints.iter().map(|e| e.model_id.as_str()).collect();
        if ids.len() != self.endpoints.len() {
            bail!("endpoint model ids must be unique");
        }
        Ok(())
    }

    pub fn manifest(&self, flag: Option<PathBuf>) -> Result<PathBuf> {
        flag.or_else(|| self.manifest.clone())
            .context("no manifest given (use --manifest or set `manifest` in the config)")
    }

    pub fn media_out_dir(&self, flag: Option<PathBuf>) -> Result<PathBuf> {
        flag.or_else(|| self.media_out_dir.clone())
            .context("no output directory given (use --out-dir or set `media_out_dir`)")
    }

    /// Endpoints from `--endpoint id=url` flags, else from the config.
    pub fn endpoints(&self, flags: &[String]) -> Result<Vec<ModelEndpoint>> {
        let endpoints = if flags.is_empty() {
            self.endpoints.clone()
        } else {
            flags
                .iter()
                .map(|f| {
                    let (id, url) = f
                        .split_once('=')
                        .with_context(|| format!("endpoint {f:?} is not of the form id=url"))?;
                    Ok(ModelEndpoint::new(id, url))
                })
                .collect::<Result<Vec<_>>>()?
        };
        if endpoints.is_empty() {
            bail!("no endpoints configured (use --endpoint id=url or [[endpoints]])");
        }
        Ok(endpoints)
    }
}
