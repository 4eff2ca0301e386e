//! TOML configuration for the service and for judge settings.
//!
//! ```toml
//! model = "model.npti"
//! maps_dir = "maps"
//! addr = "127.0.0.1:8080"
//! max_in_flight = 8
//!
//! [generation]
//! max_tokens = 64
//! repetition_penalty = 1.1
//!
//! [judge]
//! mode = "mock"
//! ```
//!
//! Relative paths are resolved against the config file's directory.

use std::path::{Path, PathBuf};
use std::time::Duration;

use anyhow::{Context, Result};
use npti_eval::{JudgeConfig, JudgeMode};
use serde::Deserialize;

#[derive(Debug, Clone, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct AppConfig {
    pub model: Option<PathBuf>,
    #[serde(default)]
    pub maps: Vec<PathBuf>,
    pub maps_dir: Option<PathBuf>,
    #[serde(default = "default_addr")]
    pub addr: String,
    #[serde(default = "default_in_flight")]
    pub max_in_flight: usize,
    #[serde(default)]
    pub force: bool,
    /// Prompt template used by `profile` and `eval` when none is given.
    pub template: Option<String>,
    #[serde(default)]
    pub generation: GenerationSection,
    pub judge: Option<JudgeSection>,
}

fn default_addr() -> String {
    "127.0.0.1:8080".into()
}

fn default_in_flight() -> usize {
    8
}

#[derive(Debug, Clone, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct GenerationSection {
    #[serde(default = "default_max_tokens")]
    pub max_tokens: usize,
    #[serde(default = "default_penalty")]
    pub repetition_penalty: f32,
}

fn default_max_tokens() -> usize {
    64
}

fn default_penalty() -> f32 {
    npti::decoding::DEFAULT_REPETITION_PENALTY
}

impl Default for GenerationSection {
    fn default() -> Self {
        Self {
            max_tokens: default_max_tokens(),
            repetition_penalty: default_penalty(),
        }
    }
}

/// Judge settings. The API key is never read from the file, only from
/// `JUDGE_API_KEY`.
#[derive(Debug, Clone, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct JudgeSection {
    pub mode: JudgeMode,
    pub base_url: Option<String>,
    pub model: Option<String>,
    pub timeout_secs: Option<u64>,
    pub max_retries: Option<u32>,
    pub max_in_flight: Option<usize>,
}

impl JudgeSection {
    /// File values override the environment, except for the key.
    pub fn to_judge_config(&self, env: impl Fn(&str) -> Option<String>) -> Result<JudgeConfig> {
        let mut cfg = match self.mode {
            JudgeMode::Mock => JudgeConfig::mock(),
            JudgeMode::Remote => {
                let base = self
                    .base_url
                    .clone()
                    .or_else(|| env(npti_eval::judge::ENV_BASE_URL))
                    .unwrap_or_default();
                let model = self.model.clone().or_else(|| env(npti_eval::judge::ENV_MODEL)).unwrap_or_default();
                let key = env(npti_eval::judge::ENV_API_KEY).unwrap_or_default();
                JudgeConfig::remote(base, key, model)
            }
        };
        if let Some(t) = self.timeout_secs {
            cfg.timeout = Duration::from_secs(t);
        }
        if let Some(r) = self.max_retries {
            cfg.max_retries = r;
        }
        if let Some(n) = self.max_in_flight {
            cfg.max_in_flight = n;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

impl AppConfig {
    pub fn parse(text: &str, base: &Path) -> Result<Self> {
        let mut cfg: AppConfig = toml::from_str(text).context("parsing config")?;
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        if let Some(m) = cfg.model.as_mut() {
            fix(m);
        }
        if let Some(d) = cfg.maps_dir.as_mut() {
            fix(d);
        }
        cfg.maps.iter_mut().for_each(fix);
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::parse(&text, base).with_context(|| format!("in {}", path.display()))
    }
}
