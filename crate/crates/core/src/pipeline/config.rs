//! Pipeline configuration.
//!
//! The config file is flat `key = value` text; `#` starts a comment. Values
//! from `BUGPORT_*` environment variables override the file, and explicit
//! command-line flags override both. Path values in the file are relative
//! to the file's directory.

use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::analyzer::SimilarityThresholds;
use crate::runner::DEFAULT_TIMEOUT_S;
use crate::sampler::SamplerPolicy;

#[derive(Debug, Error, PartialEq)]
#[error("{0}")]
pub struct ConfigError(pub String);

pub const DEFAULT_NOISE_PATTERNS: &[&str] = &[
    "*malloc*",
    "*Allocator*",
    "*logging*",
    "_PyEval_*",
    "_PyObject_*",
    "PyObject_*",
    "__libc_*",
    "pybind11::*",
];

/// Keys that may also be set through `BUGPORT_<KEY>` (upper-cased).
pub const ENV_KEYS: &[&str] = &[
    "alpha_io",
    "alpha_call",
    "beta",
    "beta_fallback",
    "noise",
    "runner_cmd",
    "mock_script",
    "timeout_s",
    "margin",
    "jobs",
    "out",
    "corpus",
    "suppress_list",
    "templates",
    "beta_grid",
    "sampler_labels",
    "sampler_hardware_exclusions",
    "sampler_min_comments",
];

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub thresholds: SimilarityThresholds,
    pub sampler: SamplerPolicy,
    pub noise_patterns: Vec<String>,
    /// External runner command; the in-process mock is used when unset.
    pub runner_cmd: Option<String>,
    /// Script for the in-process mock.
    pub mock_script: Option<PathBuf>,
    pub timeout_s: f64,
    /// Overrides every performance oracle's margin when set.
    pub margin: Option<f64>,
    pub jobs: usize,
    pub out_dir: PathBuf,
    pub corpus: Vec<PathBuf>,
    pub suppress_list: Option<PathBuf>,
    pub template_dir: Option<PathBuf>,
    pub beta_grid: Vec<f64>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            thresholds: SimilarityThresholds::default(),
            sampler: SamplerPolicy::default(),
            noise_patterns: DEFAULT_NOISE_PATTERNS.iter().map(|s| s.to_string()).collect(),
            runner_cmd: None,
            mock_script: None,
            timeout_s: DEFAULT_TIMEOUT_S,
            margin: None,
            jobs: 1,
            out_dir: PathBuf::from("out"),
            corpus: Vec::new(),
            suppress_list: None,
            template_dir: None,
            beta_grid: (1..=9).map(|i| i as f64 / 10.0).collect(),
        }
    }
}

fn list(value: &str) -> impl Iterator<Item = String> + '_ {
    value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(str::to_string)
}

fn number<T: std::str::FromStr>(key: &str, value: &str) -> Result<T, ConfigError> {
    value
        .trim()
        .parse()
        .map_err(|_| ConfigError(format!("{key}: cannot parse {value:?}")))
}

fn resolve(base: Option<&Path>, value: &str) -> PathBuf {
    let p = PathBuf::from(value.trim());
    match base {
        Some(base) if p.is_relative() => base.join(p),
        _ => p,
    }
}

impl PipelineConfig {
    /// Sets one key. `base` anchors relative paths.
    pub fn set(&mut self, key: &str, value: &str, base: Option<&Path>) -> Result<(), ConfigError> {
        let value = value.trim();
        match key {
            "alpha_io" => self.thresholds.alpha_io = number(key, value)?,
            "alpha_call" => self.thresholds.alpha_call = number(key, value)?,
            "beta" => self.thresholds.beta.fixed = Some(number(key, value)?),
            "beta_fallback" => self.thresholds.beta.fallback = number(key, value)?,
            "noise" => self.noise_patterns = list(value).collect(),
            "runner_cmd" => self.runner_cmd = Some(value.to_string()).filter(|v| !v.is_empty()),
            "mock_script" => self.mock_script = Some(resolve(base, value)),
            "timeout_s" => self.timeout_s = number(key, value)?,
            "margin" => self.margin = Some(number(key, value)?),
            "jobs" => self.jobs = number(key, value)?,
            "out" => self.out_dir = resolve(base, value),
            "corpus" => self.corpus = list(value).map(|p| resolve(base, &p)).collect(),
            "suppress_list" => self.suppress_list = Some(resolve(base, value)),
            "templates" => self.template_dir = Some(resolve(base, value)),
            "beta_grid" => {
                self.beta_grid = list(value).map(|v| number(key, &v)).collect::<Result<_, _>>()?;
            }
            "sampler_labels" => self.sampler.bug_labels = list(value).collect(),
            "sampler_hardware_exclusions" => self.sampler.hardware_exclusions = list(value).collect(),
            "sampler_min_comments" => self.sampler.min_comments = number(key, value)?,
            _ => match key.strip_prefix("beta.") {
                Some(tag) if !tag.is_empty() => {
                    self.thresholds
                        .beta
                        .per_tag
                        .insert(tag.to_string(), number(key, value)?);
                }
                _ => return Err(ConfigError(format!("unknown config key {key:?}"))),
            },
        }
        Ok(())
    }

    pub fn apply_text(&mut self, text: &str, base: Option<&Path>) -> Result<(), ConfigError> {
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| ConfigError(format!("line {}: expected `key = value`", idx + 1)))?;
            self.set(key.trim(), value, base)
                .map_err(|e| ConfigError(format!("line {}: {}", idx + 1, e.0)))?;
        }
        Ok(())
    }

    pub fn apply_file(&mut self, path: &Path) -> Result<(), ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError(format!("{}: {e}", path.display())))?;
        self.apply_text(&text, path.parent())
            .map_err(|e| ConfigError(format!("{}: {}", path.display(), e.0)))
    }

    /// Applies `BUGPORT_<KEY>` variables from `vars`.
    pub fn apply_env<I, K, V>(&mut self, vars: I) -> Result<(), ConfigError>
    where
        I: IntoIterator<Item = (K, V)>,
        K: AsRef<str>,
        V: AsRef<str>,
    {
        for (name, value) in vars {
            let Some(key) = name.as_ref().strip_prefix("BUGPORT_") else {
                continue;
            };
            let key = key.to_ascii_lowercase();
            if ENV_KEYS.contains(&key.as_str()) {
                self.set(&key, value.as_ref(), None)
                    .map_err(|e| ConfigError(format!("{}: {}", name.as_ref(), e.0)))?;
            }
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.thresholds.validate().map_err(ConfigError)?;
        if !(self.timeout_s > 0.0 && self.timeout_s.is_finite()) {
            return Err(ConfigError(format!(
                "timeout_s must be positive, got {}",
                self.timeout_s
            )));
        }
        if let Some(m) = self.margin {
            if !(m >= 1.0 && m.is_finite()) {
                return Err(ConfigError(format!("margin must be at least 1, got {m}")));
            }
        }
        if self.jobs == 0 {
            return Err(ConfigError("jobs must be at least 1".into()));
        }
        if let Some(b) = self.beta_grid.iter().find(|b| !(0.0..=1.0).contains(*b)) {
            return Err(ConfigError(format!("beta grid value {b} is outside [0, 1]")));
        }
        Ok(())
    }
}
