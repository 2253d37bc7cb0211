//! TOML pipeline configuration. Every key is optional; command-line flags
//! take precedence over file values, which take precedence over defaults.
//!
//! ```toml
//! [paths]
//! src = "data/train.en"
//! tgt = "data/train.ja"
//! out_dir = "work"
//!
//! [filter]
//! max_length = 200
//! length_unit = "tokens"
//! max_ratio = 9.0
//! dedup_key = "pair"
//! score_threshold = 0.7
//! source_copy_check = true
//!
//! [split]
//! valid = 5000
//! test = 5000
//! seed = 42
//!
//! [subword]
//! model_type = "unigram"
//! vocab_size = 32000
//! byte_fallback = true
//! split_digits = true
//!
//! [metric]
//! scheme = "ja-char"
//! smooth = 0.1
//!
//! [pretokenize]
//! source = "13a"
//! target = "script"
//! ```

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::Context;
use serde::Deserialize;

use crate::UsageError;

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    #[serde(default)]
    pub paths: PathsSection,
    #[serde(default)]
    pub filter: FilterSection,
    #[serde(default)]
    pub split: SplitSection,
    #[serde(default)]
    pub subword: SubwordSection,
    #[serde(default)]
    pub metric: MetricSection,
    #[serde(default)]
    pub pretokenize: PretokenizeSection,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PathsSection {
    pub src: Option<PathBuf>,
    pub tgt: Option<PathBuf>,
    pub scores: Option<PathBuf>,
    pub out_dir: Option<PathBuf>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FilterSection {
    pub max_length: Option<usize>,
    pub length_unit: Option<String>,
    pub max_ratio: Option<f64>,
    pub dedup_key: Option<String>,
    pub score_threshold: Option<f64>,
    pub source_copy_check: Option<bool>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitSection {
    pub valid: Option<usize>,
    pub test: Option<usize>,
    pub seed: Option<u64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SubwordSection {
    pub model_type: Option<String>,
    pub vocab_size: Option<usize>,
    pub character_coverage: Option<f64>,
    pub byte_fallback: Option<bool>,
    pub split_digits: Option<bool>,
    pub seed: Option<u64>,
    pub seed_vocab_size: Option<usize>,
    pub max_piece_length: Option<usize>,
    pub em_iterations: Option<usize>,
    pub prune_fraction: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetricSection {
    pub scheme: Option<String>,
    pub smooth: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PretokenizeSection {
    pub source: Option<String>,
    pub target: Option<String>,
}

impl PipelineConfig {
    pub fn load(path: Option<&Path>) -> anyhow::Result<Self> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        let config: PipelineConfig =
            toml::from_str(&text).map_err(|e| UsageError(format!("{}: {e}", path.display())))?;
        config.validate()?;
        Ok(config)
    }

    fn validate(&self) -> Result<(), UsageError> {
        let p = &self.paths;
        for (key, value) in [
            ("src", &p.src),
            ("tgt", &p.tgt),
            ("scores", &p.scores),
            ("out_dir", &p.out_dir),
        ] {
            if value.as_ref().is_some_and(|v| v.as_os_str().is_empty()) {
                return Err(UsageError(format!("paths.{key} must not be empty")));
            }
        }
        Ok(())
    }
}
