//! Experiment and model configuration files.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use hcascade_core::detector::calibrate::Calibration;
use hcascade_core::detector::{DetectorProfile, ExternalSpec};
use hcascade_core::errormodel::ModelFile;
use hcascade_core::eval::DEFAULT_IOU_THRESHOLD;
use hcascade_core::router::RoutingConfig;
use hcascade_core::ClassTaxonomy;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

/// Reads and parses a JSON file. Parse failures are config errors.
pub fn read_json<T: DeserializeOwned>(path: &Path) -> CliResult<T> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

/// Either an inline value or a path to a JSON file holding it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum InlineOrPath<T> {
    Path(PathBuf),
    Inline(T),
}

impl<T: DeserializeOwned + Clone> InlineOrPath<T> {
    pub fn resolve(&self, base: &Path) -> CliResult<T> {
        match self {
            InlineOrPath::Inline(v) => Ok(v.clone()),
            InlineOrPath::Path(p) => read_json(&base.join(p)),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DetectorSpec {
    Simulated { profile: InlineOrPath<DetectorProfile> },
    External(ExternalSpec),
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DetectorsConfig {
    /// Fills in every detector not given explicitly.
    #[serde(default)]
    pub calibration: Option<Calibration>,
    #[serde(default)]
    pub baseline: Option<DetectorSpec>,
    #[serde(default)]
    pub stage1: Option<DetectorSpec>,
    #[serde(default)]
    pub stage2: BTreeMap<String, DetectorSpec>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalConfig {
    #[serde(default = "default_iou")]
    pub iou_threshold: f64,
}

fn default_iou() -> f64 {
    DEFAULT_IOU_THRESHOLD
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            iou_threshold: DEFAULT_IOU_THRESHOLD,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Relative paths resolve against the config file's directory.
    pub dataset: PathBuf,
    /// Overrides the dataset's own taxonomy.
    #[serde(default)]
    pub taxonomy: Option<InlineOrPath<ClassTaxonomy>>,
    #[serde(default)]
    pub detectors: DetectorsConfig,
    #[serde(default)]
    pub routing: RoutingConfig,
    #[serde(default)]
    pub eval: EvalConfig,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ErrorModelConfig {
    pub model: InlineOrPath<ModelFile>,
    pub pair: [String; 2],
}

/// Directory that relative paths in the config at `path` resolve against.
pub fn base_dir(path: &Path) -> PathBuf {
    path.parent().map(Path::to_path_buf).unwrap_or_default()
}
