use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::corpus::{DataFormat, GeneratorSpec};
use crate::ecd::{validate_config, ModelConfig};
use crate::rank::{Formulation, V1Config};

use super::{ExperimentError, Manifest};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_out")]
    pub output_dir: PathBuf,
    #[serde(default = "default_k")]
    pub top_k: usize,
    /// File format for datasets and prediction dumps written by commands.
    #[serde(default = "default_format")]
    pub format: DataFormat,
    pub dataset: DatasetConfig,
    pub model: ModelSection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hyperopt: Option<HyperoptConfig>,
}

fn default_out() -> PathBuf {
    PathBuf::from("runs/experiment")
}

fn default_k() -> usize {
    3
}

fn default_format() -> DataFormat {
    DataFormat::JsonLines
}

fn default_split() -> [f64; 3] {
    [0.7, 0.15, 0.15]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "kebab-case", deny_unknown_fields)]
pub enum DatasetConfig {
    Generate {
        #[serde(default)]
        generator: GeneratorSpec,
        #[serde(default = "default_split")]
        split: [f64; 3],
    },
    /// A corpus directory holding `tree.json`, `templates.json` and `tickets.<ext>`.
    Load {
        path: PathBuf,
        #[serde(default = "default_format")]
        format: DataFormat,
        #[serde(default = "default_split")]
        split: [f64; 3],
    },
}

impl DatasetConfig {
    pub fn split(&self) -> [f64; 3] {
        match self {
            DatasetConfig::Generate { split, .. } | DatasetConfig::Load { split, .. } => *split,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ModelSection {
    V1Classification {
        #[serde(default)]
        v1: V1Config,
    },
    V1Ranking {
        #[serde(default)]
        v1: V1Config,
    },
    V2Ecd {
        #[serde(default)]
        ecd: ModelConfig,
    },
}

impl ModelSection {
    pub fn family(&self) -> &'static str {
        match self {
            ModelSection::V1Classification { .. } => "v1-classification",
            ModelSection::V1Ranking { .. } => "v1-ranking",
            ModelSection::V2Ecd { .. } => "v2-ecd",
        }
    }

    /// The v1 settings with the formulation fixed by the family.
    pub fn v1(&self, seed: u64) -> Option<V1Config> {
        let (v1, formulation) = match self {
            ModelSection::V1Classification { v1 } => (v1, Formulation::Classification),
            ModelSection::V1Ranking { v1 } => (v1, Formulation::Ranking),
            ModelSection::V2Ecd { .. } => return None,
        };
        let mut c = v1.clone();
        c.formulation = formulation;
        c.forest.seed = seed;
        Some(c)
    }

    pub fn ecd(&self, seed: u64) -> Option<ModelConfig> {
        match self {
            ModelSection::V2Ecd { ecd } => {
                let mut c = ecd.clone();
                c.trainer.seed = seed;
                Some(c)
            }
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HyperoptConfig {
    pub budget: usize,
    #[serde(default = "one")]
    pub workers: usize,
    /// Dotted path into the `[model]` table (array elements by index) to a range.
    #[serde(default)]
    pub space: BTreeMap<String, ParamRange>,
}

fn one() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum ParamRange {
    Choice(Vec<toml::Value>),
    Uniform([f64; 2]),
    LogUniform([f64; 2]),
    IntUniform([i64; 2]),
}

impl ExperimentConfig {
    /// Parses TOML, reporting schema violations with the path to the field.
    pub fn from_toml(text: &str) -> Result<Self, ExperimentError> {
        let de = toml::Deserializer::parse(text).map_err(|e| ExperimentError::Config { path: String::new(), message: e.to_string() })?;
        let cfg: Self = serde_path_to_error::deserialize(de).map_err(|e| ExperimentError::Config {
            path: e.path().to_string(),
            message: e.inner().to_string(),
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads a config file; a `manifest.json` from a previous run works too.
    pub fn load(path: &Path) -> Result<Self, ExperimentError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ExperimentError::Usage(format!("cannot read config {}: {e}", path.display())))?;
        if path.extension().is_some_and(|e| e == "json") {
            let m: Manifest = serde_json::from_str(&text)
                .map_err(|e| ExperimentError::Config { path: String::new(), message: e.to_string() })?;
            return Self::from_toml(&m.config);
        }
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    /// Hex SHA-256 of the canonical serialized config.
    pub fn hash(&self) -> String {
        Sha256::digest(self.to_toml().as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn validate(&self) -> Result<(), ExperimentError> {
        let bad = |path: &str, message: String| Err(ExperimentError::Config { path: path.into(), message });
        if self.top_k == 0 {
            return bad("top_k", "must be at least 1".into());
        }
        let split = self.dataset.split();
        if split.iter().any(|f| !(f.is_finite() && *f > 0.0)) || (split.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return bad("dataset.split", format!("fractions must be positive and sum to 1, got {split:?}"));
        }
        if let DatasetConfig::Generate { generator, .. } = &self.dataset {
            if let Err(e) = generator.validate() {
                return bad("dataset.generator", e.to_string());
            }
        }
        if let ModelSection::V2Ecd { ecd } = &self.model {
            if let Err(e) = validate_config(ecd) {
                return bad("model.ecd", e.to_string());
            }
        }
        if let Some(h) = &self.hyperopt {
            if h.budget == 0 {
                return bad("hyperopt.budget", "must be at least 1".into());
            }
            if h.workers == 0 {
                return bad("hyperopt.workers", "must be at least 1".into());
            }
        }
        Ok(())
    }
}
