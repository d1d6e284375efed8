//! Config-driven experiment pipeline behind the command-line tool.

mod commands;
mod config;
mod hyperopt;
mod model;

use std::collections::BTreeMap;
use std::fs;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::CorpusError;
use crate::ecd::EcdError;
use crate::eval::EvalError;
use crate::rank::RankError;

pub use commands::{
    cmd_evaluate, cmd_generate, cmd_predict, cmd_train, fit, load_model, load_prepared, prepare_data, read_tickets,
    PreparedData, DATA_DIR, MODEL_DIR, SPLIT_FILE,
};
pub use config::{DatasetConfig, ExperimentConfig, HyperoptConfig, ModelSection, ParamRange};
pub use hyperopt::{cmd_hyperopt, Trial};
pub use model::{dir_digest, LabeledModel, TrainedModel};

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("{0}")]
    Usage(String),
    #[error("config error at {path}: {message}")]
    Config { path: String, message: String },
    #[error("data error: {0}")]
    Data(String),
    #[error("training failed: {0}")]
    Training(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl ExperimentError {
    /// Process exit code: 1 usage, 2 data, 3 training.
    pub fn exit_code(&self) -> i32 {
        match self {
            ExperimentError::Usage(_) | ExperimentError::Config { .. } => 1,
            ExperimentError::Data(_) | ExperimentError::Io(_) => 2,
            ExperimentError::Training(_) => 3,
        }
    }
}

impl From<CorpusError> for ExperimentError {
    fn from(e: CorpusError) -> Self {
        ExperimentError::Data(e.to_string())
    }
}

impl From<EvalError> for ExperimentError {
    fn from(e: EvalError) -> Self {
        ExperimentError::Data(e.to_string())
    }
}

impl From<serde_json::Error> for ExperimentError {
    fn from(e: serde_json::Error) -> Self {
        ExperimentError::Data(e.to_string())
    }
}

impl From<RankError> for ExperimentError {
    fn from(e: RankError) -> Self {
        match e {
            RankError::Io(e) => ExperimentError::Io(e),
            e => ExperimentError::Training(e.to_string()),
        }
    }
}

impl From<EcdError> for ExperimentError {
    fn from(e: EcdError) -> Self {
        match e {
            EcdError::Config(_) | EcdError::Cycle(_) | EcdError::UnknownComponent(_) => {
                ExperimentError::Config { path: "model.ecd".into(), message: e.to_string() }
            }
            EcdError::Io(e) => ExperimentError::Io(e),
            e => ExperimentError::Training(e.to_string()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CommandRecord {
    /// Paths relative to the output directory.
    pub artifacts: Vec<String>,
    /// Everything the command reported.
    pub summary: Vec<String>,
}

/// Provenance of an output directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub config_hash: String,
    pub seed: u64,
    pub code_version: String,
    /// The effective config, loadable with `--config manifest.json`.
    pub config: String,
    pub commands: BTreeMap<String, CommandRecord>,
}

/// Adds a command's artifacts to the directory manifest. A manifest for a
/// different config is replaced.
pub fn record_command(cfg: &ExperimentConfig, command: &str, artifacts: Vec<String>, summary: Vec<String>) -> Result<(), ExperimentError> {
    let dir = &cfg.output_dir;
    fs::create_dir_all(dir)?;
    let path = dir.join(MANIFEST_FILE);
    let hash = cfg.hash();
    let existing = fs::read_to_string(&path).ok().and_then(|t| serde_json::from_str::<Manifest>(&t).ok());
    let mut m = match existing {
        Some(m) if m.config_hash == hash => m,
        _ => Manifest {
            config_hash: hash,
            seed: cfg.seed,
            code_version: env!("CARGO_PKG_VERSION").to_string(),
            config: cfg.to_toml(),
            commands: BTreeMap::new(),
        },
    };
    m.commands.insert(command.to_string(), CommandRecord { artifacts, summary });
    fs::write(path, serde_json::to_string_pretty(&m)?)?;
    Ok(())
}
