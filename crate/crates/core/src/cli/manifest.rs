use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::data::Protocol;
use crate::error::Result;
use crate::metrics::{CvSummary, MetricsReport};
use crate::model::ModelConfig;
use crate::optim::TrainConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToolInfo {
    pub name: String,
    pub version: String,
}

impl ToolInfo {
    pub fn current() -> Self {
        Self { name: env!("CARGO_PKG_NAME").into(), version: env!("CARGO_PKG_VERSION").into() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetInfo {
    pub path: String,
    pub sha256: String,
    pub n_samples: usize,
    pub n_channels: usize,
    pub n_timesteps: usize,
    pub n_classes: usize,
    pub n_subjects: usize,
    pub zscore: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitInfo {
    pub protocol: Protocol,
    pub folds: usize,
    pub seed: u64,
    /// `[train, val, test]` sizes per fold.
    pub sizes: Vec<[usize; 3]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldResult {
    pub fold: usize,
    pub selected_epoch: usize,
    pub best_val_acc: f64,
    pub test: MetricsReport,
    pub log_file: String,
    pub params_file: String,
    pub params_sha256: String,
}

/// Everything needed to rerun a `train` invocation, plus what it produced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: ToolInfo,
    pub protocol_line: String,
    pub dataset: DatasetInfo,
    pub model: ModelConfig,
    pub training: TrainConfig,
    pub split: SplitInfo,
    pub folds: Vec<FoldResult>,
    pub summary: CvSummary,
}

impl RunManifest {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("manifest serializes") + "\n"
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Ok(serde_json::from_slice(&std::fs::read(path)?)?)
    }
}

/// `epochs=.. batch=.. lr=.. seed=.. folds=..`
pub fn protocol_line(run: &TrainConfig, folds: usize) -> String {
    format!(
        "epochs={} batch={} lr={} seed={} folds={}",
        run.epochs, run.batch_size, run.optimizer.lr, run.seed, folds
    )
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}
