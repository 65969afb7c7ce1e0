//! Structured run reports and model persistence.
//!
//! Reports serialize to JSON; every number in them is recomputable from the
//! persisted model plus the seeded split. Models persist as self-describing
//! JSON documents carrying the learner kind, parameters, and (for the
//! logistic learner) the standardization constants.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::learners::{LogRegModel, TrainedModel, TreeModel};
use crate::tuning::TradeoffPoint;

#[derive(Debug, Error)]
pub enum PersistError {
    #[error("cannot write {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
    #[error("custom models have no document form")]
    NotPersistable,
}

/// Self-describing on-disk model document.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "learner", rename_all = "snake_case")]
pub enum ModelDocument {
    Logreg(LogRegModel),
    Tree(TreeModel),
}

impl ModelDocument {
    pub fn from_model(model: &TrainedModel) -> Result<Self, PersistError> {
        match model {
            TrainedModel::LogReg(m) => Ok(ModelDocument::Logreg(m.clone())),
            TrainedModel::Tree(m) => Ok(ModelDocument::Tree(m.clone())),
            TrainedModel::Custom(_) => Err(PersistError::NotPersistable),
        }
    }

    pub fn into_model(self) -> TrainedModel {
        match self {
            ModelDocument::Logreg(m) => TrainedModel::LogReg(m),
            ModelDocument::Tree(m) => TrainedModel::Tree(m),
        }
    }
}

pub fn save_model(model: &TrainedModel, path: &Path) -> Result<(), PersistError> {
    let doc = ModelDocument::from_model(model)?;
    let json = serde_json::to_string_pretty(&doc)?;
    std::fs::write(path, json).map_err(|source| PersistError::Io {
        path: path.display().to_string(),
        source,
    })
}

pub fn load_model(path: &Path) -> Result<TrainedModel, PersistError> {
    let text = std::fs::read_to_string(path).map_err(|source| PersistError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let doc: ModelDocument = serde_json::from_str(&text)?;
    Ok(doc.into_model())
}

#[derive(Debug, Clone, Serialize)]
pub struct DatasetSummary {
    pub rows: usize,
    pub train: usize,
    pub validation: usize,
    pub test: usize,
    pub group_sizes: BTreeMap<String, usize>,
}

/// Accuracy plus signed per-constraint gaps on one evaluation split.
#[derive(Debug, Clone, Serialize)]
pub struct SplitEval {
    pub ap: f64,
    pub fp: BTreeMap<String, f64>,
}

/// A tuned (or baseline) model's numbers on validation and test.
#[derive(Debug, Clone, Serialize)]
pub struct Outcome {
    pub lambdas: BTreeMap<String, f64>,
    pub satisfied: bool,
    pub validation: SplitEval,
    pub test: SplitEval,
}

/// One metric's per-group values and pairwise gaps; metrics that cannot be
/// evaluated (empty denominators) record the reason instead.
#[derive(Debug, Clone, Serialize, Default)]
pub struct MetricAudit {
    pub values: BTreeMap<String, f64>,
    pub gaps: BTreeMap<String, f64>,
    pub errors: Vec<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct AuditSplit {
    pub ap: f64,
    /// Two-proportion 3-sigma bound implied by the smallest group on this
    /// split; gaps within it are indistinguishable from sampling noise.
    pub noise_bound: f64,
    pub metrics: BTreeMap<String, MetricAudit>,
}

#[derive(Debug, Clone, Serialize)]
pub struct AuditSection {
    pub validation: AuditSplit,
    pub test: AuditSplit,
}

#[derive(Debug, Clone, Serialize)]
pub struct Report {
    pub command: String,
    pub seed: u64,
    pub learner: String,
    pub dataset: DatasetSummary,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub baseline: Option<Outcome>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tuned: Option<Outcome>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub audit: Option<AuditSection>,
    pub probes: Vec<TradeoffPoint>,
    pub clamp_warnings: usize,
    pub fits_performed: usize,
    pub wall_seconds: f64,
    pub notes: Vec<String>,
}

impl Report {
    pub fn save(&self, path: &Path) -> Result<(), PersistError> {
        let json = serde_json::to_string_pretty(self)?;
        std::fs::write(path, json).map_err(|source| PersistError::Io {
            path: path.display().to_string(),
            source,
        })
    }
}
