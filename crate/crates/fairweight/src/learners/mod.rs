//! The weighted-learner contract and the trained-model handle.
//!
//! Learners are black boxes that maximize weighted training accuracy (via
//! whatever loss proxy they use). Anything that can fit per-example weights
//! deterministically can implement [`WeightedLearner`]; the crate ships a
//! logistic-regression learner and a decision-tree learner.

mod logreg;
mod tree;

use std::fmt;
use std::sync::Arc;

use thiserror::Error;

pub use logreg::{fit_logreg, LogRegConfig, LogRegLearner, LogRegModel};
pub use tree::{fit_tree, TreeConfig, TreeLearner, TreeModel, TreeNode};

use crate::data::Dataset;

#[derive(Debug, Error)]
pub enum LearnError {
    #[error("training set is empty")]
    EmptyTrainSet,
    #[error("training set contains a single class")]
    SingleClassTrainingSet,
    #[error("loss became non-finite during optimization")]
    NonFiniteLoss,
    #[error("weights must be nonnegative, finite, and length {expected}, got length {got}")]
    InvalidWeights { expected: usize, got: usize },
}

/// Deterministic predictor backed by an arbitrary function; used for custom
/// hypothesis families supplied by library callers (and test oracles).
#[derive(Clone)]
pub struct CustomModel {
    pub tag: String,
    predict_fn: Arc<dyn Fn(&[f64]) -> u8 + Send + Sync>,
}

impl CustomModel {
    pub fn new<F>(tag: impl Into<String>, predict_fn: F) -> Self
    where
        F: Fn(&[f64]) -> u8 + Send + Sync + 'static,
    {
        Self {
            tag: tag.into(),
            predict_fn: Arc::new(predict_fn),
        }
    }
}

impl fmt::Debug for CustomModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CustomModel").field("tag", &self.tag).finish()
    }
}

/// A fitted classifier h. Predictions are deterministic and in {0, 1}.
#[derive(Debug, Clone)]
pub enum TrainedModel {
    LogReg(LogRegModel),
    Tree(TreeModel),
    Custom(CustomModel),
}

impl TrainedModel {
    pub fn predict(&self, features: &[f64]) -> u8 {
        match self {
            TrainedModel::LogReg(m) => m.predict(features),
            TrainedModel::Tree(m) => m.predict(features),
            TrainedModel::Custom(m) => (m.predict_fn)(features).min(1),
        }
    }

    pub fn predict_batch(&self, dataset: &Dataset, indices: &[usize]) -> Vec<u8> {
        indices
            .iter()
            .map(|&i| self.predict(dataset.features(i)))
            .collect()
    }

    pub fn kind(&self) -> &str {
        match self {
            TrainedModel::LogReg(_) => "logreg",
            TrainedModel::Tree(_) => "tree",
            TrainedModel::Custom(m) => &m.tag,
        }
    }
}

/// A training algorithm that accepts per-example weights.
///
/// Implementations must be deterministic given identical inputs and seed,
/// must ignore weights of examples outside `train`, and must reduce to
/// unweighted training when all weights are 1.
pub trait WeightedLearner {
    fn fit(
        &self,
        dataset: &Dataset,
        train: &[usize],
        weights: &[f64],
        seed: u64,
        warm_start: Option<&TrainedModel>,
    ) -> Result<TrainedModel, LearnError>;

    /// Whether `warm_start` actually shortens optimization for this learner.
    fn supports_warm_start(&self) -> bool {
        false
    }

    fn name(&self) -> &str;
}

pub(crate) fn check_weights(weights: &[f64], n: usize) -> Result<(), LearnError> {
    if weights.len() != n || weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
        return Err(LearnError::InvalidWeights {
            expected: n,
            got: weights.len(),
        });
    }
    Ok(())
}
