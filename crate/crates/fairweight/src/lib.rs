//! Model-agnostic group-fairness training via per-example weights.
//!
//! Declare a constraint as (grouping, metric, disparity allowance); the
//! toolkit turns it into training weights for any learner that accepts
//! them, then tunes the accuracy/fairness trade-off hyperparameter with a
//! monotonicity-guided search against a validation split. Multiple
//! constraints are handled by marginal hill-climbing over the
//! hyperparameter vector.

pub mod cli;
pub mod config;
pub mod data;
pub mod grouping;
pub mod learners;
pub mod metrics;
pub mod multitune;
pub mod report;
pub mod synth;
pub mod tuning;
pub mod weighting;

pub use data::{load_csv, split, DataSplit, Dataset, Example, SplitSpec};
pub use grouping::{assign_groups, assign_groups_with, GroupAssignment, GroupingSpec};
pub use learners::{
    fit_logreg, fit_tree, LogRegConfig, LogRegLearner, TrainedModel, TreeConfig, TreeLearner,
    WeightedLearner,
};
pub use metrics::{accuracy, fairness_gap, fairness_value, MetricSpec};
pub use multitune::{grid_search, hill_climb, sample_region, MultiTuneResult, RegionSample};
pub use tuning::{tune_single, TradeoffPoint, TuneResult, TunerConfig};
pub use weighting::{derive_weights, derive_weights_multi, FairnessConstraint, LambdaVector};
