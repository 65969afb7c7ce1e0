//! Fairness metrics as coefficient sets: every supported metric is the
//! linear form `f(h, g) = sum_i c_i * 1(h(x_i) = y_i) + c0` over a group.
//!
//! Coefficient conventions for the built-ins:
//!   MR   c_i =  1/|g|,                      c0 = 0        value = Pr(h=y | g)
//!   SP   c_i = -1/|g| (y=0), +1/|g| (y=1),  c0 = n0/|g|   value = Pr(h=1 | g)
//!   FPR  c_i =  1/n0 (y=0), 0 (y=1),        c0 = 0        value = Pr(h=0 | y=0) = 1 - FPR
//!   FNR  c_i =  0 (y=0), 1/n1 (y=1),        c0 = 0        value = Pr(h=1 | y=1) = 1 - FNR
//!   FOR  c_i = -1/|{h=0}| (y=0), 0 (y=1),   c0 = 1        value = Pr(y=1 | h=0)
//!   FDR  c_i =  0 (y=0), -1/|{h=1}| (y=1),  c0 = 1        value = Pr(y=0 | h=1)
//!   AEC  c_i = -Cfp/|g| (y=0), -Cfn/|g| (y=1),
//!        c0 = (Cfp*n0 + Cfn*n1)/|g|                       value = mean error cost
//!
//! The FPR/FNR forms measure the complement rates (TNR/TPR); equalizing a
//! complement across groups equalizes the rate itself since gaps are merely
//! negated, and the tuner's group-swap step absorbs the orientation.
//! FOR/FDR denominators count current model predictions, so those two are
//! parameterized by the model.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use serde::Serialize;
use thiserror::Error;

use crate::data::Dataset;
use crate::grouping::GroupAssignment;
use crate::learners::TrainedModel;
use crate::weighting::FairnessConstraint;

#[derive(Debug, Error)]
pub enum MetricError {
    #[error("empty denominator: {0}")]
    EmptyDenominator(String),
    #[error("metric requires a model for its coefficients")]
    MissingModel,
    #[error("index set is empty")]
    EmptyIndexSet,
    #[error("group {0:?} not present in the assignment")]
    UnknownGroup(String),
}

/// Source of coefficients for user-customized metrics.
pub trait CoefficientSource: Send + Sync {
    fn parameterized_by_model(&self) -> bool;
    fn coefficients(
        &self,
        dataset: &Dataset,
        group: &[usize],
        model: Option<&TrainedModel>,
    ) -> Result<CoefficientSet, MetricError>;
}

/// Which fairness metric to evaluate and, for AEC/custom, how.
#[derive(Clone)]
pub enum MetricSpec {
    Mr,
    Sp,
    Fpr,
    Fnr,
    For,
    Fdr,
    Aec {
        fp_cost: f64,
        fn_cost: f64,
    },
    Custom {
        id: String,
        source: Arc<dyn CoefficientSource>,
    },
}

impl fmt::Debug for MetricSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MetricSpec::Custom { id, .. } => write!(f, "Custom({id})"),
            other => f.write_str(other.name()),
        }
    }
}

impl MetricSpec {
    pub fn name(&self) -> &str {
        match self {
            MetricSpec::Mr => "mr",
            MetricSpec::Sp => "sp",
            MetricSpec::Fpr => "fpr",
            MetricSpec::Fnr => "fnr",
            MetricSpec::For => "for",
            MetricSpec::Fdr => "fdr",
            MetricSpec::Aec { .. } => "aec",
            MetricSpec::Custom { id, .. } => id,
        }
    }

    /// True when the coefficient denominators depend on current predictions;
    /// the tuner branches to linear search for these.
    pub fn parameterized_by_model(&self) -> bool {
        match self {
            MetricSpec::For | MetricSpec::Fdr => true,
            MetricSpec::Custom { source, .. } => source.parameterized_by_model(),
            _ => false,
        }
    }
}

/// Per-example coefficients (restricted to one group) plus the constant.
#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientSet {
    pub c: BTreeMap<usize, f64>,
    pub c0: f64,
}

/// Builds the coefficient set for `metric` over `group`.
pub fn coefficients(
    metric: &MetricSpec,
    group: &[usize],
    dataset: &Dataset,
    model: Option<&TrainedModel>,
) -> Result<CoefficientSet, MetricError> {
    if group.is_empty() {
        return Err(MetricError::EmptyIndexSet);
    }
    let size = group.len() as f64;
    let n1 = group.iter().filter(|&&i| dataset.label(i) == 1).count();
    let n0 = group.len() - n1;

    let mut c = BTreeMap::new();
    let c0;
    match metric {
        MetricSpec::Mr => {
            for &i in group {
                c.insert(i, 1.0 / size);
            }
            c0 = 0.0;
        }
        MetricSpec::Sp => {
            for &i in group {
                let sign = if dataset.label(i) == 1 { 1.0 } else { -1.0 };
                c.insert(i, sign / size);
            }
            c0 = n0 as f64 / size;
        }
        MetricSpec::Fpr => {
            if n0 == 0 {
                return Err(MetricError::EmptyDenominator(
                    "no negative labels in group".to_string(),
                ));
            }
            for &i in group {
                let v = if dataset.label(i) == 0 {
                    1.0 / n0 as f64
                } else {
                    0.0
                };
                c.insert(i, v);
            }
            c0 = 0.0;
        }
        MetricSpec::Fnr => {
            if n1 == 0 {
                return Err(MetricError::EmptyDenominator(
                    "no positive labels in group".to_string(),
                ));
            }
            for &i in group {
                let v = if dataset.label(i) == 1 {
                    1.0 / n1 as f64
                } else {
                    0.0
                };
                c.insert(i, v);
            }
            c0 = 0.0;
        }
        MetricSpec::For | MetricSpec::Fdr => {
            let model = model.ok_or(MetricError::MissingModel)?;
            let predictions = model.predict_batch(dataset, group);
            let target_prediction = if matches!(metric, MetricSpec::For) { 0 } else { 1 };
            let denom = predictions
                .iter()
                .filter(|&&p| p == target_prediction)
                .count();
            if denom == 0 {
                return Err(MetricError::EmptyDenominator(format!(
                    "model predicts {target_prediction} for nobody in group"
                )));
            }
            // The metric counts correct predictions among the label class
            // matching the conditioned prediction: see the module header.
            let target_label = target_prediction;
            for &i in group {
                let v = if dataset.label(i) == target_label {
                    -1.0 / denom as f64
                } else {
                    0.0
                };
                c.insert(i, v);
            }
            c0 = 1.0;
        }
        MetricSpec::Aec { fp_cost, fn_cost } => {
            for &i in group {
                let cost = if dataset.label(i) == 0 { fp_cost } else { fn_cost };
                c.insert(i, -cost / size);
            }
            c0 = (fp_cost * n0 as f64 + fn_cost * n1 as f64) / size;
        }
        MetricSpec::Custom { source, .. } => return source.coefficients(dataset, group, model),
    }
    Ok(CoefficientSet { c, c0 })
}

/// Evaluates `f(h, g) = sum c_i * 1(h(x_i) = y_i) + c0`.
pub fn fairness_value(
    metric: &MetricSpec,
    group: &[usize],
    dataset: &Dataset,
    model: &TrainedModel,
) -> Result<f64, MetricError> {
    let coeffs = coefficients(metric, group, dataset, Some(model))?;
    let mut value = coeffs.c0;
    for (&i, &ci) in &coeffs.c {
        if model.predict(dataset.features(i)) == dataset.label(i) {
            value += ci;
        }
    }
    Ok(value)
}

/// Signed gap `f(h, g1) - f(h, g2)` with groups taken from `assignment`.
pub fn fairness_gap(
    constraint: &FairnessConstraint,
    dataset: &Dataset,
    assignment: &GroupAssignment,
    model: &TrainedModel,
) -> Result<f64, MetricError> {
    let g1 = assignment
        .group(&constraint.g1)
        .ok_or_else(|| MetricError::UnknownGroup(constraint.g1.clone()))?;
    let g2 = assignment
        .group(&constraint.g2)
        .ok_or_else(|| MetricError::UnknownGroup(constraint.g2.clone()))?;
    Ok(fairness_value(&constraint.metric, g1, dataset, model)?
        - fairness_value(&constraint.metric, g2, dataset, model)?)
}

/// Same gap but with both groups restricted to `subset` (e.g. the validation
/// split). Both the group lists and `subset` must be sorted.
pub fn fairness_gap_within(
    constraint: &FairnessConstraint,
    dataset: &Dataset,
    assignment: &GroupAssignment,
    subset: &[usize],
    model: &TrainedModel,
) -> Result<f64, MetricError> {
    let g1 = assignment
        .group(&constraint.g1)
        .ok_or_else(|| MetricError::UnknownGroup(constraint.g1.clone()))?;
    let g2 = assignment
        .group(&constraint.g2)
        .ok_or_else(|| MetricError::UnknownGroup(constraint.g2.clone()))?;
    let g1s = intersect_sorted(g1, subset);
    let g2s = intersect_sorted(g2, subset);
    Ok(fairness_value(&constraint.metric, &g1s, dataset, model)?
        - fairness_value(&constraint.metric, &g2s, dataset, model)?)
}

/// Plain accuracy over an index set.
pub fn accuracy(
    dataset: &Dataset,
    indices: &[usize],
    model: &TrainedModel,
) -> Result<f64, MetricError> {
    if indices.is_empty() {
        return Err(MetricError::EmptyIndexSet);
    }
    let correct = indices
        .iter()
        .filter(|&&i| model.predict(dataset.features(i)) == dataset.label(i))
        .count();
    Ok(correct as f64 / indices.len() as f64)
}

/// Intersection of two sorted index slices.
pub fn intersect_sorted(a: &[usize], b: &[usize]) -> Vec<usize> {
    let mut out = Vec::new();
    let (mut i, mut j) = (0, 0);
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                out.push(a[i]);
                i += 1;
                j += 1;
            }
        }
    }
    out
}

/// Accuracy plus per-constraint gaps and per-group metric values over one
/// evaluation subset.
#[derive(Debug, Clone, Serialize)]
pub struct EvaluationReport {
    pub ap: f64,
    pub fp_per_constraint: BTreeMap<String, f64>,
    /// constraint id -> group id -> metric value
    pub metric_values: BTreeMap<String, BTreeMap<String, f64>>,
}

/// Evaluates `model` on `subset` for every constraint.
pub fn evaluate(
    dataset: &Dataset,
    subset: &[usize],
    assignment: &GroupAssignment,
    constraints: &[FairnessConstraint],
    model: &TrainedModel,
) -> Result<EvaluationReport, MetricError> {
    let ap = accuracy(dataset, subset, model)?;
    let mut fp_per_constraint = BTreeMap::new();
    let mut metric_values: BTreeMap<String, BTreeMap<String, f64>> = BTreeMap::new();
    for constraint in constraints {
        let mut values = BTreeMap::new();
        for gid in [&constraint.g1, &constraint.g2] {
            let group = assignment
                .group(gid)
                .ok_or_else(|| MetricError::UnknownGroup(gid.clone()))?;
            let sub = intersect_sorted(group, subset);
            values.insert(
                gid.clone(),
                fairness_value(&constraint.metric, &sub, dataset, model)?,
            );
        }
        fp_per_constraint.insert(
            constraint.id.clone(),
            values[&constraint.g1] - values[&constraint.g2],
        );
        metric_values.insert(constraint.id.clone(), values);
    }
    Ok(EvaluationReport {
        ap,
        fp_per_constraint,
        metric_values,
    })
}
