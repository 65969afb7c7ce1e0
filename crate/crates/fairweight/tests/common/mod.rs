//! Shared test oracles and fixtures.
//!
//! The threshold-classifier family (predict 1 iff x0 >= t, t ranging over
//! midpoints of consecutive distinct feature values plus both sentinels) is
//! small enough to enumerate, so the exact inner maximization the theory
//! assumes can be carried out by brute force and checked against the
//! weighted-training path.

use std::collections::BTreeMap;

use fairweight::data::{DataSplit, Dataset, Example};
use fairweight::grouping::GroupAssignment;
use fairweight::learners::{CustomModel, LearnError, TrainedModel, WeightedLearner};
use fairweight::metrics::{fairness_value, MetricSpec};
use fairweight::weighting::FairnessConstraint;

/// Dataset whose first feature carries the value used by threshold models.
pub fn dataset_1d(values: &[f64], labels: &[u8], groups: &[&str]) -> Dataset {
    let examples = values
        .iter()
        .zip(labels)
        .zip(groups)
        .map(|((&x, &label), &group)| {
            let mut raw_attributes = BTreeMap::new();
            raw_attributes.insert("group".to_string(), group.to_string());
            Example {
                features: vec![x],
                label,
                raw_attributes,
            }
        })
        .collect();
    Dataset::new(examples, vec!["x0".to_string()], "y".to_string()).unwrap()
}

/// All thresholds that produce distinct labelings: -inf, midpoints, +inf.
pub fn threshold_candidates(dataset: &Dataset, indices: &[usize]) -> Vec<f64> {
    let mut values: Vec<f64> = indices.iter().map(|&i| dataset.features(i)[0]).collect();
    values.sort_by(|a, b| a.partial_cmp(b).unwrap());
    values.dedup();
    let mut candidates = vec![f64::NEG_INFINITY];
    candidates.extend(values.windows(2).map(|w| 0.5 * (w[0] + w[1])));
    candidates.push(f64::INFINITY);
    candidates
}

pub fn threshold_model(threshold: f64) -> TrainedModel {
    TrainedModel::Custom(CustomModel::new(format!("thr:{threshold}"), move |x| {
        u8::from(x[0] >= threshold)
    }))
}

/// Exact weighted-accuracy maximizer over the threshold family; ties go to
/// the smallest candidate.
pub struct ThresholdOracle;

impl WeightedLearner for ThresholdOracle {
    fn fit(
        &self,
        dataset: &Dataset,
        train: &[usize],
        weights: &[f64],
        _seed: u64,
        _warm_start: Option<&TrainedModel>,
    ) -> Result<TrainedModel, LearnError> {
        let mut best: Option<(f64, f64)> = None; // (score, threshold)
        for threshold in threshold_candidates(dataset, train) {
            let score: f64 = train
                .iter()
                .filter(|&&i| u8::from(dataset.features(i)[0] >= threshold) == dataset.label(i))
                .map(|&i| weights[i])
                .sum();
            if best.map_or(true, |(s, _)| score > s) {
                best = Some((score, threshold));
            }
        }
        let (_, threshold) = best.ok_or(LearnError::EmptyTrainSet)?;
        Ok(threshold_model(threshold))
    }

    fn name(&self) -> &str {
        "threshold-oracle"
    }
}

/// Exact maximizer of `AP + sum_j lambda_j * FP_j` over the threshold
/// family, evaluated on `indices` directly (no weight translation).
/// Returns (threshold, ap, per-constraint fp).
pub fn exact_argmax(
    dataset: &Dataset,
    indices: &[usize],
    assignment: &GroupAssignment,
    constraints: &[(&FairnessConstraint, f64)],
) -> (f64, f64, Vec<f64>) {
    let mut best: Option<(f64, f64, f64, Vec<f64>)> = None; // score, thr, ap, fps
    for threshold in threshold_candidates(dataset, indices) {
        let model = threshold_model(threshold);
        let correct = indices
            .iter()
            .filter(|&&i| model.predict(dataset.features(i)) == dataset.label(i))
            .count();
        let ap = correct as f64 / indices.len() as f64;
        let mut score = ap;
        let mut fps = Vec::with_capacity(constraints.len());
        for (constraint, lambda) in constraints {
            let fp = gap_on_subset(constraint, dataset, assignment, indices, &model);
            score += lambda * fp;
            fps.push(fp);
        }
        if best.as_ref().map_or(true, |(s, ..)| score > *s) {
            best = Some((score, threshold, ap, fps));
        }
    }
    let (_, threshold, ap, fps) = best.expect("nonempty candidate set");
    (threshold, ap, fps)
}

/// Metric gap with both groups restricted to `subset`.
pub fn gap_on_subset(
    constraint: &FairnessConstraint,
    dataset: &Dataset,
    assignment: &GroupAssignment,
    subset: &[usize],
    model: &TrainedModel,
) -> f64 {
    fairweight::metrics::fairness_gap_within(constraint, dataset, assignment, subset, model)
        .expect("gap evaluable")
}

/// Counting-based probability value of a built-in metric over a group, or
/// `None` when its conditioning set is empty. This is the independent
/// oracle for the coefficient form.
pub fn counted_value(
    metric: &MetricSpec,
    group: &[usize],
    dataset: &Dataset,
    predictions: &[u8],
) -> Option<f64> {
    let count = |f: &dyn Fn(usize) -> bool| group.iter().filter(|&&i| f(i)).count() as f64;
    let size = group.len() as f64;
    match metric {
        MetricSpec::Mr => Some(count(&|i| predictions[i] == dataset.label(i)) / size),
        MetricSpec::Sp => Some(count(&|i| predictions[i] == 1) / size),
        MetricSpec::Fpr => {
            let negatives = count(&|i| dataset.label(i) == 0);
            (negatives > 0.0).then(|| {
                1.0 - count(&|i| dataset.label(i) == 0 && predictions[i] == 1) / negatives
            })
        }
        MetricSpec::Fnr => {
            let positives = count(&|i| dataset.label(i) == 1);
            (positives > 0.0).then(|| {
                1.0 - count(&|i| dataset.label(i) == 1 && predictions[i] == 0) / positives
            })
        }
        MetricSpec::For => {
            let predicted_negative = count(&|i| predictions[i] == 0);
            (predicted_negative > 0.0).then(|| {
                count(&|i| predictions[i] == 0 && dataset.label(i) == 1) / predicted_negative
            })
        }
        MetricSpec::Fdr => {
            let predicted_positive = count(&|i| predictions[i] == 1);
            (predicted_positive > 0.0).then(|| {
                count(&|i| predictions[i] == 1 && dataset.label(i) == 0) / predicted_positive
            })
        }
        MetricSpec::Aec { fp_cost, fn_cost } => Some(
            (fp_cost * count(&|i| dataset.label(i) == 0 && predictions[i] == 1)
                + fn_cost * count(&|i| dataset.label(i) == 1 && predictions[i] == 0))
                / size,
        ),
        MetricSpec::Custom { .. } => None,
    }
}

/// Verifies the coefficient-form value against the counting oracle,
/// returning the absolute difference (or `None` when the metric is not
/// evaluable on this instance).
pub fn counting_discrepancy(
    metric: &MetricSpec,
    group: &[usize],
    dataset: &Dataset,
    model: &TrainedModel,
) -> Option<f64> {
    let predictions: Vec<u8> = (0..dataset.len())
        .map(|i| model.predict(dataset.features(i)))
        .collect();
    let expected = counted_value(metric, group, dataset, &predictions)?;
    match fairness_value(metric, group, dataset, model) {
        Ok(v) => Some((v - expected).abs()),
        Err(_) => None,
    }
}

/// Dataset with feature = example index so lookup-table models can realize
/// arbitrary prediction vectors.
pub fn indexed_dataset(labels: &[u8]) -> Dataset {
    let examples = labels
        .iter()
        .enumerate()
        .map(|(i, &label)| Example {
            features: vec![i as f64],
            label,
            raw_attributes: BTreeMap::new(),
        })
        .collect();
    Dataset::new(examples, vec!["idx".to_string()], "y".to_string()).unwrap()
}

pub fn table_model(predictions: &[u8]) -> TrainedModel {
    let table = predictions.to_vec();
    TrainedModel::Custom(CustomModel::new("table", move |x: &[f64]| {
        table[x[0] as usize]
    }))
}

/// A dataset of two identical halves with train = first half and
/// validation = second half, so every hypothesis scores identically on
/// both splits. Test stays empty.
pub fn mirrored_split(half_values: &[f64], half_labels: &[u8], half_groups: &[&str]) -> (Dataset, DataSplit, GroupAssignment) {
    let n = half_values.len();
    let values: Vec<f64> = half_values.iter().chain(half_values).copied().collect();
    let labels: Vec<u8> = half_labels.iter().chain(half_labels).copied().collect();
    let groups: Vec<&str> = half_groups.iter().chain(half_groups).copied().collect();
    let dataset = dataset_1d(&values, &labels, &groups);
    let split = DataSplit::from_parts((0..n).collect(), (n..2 * n).collect(), Vec::new(), 2 * n)
        .unwrap();
    let mut members: BTreeMap<String, Vec<usize>> = BTreeMap::new();
    for (i, &g) in groups.iter().enumerate() {
        members.entry(g.to_string()).or_default().push(i);
    }
    let assignment = GroupAssignment::new(members, 2 * n).unwrap();
    (dataset, split, assignment)
}
