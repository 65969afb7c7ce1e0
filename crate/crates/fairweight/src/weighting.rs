//! Turns trade-off hyperparameters into per-example training weights.
//!
//! For a single constraint with coefficient sets (c^g1, c^g2):
//! `w_i = 1 + N*lambda*c_i^g1` on g1 only, `w_i = 1 - N*lambda*c_i^g2` on g2
//! only, both deltas applied when the groups overlap, and `w_i = 1`
//! elsewhere. Multiple constraints add their deltas. Negative weights are
//! clamped to zero and counted so callers can surface a warning; the
//! objective identity (weighted accuracy = AP + lambda*FP - lambda*(c0 gap))
//! holds exactly only while nothing clamps.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::data::Dataset;
use crate::grouping::GroupAssignment;
use crate::learners::TrainedModel;
use crate::metrics::{coefficients, MetricError, MetricSpec};

#[derive(Debug, Error)]
pub enum WeightError {
    #[error(transparent)]
    Metric(#[from] MetricError),
    #[error("group {0:?} not present in the assignment")]
    UnknownGroup(String),
}

/// One induced fairness constraint: an ordered group pair, a metric, and the
/// disparity allowance epsilon on `|f(h,g1) - f(h,g2)|`.
#[derive(Debug, Clone)]
pub struct FairnessConstraint {
    pub id: String,
    pub g1: String,
    pub g2: String,
    pub metric: MetricSpec,
    pub epsilon: f64,
}

impl FairnessConstraint {
    pub fn new(
        id: impl Into<String>,
        g1: impl Into<String>,
        g2: impl Into<String>,
        metric: MetricSpec,
        epsilon: f64,
    ) -> Result<Self, BadConstraint> {
        let (id, g1, g2) = (id.into(), g1.into(), g2.into());
        if g1 == g2 {
            return Err(BadConstraint::SameGroup(g1));
        }
        if !(epsilon >= 0.0) {
            return Err(BadConstraint::NegativeEpsilon(epsilon));
        }
        Ok(Self {
            id,
            g1,
            g2,
            metric,
            epsilon,
        })
    }

    /// The same constraint with the group order reversed (gap negated).
    pub fn swapped(&self) -> Self {
        Self {
            id: self.id.clone(),
            g1: self.g2.clone(),
            g2: self.g1.clone(),
            metric: self.metric.clone(),
            epsilon: self.epsilon,
        }
    }
}

#[derive(Debug, Error)]
pub enum BadConstraint {
    #[error("a constraint needs two distinct groups, got {0:?} twice")]
    SameGroup(String),
    #[error("epsilon must be nonnegative, got {0}")]
    NegativeEpsilon(f64),
}

/// Signed trade-off hyperparameters keyed by constraint id. Missing entries
/// read as zero.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LambdaVector {
    values: BTreeMap<String, f64>,
}

impl LambdaVector {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn single(id: impl Into<String>, lambda: f64) -> Self {
        let mut v = Self::new();
        v.set(id, lambda);
        v
    }

    pub fn get(&self, id: &str) -> f64 {
        self.values.get(id).copied().unwrap_or(0.0)
    }

    pub fn set(&mut self, id: impl Into<String>, lambda: f64) {
        self.values.insert(id.into(), lambda);
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, f64)> {
        self.values.iter().map(|(k, &v)| (k.as_str(), v))
    }
}

/// Per-example weights over the whole dataset, plus how many entries were
/// clamped up to zero.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightVector {
    values: Vec<f64>,
    clamped: usize,
}

impl WeightVector {
    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    pub fn clamped(&self) -> usize {
        self.clamped
    }

    pub fn clamp_occurred(&self) -> bool {
        self.clamped > 0
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }
}

/// Weights for a single constraint at trade-off `lambda`.
pub fn derive_weights(
    lambda: f64,
    constraint: &FairnessConstraint,
    dataset: &Dataset,
    assignment: &GroupAssignment,
    model: Option<&TrainedModel>,
) -> Result<WeightVector, WeightError> {
    derive_weights_multi(
        &LambdaVector::single(constraint.id.clone(), lambda),
        std::slice::from_ref(constraint),
        dataset,
        assignment,
        model,
    )
}

/// Weights for several constraints at once:
/// `w_i = 1 + N * sum_j lambda_j * (c_i^{g1_j}[i in g1_j] - c_i^{g2_j}[i in g2_j])`.
///
/// Constraints whose lambda is exactly zero contribute nothing and their
/// coefficients are not evaluated, so no model is needed for them.
pub fn derive_weights_multi(
    lambdas: &LambdaVector,
    constraints: &[FairnessConstraint],
    dataset: &Dataset,
    assignment: &GroupAssignment,
    model: Option<&TrainedModel>,
) -> Result<WeightVector, WeightError> {
    let n = dataset.len() as f64;
    let mut values = vec![1.0; dataset.len()];
    for constraint in constraints {
        let lambda = lambdas.get(&constraint.id);
        if lambda == 0.0 {
            continue;
        }
        let g1 = assignment
            .group(&constraint.g1)
            .ok_or_else(|| WeightError::UnknownGroup(constraint.g1.clone()))?;
        let g2 = assignment
            .group(&constraint.g2)
            .ok_or_else(|| WeightError::UnknownGroup(constraint.g2.clone()))?;
        let c1 = coefficients(&constraint.metric, g1, dataset, model)?;
        let c2 = coefficients(&constraint.metric, g2, dataset, model)?;
        for (&i, &ci) in &c1.c {
            values[i] += n * lambda * ci;
        }
        for (&i, &ci) in &c2.c {
            values[i] -= n * lambda * ci;
        }
    }
    let mut clamped = 0;
    for w in &mut values {
        if *w < 0.0 {
            *w = 0.0;
            clamped += 1;
        }
    }
    Ok(WeightVector { values, clamped })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{Dataset, Example};
    use crate::learners::CustomModel;
    use crate::metrics::accuracy;
    use std::collections::BTreeMap as Map;

    fn indexed_dataset(labels: &[u8]) -> Dataset {
        let examples = labels
            .iter()
            .enumerate()
            .map(|(i, &label)| Example {
                features: vec![i as f64],
                label,
                raw_attributes: Map::new(),
            })
            .collect();
        Dataset::new(examples, vec!["idx".to_string()], "y".to_string()).unwrap()
    }

    fn table_model(predictions: &[u8]) -> TrainedModel {
        let table = predictions.to_vec();
        TrainedModel::Custom(CustomModel::new("table", move |x: &[f64]| {
            table[x[0] as usize]
        }))
    }

    fn two_group_assignment(n: usize, split: usize) -> GroupAssignment {
        GroupAssignment::new(
            [
                ("a".to_string(), (0..split).collect()),
                ("b".to_string(), (split..n).collect()),
            ]
            .into_iter()
            .collect(),
            n,
        )
        .unwrap()
    }

    #[test]
    fn sp_weights_match_the_closed_form() {
        // N=8, |g1|=|g2|=4, lambda=0.1: g1 gets 0.8 (y=0) / 1.2 (y=1) and g2
        // the mirror image.
        let ds = indexed_dataset(&[1, 1, 0, 0, 1, 0, 0, 0]);
        let assignment = two_group_assignment(8, 4);
        let c = FairnessConstraint::new("c", "a", "b", MetricSpec::Sp, 0.0).unwrap();
        let w = derive_weights(0.1, &c, &ds, &assignment, None).unwrap();
        let expected = [1.2, 1.2, 0.8, 0.8, 0.8, 1.2, 1.2, 1.2];
        for (i, &e) in expected.iter().enumerate() {
            assert!((w.as_slice()[i] - e).abs() < 1e-12, "w[{i}]");
        }
        assert_eq!(w.clamped(), 0);
    }

    #[test]
    fn lambda_zero_weights_are_exactly_one() {
        let ds = indexed_dataset(&[1, 0, 1, 0]);
        let assignment = two_group_assignment(4, 2);
        for metric in [MetricSpec::Sp, MetricSpec::Mr, MetricSpec::For] {
            let c = FairnessConstraint::new("c", "a", "b", metric, 0.0).unwrap();
            // No model even for FOR: a zero lambda skips coefficients.
            let w = derive_weights(0.0, &c, &ds, &assignment, None).unwrap();
            assert!(w.as_slice().iter().all(|&w| w == 1.0));
        }
    }

    #[test]
    fn objective_identity_on_the_sp_fixture() {
        let ds = indexed_dataset(&[1, 1, 0, 0, 1, 0, 0, 0]);
        let model = table_model(&[1, 0, 0, 0, 1, 1, 0, 0]);
        let assignment = two_group_assignment(8, 4);
        let c = FairnessConstraint::new("c", "a", "b", MetricSpec::Sp, 0.0).unwrap();
        let lambda = 0.1;
        let w = derive_weights(lambda, &c, &ds, &assignment, Some(&model)).unwrap();

        let all: Vec<usize> = (0..8).collect();
        let weighted_acc: f64 = all
            .iter()
            .filter(|&&i| model.predict(ds.features(i)) == ds.label(i))
            .map(|&i| w.as_slice()[i])
            .sum::<f64>()
            / 8.0;

        let ap = accuracy(&ds, &all, &model).unwrap();
        let fp = crate::metrics::fairness_gap(&c, &ds, &assignment, &model).unwrap();
        let c0_1 = crate::metrics::coefficients(&MetricSpec::Sp, &[0, 1, 2, 3], &ds, None)
            .unwrap()
            .c0;
        let c0_2 = crate::metrics::coefficients(&MetricSpec::Sp, &[4, 5, 6, 7], &ds, None)
            .unwrap()
            .c0;
        let rhs = ap + lambda * fp - lambda * (c0_1 - c0_2);
        assert!((weighted_acc - 0.75).abs() < 1e-12);
        assert!((weighted_acc - rhs).abs() < 1e-12);
    }

    #[test]
    fn multi_with_all_zero_lambdas_is_neutral() {
        let ds = indexed_dataset(&[1, 0, 1, 0, 1, 0]);
        let assignment = two_group_assignment(6, 3);
        let c1 = FairnessConstraint::new("c1", "a", "b", MetricSpec::Sp, 0.0).unwrap();
        let c2 = FairnessConstraint::new("c2", "b", "a", MetricSpec::Mr, 0.0).unwrap();
        let w = derive_weights_multi(
            &LambdaVector::new(),
            &[c1, c2],
            &ds,
            &assignment,
            None,
        )
        .unwrap();
        assert!(w.as_slice().iter().all(|&w| w == 1.0));
    }

    #[test]
    fn multi_with_one_entry_reduces_to_single() {
        let ds = indexed_dataset(&[1, 1, 0, 0, 1, 0, 0, 0]);
        let assignment = two_group_assignment(8, 4);
        let c1 = FairnessConstraint::new("c1", "a", "b", MetricSpec::Sp, 0.0).unwrap();
        let c2 = FairnessConstraint::new("c2", "b", "a", MetricSpec::Mr, 0.0).unwrap();
        let single = derive_weights(0.07, &c1, &ds, &assignment, None).unwrap();
        let multi = derive_weights_multi(
            &LambdaVector::single("c1", 0.07),
            &[c1, c2],
            &ds,
            &assignment,
            None,
        )
        .unwrap();
        assert_eq!(single, multi);
    }

    #[test]
    fn disjoint_pairs_add_their_deviations() {
        // 12 rows, two SP constraints over disjoint group pairs.
        let labels = [1, 1, 0, 0, 1, 0, 1, 0, 0, 1, 1, 0];
        let ds = indexed_dataset(&labels);
        let groups: Map<String, Vec<usize>> = [
            ("a".to_string(), (0..3).collect()),
            ("b".to_string(), (3..6).collect()),
            ("c".to_string(), (6..9).collect()),
            ("d".to_string(), (9..12).collect()),
        ]
        .into_iter()
        .collect();
        let assignment = GroupAssignment::new(groups, 12).unwrap();
        let cab = FairnessConstraint::new("ab", "a", "b", MetricSpec::Sp, 0.0).unwrap();
        let ccd = FairnessConstraint::new("cd", "c", "d", MetricSpec::Sp, 0.0).unwrap();

        let mut lambdas = LambdaVector::new();
        lambdas.set("ab", 0.02);
        lambdas.set("cd", -0.01);
        let multi = derive_weights_multi(
            &lambdas,
            &[cab.clone(), ccd.clone()],
            &ds,
            &assignment,
            None,
        )
        .unwrap();
        let wa = derive_weights(0.02, &cab, &ds, &assignment, None).unwrap();
        let wc = derive_weights(-0.01, &ccd, &ds, &assignment, None).unwrap();
        for i in 0..12 {
            let expected = 1.0 + (wa.as_slice()[i] - 1.0) + (wc.as_slice()[i] - 1.0);
            assert!((multi.as_slice()[i] - expected).abs() < 1e-12);
        }

        // and the multi-constraint objective identity
        let model = table_model(&[1, 0, 1, 0, 0, 1, 1, 1, 0, 0, 1, 0]);
        let multi = derive_weights_multi(
            &lambdas,
            &[cab.clone(), ccd.clone()],
            &ds,
            &assignment,
            Some(&model),
        )
        .unwrap();
        let all: Vec<usize> = (0..12).collect();
        let weighted_acc: f64 = all
            .iter()
            .filter(|&&i| model.predict(ds.features(i)) == ds.label(i))
            .map(|&i| multi.as_slice()[i])
            .sum::<f64>()
            / 12.0;
        let ap = accuracy(&ds, &all, &model).unwrap();
        let mut rhs = ap;
        for (c, l) in [(&cab, 0.02), (&ccd, -0.01)] {
            let fp = crate::metrics::fairness_gap(c, &ds, &assignment, &model).unwrap();
            let g1 = assignment.group(&c.g1).unwrap();
            let g2 = assignment.group(&c.g2).unwrap();
            let c0_1 = coefficients(&c.metric, g1, &ds, None).unwrap().c0;
            let c0_2 = coefficients(&c.metric, g2, &ds, None).unwrap().c0;
            rhs += l * fp - l * (c0_1 - c0_2);
        }
        assert!((weighted_acc - rhs).abs() < 1e-9);
    }

    #[test]
    fn negative_weights_clamp_and_count() {
        let ds = indexed_dataset(&[1, 1, 0, 0, 1, 0, 0, 0]);
        let assignment = two_group_assignment(8, 4);
        let c = FairnessConstraint::new("c", "a", "b", MetricSpec::Sp, 0.0).unwrap();
        // lambda 1.0: deltas of +-2.0, so g1's y=0 rows and g2's y=1 row
        // (indices 2, 3, 4) go negative.
        let w = derive_weights(1.0, &c, &ds, &assignment, None).unwrap();
        assert!(w.clamp_occurred());
        assert!(w.as_slice().iter().all(|&w| w >= 0.0));
        assert_eq!(w.clamped(), 3);
    }
}
