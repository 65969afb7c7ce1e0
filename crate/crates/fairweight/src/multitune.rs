//! Tuning several fairness constraints at once.
//!
//! The hill-climber starts from an all-zero hyperparameter vector and
//! repeatedly picks the most-violated constraint, re-tuning that single
//! dimension with every other entry frozen into the weight computation. The
//! grid-search baseline exhaustively fits every lattice point. A region
//! sampler exports the two-constraint (gap, accuracy) surface for external
//! plotting.

use std::collections::BTreeMap;

use crate::data::{DataSplit, Dataset};
use crate::grouping::GroupAssignment;
use crate::learners::{TrainedModel, WeightedLearner};
use crate::metrics::{accuracy, fairness_gap_within};
use crate::tuning::{
    check_groups_present, run_search, ProbePlan, SearchState, TuneError, TunerConfig,
};
use crate::weighting::{derive_weights_multi, FairnessConstraint, LambdaVector, WeightVector};

#[derive(Debug, Clone)]
pub struct MultiTuneResult {
    pub model: TrainedModel,
    pub lambdas: LambdaVector,
    pub per_constraint_fp: BTreeMap<String, f64>,
    pub satisfied: bool,
    /// Outer hill-climbing iterations (zero for grid search).
    pub iterations: usize,
    pub fits_performed: usize,
    pub clamp_warnings: usize,
    /// Constraint index tuned at each hill-climbing iteration.
    pub dimension_trace: Vec<usize>,
}

/// Probe plan for one dimension of the multi-constraint search: the frozen
/// entries keep contributing their weight deltas while the search varies
/// only `constraints[dim]`.
struct DimensionPlan<'a> {
    constraints: &'a [FairnessConstraint],
    dim: usize,
    frozen: LambdaVector,
    dataset: &'a Dataset,
    assignment: &'a GroupAssignment,
    split: &'a DataSplit,
}

impl ProbePlan for DimensionPlan<'_> {
    fn weights(
        &self,
        lambda: f64,
        prediction_model: Option<&TrainedModel>,
    ) -> Result<WeightVector, TuneError> {
        let mut lambdas = self.frozen.clone();
        lambdas.set(self.constraints[self.dim].id.clone(), lambda);
        Ok(derive_weights_multi(
            &lambdas,
            self.constraints,
            self.dataset,
            self.assignment,
            prediction_model,
        )?)
    }

    fn validation_gap(&self, model: &TrainedModel) -> Result<f64, TuneError> {
        Ok(fairness_gap_within(
            &self.constraints[self.dim],
            self.dataset,
            self.assignment,
            &self.split.validation,
            model,
        )?)
    }

    fn model_dependent(&self) -> bool {
        let dim_id = &self.constraints[self.dim].id;
        self.constraints.iter().any(|c| {
            c.metric.parameterized_by_model()
                && (c.id == *dim_id || self.frozen.get(&c.id) != 0.0)
        })
    }

    fn epsilon(&self) -> f64 {
        self.constraints[self.dim].epsilon
    }
}

fn unique_ids(constraints: &[FairnessConstraint]) -> Result<(), TuneError> {
    for (i, a) in constraints.iter().enumerate() {
        if constraints[i + 1..].iter().any(|b| b.id == a.id) {
            return Err(TuneError::BadConfig(format!(
                "duplicate constraint id {:?}",
                a.id
            )));
        }
    }
    Ok(())
}

fn validation_gaps(
    constraints: &[FairnessConstraint],
    dataset: &Dataset,
    assignment: &GroupAssignment,
    split: &DataSplit,
    model: &TrainedModel,
) -> Result<Vec<f64>, TuneError> {
    constraints
        .iter()
        .map(|c| {
            Ok(fairness_gap_within(
                c,
                dataset,
                assignment,
                &split.validation,
                model,
            )?)
        })
        .collect()
}

/// Marginal hill-climbing over the hyperparameter vector.
///
/// Returns `satisfied = false` (with the best-effort model) when the
/// iteration cap of `5 * constraints.len()` is exhausted or a dimension's
/// search hits the lambda cap; infeasibility is an outcome, not an error.
pub fn hill_climb(
    dataset: &Dataset,
    split: &DataSplit,
    assignment: &GroupAssignment,
    constraints: &[FairnessConstraint],
    learner: &dyn WeightedLearner,
    config: &TunerConfig,
) -> Result<MultiTuneResult, TuneError> {
    config.validate()?;
    unique_ids(constraints)?;
    if constraints.is_empty() {
        return Err(TuneError::BadConfig("no constraints given".to_string()));
    }
    for constraint in constraints {
        check_groups_present(dataset, split, assignment, constraint)?;
    }

    let mut lambdas = LambdaVector::new();
    let weights = derive_weights_multi(&lambdas, constraints, dataset, assignment, None)?;
    let mut model = learner.fit(
        dataset,
        &split.train,
        weights.as_slice(),
        config.seed,
        None,
    )?;
    let mut fits_performed = 1;
    let mut clamp_warnings = usize::from(weights.clamp_occurred());

    let max_iterations = 5 * constraints.len();
    let mut iterations = 0;
    let mut dimension_trace = Vec::new();
    let satisfied = loop {
        let gaps = validation_gaps(constraints, dataset, assignment, split, &model)?;
        let mut worst: Option<(usize, f64)> = None;
        for (i, (gap, c)) in gaps.iter().zip(constraints).enumerate() {
            let violation = gap.abs() - c.epsilon;
            if violation > 0.0 && worst.map_or(true, |(_, v)| violation > v) {
                worst = Some((i, violation));
            }
        }
        let Some((dim, _)) = worst else {
            break true;
        };
        if iterations >= max_iterations {
            break false;
        }
        iterations += 1;
        dimension_trace.push(dim);

        // Re-tune dimension `dim` from scratch: its entry restarts at zero
        // while every other entry stays frozen in the weights.
        let mut frozen = lambdas.clone();
        frozen.set(constraints[dim].id.clone(), 0.0);
        let plan = DimensionPlan {
            constraints,
            dim,
            frozen,
            dataset,
            assignment,
            split,
        };
        let mut state = SearchState::new(dataset, split, learner, config);
        state.seed_warm_start(model.clone());
        let outcome = match run_search(&mut state, &plan, Some(&model)) {
            Ok(result) => result,
            Err(TuneError::InfeasibleWithinCap(best)) => *best,
            Err(other) => return Err(other),
        };
        lambdas.set(constraints[dim].id.clone(), outcome.lambda);
        model = outcome.model;
        fits_performed += outcome.probes.len();
        clamp_warnings += outcome.clamp_warnings;
    };

    let gaps = validation_gaps(constraints, dataset, assignment, split, &model)?;
    let per_constraint_fp = constraints
        .iter()
        .zip(&gaps)
        .map(|(c, &g)| (c.id.clone(), g))
        .collect();
    Ok(MultiTuneResult {
        model,
        lambdas,
        per_constraint_fp,
        satisfied,
        iterations,
        fits_performed,
        clamp_warnings,
        dimension_trace,
    })
}

/// Exhaustive lattice search over `[0, grid_max]^k` in steps of `grid_step`.
/// Among satisfied points the one with the best validation accuracy wins;
/// with no satisfied point the best-accuracy point is returned with
/// `satisfied = false`.
pub fn grid_search(
    dataset: &Dataset,
    split: &DataSplit,
    assignment: &GroupAssignment,
    constraints: &[FairnessConstraint],
    learner: &dyn WeightedLearner,
    config: &TunerConfig,
    grid_step: f64,
    grid_max: f64,
) -> Result<MultiTuneResult, TuneError> {
    unique_ids(constraints)?;
    if constraints.is_empty() || grid_step <= 0.0 || grid_max < 0.0 {
        return Err(TuneError::BadConfig(
            "grid search needs constraints and a positive step".to_string(),
        ));
    }
    for constraint in constraints {
        check_groups_present(dataset, split, assignment, constraint)?;
    }
    let k = constraints.len();
    let steps = (grid_max / grid_step).round() as usize;
    let values: Vec<f64> = (0..=steps).map(|s| s as f64 * grid_step).collect();

    // Model-parameterized metrics take their prediction denominators from
    // the unconstrained baseline throughout the lattice.
    let needs_model = constraints
        .iter()
        .any(|c| c.metric.parameterized_by_model());
    let mut fits_performed = 0;
    let mut clamp_warnings = 0;
    let baseline = if needs_model {
        let weights =
            derive_weights_multi(&LambdaVector::new(), constraints, dataset, assignment, None)?;
        let model = learner.fit(
            dataset,
            &split.train,
            weights.as_slice(),
            config.seed,
            None,
        )?;
        fits_performed += 1;
        Some(model)
    } else {
        None
    };

    struct Candidate {
        model: TrainedModel,
        lambdas: LambdaVector,
        gaps: Vec<f64>,
        ap: f64,
    }
    let mut best_satisfied: Option<Candidate> = None;
    let mut best_overall: Option<Candidate> = None;
    let mut previous: Option<TrainedModel> = None;

    let mut odometer = vec![0usize; k];
    loop {
        let mut lambdas = LambdaVector::new();
        for (j, &v) in odometer.iter().enumerate() {
            lambdas.set(constraints[j].id.clone(), values[v]);
        }
        let weights =
            derive_weights_multi(&lambdas, constraints, dataset, assignment, baseline.as_ref())?;
        clamp_warnings += usize::from(weights.clamp_occurred());
        let warm = if config.warm_start && learner.supports_warm_start() {
            previous.as_ref()
        } else {
            None
        };
        let model = learner.fit(
            dataset,
            &split.train,
            weights.as_slice(),
            config.seed,
            warm,
        )?;
        fits_performed += 1;
        let gaps = validation_gaps(constraints, dataset, assignment, split, &model)?;
        let ap = accuracy(dataset, &split.validation, &model)?;
        let satisfied = gaps
            .iter()
            .zip(constraints)
            .all(|(g, c)| g.abs() <= c.epsilon);
        let candidate = Candidate {
            model: model.clone(),
            lambdas,
            gaps,
            ap,
        };
        if best_overall.as_ref().map_or(true, |b| ap > b.ap) {
            best_overall = Some(Candidate {
                model: candidate.model.clone(),
                lambdas: candidate.lambdas.clone(),
                gaps: candidate.gaps.clone(),
                ap,
            });
        }
        if satisfied && best_satisfied.as_ref().map_or(true, |b| ap > b.ap) {
            best_satisfied = Some(candidate);
        }
        previous = Some(model);

        // odometer increment, last dimension fastest
        let mut j = k;
        loop {
            if j == 0 {
                break;
            }
            j -= 1;
            if odometer[j] + 1 < values.len() {
                odometer[j] += 1;
                break;
            }
            odometer[j] = 0;
        }
        if odometer.iter().all(|&v| v == 0) {
            break;
        }
    }

    let satisfied = best_satisfied.is_some();
    let chosen = best_satisfied
        .or(best_overall)
        .expect("lattice has at least one point");
    let per_constraint_fp = constraints
        .iter()
        .zip(&chosen.gaps)
        .map(|(c, &g)| (c.id.clone(), g))
        .collect();
    Ok(MultiTuneResult {
        model: chosen.model,
        lambdas: chosen.lambdas,
        per_constraint_fp,
        satisfied,
        iterations: 0,
        fits_performed,
        clamp_warnings,
        dimension_trace: Vec::new(),
    })
}

/// One evaluated lambda pair of a two-constraint diagnostic sweep.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct RegionPoint {
    pub lambda_1: f64,
    pub lambda_2: f64,
    pub fp_1: f64,
    pub fp_2: f64,
    pub ap: f64,
}

/// Gap/accuracy surface over a two-dimensional lambda grid.
#[derive(Debug, Clone, PartialEq)]
pub struct RegionSample {
    pub points: Vec<RegionPoint>,
}

impl RegionSample {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("lambda_1,lambda_2,fp_1,fp_2,ap\n");
        for p in &self.points {
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                p.lambda_1, p.lambda_2, p.fp_1, p.fp_2, p.ap
            ));
        }
        out
    }
}

/// Fits every `(lambda_1, lambda_2)` combination and records both gaps and
/// the validation accuracy. Exactly two constraints are supported.
pub fn sample_region(
    dataset: &Dataset,
    split: &DataSplit,
    assignment: &GroupAssignment,
    constraints: &[FairnessConstraint],
    learner: &dyn WeightedLearner,
    config: &TunerConfig,
    grid_1: &[f64],
    grid_2: &[f64],
) -> Result<RegionSample, TuneError> {
    if constraints.len() != 2 {
        return Err(TuneError::BadConfig(format!(
            "region sampling is a two-constraint diagnostic, got {}",
            constraints.len()
        )));
    }
    let needs_model = constraints
        .iter()
        .any(|c| c.metric.parameterized_by_model());
    let baseline = if needs_model {
        let weights =
            derive_weights_multi(&LambdaVector::new(), constraints, dataset, assignment, None)?;
        Some(learner.fit(
            dataset,
            &split.train,
            weights.as_slice(),
            config.seed,
            None,
        )?)
    } else {
        None
    };
    let mut points = Vec::with_capacity(grid_1.len() * grid_2.len());
    let mut previous: Option<TrainedModel> = None;
    for &lambda_1 in grid_1 {
        for &lambda_2 in grid_2 {
            let mut lambdas = LambdaVector::new();
            lambdas.set(constraints[0].id.clone(), lambda_1);
            lambdas.set(constraints[1].id.clone(), lambda_2);
            let weights = derive_weights_multi(
                &lambdas,
                constraints,
                dataset,
                assignment,
                baseline.as_ref(),
            )?;
            let warm = if config.warm_start && learner.supports_warm_start() {
                previous.as_ref()
            } else {
                None
            };
            let model = learner.fit(
                dataset,
                &split.train,
                weights.as_slice(),
                config.seed,
                warm,
            )?;
            let gaps = validation_gaps(constraints, dataset, assignment, split, &model)?;
            let ap = accuracy(dataset, &split.validation, &model)?;
            points.push(RegionPoint {
                lambda_1,
                lambda_2,
                fp_1: gaps[0],
                fp_2: gaps[1],
                ap,
            });
            previous = Some(model);
        }
    }
    Ok(RegionSample { points })
}
