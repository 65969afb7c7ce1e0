//! Single-constraint trade-off tuning.
//!
//! The tuner trains an unconstrained model first and returns it when it
//! already sits inside the fairness band. Otherwise it normalizes the group
//! order so the signed gap starts below `-epsilon`, brackets the trade-off
//! hyperparameter (exponential doubling when weights are constant given
//! lambda, delta-steps with lagged predictions when they depend on the
//! model), and bisects the bracket until its width drops under `tau`. All
//! accept/reject decisions read the validation split; training always uses
//! the train split.
//!
//! Group swaps are realized by negating lambda rather than rewriting the
//! constraint: swapping g1/g2 in the weight formula is exactly a sign flip.
//! Reported lambdas and gaps are always in the caller's group orientation.

use crate::data::{DataSplit, Dataset};
use crate::grouping::GroupAssignment;
use crate::learners::{LearnError, TrainedModel, WeightedLearner};
use crate::metrics::{accuracy, fairness_gap_within, intersect_sorted, MetricError};
use crate::weighting::{
    derive_weights, FairnessConstraint, WeightError, WeightVector,
};

use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TunerConfig {
    /// Binary-search resolution on lambda.
    pub tau: f64,
    /// Linear-search step for model-parameterized weights.
    pub delta: f64,
    /// Ceiling for the bracketing searches.
    pub lambda_cap: f64,
    pub seed: u64,
    /// Chain each probe's fit from the previous model when the learner
    /// supports it.
    pub warm_start: bool,
}

impl Default for TunerConfig {
    fn default() -> Self {
        Self {
            tau: 1e-4,
            delta: 1e-3,
            lambda_cap: (1u64 << 20) as f64,
            seed: 0,
            warm_start: true,
        }
    }
}

impl TunerConfig {
    pub fn validate(&self) -> Result<(), TuneError> {
        if !(0.0 < self.tau && self.tau < self.delta && self.delta < self.lambda_cap) {
            return Err(TuneError::BadConfig(format!(
                "need 0 < tau < delta < lambda_cap, got tau={} delta={} cap={}",
                self.tau, self.delta, self.lambda_cap
            )));
        }
        Ok(())
    }
}

/// One evaluated probe: the lambda that was fit and the validation
/// accuracy/gap it produced.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct TradeoffPoint {
    pub lambda: f64,
    pub ap: f64,
    pub fp: f64,
}

#[derive(Debug, Clone)]
pub struct TuneResult {
    pub model: TrainedModel,
    pub lambda: f64,
    pub validation_ap: f64,
    pub validation_fp: f64,
    pub satisfied: bool,
    /// Every fit performed, in evaluation order.
    pub probes: Vec<TradeoffPoint>,
    /// Number of probes whose weight vector needed clamping.
    pub clamp_warnings: usize,
}

impl TuneResult {
    pub fn fits(&self) -> usize {
        self.probes.len()
    }
}

#[derive(Debug, Error)]
pub enum TuneError {
    #[error(transparent)]
    Learn(#[from] LearnError),
    #[error(transparent)]
    Metric(#[from] MetricError),
    #[error(transparent)]
    Weight(#[from] WeightError),
    #[error("no lambda up to the cap reached the fairness band")]
    InfeasibleWithinCap(Box<TuneResult>),
    #[error("group {group:?} has no examples in the {split} split")]
    GroupMissingFromSplit { group: String, split: &'static str },
    #[error("bad tuner config: {0}")]
    BadConfig(String),
}

/// How a search probes one scalar dimension: produce weights for a signed
/// lambda and evaluate the signed validation gap of the dimension's
/// constraint.
pub(crate) trait ProbePlan {
    fn weights(
        &self,
        lambda: f64,
        prediction_model: Option<&TrainedModel>,
    ) -> Result<WeightVector, TuneError>;
    fn validation_gap(&self, model: &TrainedModel) -> Result<f64, TuneError>;
    /// Whether weights depend on current predictions (FOR/FDR style).
    fn model_dependent(&self) -> bool;
    fn epsilon(&self) -> f64;
}

pub(crate) struct SinglePlan<'a> {
    pub constraint: &'a FairnessConstraint,
    pub dataset: &'a Dataset,
    pub assignment: &'a GroupAssignment,
    pub split: &'a DataSplit,
}

impl ProbePlan for SinglePlan<'_> {
    fn weights(
        &self,
        lambda: f64,
        prediction_model: Option<&TrainedModel>,
    ) -> Result<WeightVector, TuneError> {
        Ok(derive_weights(
            lambda,
            self.constraint,
            self.dataset,
            self.assignment,
            prediction_model,
        )?)
    }

    fn validation_gap(&self, model: &TrainedModel) -> Result<f64, TuneError> {
        Ok(fairness_gap_within(
            self.constraint,
            self.dataset,
            self.assignment,
            &self.split.validation,
            model,
        )?)
    }

    fn model_dependent(&self) -> bool {
        self.constraint.metric.parameterized_by_model()
    }

    fn epsilon(&self) -> f64 {
        self.constraint.epsilon
    }
}

/// Shared probe bookkeeping: fits, probe log, warm-start chaining.
pub(crate) struct SearchState<'a> {
    dataset: &'a Dataset,
    split: &'a DataSplit,
    learner: &'a dyn WeightedLearner,
    config: &'a TunerConfig,
    probes: Vec<TradeoffPoint>,
    clamp_warnings: usize,
    last_model: Option<TrainedModel>,
}

pub(crate) struct Probe {
    pub model: TrainedModel,
    pub fp: f64,
    pub ap: f64,
}

impl<'a> SearchState<'a> {
    pub(crate) fn new(
        dataset: &'a Dataset,
        split: &'a DataSplit,
        learner: &'a dyn WeightedLearner,
        config: &'a TunerConfig,
    ) -> Self {
        Self {
            dataset,
            split,
            learner,
            config,
            probes: Vec::new(),
            clamp_warnings: 0,
            last_model: None,
        }
    }

    /// Fits at a signed lambda and records the probe.
    fn fit_at<P: ProbePlan>(
        &mut self,
        plan: &P,
        lambda: f64,
        prediction_model: Option<&TrainedModel>,
    ) -> Result<Probe, TuneError> {
        let weights = plan.weights(lambda, prediction_model)?;
        if weights.clamp_occurred() {
            self.clamp_warnings += 1;
        }
        let warm = if self.config.warm_start && self.learner.supports_warm_start() {
            self.last_model.as_ref()
        } else {
            None
        };
        let model = self.learner.fit(
            self.dataset,
            &self.split.train,
            weights.as_slice(),
            self.config.seed,
            warm,
        )?;
        let fp = plan.validation_gap(&model)?;
        let ap = accuracy(self.dataset, &self.split.validation, &model)?;
        self.probes.push(TradeoffPoint { lambda, ap, fp });
        self.last_model = Some(model.clone());
        Ok(Probe { model, fp, ap })
    }

    /// Seeds the warm-start chain with an externally trained model.
    pub(crate) fn seed_warm_start(&mut self, model: TrainedModel) {
        self.last_model = Some(model);
    }

    fn result(&self, probe: Probe, lambda: f64, epsilon: f64) -> TuneResult {
        TuneResult {
            satisfied: probe.fp.abs() <= epsilon,
            model: probe.model,
            lambda,
            validation_ap: probe.ap,
            validation_fp: probe.fp,
            probes: self.probes.clone(),
            clamp_warnings: self.clamp_warnings,
        }
    }
}

struct Bracket {
    lambda_lower: f64,
    model_lower: TrainedModel,
    lambda_upper: f64,
    upper: Probe,
}

/// Runs the full search for one dimension. `sign` maps the nonnegative
/// working lambda onto the caller's orientation; `initial_prediction_model`
/// seeds weight computation when frozen model-dependent terms need
/// predictions before the first fit.
pub(crate) fn run_search<P: ProbePlan>(
    state: &mut SearchState,
    plan: &P,
    initial_prediction_model: Option<&TrainedModel>,
) -> Result<TuneResult, TuneError> {
    let epsilon = plan.epsilon();
    let theta0 = state.fit_at(plan, 0.0, initial_prediction_model)?;
    if theta0.fp.abs() <= epsilon {
        return Ok(state.result(theta0, 0.0, epsilon));
    }
    // Normalize orientation: search positive working lambdas with the gap
    // starting below -epsilon.
    let sign = if theta0.fp > 0.0 { -1.0 } else { 1.0 };

    let bracket = if plan.model_dependent() {
        bracket_linear(state, plan, sign, theta0.model)?
    } else {
        bracket_exponential(state, plan, sign, theta0.model)?
    };
    bisect(state, plan, sign, bracket)
}

/// Working-space gap: negative while the constraint is violated in the
/// direction the search pushes against.
fn working_gap(sign: f64, fp: f64) -> f64 {
    sign * fp
}

fn bracket_exponential<P: ProbePlan>(
    state: &mut SearchState,
    plan: &P,
    sign: f64,
    theta0: TrainedModel,
) -> Result<Bracket, TuneError> {
    let epsilon = plan.epsilon();
    let cap = state.config.lambda_cap;
    let mut lambda_lower = 0.0;
    let mut model_lower = theta0;
    let mut lambda_upper: f64 = 1.0;
    let mut upper = state.fit_at(plan, sign * lambda_upper, None)?;
    while working_gap(sign, upper.fp) < -epsilon {
        if lambda_upper >= cap {
            let lambda = sign * lambda_upper;
            return Err(TuneError::InfeasibleWithinCap(Box::new(
                state.result(upper, lambda, epsilon),
            )));
        }
        lambda_lower = lambda_upper;
        model_lower = upper.model;
        lambda_upper = (2.0 * lambda_upper).min(cap);
        upper = state.fit_at(plan, sign * lambda_upper, None)?;
    }
    Ok(Bracket {
        lambda_lower,
        model_lower,
        lambda_upper,
        upper,
    })
}

fn bracket_linear<P: ProbePlan>(
    state: &mut SearchState,
    plan: &P,
    sign: f64,
    theta0: TrainedModel,
) -> Result<Bracket, TuneError> {
    let epsilon = plan.epsilon();
    let delta = state.config.delta;
    let cap = state.config.lambda_cap;
    let mut lambda_lower = 0.0;
    let mut model_lower = theta0;
    loop {
        let lambda_upper = lambda_lower + delta;
        // Weights for the next step reuse the predictions of the model at
        // the current lower bound.
        let upper = state.fit_at(plan, sign * lambda_upper, Some(&model_lower))?;
        if working_gap(sign, upper.fp) >= -epsilon {
            return Ok(Bracket {
                lambda_lower,
                model_lower,
                lambda_upper,
                upper,
            });
        }
        if lambda_upper >= cap {
            let lambda = sign * lambda_upper;
            return Err(TuneError::InfeasibleWithinCap(Box::new(
                state.result(upper, lambda, epsilon),
            )));
        }
        lambda_lower = lambda_upper;
        model_lower = upper.model;
    }
}

fn bisect<P: ProbePlan>(
    state: &mut SearchState,
    plan: &P,
    sign: f64,
    bracket: Bracket,
) -> Result<TuneResult, TuneError> {
    let epsilon = plan.epsilon();
    let tau = state.config.tau;
    let model_dependent = plan.model_dependent();
    let Bracket {
        mut lambda_lower,
        mut model_lower,
        mut lambda_upper,
        mut upper,
    } = bracket;

    while lambda_upper - lambda_lower >= tau {
        let lambda_mid = 0.5 * (lambda_lower + lambda_upper);
        let prediction_model = model_dependent.then_some(&model_lower);
        let mid = state.fit_at(plan, sign * lambda_mid, prediction_model)?;
        if working_gap(sign, mid.fp) < -epsilon {
            lambda_lower = lambda_mid;
            model_lower = mid.model;
        } else {
            lambda_upper = lambda_mid;
            upper = mid;
        }
    }
    // The upper end is the smallest probed lambda inside the band; returning
    // it (rather than the last midpoint) keeps the result on the satisfying
    // side under a monotone response.
    Ok(state.result(upper, sign * lambda_upper, epsilon))
}

pub(crate) fn check_groups_present(
    dataset: &Dataset,
    split: &DataSplit,
    assignment: &GroupAssignment,
    constraint: &FairnessConstraint,
) -> Result<(), TuneError> {
    let _ = dataset;
    for gid in [&constraint.g1, &constraint.g2] {
        let group = assignment
            .group(gid)
            .ok_or_else(|| TuneError::Weight(WeightError::UnknownGroup(gid.clone())))?;
        for (indices, name) in [(&split.train, "train"), (&split.validation, "validation")] {
            if intersect_sorted(group, indices).is_empty() {
                return Err(TuneError::GroupMissingFromSplit {
                    group: gid.clone(),
                    split: name,
                });
            }
        }
    }
    Ok(())
}

/// Tunes the trade-off hyperparameter for one fairness constraint.
pub fn tune_single(
    dataset: &Dataset,
    split: &DataSplit,
    assignment: &GroupAssignment,
    constraint: &FairnessConstraint,
    learner: &dyn WeightedLearner,
    config: &TunerConfig,
) -> Result<TuneResult, TuneError> {
    config.validate()?;
    check_groups_present(dataset, split, assignment, constraint)?;
    let plan = SinglePlan {
        constraint,
        dataset,
        assignment,
        split,
    };
    let mut state = SearchState::new(dataset, split, learner, config);
    run_search(&mut state, &plan, None)
}

/// Doubling search for the lambda bracket, for weights that are constant
/// given lambda. Expects the constraint already oriented so the lambda=0
/// model's gap is at or below `-epsilon` (as `tune_single` arranges).
pub fn exponential_search(
    dataset: &Dataset,
    split: &DataSplit,
    assignment: &GroupAssignment,
    constraint: &FairnessConstraint,
    learner: &dyn WeightedLearner,
    config: &TunerConfig,
) -> Result<(f64, f64), TuneError> {
    config.validate()?;
    let plan = SinglePlan {
        constraint,
        dataset,
        assignment,
        split,
    };
    let mut state = SearchState::new(dataset, split, learner, config);
    let theta0 = state.fit_at(&plan, 0.0, None)?;
    let bracket = bracket_exponential(&mut state, &plan, 1.0, theta0.model)?;
    Ok((bracket.lambda_lower, bracket.lambda_upper))
}

/// Delta-step search for the lambda bracket, for model-parameterized
/// weights; each step computes weights with the previous step's predictions.
/// Expects the same orientation precondition as [`exponential_search`].
pub fn linear_search(
    dataset: &Dataset,
    split: &DataSplit,
    assignment: &GroupAssignment,
    constraint: &FairnessConstraint,
    learner: &dyn WeightedLearner,
    config: &TunerConfig,
) -> Result<(f64, f64), TuneError> {
    config.validate()?;
    let plan = SinglePlan {
        constraint,
        dataset,
        assignment,
        split,
    };
    let mut state = SearchState::new(dataset, split, learner, config);
    let theta0 = state.fit_at(&plan, 0.0, None)?;
    let bracket = bracket_linear(&mut state, &plan, 1.0, theta0.model)?;
    Ok((bracket.lambda_lower, bracket.lambda_upper))
}
