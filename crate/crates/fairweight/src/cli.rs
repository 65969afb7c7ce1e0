//! Config-driven commands: audit, train, sweep, compare-grid, gen-synth.
//!
//! Every command loads the dataset, splits it with the config seed, and
//! resolves groups before doing its work; outputs land in the configured
//! output directory. Infeasible tuning is reported (`satisfied = false`),
//! not raised: only config and data problems are fatal.

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::time::Instant;

use thiserror::Error;

use crate::config::{ConfigError, RunConfig};
use crate::data::{load_csv, split, DataError, DataSplit, Dataset, SplitSpec};
use crate::grouping::{assign_groups, GroupAssignment, GroupingError};
use crate::learners::{LearnError, TrainedModel, WeightedLearner};
use crate::metrics::{
    accuracy, fairness_value, intersect_sorted, MetricError, MetricSpec,
};
use crate::multitune::{grid_search, hill_climb, sample_region};
use crate::report::{
    save_model, AuditSection, AuditSplit, DatasetSummary, MetricAudit, Outcome, PersistError,
    Report, SplitEval,
};
use crate::synth::generate;
use crate::tuning::{tune_single, TradeoffPoint, TuneError, TuneResult};
use crate::weighting::FairnessConstraint;

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Grouping(#[from] GroupingError),
    #[error("constraint {constraint:?} references group {group:?} absent from the assignment")]
    UnknownGroup { constraint: String, group: String },
    #[error("{command} requires {requirement}")]
    BadInvocation {
        command: &'static str,
        requirement: &'static str,
    },
    #[error(transparent)]
    Learn(#[from] LearnError),
    #[error(transparent)]
    Metric(#[from] MetricError),
    #[error(transparent)]
    Tune(#[from] TuneError),
    #[error(transparent)]
    Persist(#[from] PersistError),
    #[error("cannot create {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl CliError {
    /// 2 for configuration/data problems, 1 for runtime failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_)
            | CliError::Data(_)
            | CliError::Grouping(_)
            | CliError::UnknownGroup { .. }
            | CliError::BadInvocation { .. } => 2,
            _ => 1,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Config(_) => "config",
            CliError::Data(DataError::Io { .. }) => "not_found",
            CliError::Data(_) => "data",
            CliError::Grouping(_) | CliError::UnknownGroup { .. } => "grouping",
            CliError::BadInvocation { .. } => "usage",
            CliError::Learn(_) => "learner",
            CliError::Metric(_) => "metric",
            CliError::Tune(_) => "tuning",
            CliError::Persist(_) | CliError::Io { .. } => "io",
        }
    }
}

struct Prepared {
    dataset: Dataset,
    split: DataSplit,
    assignment: GroupAssignment,
    learner: Box<dyn WeightedLearner>,
    constraints: Vec<FairnessConstraint>,
}

fn prepare(config: &RunConfig) -> Result<Prepared, CliError> {
    let dataset = load_csv(
        &config.data_path,
        &config.label_column,
        &config.positive_label,
        config.feature_columns.as_deref(),
    )?;
    let spec = SplitSpec::new(
        config.split_fractions.0,
        config.split_fractions.1,
        config.split_fractions.2,
        config.seed,
    )?;
    let data_split = split(&dataset, &spec)?;
    let assignment = assign_groups(&dataset, &config.grouping)?;
    let constraints = config.fairness_constraints()?;
    for constraint in &constraints {
        for group in [&constraint.g1, &constraint.g2] {
            if assignment.group(group).is_none() {
                return Err(CliError::UnknownGroup {
                    constraint: constraint.id.clone(),
                    group: group.clone(),
                });
            }
        }
    }
    Ok(Prepared {
        dataset,
        split: data_split,
        assignment,
        learner: config.learner.build(),
        constraints,
    })
}

fn ensure_out_dir(config: &RunConfig) -> Result<(), CliError> {
    std::fs::create_dir_all(&config.output_dir).map_err(|source| CliError::Io {
        path: config.output_dir.display().to_string(),
        source,
    })
}

fn dataset_summary(prepared: &Prepared) -> DatasetSummary {
    DatasetSummary {
        rows: prepared.dataset.len(),
        train: prepared.split.train.len(),
        validation: prepared.split.validation.len(),
        test: prepared.split.test.len(),
        group_sizes: prepared
            .assignment
            .iter()
            .map(|(id, members)| (id.to_string(), members.len()))
            .collect(),
    }
}

fn split_eval(
    prepared: &Prepared,
    constraints: &[FairnessConstraint],
    subset: &[usize],
    model: &TrainedModel,
) -> Result<SplitEval, CliError> {
    let ap = accuracy(&prepared.dataset, subset, model)?;
    let mut fp = BTreeMap::new();
    for constraint in constraints {
        let gap = crate::metrics::fairness_gap_within(
            constraint,
            &prepared.dataset,
            &prepared.assignment,
            subset,
            model,
        )?;
        fp.insert(constraint.id.clone(), gap);
    }
    Ok(SplitEval { ap, fp })
}

fn outcome(
    prepared: &Prepared,
    constraints: &[FairnessConstraint],
    lambdas: BTreeMap<String, f64>,
    model: &TrainedModel,
) -> Result<Outcome, CliError> {
    let validation = split_eval(prepared, constraints, &prepared.split.validation, model)?;
    let test = split_eval(prepared, constraints, &prepared.split.test, model)?;
    let satisfied = constraints
        .iter()
        .all(|c| validation.fp[&c.id].abs() <= c.epsilon);
    Ok(Outcome {
        lambdas,
        satisfied,
        validation,
        test,
    })
}

fn fit_unweighted(prepared: &Prepared, seed: u64) -> Result<TrainedModel, CliError> {
    let weights = vec![1.0; prepared.dataset.len()];
    Ok(prepared.learner.fit(
        &prepared.dataset,
        &prepared.split.train,
        &weights,
        seed,
        None,
    )?)
}

fn audit_split(prepared: &Prepared, subset: &[usize], model: &TrainedModel) -> AuditSplit {
    let metrics: [(&str, MetricSpec); 6] = [
        ("mr", MetricSpec::Mr),
        ("sp", MetricSpec::Sp),
        ("fpr", MetricSpec::Fpr),
        ("fnr", MetricSpec::Fnr),
        ("for", MetricSpec::For),
        ("fdr", MetricSpec::Fdr),
    ];
    let groups: Vec<(String, Vec<usize>)> = prepared
        .assignment
        .iter()
        .map(|(id, members)| (id.to_string(), intersect_sorted(members, subset)))
        .collect();
    let smallest = groups.iter().map(|(_, m)| m.len()).min().unwrap_or(0);
    let noise_bound = if smallest > 0 {
        3.0 * (0.5 / smallest as f64).sqrt()
    } else {
        f64::INFINITY
    };

    let mut audited = BTreeMap::new();
    for (name, metric) in metrics {
        let mut entry = MetricAudit::default();
        for (gid, members) in &groups {
            match fairness_value(&metric, members, &prepared.dataset, model) {
                Ok(v) => {
                    entry.values.insert(gid.clone(), v);
                }
                Err(e) => entry.errors.push(format!("{gid}: {e}")),
            }
        }
        for (i, (ga, _)) in groups.iter().enumerate() {
            for (gb, _) in groups.iter().skip(i + 1) {
                if let (Some(va), Some(vb)) = (entry.values.get(ga), entry.values.get(gb)) {
                    entry.gaps.insert(format!("{ga}-{gb}"), va - vb);
                }
            }
        }
        audited.insert(name.to_string(), entry);
    }
    let ap = accuracy(&prepared.dataset, subset, model).unwrap_or(f64::NAN);
    AuditSplit {
        ap,
        noise_bound,
        metrics: audited,
    }
}

/// Trains the unconstrained model and reports every built-in metric per
/// group, with pairwise gaps, on validation and test.
pub fn cmd_audit(config: &RunConfig) -> Result<Report, CliError> {
    let started = Instant::now();
    let prepared = prepare(config)?;
    ensure_out_dir(config)?;
    let model = fit_unweighted(&prepared, config.seed)?;
    let baseline = outcome(&prepared, &prepared.constraints, BTreeMap::new(), &model)?;
    let audit = AuditSection {
        validation: audit_split(&prepared, &prepared.split.validation, &model),
        test: audit_split(&prepared, &prepared.split.test, &model),
    };
    let report = Report {
        command: "audit".to_string(),
        seed: config.seed,
        learner: config.learner.kind().to_string(),
        dataset: dataset_summary(&prepared),
        baseline: Some(baseline),
        tuned: None,
        audit: Some(audit),
        probes: Vec::new(),
        clamp_warnings: 0,
        fits_performed: 1,
        wall_seconds: started.elapsed().as_secs_f64(),
        notes: Vec::new(),
    };
    report.save(&config.output_dir.join("report.json"))?;
    Ok(report)
}

/// Tunes under the configured constraints (single-constraint search or
/// hill-climbing) and persists the model plus a report.
pub fn cmd_train(config: &RunConfig) -> Result<Report, CliError> {
    let started = Instant::now();
    let prepared = prepare(config)?;
    if prepared.constraints.is_empty() {
        return Err(CliError::BadInvocation {
            command: "train",
            requirement: "at least one constraint entry",
        });
    }
    ensure_out_dir(config)?;

    let baseline_model = fit_unweighted(&prepared, config.seed)?;
    let baseline = outcome(
        &prepared,
        &prepared.constraints,
        BTreeMap::new(),
        &baseline_model,
    )?;

    let mut notes = Vec::new();
    let (model, lambdas, probes, clamp_warnings, fits) = if prepared.constraints.len() == 1 {
        let constraint = &prepared.constraints[0];
        let result = match tune_single(
            &prepared.dataset,
            &prepared.split,
            &prepared.assignment,
            constraint,
            prepared.learner.as_ref(),
            &config.tuner,
        ) {
            Ok(result) => result,
            Err(TuneError::InfeasibleWithinCap(best)) => {
                notes.push(format!(
                    "no lambda up to the cap {} satisfied constraint {:?}; reporting the closest model",
                    config.tuner.lambda_cap, constraint.id
                ));
                *best
            }
            Err(other) => return Err(other.into()),
        };
        let lambdas: BTreeMap<String, f64> =
            [(constraint.id.clone(), result.lambda)].into_iter().collect();
        let fits = result.fits();
        (
            result.model,
            lambdas,
            result.probes,
            result.clamp_warnings,
            fits,
        )
    } else {
        let result = hill_climb(
            &prepared.dataset,
            &prepared.split,
            &prepared.assignment,
            &prepared.constraints,
            prepared.learner.as_ref(),
            &config.tuner,
        )?;
        if !result.satisfied {
            notes.push(format!(
                "hill-climbing stopped unsatisfied after {} iterations (cap 5k = {})",
                result.iterations,
                5 * prepared.constraints.len()
            ));
        }
        let lambdas = result.lambdas.iter().map(|(k, v)| (k.to_string(), v)).collect();
        (
            result.model,
            lambdas,
            Vec::new(),
            result.clamp_warnings,
            result.fits_performed,
        )
    };

    let tuned = outcome(&prepared, &prepared.constraints, lambdas, &model)?;
    save_model(&model, &config.output_dir.join("model.json"))?;
    let report = Report {
        command: "train".to_string(),
        seed: config.seed,
        learner: config.learner.kind().to_string(),
        dataset: dataset_summary(&prepared),
        baseline: Some(baseline),
        tuned: Some(tuned),
        audit: None,
        probes,
        clamp_warnings,
        fits_performed: fits + 1,
        wall_seconds: started.elapsed().as_secs_f64(),
        notes,
    };
    report.save(&config.output_dir.join("report.json"))?;
    Ok(report)
}

fn csv_num(v: f64) -> String {
    if v.is_nan() {
        "nan".to_string()
    } else {
        format!("{v}")
    }
}

/// Re-tunes the single configured constraint for each disparity allowance
/// and writes one trade-off row per epsilon.
pub fn cmd_sweep(config: &RunConfig, epsilons: &[f64]) -> Result<Report, CliError> {
    let started = Instant::now();
    let prepared = prepare(config)?;
    if prepared.constraints.len() != 1 {
        return Err(CliError::BadInvocation {
            command: "sweep",
            requirement: "exactly one constraint entry",
        });
    }
    if epsilons.is_empty() {
        return Err(CliError::BadInvocation {
            command: "sweep",
            requirement: "a nonempty --epsilons list",
        });
    }
    ensure_out_dir(config)?;

    let baseline_model = fit_unweighted(&prepared, config.seed)?;
    let baseline = outcome(
        &prepared,
        &prepared.constraints,
        BTreeMap::new(),
        &baseline_model,
    )?;

    let mut notes = Vec::new();
    let mut csv = String::from(
        "epsilon,lambda,validation_ap,validation_fp,test_ap,test_fp,fits,seconds\n",
    );
    let mut all_probes: Vec<TradeoffPoint> = Vec::new();
    let mut clamp_warnings = 0;
    let mut fits_performed = 1;
    let mut test_aps: Vec<(f64, f64)> = Vec::new();

    for &epsilon in epsilons {
        let mut constraint = prepared.constraints[0].clone();
        constraint.epsilon = epsilon;
        let row_started = Instant::now();
        let result: Result<TuneResult, TuneError> = tune_single(
            &prepared.dataset,
            &prepared.split,
            &prepared.assignment,
            &constraint,
            prepared.learner.as_ref(),
            &config.tuner,
        )
        .or_else(|e| match e {
            TuneError::InfeasibleWithinCap(best) => Ok(*best),
            other => Err(other),
        });
        let seconds = row_started.elapsed().as_secs_f64();
        match result {
            Ok(result) => {
                let test = split_eval(
                    &prepared,
                    std::slice::from_ref(&constraint),
                    &prepared.split.test,
                    &result.model,
                )?;
                csv.push_str(&format!(
                    "{},{},{},{},{},{},{},{}\n",
                    csv_num(epsilon),
                    csv_num(result.lambda),
                    csv_num(result.validation_ap),
                    csv_num(result.validation_fp),
                    csv_num(test.ap),
                    csv_num(test.fp[&constraint.id]),
                    result.fits(),
                    seconds,
                ));
                test_aps.push((epsilon, test.ap));
                fits_performed += result.fits();
                clamp_warnings += result.clamp_warnings;
                all_probes.extend(result.probes);
            }
            Err(e) => {
                notes.push(format!("epsilon {epsilon}: {e}"));
                csv.push_str(&format!(
                    "{},nan,nan,nan,nan,nan,0,{}\n",
                    csv_num(epsilon),
                    seconds
                ));
            }
        }
    }

    // Soft diagnostic: tightening epsilon should not raise test accuracy.
    let decreasing = epsilons.windows(2).all(|w| w[1] < w[0]);
    if decreasing {
        let violated = test_aps
            .windows(2)
            .any(|w| w[1].1 > w[0].1 + 1e-12);
        if violated {
            notes.push(
                "soft diagnostic: test accuracy increased while epsilon decreased".to_string(),
            );
        }
    }

    let csv_path = config.output_dir.join("tradeoff.csv");
    std::fs::write(&csv_path, csv).map_err(|source| CliError::Io {
        path: csv_path.display().to_string(),
        source,
    })?;

    let report = Report {
        command: "sweep".to_string(),
        seed: config.seed,
        learner: config.learner.kind().to_string(),
        dataset: dataset_summary(&prepared),
        baseline: Some(baseline),
        tuned: None,
        audit: None,
        probes: all_probes,
        clamp_warnings,
        fits_performed,
        wall_seconds: started.elapsed().as_secs_f64(),
        notes,
    };
    report.save(&config.output_dir.join("report.json"))?;
    Ok(report)
}

/// Runs hill-climbing and the grid-search baseline on the same constraints
/// and reports both arms; with two constraints the sampled lambda surface
/// is exported as region.csv.
pub fn cmd_compare_grid(config: &RunConfig) -> Result<Report, CliError> {
    let started = Instant::now();
    let prepared = prepare(config)?;
    if prepared.constraints.len() < 2 {
        return Err(CliError::BadInvocation {
            command: "compare-grid",
            requirement: "at least two constraint entries",
        });
    }
    ensure_out_dir(config)?;

    let hc = hill_climb(
        &prepared.dataset,
        &prepared.split,
        &prepared.assignment,
        &prepared.constraints,
        prepared.learner.as_ref(),
        &config.tuner,
    )?;
    let grid = grid_search(
        &prepared.dataset,
        &prepared.split,
        &prepared.assignment,
        &prepared.constraints,
        prepared.learner.as_ref(),
        &config.tuner,
        config.grid_step,
        config.grid_max,
    )?;

    let mut notes = vec![
        format!(
            "hill-climb: satisfied={} fits={} iterations={}",
            hc.satisfied, hc.fits_performed, hc.iterations
        ),
        format!(
            "grid (step {}, max {}): satisfied={} fits={}",
            config.grid_step, config.grid_max, grid.satisfied, grid.fits_performed
        ),
        format!(
            "fit ratio grid/hill-climb: {:.1}",
            grid.fits_performed as f64 / hc.fits_performed as f64
        ),
    ];

    if prepared.constraints.len() == 2 {
        let steps = (config.grid_max / config.region_step).round() as usize;
        let grid_values: Vec<f64> = (0..=steps).map(|s| s as f64 * config.region_step).collect();
        let region = sample_region(
            &prepared.dataset,
            &prepared.split,
            &prepared.assignment,
            &prepared.constraints,
            prepared.learner.as_ref(),
            &config.tuner,
            &grid_values,
            &grid_values,
        )?;
        let region_path = config.output_dir.join("region.csv");
        std::fs::write(&region_path, region.to_csv()).map_err(|source| CliError::Io {
            path: region_path.display().to_string(),
            source,
        })?;
    } else {
        notes.push("region.csv skipped: it is a two-constraint diagnostic".to_string());
    }

    let hc_lambdas: BTreeMap<String, f64> =
        hc.lambdas.iter().map(|(k, v)| (k.to_string(), v)).collect();
    let grid_lambdas: BTreeMap<String, f64> =
        grid.lambdas.iter().map(|(k, v)| (k.to_string(), v)).collect();
    let tuned = outcome(&prepared, &prepared.constraints, hc_lambdas, &hc.model)?;
    let grid_outcome = outcome(&prepared, &prepared.constraints, grid_lambdas, &grid.model)?;

    save_model(&hc.model, &config.output_dir.join("model.json"))?;
    let report = Report {
        command: "compare-grid".to_string(),
        seed: config.seed,
        learner: config.learner.kind().to_string(),
        dataset: dataset_summary(&prepared),
        baseline: Some(grid_outcome),
        tuned: Some(tuned),
        audit: None,
        probes: Vec::new(),
        clamp_warnings: hc.clamp_warnings + grid.clamp_warnings,
        fits_performed: hc.fits_performed + grid.fits_performed,
        wall_seconds: started.elapsed().as_secs_f64(),
        notes,
    };
    report.save(&config.output_dir.join("report.json"))?;
    Ok(report)
}

/// Writes the planted-bias synthetic dataset configured under `synth.*`.
pub fn cmd_gen_synth(config: &RunConfig) -> Result<PathBuf, CliError> {
    ensure_out_dir(config)?;
    let dataset = generate(&config.synth);
    let path = config.output_dir.join(&config.synth_file);
    dataset.save_csv(&path)?;
    Ok(path)
}

/// Applies `--out` and `--seed` flag overrides onto a loaded config.
pub fn apply_overrides(config: &mut RunConfig, out: Option<PathBuf>, seed: Option<u64>) {
    if let Some(out) = out {
        config.output_dir = out;
    }
    if let Some(seed) = seed {
        config.seed = seed;
        config.tuner.seed = seed;
        config.synth.seed = seed;
    }
}
