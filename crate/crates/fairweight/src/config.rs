//! Flat key-value run configuration.
//!
//! The file format is one `key = value` pair per line with dotted keys,
//! `#` comments, and blank lines. No code ever executes from a config;
//! custom grouping predicates and metrics enter only through the library
//! API.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::grouping::{GroupingKind, GroupingSpec};
use crate::learners::{LogRegConfig, LogRegLearner, TreeConfig, TreeLearner, WeightedLearner};
use crate::metrics::MetricSpec;
use crate::synth::{SynthKind, SynthSpec};
use crate::tuning::TunerConfig;
use crate::weighting::FairnessConstraint;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: expected `key = value`, got {text:?}")]
    Malformed { line: usize, text: String },
    #[error("duplicate key {0:?}")]
    DuplicateKey(String),
    #[error("unknown key {0:?}")]
    UnknownKey(String),
    #[error("missing required key {0:?}")]
    MissingKey(&'static str),
    #[error("key {key:?}: cannot parse {value:?} as {expected}")]
    BadValue {
        key: String,
        value: String,
        expected: &'static str,
    },
    #[error("constraint {index}: {problem}")]
    BadConstraint { index: usize, problem: String },
}

/// One declared constraint entry before group resolution.
#[derive(Debug, Clone)]
pub struct ConstraintEntry {
    pub metric: MetricSpec,
    pub g1: String,
    pub g2: String,
    pub epsilon: f64,
}

#[derive(Debug, Clone)]
pub enum LearnerChoice {
    LogReg(LogRegConfig),
    Tree(TreeConfig),
}

impl LearnerChoice {
    pub fn build(&self) -> Box<dyn WeightedLearner> {
        match self {
            LearnerChoice::LogReg(c) => Box::new(LogRegLearner::new(*c)),
            LearnerChoice::Tree(c) => Box::new(TreeLearner::new(*c)),
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            LearnerChoice::LogReg(_) => "logreg",
            LearnerChoice::Tree(_) => "tree",
        }
    }
}

/// Everything a CLI run needs; parsed from the flat config file.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub data_path: PathBuf,
    pub label_column: String,
    pub positive_label: String,
    pub feature_columns: Option<Vec<String>>,
    pub split_fractions: (f64, f64, f64),
    pub seed: u64,
    pub grouping: GroupingSpec,
    pub constraints: Vec<ConstraintEntry>,
    pub learner: LearnerChoice,
    pub tuner: TunerConfig,
    pub grid_step: f64,
    pub grid_max: f64,
    pub region_step: f64,
    pub output_dir: PathBuf,
    pub synth: SynthSpec,
    pub synth_file: String,
}

impl RunConfig {
    pub fn from_file(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_str(&text)
    }

    pub fn from_str(text: &str) -> Result<Self, ConfigError> {
        let pairs = parse_pairs(text)?;
        build(pairs)
    }

    /// Fairness constraints with ids `c1, c2, ...` in declaration order.
    pub fn fairness_constraints(&self) -> Result<Vec<FairnessConstraint>, ConfigError> {
        self.constraints
            .iter()
            .enumerate()
            .map(|(i, entry)| {
                FairnessConstraint::new(
                    format!("c{}", i + 1),
                    entry.g1.clone(),
                    entry.g2.clone(),
                    entry.metric.clone(),
                    entry.epsilon,
                )
                .map_err(|e| ConfigError::BadConstraint {
                    index: i + 1,
                    problem: e.to_string(),
                })
            })
            .collect()
    }
}

fn parse_pairs(text: &str) -> Result<BTreeMap<String, String>, ConfigError> {
    let mut pairs = BTreeMap::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(ConfigError::Malformed {
                line: lineno + 1,
                text: raw.to_string(),
            });
        };
        let key = key.trim().to_string();
        let value = value.trim().to_string();
        if pairs.insert(key.clone(), value).is_some() {
            return Err(ConfigError::DuplicateKey(key));
        }
    }
    Ok(pairs)
}

struct Keys {
    pairs: BTreeMap<String, String>,
}

impl Keys {
    fn take(&mut self, key: &str) -> Option<String> {
        self.pairs.remove(key)
    }

    fn required(&mut self, key: &'static str) -> Result<String, ConfigError> {
        self.take(key).ok_or(ConfigError::MissingKey(key))
    }

    fn parse<T: std::str::FromStr>(
        &mut self,
        key: &str,
        default: T,
        expected: &'static str,
    ) -> Result<T, ConfigError> {
        match self.take(key) {
            None => Ok(default),
            Some(value) => value.parse().map_err(|_| ConfigError::BadValue {
                key: key.to_string(),
                value,
                expected,
            }),
        }
    }
}

fn parse_metric(
    name: &str,
    index: usize,
    fp_cost: Option<f64>,
    fn_cost: Option<f64>,
) -> Result<MetricSpec, ConfigError> {
    let metric = match name {
        "mr" => MetricSpec::Mr,
        "sp" => MetricSpec::Sp,
        "fpr" => MetricSpec::Fpr,
        "fnr" => MetricSpec::Fnr,
        "for" => MetricSpec::For,
        "fdr" => MetricSpec::Fdr,
        "aec" => {
            let (Some(fp_cost), Some(fn_cost)) = (fp_cost, fn_cost) else {
                return Err(ConfigError::BadConstraint {
                    index,
                    problem: "aec needs c_fp and c_fn".to_string(),
                });
            };
            if fp_cost < 0.0 || fn_cost < 0.0 {
                return Err(ConfigError::BadConstraint {
                    index,
                    problem: "aec costs must be nonnegative".to_string(),
                });
            }
            MetricSpec::Aec { fp_cost, fn_cost }
        }
        other => {
            return Err(ConfigError::BadConstraint {
                index,
                problem: format!("unknown metric {other:?}"),
            })
        }
    };
    Ok(metric)
}

fn build(pairs: BTreeMap<String, String>) -> Result<RunConfig, ConfigError> {
    let mut keys = Keys { pairs };

    let data_path = PathBuf::from(keys.required("data.path")?);
    let label_column = keys.required("data.label")?;
    let positive_label = keys.required("data.positive_label")?;
    let feature_columns = keys
        .take("data.features")
        .map(|v| v.split(',').map(|s| s.trim().to_string()).collect());

    let split_fractions = (
        keys.parse("split.train", 0.6, "fraction")?,
        keys.parse("split.validation", 0.2, "fraction")?,
        keys.parse("split.test", 0.2, "fraction")?,
    );
    let seed: u64 = keys.parse("seed", 0, "integer")?;

    let grouping_kind = keys.take("grouping.kind").unwrap_or_default();
    let attributes: Vec<String> = keys
        .required("grouping.attributes")?
        .split(',')
        .map(|s| s.trim().to_string())
        .collect();
    let grouping = match grouping_kind.as_str() {
        "" | "by_attribute" => {
            if attributes.len() != 1 {
                return Err(ConfigError::BadValue {
                    key: "grouping.attributes".to_string(),
                    value: attributes.join(","),
                    expected: "exactly one attribute for by_attribute",
                });
            }
            GroupingSpec::by_attribute(attributes[0].clone())
        }
        "intersection" => GroupingSpec {
            kind: GroupingKind::ByAttributeIntersection,
            attribute_names: attributes,
            predicate_id: None,
        },
        other => {
            return Err(ConfigError::BadValue {
                key: "grouping.kind".to_string(),
                value: other.to_string(),
                expected: "by_attribute or intersection",
            })
        }
    };

    // constraint.N.* blocks, N = 1, 2, ...
    let mut constraints = Vec::new();
    for index in 1.. {
        let prefix = format!("constraint.{index}.");
        let metric_key = format!("{prefix}metric");
        let Some(metric_name) = keys.take(&metric_key) else {
            break;
        };
        let g1 = keys
            .take(&format!("{prefix}g1"))
            .ok_or(ConfigError::BadConstraint {
                index,
                problem: "missing g1".to_string(),
            })?;
        let g2 = keys
            .take(&format!("{prefix}g2"))
            .ok_or(ConfigError::BadConstraint {
                index,
                problem: "missing g2".to_string(),
            })?;
        let epsilon: f64 = keys.parse(&format!("{prefix}epsilon"), f64::NAN, "real")?;
        if !epsilon.is_finite() || epsilon < 0.0 {
            return Err(ConfigError::BadConstraint {
                index,
                problem: "epsilon must be a nonnegative real".to_string(),
            });
        }
        let fp_cost = match keys.take(&format!("{prefix}c_fp")) {
            Some(v) => Some(v.parse().map_err(|_| ConfigError::BadValue {
                key: format!("{prefix}c_fp"),
                value: v,
                expected: "real",
            })?),
            None => None,
        };
        let fn_cost = match keys.take(&format!("{prefix}c_fn")) {
            Some(v) => Some(v.parse().map_err(|_| ConfigError::BadValue {
                key: format!("{prefix}c_fn"),
                value: v,
                expected: "real",
            })?),
            None => None,
        };
        let metric = parse_metric(&metric_name, index, fp_cost, fn_cost)?;
        constraints.push(ConstraintEntry {
            metric,
            g1,
            g2,
            epsilon,
        });
    }

    let learner_kind = keys.take("learner.kind").unwrap_or_else(|| "logreg".to_string());
    let learner = match learner_kind.as_str() {
        "logreg" => {
            let defaults = LogRegConfig::default();
            LearnerChoice::LogReg(LogRegConfig {
                learning_rate: keys.parse("learner.learning_rate", defaults.learning_rate, "real")?,
                epochs: keys.parse("learner.epochs", defaults.epochs, "integer")?,
                l2: keys.parse("learner.l2", defaults.l2, "real")?,
                tol: keys.parse("learner.tol", defaults.tol, "real")?,
            })
        }
        "tree" => {
            let defaults = TreeConfig::default();
            LearnerChoice::Tree(TreeConfig {
                max_depth: keys.parse("learner.max_depth", defaults.max_depth, "integer")?,
                min_leaf_weight: keys.parse(
                    "learner.min_leaf_weight",
                    defaults.min_leaf_weight,
                    "real",
                )?,
            })
        }
        other => {
            return Err(ConfigError::BadValue {
                key: "learner.kind".to_string(),
                value: other.to_string(),
                expected: "logreg or tree",
            })
        }
    };

    let tuner_defaults = TunerConfig::default();
    let tuner = TunerConfig {
        tau: keys.parse("tuner.tau", tuner_defaults.tau, "real")?,
        delta: keys.parse("tuner.delta", tuner_defaults.delta, "real")?,
        lambda_cap: keys.parse("tuner.lambda_cap", tuner_defaults.lambda_cap, "real")?,
        seed,
        warm_start: keys.parse("tuner.warm_start", tuner_defaults.warm_start, "bool")?,
    };

    let grid_step = keys.parse("grid.step", 0.01, "real")?;
    let grid_max = keys.parse("grid.max", 1.0, "real")?;
    let region_step = keys.parse("region.step", 0.1, "real")?;
    let output_dir = PathBuf::from(
        keys.take("output.dir").unwrap_or_else(|| "out".to_string()),
    );

    let synth_kind = match keys
        .take("synth.kind")
        .unwrap_or_else(|| "two_group_sp".to_string())
        .as_str()
    {
        "two_group_sp" => SynthKind::TwoGroupSp,
        "two_group_fdr" => SynthKind::TwoGroupFdr,
        "three_group_sp" => SynthKind::ThreeGroupSp,
        other => {
            return Err(ConfigError::BadValue {
                key: "synth.kind".to_string(),
                value: other.to_string(),
                expected: "two_group_sp, two_group_fdr, or three_group_sp",
            })
        }
    };
    let synth_defaults = SynthSpec::default();
    let synth = SynthSpec {
        kind: synth_kind,
        n: keys.parse("synth.n", synth_defaults.n, "integer")?,
        sp_gap: keys.parse("synth.gap", synth_defaults.sp_gap, "real")?,
        noise: keys.parse("synth.noise", synth_defaults.noise, "real")?,
        noise_skew: keys.parse("synth.noise_skew", synth_defaults.noise_skew, "real")?,
        indicator_features: keys.parse("synth.indicators", synth_defaults.indicator_features, "bool")?,
        seed,
    };
    let synth_file = keys
        .take("synth.file")
        .unwrap_or_else(|| "synth.csv".to_string());

    if let Some(key) = keys.pairs.keys().next() {
        return Err(ConfigError::UnknownKey(key.clone()));
    }

    Ok(RunConfig {
        data_path,
        label_column,
        positive_label,
        feature_columns,
        split_fractions,
        seed,
        grouping,
        constraints,
        learner,
        tuner,
        grid_step,
        grid_max,
        region_step,
        output_dir,
        synth,
        synth_file,
    })
}
