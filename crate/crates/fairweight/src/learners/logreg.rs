//! Weighted logistic regression trained by full-batch gradient descent.
//!
//! Features are standardized with the weighted train-split mean/variance and
//! the parameters live in that standardized space; `predict` undoes nothing
//! because the model stores its own standardization constants. Training
//! stops early once the gradient's max component falls below `tol`, which is
//! what makes warm starts pay off.

use serde::{Deserialize, Serialize};

use super::{check_weights, LearnError, TrainedModel, WeightedLearner};
use crate::data::Dataset;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogRegConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub l2: f64,
    /// Convergence threshold on the max absolute gradient component.
    pub tol: f64,
}

impl Default for LogRegConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.1,
            epochs: 500,
            l2: 0.0,
            tol: 1e-6,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogRegModel {
    /// Coefficients in standardized feature space.
    pub coefficients: Vec<f64>,
    pub intercept: f64,
    pub means: Vec<f64>,
    pub stds: Vec<f64>,
}

impl LogRegModel {
    pub fn decision_value(&self, features: &[f64]) -> f64 {
        let mut z = self.intercept;
        for j in 0..self.coefficients.len() {
            z += self.coefficients[j] * (features[j] - self.means[j]) / self.stds[j];
        }
        z
    }

    /// Hard 0/1 prediction; the tie at probability exactly 0.5 goes to 1.
    pub fn predict(&self, features: &[f64]) -> u8 {
        u8::from(self.decision_value(features) >= 0.0)
    }

    /// Parameters expressed against raw (unstandardized) features.
    fn raw_parameters(&self) -> (Vec<f64>, f64) {
        let mut raw = Vec::with_capacity(self.coefficients.len());
        let mut intercept = self.intercept;
        for j in 0..self.coefficients.len() {
            let w = self.coefficients[j] / self.stds[j];
            raw.push(w);
            intercept -= w * self.means[j];
        }
        (raw, intercept)
    }
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Fits weighted logistic regression on `train`. The weight vector spans the
/// whole dataset; entries outside `train` are ignored.
pub fn fit_logreg(
    dataset: &Dataset,
    train: &[usize],
    weights: &[f64],
    config: &LogRegConfig,
    _seed: u64,
    warm_start: Option<&TrainedModel>,
) -> Result<LogRegModel, LearnError> {
    check_weights(weights, dataset.len())?;
    if train.is_empty() {
        return Err(LearnError::EmptyTrainSet);
    }
    let labels: Vec<u8> = train.iter().map(|&i| dataset.label(i)).collect();
    if labels.iter().all(|&y| y == 0) || labels.iter().all(|&y| y == 1) {
        return Err(LearnError::SingleClassTrainingSet);
    }

    let d = dataset.feature_names().len();
    let total_weight: f64 = train.iter().map(|&i| weights[i]).sum();

    // Weighted standardization so that integer-weighted training matches
    // training on the replicated dataset exactly.
    let mut means = vec![0.0; d];
    let mut stds = vec![1.0; d];
    if total_weight > 0.0 {
        for &i in train {
            let x = dataset.features(i);
            for j in 0..d {
                means[j] += weights[i] * x[j];
            }
        }
        for m in &mut means {
            *m /= total_weight;
        }
        let mut vars = vec![0.0; d];
        for &i in train {
            let x = dataset.features(i);
            for j in 0..d {
                let delta = x[j] - means[j];
                vars[j] += weights[i] * delta * delta;
            }
        }
        for j in 0..d {
            let s = (vars[j] / total_weight).sqrt();
            stds[j] = if s > 1e-12 { s } else { 1.0 };
        }
    }

    // Standardized design matrix for the train rows.
    let xs: Vec<Vec<f64>> = train
        .iter()
        .map(|&i| {
            let x = dataset.features(i);
            (0..d).map(|j| (x[j] - means[j]) / stds[j]).collect()
        })
        .collect();

    let (mut coef, mut intercept) = match warm_start {
        Some(TrainedModel::LogReg(m)) if m.coefficients.len() == d => {
            // Re-express the warm model against this fit's standardization.
            let (raw, raw_intercept) = m.raw_parameters();
            let mut coef = vec![0.0; d];
            let mut b = raw_intercept;
            for j in 0..d {
                coef[j] = raw[j] * stds[j];
                b += raw[j] * means[j];
            }
            (coef, b)
        }
        _ => (vec![0.0; d], 0.0),
    };

    if total_weight > 0.0 {
        let mut grad = vec![0.0; d + 1];
        for _ in 0..config.epochs {
            grad.iter_mut().for_each(|g| *g = 0.0);
            for (row, &i) in xs.iter().zip(train) {
                if weights[i] == 0.0 {
                    continue;
                }
                let mut z = intercept;
                for j in 0..d {
                    z += coef[j] * row[j];
                }
                let err = weights[i] * (sigmoid(z) - f64::from(dataset.label(i)));
                for j in 0..d {
                    grad[j] += err * row[j];
                }
                grad[d] += err;
            }
            let mut max_grad: f64 = 0.0;
            for j in 0..d {
                let g = grad[j] / total_weight + config.l2 * coef[j];
                if !g.is_finite() {
                    return Err(LearnError::NonFiniteLoss);
                }
                coef[j] -= config.learning_rate * g;
                max_grad = max_grad.max(g.abs());
            }
            let gb = grad[d] / total_weight;
            if !gb.is_finite() {
                return Err(LearnError::NonFiniteLoss);
            }
            intercept -= config.learning_rate * gb;
            max_grad = max_grad.max(gb.abs());
            if max_grad < config.tol {
                break;
            }
        }
    }

    Ok(LogRegModel {
        coefficients: coef,
        intercept,
        means,
        stds,
    })
}

/// Mean weighted logistic loss over `train` (plus the l2 term); exposed for
/// the in-module gradient check.
#[cfg(test)]
fn weighted_loss(
    dataset: &Dataset,
    train: &[usize],
    weights: &[f64],
    model: &LogRegModel,
    l2: f64,
) -> f64 {
    let total_weight: f64 = train.iter().map(|&i| weights[i]).sum();
    let mut loss = 0.0;
    for &i in train {
        let z = model.decision_value(dataset.features(i));
        let sz = if dataset.label(i) == 1 { z } else { -z };
        // ln(1 + e^{-sz}) computed stably
        loss += weights[i] * ((-sz.abs()).exp().ln_1p() + (-sz).max(0.0));
    }
    loss / total_weight + 0.5 * l2 * model.coefficients.iter().map(|c| c * c).sum::<f64>()
}

#[derive(Debug, Clone, Default)]
pub struct LogRegLearner {
    pub config: LogRegConfig,
}

impl LogRegLearner {
    pub fn new(config: LogRegConfig) -> Self {
        Self { config }
    }
}

impl WeightedLearner for LogRegLearner {
    fn fit(
        &self,
        dataset: &Dataset,
        train: &[usize],
        weights: &[f64],
        seed: u64,
        warm_start: Option<&TrainedModel>,
    ) -> Result<TrainedModel, LearnError> {
        fit_logreg(dataset, train, weights, &self.config, seed, warm_start)
            .map(TrainedModel::LogReg)
    }

    fn supports_warm_start(&self) -> bool {
        true
    }

    fn name(&self) -> &str {
        "logreg"
    }
}
