//! Weighted CART-style decision tree: axis-aligned threshold splits chosen
//! by maximal weighted Gini decrease, leaves predicting the weighted
//! majority label.
//!
//! Zero-weight examples are invisible to the tree: they contribute no split
//! candidates, no impurity mass, and no leaf votes. An impure node is split
//! even when the best Gini decrease is zero (the depth cap bounds this),
//! which lets depth-2 trees crack XOR-style patterns whose first split has
//! no marginal gain.

use serde::{Deserialize, Serialize};

use super::{check_weights, LearnError, TrainedModel, WeightedLearner};
use crate::data::Dataset;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TreeConfig {
    pub max_depth: usize,
    /// Minimum total example weight on each side of a split.
    pub min_leaf_weight: f64,
}

impl Default for TreeConfig {
    fn default() -> Self {
        Self {
            max_depth: 4,
            min_leaf_weight: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum TreeNode {
    Leaf {
        label: u8,
    },
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
}

/// Nodes stored flat; index 0 is the root. Examples with
/// `feature < threshold` go left.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeModel {
    pub nodes: Vec<TreeNode>,
}

impl TreeModel {
    pub fn predict(&self, features: &[f64]) -> u8 {
        let mut node = 0;
        loop {
            match &self.nodes[node] {
                TreeNode::Leaf { label } => return *label,
                TreeNode::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    node = if features[*feature] < *threshold {
                        *left
                    } else {
                        *right
                    };
                }
            }
        }
    }
}

struct Builder<'a> {
    dataset: &'a Dataset,
    weights: &'a [f64],
    config: &'a TreeConfig,
    nodes: Vec<TreeNode>,
}

impl Builder<'_> {
    fn class_weights(&self, members: &[usize]) -> (f64, f64) {
        let mut w0 = 0.0;
        let mut w1 = 0.0;
        for &i in members {
            if self.dataset.label(i) == 1 {
                w1 += self.weights[i];
            } else {
                w0 += self.weights[i];
            }
        }
        (w0, w1)
    }

    /// Total weight times Gini impurity, so decreases compare additively.
    fn weighted_gini(w0: f64, w1: f64) -> f64 {
        let total = w0 + w1;
        if total <= 0.0 {
            return 0.0;
        }
        let p0 = w0 / total;
        let p1 = w1 / total;
        total * (1.0 - p0 * p0 - p1 * p1)
    }

    fn build(&mut self, members: &[usize], depth: usize) -> usize {
        let (w0, w1) = self.class_weights(members);
        let majority = u8::from(w1 >= w0);

        let pure = w0 == 0.0 || w1 == 0.0;
        if pure || depth >= self.config.max_depth {
            self.nodes.push(TreeNode::Leaf { label: majority });
            return self.nodes.len() - 1;
        }

        let parent_gini = Self::weighted_gini(w0, w1);
        let d = self.dataset.feature_names().len();
        let mut best: Option<(f64, usize, f64)> = None; // (decrease, feature, threshold)
        for feature in 0..d {
            let mut values: Vec<f64> = members
                .iter()
                .map(|&i| self.dataset.features(i)[feature])
                .collect();
            values.sort_by(|a, b| a.partial_cmp(b).unwrap());
            values.dedup();
            for pair in values.windows(2) {
                let threshold = 0.5 * (pair[0] + pair[1]);
                let mut left = (0.0, 0.0);
                let mut right = (0.0, 0.0);
                for &i in members {
                    let side = if self.dataset.features(i)[feature] < threshold {
                        &mut left
                    } else {
                        &mut right
                    };
                    if self.dataset.label(i) == 1 {
                        side.1 += self.weights[i];
                    } else {
                        side.0 += self.weights[i];
                    }
                }
                if left.0 + left.1 < self.config.min_leaf_weight
                    || right.0 + right.1 < self.config.min_leaf_weight
                {
                    continue;
                }
                let decrease = parent_gini
                    - Self::weighted_gini(left.0, left.1)
                    - Self::weighted_gini(right.0, right.1);
                // Strict > keeps the tie-break at the lowest (feature, threshold).
                if best.map_or(true, |(g, _, _)| decrease > g) {
                    best = Some((decrease, feature, threshold));
                }
            }
        }

        let Some((_, feature, threshold)) = best else {
            self.nodes.push(TreeNode::Leaf { label: majority });
            return self.nodes.len() - 1;
        };

        let (left_members, right_members): (Vec<usize>, Vec<usize>) = members
            .iter()
            .partition(|&&i| self.dataset.features(i)[feature] < threshold);

        // Reserve the split slot before recursing so the root stays at 0.
        let slot = self.nodes.len();
        self.nodes.push(TreeNode::Leaf { label: majority });
        let left = self.build(&left_members, depth + 1);
        let right = self.build(&right_members, depth + 1);
        self.nodes[slot] = TreeNode::Split {
            feature,
            threshold,
            left,
            right,
        };
        slot
    }
}

/// Fits a weighted decision tree on `train`. The `seed` is accepted for
/// contract uniformity; tree construction is fully deterministic.
pub fn fit_tree(
    dataset: &Dataset,
    train: &[usize],
    weights: &[f64],
    config: &TreeConfig,
    _seed: u64,
) -> Result<TreeModel, LearnError> {
    check_weights(weights, dataset.len())?;
    if train.is_empty() {
        return Err(LearnError::EmptyTrainSet);
    }
    let members: Vec<usize> = train.iter().copied().filter(|&i| weights[i] > 0.0).collect();
    let mut builder = Builder {
        dataset,
        weights,
        config,
        nodes: Vec::new(),
    };
    if members.is_empty() {
        // All-zero weights: nothing to optimize, predict the tie-break label.
        builder.nodes.push(TreeNode::Leaf { label: 1 });
    } else {
        builder.build(&members, 0);
    }
    Ok(TreeModel {
        nodes: builder.nodes,
    })
}

#[derive(Debug, Clone, Default)]
pub struct TreeLearner {
    pub config: TreeConfig,
}

impl TreeLearner {
    pub fn new(config: TreeConfig) -> Self {
        Self { config }
    }
}

impl WeightedLearner for TreeLearner {
    fn fit(
        &self,
        dataset: &Dataset,
        train: &[usize],
        weights: &[f64],
        seed: u64,
        _warm_start: Option<&TrainedModel>,
    ) -> Result<TrainedModel, LearnError> {
        fit_tree(dataset, train, weights, &self.config, seed).map(TrainedModel::Tree)
    }

    fn name(&self) -> &str {
        "tree"
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{Dataset, Example};
    use std::collections::BTreeMap;

    fn toy_dataset(points: &[(f64, f64, u8)]) -> Dataset {
        let examples = points
            .iter()
            .map(|&(a, b, y)| Example {
                features: vec![a, b],
                label: y,
                raw_attributes: BTreeMap::new(),
            })
            .collect();
        Dataset::new(
            examples,
            vec!["a".to_string(), "b".to_string()],
            "y".to_string(),
        )
        .unwrap()
    }

    #[test]
    fn pure_data_yields_depth_zero_tree() {
        let ds = toy_dataset(&[(0.0, 0.0, 1), (1.0, 2.0, 1), (3.0, 1.0, 1)]);
        let train: Vec<usize> = (0..3).collect();
        let model = fit_tree(&ds, &train, &[1.0; 3], &TreeConfig::default(), 0).unwrap();
        assert_eq!(model.nodes, vec![TreeNode::Leaf { label: 1 }]);
    }

    #[test]
    fn xor_pattern_is_fit_exactly_at_depth_two() {
        let ds = toy_dataset(&[
            (0.0, 0.0, 0),
            (0.0, 1.0, 1),
            (1.0, 0.0, 1),
            (1.0, 1.0, 0),
        ]);
        let train: Vec<usize> = (0..4).collect();
        let config = TreeConfig {
            max_depth: 2,
            min_leaf_weight: 1.0,
        };
        let model = fit_tree(&ds, &train, &[1.0; 4], &config, 0).unwrap();
        // Oracle: enumerate every (feature, threshold) pair at both levels —
        // the only depth-2 trees reaching 4/4 split both features, so simply
        // check the fitted tree reproduces the labels.
        for &i in &train {
            assert_eq!(model.predict(ds.features(i)), ds.label(i), "example {i}");
        }
    }

    #[test]
    fn doubling_weights_keeps_the_tree() {
        let ds = toy_dataset(&[
            (0.1, 3.0, 0),
            (0.9, 2.0, 0),
            (2.1, 1.0, 1),
            (2.9, 0.5, 1),
            (1.4, 2.2, 0),
            (1.6, 0.2, 1),
        ]);
        let train: Vec<usize> = (0..ds.len()).collect();
        let w1 = vec![1.0, 2.0, 1.5, 1.0, 3.0, 1.0];
        let w2: Vec<f64> = w1.iter().map(|w| w * 2.0).collect();
        let m1 = fit_tree(&ds, &train, &w1, &TreeConfig::default(), 0).unwrap();
        let m2 = fit_tree(&ds, &train, &w2, &TreeConfig::default(), 0).unwrap();
        assert_eq!(m1, m2);
    }

    #[test]
    fn zero_weight_examples_do_not_shape_the_tree() {
        let ds = toy_dataset(&[
            (0.0, 0.0, 0),
            (1.0, 0.0, 0),
            (2.0, 0.0, 1),
            (3.0, 0.0, 1),
            // outlier that would dominate if its zero weight were ignored
            (100.0, 0.0, 0),
        ]);
        let train: Vec<usize> = (0..5).collect();
        let weights = vec![1.0, 1.0, 1.0, 1.0, 0.0];
        let with_zero = fit_tree(&ds, &train, &weights, &TreeConfig::default(), 0).unwrap();
        let without: Vec<usize> = (0..4).collect();
        let reference =
            fit_tree(&ds, &without, &[1.0, 1.0, 1.0, 1.0, 1.0], &TreeConfig::default(), 0)
                .unwrap();
        assert_eq!(with_zero, reference);
    }
}
