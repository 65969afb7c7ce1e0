//! Synthetic planted-bias datasets with analytically known group gaps.
//!
//! Every variant draws a 1-D informative feature `x0 ~ Normal(2y - 1, sigma)`
//! plus 0/1 group-indicator features, and plants an exact base-rate gap by
//! assigning label counts per group deterministically (so the realized label
//! gap equals the requested one up to rounding, not sampling noise). The
//! `group` raw attribute carries the group name for the grouping module.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::data::{Dataset, Example};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SynthKind {
    /// Two groups, group `a` favored by `sp_gap` in base rate.
    TwoGroupSp,
    /// Two groups with equal-ish base rates but a much noisier feature for
    /// group `b`, skewing prediction error composition (FDR-style bias).
    TwoGroupFdr,
    /// Three groups; `a` favored, `b` and `c` drawn identically.
    ThreeGroupSp,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SynthSpec {
    pub kind: SynthKind,
    pub n: usize,
    /// Planted base-rate gap between the favored and disfavored groups.
    pub sp_gap: f64,
    /// Feature noise scale for group `a`.
    pub noise: f64,
    /// Multiplier on `noise` for the remaining groups.
    pub noise_skew: f64,
    /// Include 0/1 group-indicator features so a linear model can learn
    /// per-group offsets. Without them the model shares one threshold.
    pub indicator_features: bool,
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            kind: SynthKind::TwoGroupSp,
            n: 2000,
            sp_gap: 0.2,
            noise: 0.8,
            noise_skew: 1.0,
            indicator_features: true,
            seed: 17,
        }
    }
}

/// Per-group block: name, size, positive rate, noise scale.
struct GroupPlan {
    name: &'static str,
    size: usize,
    positive_rate: f64,
    sigma: f64,
}

pub fn generate(spec: &SynthSpec) -> Dataset {
    let n = spec.n;
    let half_gap = spec.sp_gap / 2.0;
    let plans: Vec<GroupPlan> = match spec.kind {
        SynthKind::TwoGroupSp => vec![
            GroupPlan {
                name: "a",
                size: n / 2,
                positive_rate: 0.5 + half_gap,
                sigma: spec.noise,
            },
            GroupPlan {
                name: "b",
                size: n - n / 2,
                positive_rate: 0.5 - half_gap,
                sigma: spec.noise * spec.noise_skew,
            },
        ],
        SynthKind::TwoGroupFdr => vec![
            GroupPlan {
                name: "a",
                size: n / 2,
                positive_rate: 0.5 + half_gap,
                sigma: spec.noise,
            },
            GroupPlan {
                name: "b",
                size: n - n / 2,
                positive_rate: 0.5 - half_gap,
                sigma: spec.noise * spec.noise_skew,
            },
        ],
        SynthKind::ThreeGroupSp => {
            let third = n / 3;
            vec![
                GroupPlan {
                    name: "a",
                    size: n - 2 * third,
                    positive_rate: 0.5 + half_gap,
                    sigma: spec.noise,
                },
                GroupPlan {
                    name: "b",
                    size: third,
                    positive_rate: 0.5 - half_gap,
                    sigma: spec.noise * spec.noise_skew,
                },
                GroupPlan {
                    name: "c",
                    size: third,
                    positive_rate: 0.5 - half_gap,
                    sigma: spec.noise * spec.noise_skew,
                },
            ]
        }
    };

    let group_names: Vec<&str> = plans.iter().map(|p| p.name).collect();
    // One indicator feature per group except the last (the reference level).
    let indicator_count = if spec.indicator_features {
        group_names.len() - 1
    } else {
        0
    };
    let mut feature_names = vec!["x0".to_string()];
    feature_names.extend(
        group_names[..indicator_count]
            .iter()
            .map(|g| format!("g_{g}")),
    );

    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut examples = Vec::with_capacity(n);
    for (gi, plan) in plans.iter().enumerate() {
        let positives = (plan.positive_rate * plan.size as f64).round() as usize;
        let mut labels: Vec<u8> = std::iter::repeat(1u8)
            .take(positives)
            .chain(std::iter::repeat(0u8).take(plan.size - positives))
            .collect();
        labels.shuffle(&mut rng);
        let normal = Normal::new(0.0, plan.sigma).expect("positive sigma");
        for label in labels {
            let x0 = (2.0 * f64::from(label) - 1.0) + normal.sample(&mut rng);
            let mut features = vec![x0];
            for j in 0..indicator_count {
                features.push(f64::from(j == gi));
            }
            let mut raw_attributes = BTreeMap::new();
            raw_attributes.insert("group".to_string(), plan.name.to_string());
            examples.push(Example {
                features,
                label,
                raw_attributes,
            });
        }
    }

    Dataset::new(examples, feature_names, "y".to_string()).expect("nonempty synthetic dataset")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn label_rate(ds: &Dataset, group: &str) -> f64 {
        let members: Vec<usize> = (0..ds.len())
            .filter(|&i| ds.raw_attribute(i, "group") == Some(group))
            .collect();
        let positives = members.iter().filter(|&&i| ds.label(i) == 1).count();
        positives as f64 / members.len() as f64
    }

    #[test]
    fn planted_label_gap_is_exact_up_to_rounding() {
        let spec = SynthSpec {
            n: 1000,
            sp_gap: 0.2,
            ..SynthSpec::default()
        };
        let ds = generate(&spec);
        assert_eq!(ds.len(), 1000);
        let gap = label_rate(&ds, "a") - label_rate(&ds, "b");
        assert!((gap - 0.2).abs() < 0.005, "label gap {gap}");
    }

    #[test]
    fn generation_is_deterministic() {
        let spec = SynthSpec::default();
        let a = generate(&spec);
        let b = generate(&spec);
        assert_eq!(a.examples(), b.examples());
    }

    #[test]
    fn three_group_variant_has_three_groups_and_two_indicators() {
        let spec = SynthSpec {
            kind: SynthKind::ThreeGroupSp,
            n: 300,
            ..SynthSpec::default()
        };
        let ds = generate(&spec);
        assert_eq!(ds.feature_names().len(), 3);
        for g in ["a", "b", "c"] {
            assert!((0..ds.len()).any(|i| ds.raw_attribute(i, "group") == Some(g)));
        }
    }
}
