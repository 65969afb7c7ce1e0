//! Tuner behavior against the exactly-solvable threshold family.
//!
//! The datasets here consist of two identical halves (train and validation
//! mirror each other), so the exact inner maximization the monotonicity
//! argument assumes carries over to the validation measurements verbatim.

mod common;

use common::{exact_argmax, mirrored_split, threshold_candidates, threshold_model, ThresholdOracle};
use fairweight::metrics::MetricSpec;
use fairweight::multitune::sample_region;
use fairweight::tuning::{tune_single, TunerConfig};
use fairweight::weighting::FairnessConstraint;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Deterministic half with a planted SP bias that is cheap to repair:
/// group b hides half its true positives among the negative-score region,
/// so lowering the threshold there equalizes positive rates at a small
/// accuracy cost. The repair must be reachable before weight clamping
/// saturates the fairness push (at lambda >= |g|/N = 1/2).
fn clustered_half() -> (Vec<f64>, Vec<u8>, Vec<&'static str>) {
    let mut values = Vec::new();
    let mut labels = Vec::new();
    let mut groups = Vec::new();
    let mut push = |x: f64, y: u8, g: &'static str| {
        values.push(x);
        labels.push(y);
        groups.push(g);
    };
    for k in 0..12 {
        push(1.0 + 0.1 * k as f64, 1, "a"); // clearly positive
    }
    for &x in &[-2.0, -1.8, -1.6, -1.4, -1.2] {
        push(x, 0, "a");
    }
    for k in 0..6 {
        push(1.0 + 0.1 * k as f64, 1, "b");
    }
    // low-scored true positives; one more than a's negatives so an
    // all-positive labeling wins once the fairness push saturates
    for &x in &[-1.9, -1.75, -1.55, -1.35, -1.15, -1.05] {
        push(x, 1, "b");
    }
    for &x in &[-1.95, -1.7, -1.5, -1.3, -1.1] {
        push(x, 0, "b");
    }
    (values, labels, groups)
}

/// Random half with a planted SP bias between groups a and b.
fn biased_half(seed: u64, per_group: usize) -> (Vec<f64>, Vec<u8>, Vec<&'static str>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut values = Vec::new();
    let mut labels = Vec::new();
    let mut groups = Vec::new();
    for (group, positive_rate) in [("a", 0.68), ("b", 0.45)] {
        for _ in 0..per_group {
            let label = u8::from(rng.gen_bool(positive_rate));
            let x = (2.0 * f64::from(label) - 1.0) + 1.6 * rng.gen_range(-1.0..1.0);
            values.push(x);
            labels.push(label);
            groups.push(group);
        }
    }
    (values, labels, groups)
}

#[test]
fn tuned_accuracy_matches_the_brute_force_feasible_optimum() {
    let (values, labels, groups) = clustered_half();
    let (dataset, split, assignment) = mirrored_split(&values, &labels, &groups);
    let constraint = FairnessConstraint::new("sp", "b", "a", MetricSpec::Sp, 0.06).unwrap();
    let config = TunerConfig::default();

    let result = tune_single(
        &dataset,
        &split,
        &assignment,
        &constraint,
        &ThresholdOracle,
        &config,
    )
    .unwrap();
    assert!(
        result.probes[0].fp.abs() > constraint.epsilon,
        "fixture must start outside the band"
    );
    assert!(result.satisfied, "oracle family admits a feasible model");

    // Brute force: best validation accuracy among all threshold models
    // whose validation gap is inside the band.
    let mut best_feasible = f64::NEG_INFINITY;
    for threshold in threshold_candidates(&dataset, &split.validation) {
        let model = threshold_model(threshold);
        let fp = common::gap_on_subset(&constraint, &dataset, &assignment, &split.validation, &model);
        if fp.abs() <= constraint.epsilon {
            let ap = fairweight::metrics::accuracy(&dataset, &split.validation, &model).unwrap();
            best_feasible = best_feasible.max(ap);
        }
    }
    // At the crossing lambda the exact argmax theta satisfies
    //   AP(theta) >= AP(theta') + lambda * (FP(theta') - FP(theta))
    // for every feasible theta', and two in-band gaps differ by at most
    // 2 * epsilon, so the reachable slack is 2 * epsilon * lambda plus one
    // example of accuracy for the discrete family.
    let step = 1.0 / split.validation.len() as f64;
    let slack = 2.0 * constraint.epsilon * result.lambda.abs() + step + 1e-12;
    assert!(
        result.validation_ap >= best_feasible - slack,
        "tuned ap {} vs brute-force {best_feasible} (slack {slack})",
        result.validation_ap
    );
}

#[test]
fn binary_search_returns_inside_the_band_and_probes_below_it_fail() {
    let (values, labels, groups) = clustered_half();
    let (dataset, split, assignment) = mirrored_split(&values, &labels, &groups);
    let constraint = FairnessConstraint::new("sp", "b", "a", MetricSpec::Sp, 0.06).unwrap();
    let config = TunerConfig::default();

    let result = tune_single(
        &dataset,
        &split,
        &assignment,
        &constraint,
        &ThresholdOracle,
        &config,
    )
    .unwrap();
    assert!(result.validation_fp.abs() <= constraint.epsilon, "fp {}", result.validation_fp);
    for probe in &result.probes {
        if probe.lambda < result.lambda - config.tau {
            assert!(
                probe.fp.abs() > constraint.epsilon,
                "probe at lambda {} already satisfied the band",
                probe.lambda
            );
        }
    }
    // warm-up + bracket + one bisection per half-width of [0, 2] down to tau
    let budget = 3 + ((2.0_f64 / config.tau).log2().ceil() as usize) + 2;
    assert!(result.fits() <= budget, "{} fits", result.fits());
}

#[test]
fn marginal_monotonicity_holds_exactly_for_the_oracle() {
    // Three groups; constraints pin b and c against a.
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    let mut values = Vec::new();
    let mut labels = Vec::new();
    let mut groups: Vec<&str> = Vec::new();
    for (group, positive_rate) in [("a", 0.8), ("b", 0.4), ("c", 0.3)] {
        for _ in 0..12 {
            let label = u8::from(rng.gen_bool(positive_rate));
            values.push((2.0 * f64::from(label) - 1.0) + 1.2 * rng.gen_range(-1.0..1.0));
            labels.push(label);
            groups.push(group);
        }
    }
    let (dataset, split, assignment) = mirrored_split(&values, &labels, &groups);
    let cb = FairnessConstraint::new("cb", "b", "a", MetricSpec::Sp, 0.03).unwrap();
    let cc = FairnessConstraint::new("cc", "c", "a", MetricSpec::Sp, 0.03).unwrap();

    // Direct enumeration: exact argmax of AP + l1*FP1 + l2*FP2 on train.
    let grid: Vec<f64> = (0..=10).map(|k| 0.2 * k as f64).collect();
    for &l2 in &grid {
        let mut previous: Option<f64> = None;
        for &l1 in &grid {
            let (_, _, fps) = exact_argmax(
                &dataset,
                &split.train,
                &assignment,
                &[(&cb, l1), (&cc, l2)],
            );
            if let Some(prev) = previous {
                assert!(
                    fps[0] >= prev - 1e-12,
                    "FP1 fell from {prev} to {} at l1={l1}, l2={l2}",
                    fps[0]
                );
            }
            previous = Some(fps[0]);
        }
    }

    // Weighted path through sample_region on a clamp-free grid: the same
    // marginal monotonicity must show up in the exported surface.
    let no_clamp: Vec<f64> = (0..=4).map(|k| 0.05 * k as f64).collect();
    let region = sample_region(
        &dataset,
        &split,
        &assignment,
        &[cb, cc],
        &ThresholdOracle,
        &TunerConfig::default(),
        &no_clamp,
        &no_clamp,
    )
    .unwrap();
    for row in region.points.chunks(no_clamp.len()) {
        for pair in row.windows(2) {
            assert!(
                pair[1].fp_2 >= pair[0].fp_2 - 1e-12,
                "FP2 fell along lambda_2 at lambda_1 = {}",
                pair[0].lambda_1
            );
        }
    }
    for col in 0..no_clamp.len() {
        let column: Vec<_> = region.points.iter().skip(col).step_by(no_clamp.len()).collect();
        for pair in column.windows(2) {
            assert!(
                pair[1].fp_1 >= pair[0].fp_1 - 1e-12,
                "FP1 fell along lambda_1 at lambda_2 = {}",
                pair[0].lambda_2
            );
        }
    }
}

#[test]
fn learner_fits_are_deterministic() {
    let (values, labels, groups) = biased_half(31, 16);
    let (dataset, split, _) = mirrored_split(&values, &labels, &groups);
    let weights = vec![1.0; dataset.len()];

    let logreg = fairweight::LogRegLearner::default();
    let tree = fairweight::TreeLearner::default();
    for learner in [&logreg as &dyn fairweight::WeightedLearner, &tree] {
        let a = learner.fit(&dataset, &split.train, &weights, 7, None).unwrap();
        let b = learner.fit(&dataset, &split.train, &weights, 7, None).unwrap();
        let all: Vec<usize> = (0..dataset.len()).collect();
        assert_eq!(
            a.predict_batch(&dataset, &all),
            b.predict_batch(&dataset, &all),
            "{} is not deterministic",
            learner.name()
        );
    }
}
