mod common;

use nalgebra::DVector;

use polid::estimation::{mle_fit, FitOptions, IndexSet};
use polid::identification::{glr_statistic, identify, IdentifyOptions, Rule};
use polid::policies::{Action, PolicyModel};
use polid::stats::{chi2_cdf, ks_test, SeededRng};

use common::{boltzmann, demonstrations, logistic_data, uniform_states};

/// Boltzmann data with two actions on features `(1, x)`, `x` uniform on `[-1, 1]`.
fn intercept_data(theta: &[f64], n: usize, seed: u64) -> (PolicyModel, polid::estimation::DemoDataset) {
    let q = theta.len();
    let policy = boltzmann(q, 2, (q as f64).sqrt());
    let mut rng = SeededRng::new(seed);
    let states: Vec<Vec<f64>> = (0..n)
        .map(|_| {
            let mut s = vec![1.0];
            s.extend((1..q).map(|_| rng.uniform_range(-1.0, 1.0)));
            s
        })
        .collect();
    let data = demonstrations(&policy, &DVector::from_column_slice(theta), states, &mut rng);
    (policy, data)
}

fn set(v: &[usize], d: usize) -> IndexSet {
    IndexSet::new(v.to_vec(), d).unwrap()
}

#[test]
fn fit_recovers_parameters() {
    let (policy, data) = intercept_data(&[2.0, 0.0], 5000, 1);
    let fit = mle_fit(&policy, &data, &IndexSet::full(2), &FitOptions::default()).unwrap();
    let err = (fit.theta_hat - DVector::from_vec(vec![2.0, 0.0])).norm();
    assert!(err < 0.15, "error {err}");
}

#[test]
fn false_null_gives_large_statistic() {
    let (policy, data) = intercept_data(&[2.0, 0.0], 2000, 2);
    let g = glr_statistic(&policy, &data, &set(&[1], 2), &IdentifyOptions::default()).unwrap();
    assert!(g.lambda > 100.0, "lambda {}", g.lambda);
    let g = glr_statistic(&policy, &data, &IndexSet::full(2), &IdentifyOptions::default()).unwrap();
    assert_eq!(g.lambda, 0.0);
}

#[test]
fn true_null_statistics_follow_chi_square() {
    for (theta, free, dof) in [(vec![2.0, 0.0], vec![0usize], 1u32), (vec![2.0, 0.0, 0.0], vec![0], 2)] {
        let d = theta.len();
        let lambdas: Vec<f64> = (0..500)
            .map(|seed| {
                let (policy, data) = intercept_data(&theta, 2000, 1000 + seed);
                glr_statistic(&policy, &data, &set(&free, d), &IdentifyOptions::default()).unwrap().lambda
            })
            .collect();
        let ks = ks_test(&lambdas, |x| chi2_cdf(x, dof));
        assert!(ks.passes(0.01), "dof {dof}: {ks:?}");
    }
}

#[test]
fn simplified_selects_signal_coordinates() {
    let hits = (0..25)
        .filter(|&seed| {
            let (policy, data) = intercept_data(&[2.0, 0.0, -1.5], 5000, 200 + seed);
            let out = identify(&policy, &data, Rule::Simplified, &IdentifyOptions::default()).unwrap();
            out.selected == vec![set(&[0, 2], 3)]
        })
        .count();
    assert!(hits >= 23, "{hits}/25");
}

#[test]
fn combinatorial_finds_the_sparse_set() {
    let hits = (0..25)
        .filter(|&seed| {
            let (policy, data) = intercept_data(&[2.0, 0.0], 2000, 300 + seed);
            let out = identify(&policy, &data, Rule::Combinatorial, &IdentifyOptions::default()).unwrap();
            out.selected == vec![set(&[0], 2)]
        })
        .count();
    assert!(hits >= 23, "{hits}/25");
}

#[test]
fn dense_parameters_need_the_full_set() {
    let (policy, data) = intercept_data(&[1.5, -1.0, 1.0], 5000, 4);
    let out = identify(&policy, &data, Rule::Combinatorial, &IdentifyOptions::default()).unwrap();
    assert_eq!(out.selected, vec![IndexSet::full(3)]);
}

#[test]
fn single_sample_rejects_nothing() {
    let (policy, data) = intercept_data(&[2.0, 0.0, -1.5], 1, 5);
    let out = identify(&policy, &data, Rule::Simplified, &IdentifyOptions::default()).unwrap();
    assert!(out.tests.iter().all(|t| !t.rejected && t.lambda < t.critical));
}

/// States `(x₁, x₁, x₂)`: the first two features are identical.
fn duplicated_data(n: usize, seed: u64) -> (PolicyModel, polid::estimation::DemoDataset) {
    let policy = boltzmann(3, 2, 3f64.sqrt());
    let mut rng = SeededRng::new(seed);
    let states: Vec<Vec<f64>> = uniform_states(2, n, &mut rng).into_iter().map(|s| vec![s[0], s[0], s[1]]).collect();
    let data = demonstrations(&policy, &DVector::from_vec(vec![1.5, 0.0, -1.0]), states, &mut rng);
    (policy, data)
}

#[test]
fn exchangeable_features_are_skipped_by_simplified() {
    let (policy, data) = duplicated_data(5000, 6);
    let out = identify(&policy, &data, Rule::Simplified, &IdentifyOptions::default()).unwrap();
    assert_eq!(out.selected, vec![set(&[2], 3)]);
}

#[test]
fn exchangeable_features_give_several_combinatorial_sets() {
    let (policy, data) = duplicated_data(5000, 7);
    let out = identify(&policy, &data, Rule::Combinatorial, &IdentifyOptions::default()).unwrap();
    assert!(out.selected.contains(&set(&[0, 2], 3)), "{:?}", out.selected);
    assert!(out.selected.contains(&set(&[1, 2], 3)), "{:?}", out.selected);
}

#[test]
fn type_one_error_under_the_global_null() {
    let runs = 100;
    let false_alarms = (0..runs)
        .filter(|&seed| {
            let (policy, _, data) = logistic_data(4, &[], 5000, 400 + seed);
            let out = identify(&policy, &data, Rule::Simplified, &IdentifyOptions::default()).unwrap();
            !out.selected_union().is_empty()
        })
        .count();
    assert!(false_alarms as f64 / runs as f64 <= 0.01 + 0.02, "{false_alarms}/{runs}");
}

#[test]
fn dataset_actions_must_match_the_policy() {
    let policy = boltzmann(2, 2, 2.0);
    let data = polid::estimation::DemoDataset::new(vec![vec![0.1, 0.2]], vec![Action::Continuous(vec![0.0])], Vec::new());
    let fit = data.and_then(|d| identify(&policy, &d, Rule::Simplified, &IdentifyOptions::default()));
    assert!(fit.is_err());
}
