mod common;

use nalgebra::DVector;

use polid::configuration::{
    configuration_call_count, identify_with_configuration, off_dist_gradient, ConfSetup, ConfigSearch, ImportanceWeightedBatch,
};
use polid::environments::{ConfMdp, DiscreteGridWorld};
use polid::identification::{IdentifyOptions, Rule};
use polid::learning::{collect_trajectories, gpomdp_gradient};
use polid::stats::SeededRng;

use common::mean_and_se;

fn grid_theta() -> DVector<f64> {
    // moves toward the goal along both axes, nothing on the last features
    let mut theta = DVector::zeros(48);
    for a in 0..3 {
        for j in 0..12 {
            theta[a * 16 + j] = 0.3 * ((a * 7 + j * 3) % 5) as f64 - 0.6;
        }
    }
    theta
}

/// Sum of each action row, one scalar per action.
fn row_sums(g: &DVector<f64>) -> DVector<f64> {
    DVector::from_iterator(3, (0..3).map(|a| g.rows(a * 16, 16).sum()))
}

#[test]
fn off_distribution_gradient_matches_resimulation() {
    let env = DiscreteGridWorld::default();
    let policy = env.policy_space();
    let theta = grid_theta();
    let omega0 = env.default_config();
    let mut omega = omega0.clone();
    omega[12] += 0.4;
    omega[25 + 3] -= 0.3;
    omega[25 + 18] += 0.2;
    let n = 100_000;
    let gamma = env.gamma();

    let source = collect_trajectories(&env, &policy, &theta, &omega0, n, &mut SeededRng::new(31)).unwrap();
    let off: Vec<DVector<f64>> = source
        .chunks(1)
        .map(|t| row_sums(&off_dist_gradient(t, &policy, &theta, &env, &omega, gamma).unwrap()))
        .collect();
    let target = collect_trajectories(&env, &policy, &theta, &omega, n, &mut SeededRng::new(32)).unwrap();
    let on: Vec<DVector<f64>> = target.chunks(1).map(|t| row_sums(&gpomdp_gradient(t, &policy, &theta, gamma).unwrap())).collect();

    let (m_off, se_off) = mean_and_se(&off);
    let (m_on, se_on) = mean_and_se(&on);
    let batch = off_dist_gradient(&source, &policy, &theta, &env, &omega, gamma).unwrap();
    assert!((row_sums(&batch) - &m_off).amax() < 1e-9);
    let weighted = ImportanceWeightedBatch::new(&env, &source, &policy, &theta, gamma).unwrap();
    assert!((weighted.gradient(&omega).unwrap() - &batch).amax() < 1e-12);
    for a in 0..3 {
        let se = (se_off[a].powi(2) + se_on[a].powi(2)).sqrt();
        assert!((m_off[a] - m_on[a]).abs() <= 3.0 * se, "row {a}: {} vs {} (se {se})", m_off[a], m_on[a]);
    }
}

fn small_setup(policy: &polid::policies::PolicyModel, theta0: DVector<f64>, omega0: Vec<f64>) -> ConfSetup<'_> {
    ConfSetup {
        policy,
        theta0,
        omega0,
        episodes: 60,
        gamma: 0.99,
        rule: Rule::Simplified,
        identify: IdentifyOptions::default(),
        search: ConfigSearch { steps: 10, n_conf: 1, ..ConfigSearch::default() },
    }
}

#[test]
fn configuration_loop_is_monotone_and_reproducible() {
    let env = DiscreteGridWorld::default();
    let policy = env.policy_space();
    let setup = small_setup(&policy, grid_theta(), env.default_config());
    let mut keep = |_: &[f64], theta: &DVector<f64>, _: &mut SeededRng| Ok(theta.clone());

    let before = configuration_call_count();
    let a = identify_with_configuration(&env, &setup, &mut keep, &mut SeededRng::new(41)).unwrap();
    assert!(configuration_call_count() > before);
    let b = identify_with_configuration(&env, &setup, &mut keep, &mut SeededRng::new(41)).unwrap();
    assert_eq!(a, b);
    assert!(!a.rounds.is_empty());

    let mut prev = a.baseline.selected_union();
    for r in &a.rounds {
        assert!(prev.is_subset(&r.selected_after), "{prev:?} then {:?}", r.selected_after);
        assert!(!prev.contains(r.unit));
        prev = r.selected_after.clone();
    }
    assert_eq!(a.outcome.selected, vec![prev]);
}
