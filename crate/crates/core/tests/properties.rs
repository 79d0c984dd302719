mod common;

use nalgebra::DVector;
use proptest::prelude::*;

use polid::configuration::{config_objective, renyi2_hat};
use polid::environments::{ConfMdp, DiscreteGridWorld};
use polid::estimation::{FitContext, FitOptions, IndexSet};
use polid::identification::{identification_metrics, Identifier, IdentifyOptions, Rule};
use polid::learning::{collect_trajectories, gpomdp_gradient};
use polid::policies::Action;
use polid::stats::{chi2_cdf, chi2_quantile, max_eigenvalue_sym, Chi2Spec, SeededRng};

use common::{boltzmann, gaussian, logistic_data, ToyMdp};

fn config() -> ProptestConfig {
    ProptestConfig { cases: 64, ..ProptestConfig::default() }
}

proptest! {
    #![proptest_config(config())]

    #[test]
    fn chi2_quantile_monotone_and_round_trips(dof in 1u32..64, p in 0.001f64..0.999, dp in 1e-4f64..0.0009) {
        let q = chi2_quantile(Chi2Spec::new(dof, p).unwrap());
        prop_assert!((chi2_cdf(q, dof) - p).abs() < 1e-8);
        prop_assert!(chi2_quantile(Chi2Spec::new(dof, p + dp).unwrap()) > q);
        prop_assert!(chi2_quantile(Chi2Spec::new(dof + 1, p).unwrap()) > q);
    }

    #[test]
    fn boltzmann_probabilities_sum_to_one(
        theta in prop::collection::vec(-5.0f64..5.0, 12),
        s in prop::collection::vec(-1.0f64..1.0, 4),
    ) {
        let policy = boltzmann(4, 4, 2.0);
        let theta = DVector::from_vec(theta);
        let total: f64 = (0..4).map(|a| policy.log_prob(&theta, &s, &Action::Discrete(a)).unwrap().exp()).sum();
        prop_assert!((total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn boltzmann_score_is_centered_statistic(
        theta in prop::collection::vec(-3.0f64..3.0, 6),
        s in prop::collection::vec(-1.0f64..1.0, 2),
        a in 0usize..4,
    ) {
        let policy = boltzmann(2, 4, 2.0);
        let theta = DVector::from_vec(theta);
        // expected statistic from the action probabilities, by hand
        let probs: Vec<f64> = (0..4).map(|b| policy.log_prob(&theta, &s, &Action::Discrete(b)).unwrap().exp()).collect();
        let mut expected = DVector::zeros(6);
        for (b, p) in probs.iter().enumerate().take(3) {
            for j in 0..2 {
                expected[b * 2 + j] += p * s[j];
            }
        }
        let mut t = DVector::zeros(6);
        if a < 3 {
            t[a * 2] = s[0];
            t[a * 2 + 1] = s[1];
        }
        let score = policy.grad_log_prob(&theta, &s, &Action::Discrete(a)).unwrap();
        prop_assert!((score - (t - expected)).amax() < 1e-12);
    }

    #[test]
    fn gaussian_score_is_centered_statistic(
        theta in prop::collection::vec(-3.0f64..3.0, 3),
        s in prop::collection::vec(-1.0f64..1.0, 3),
        a in -4.0f64..4.0,
        var in 0.05f64..2.0,
    ) {
        let policy = gaussian(3, 1, var, 2.0);
        let theta = DVector::from_vec(theta);
        let mean: f64 = theta.iter().zip(&s).map(|(t, x)| t * x).sum();
        let want = DVector::from_iterator(3, s.iter().map(|x| (a - mean) * x / var));
        let score = policy.grad_log_prob(&theta, &s, &Action::Continuous(vec![a])).unwrap();
        prop_assert!((score - want).amax() < 1e-12);
    }

    #[test]
    fn fisher_eigenvalues_respect_subgaussian_bound(
        theta in prop::collection::vec(-4.0f64..4.0, 9),
        raw in prop::collection::vec(-1.0f64..1.0, 3),
        var in 0.05f64..2.0,
    ) {
        // scale the state onto the declared bound
        let norm = raw.iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-9);
        let s: Vec<f64> = raw.iter().map(|v| v / norm * 1.5).collect();
        for policy in [boltzmann(3, 4, 1.5), gaussian(3, 3, var, 1.5)] {
            let th = DVector::from_vec(theta[..policy.dim()].to_vec());
            let f = policy.fisher_state(&th, &s).unwrap();
            let sigma = policy.subgaussian_parameter().unwrap();
            let bound = policy.dim() as f64 * sigma * sigma;
            prop_assert!(max_eigenvalue_sym(&f).unwrap() <= bound * (1.0 + 1e-12));
        }
    }

    #[test]
    fn nested_fits_order_likelihoods_and_pin_exactly(mask_small in 0u64..64, extra in 0u64..64, seed in 0u64..1000) {
        let (policy, _, data) = logistic_data(6, &[0.8, -0.5, 0.3], 400, seed);
        let ctx = FitContext::new(&policy, &data).unwrap();
        let opts = FitOptions::default();
        let small = IndexSet::from_mask(mask_small);
        let large = IndexSet::from_mask(mask_small | extra);
        let fs = ctx.fit(&small, &opts).unwrap();
        let fl = ctx.fit(&large, &opts).unwrap();
        prop_assert!(fs.nll >= fl.nll - opts.tol_nll);
        for j in 0..6 {
            if !small.contains(j) {
                prop_assert_eq!(fs.theta_hat[j].to_bits(), 0f64.to_bits());
            }
            if !large.contains(j) {
                prop_assert_eq!(fl.theta_hat[j].to_bits(), 0f64.to_bits());
            }
        }
    }

    #[test]
    fn statistic_grows_with_pinned_set(mask in 0u64..32, extra in 0u64..32, seed in 0u64..1000) {
        let (policy, _, data) = logistic_data(5, &[0.6, 0.0, -0.4], 300, seed);
        let opts = IdentifyOptions::default();
        let id = Identifier::new(&policy, &data, &opts).unwrap();
        // free sets: pinning fewer units means a larger free set
        let free_large = IndexSet::from_mask(mask | extra);
        let free_small = IndexSet::from_mask(mask);
        let l_sub = id.glr_statistic(&free_large, Rule::Simplified).unwrap().lambda;
        let l_sup = id.glr_statistic(&free_small, Rule::Simplified).unwrap().lambda;
        prop_assert!(l_sup >= l_sub - 2.0 * opts.fit.tol_nll);
    }

    #[test]
    fn metrics_lie_in_unit_interval(sel in 0u64..(1 << 10), truth in 0u64..(1 << 10)) {
        let (a, b) = identification_metrics(&IndexSet::from_mask(sel), &IndexSet::from_mask(truth), 10);
        prop_assert!((0.0..=1.0).contains(&a));
        prop_assert!((0.0..=1.0).contains(&b));
    }

    #[test]
    fn grid_cell_probability_rises_with_its_logit(
        omega in prop::collection::vec(-2.0f64..2.0, 50),
        cell in 0usize..50,
        bump in 0.01f64..3.0,
    ) {
        let env = DiscreteGridWorld::default();
        let (a0, g0) = env.log_tables(&omega).unwrap();
        let mut up = omega.clone();
        up[cell] += bump;
        let (a1, g1) = env.log_tables(&up).unwrap();
        if cell < 25 {
            prop_assert!(a1[cell] > a0[cell]);
        } else {
            prop_assert!(g1[cell - 25] > g0[cell - 25]);
        }
    }

    #[test]
    fn penalty_vanishes_only_without_regularisation(
        zeta in prop_oneof![Just(0.0), 0.01f64..5.0],
        shift in prop_oneof![Just(0.0), -2.0f64..2.0],
        seed in 0u64..1000,
    ) {
        let env = ToyMdp { gamma: 0.9 };
        let policy = ToyMdp::policy();
        let theta = DVector::from_vec(vec![0.3, -0.2]);
        let trajs = collect_trajectories(&env, &policy, &theta, &[0.0], 40, &mut SeededRng::new(seed)).unwrap();
        let omega = [shift];
        let target = [0usize, 1];
        let with = config_objective(&trajs, &policy, &theta, &env, &omega, 0.9, &target, zeta).unwrap();
        let without = config_objective(&trajs, &policy, &theta, &env, &omega, 0.9, &target, 0.0).unwrap();
        let penalty = without - with;
        if zeta == 0.0 {
            prop_assert_eq!(penalty, 0.0);
        } else {
            prop_assert!(penalty > 0.0);
        }
        if shift == 0.0 {
            // all weights are one, so the divergence estimate is exactly one
            prop_assert_eq!(renyi2_hat(&trajs, &env, &omega).unwrap(), 1.0);
            prop_assert!((penalty - zeta / 40f64.sqrt()).abs() < 1e-12);
            let g = gpomdp_gradient(&trajs, &policy, &theta, 0.9).unwrap();
            prop_assert_eq!(without, g[0] * g[0] + g[1] * g[1]);
        }
    }
}

#[test]
fn environments_are_reproducible_under_a_seed() {
    let envs: Vec<Box<dyn ConfMdp>> = vec![
        Box::new(DiscreteGridWorld::default()),
        Box::new(polid::environments::ContinuousGridWorld::default()),
        Box::new(polid::environments::Minigolf::default()),
        Box::new(polid::environments::CarDriving::default()),
    ];
    for env in &envs {
        let policy = env.policy_space();
        let theta = policy.initial_parameters(&mut SeededRng::new(3));
        let omega = env.default_config();
        let a = collect_trajectories(env.as_ref(), &policy, &theta, &omega, 5, &mut SeededRng::new(11)).unwrap();
        let b = collect_trajectories(env.as_ref(), &policy, &theta, &omega, 5, &mut SeededRng::new(11)).unwrap();
        assert_eq!(a, b, "{}", env.name());
    }
}
