//! Shared fixtures for the integration tests.
#![allow(dead_code)]

use std::sync::Arc;

use nalgebra::DVector;
use polid::environments::{ConfMdp, Step};
use polid::estimation::DemoDataset;
use polid::policies::{Action, BoltzmannLinearPolicy, GaussianLinearPolicy, IdentityFeatures, PolicyModel};
use polid::stats::SeededRng;
use polid::{Error, Result};

/// Boltzmann policy over `actions` actions reading the first `q` state entries.
pub fn boltzmann(q: usize, actions: usize, bound: f64) -> PolicyModel {
    BoltzmannLinearPolicy::new(Arc::new(IdentityFeatures::new(q, Some(bound))), actions).unwrap().into()
}

pub fn gaussian(q: usize, action_dim: usize, variance: f64, bound: f64) -> PolicyModel {
    GaussianLinearPolicy::isotropic(Arc::new(IdentityFeatures::new(q, Some(bound))), action_dim, variance)
        .unwrap()
        .into()
}

/// States uniform on `[-1, 1]^q`.
pub fn uniform_states(q: usize, n: usize, rng: &mut SeededRng) -> Vec<Vec<f64>> {
    (0..n).map(|_| (0..q).map(|_| rng.uniform_range(-1.0, 1.0)).collect()).collect()
}

/// i.i.d. demonstrations of `policy` at `theta` on the given states.
pub fn demonstrations(policy: &PolicyModel, theta: &DVector<f64>, states: Vec<Vec<f64>>, rng: &mut SeededRng) -> DemoDataset {
    let actions = states.iter().map(|s| policy.sample(theta, s, rng).unwrap()).collect();
    DemoDataset::new(states, actions, Vec::new()).unwrap()
}

/// Logistic instance: `d` uniform features, the first `signal.len()`
/// coefficients set to `signal`, the rest zero.
pub fn logistic_data(d: usize, signal: &[f64], n: usize, seed: u64) -> (PolicyModel, DVector<f64>, DemoDataset) {
    let policy = boltzmann(d, 2, (d as f64).sqrt());
    let mut theta = DVector::zeros(d);
    theta.as_mut_slice()[..signal.len()].copy_from_slice(signal);
    let mut rng = SeededRng::new(seed);
    let states = uniform_states(d, n, &mut rng);
    let data = demonstrations(&policy, &theta, states, &mut rng);
    (policy, theta, data)
}

/// Two states, two actions, horizon 2. The initial state is 1 with
/// probability `sigmoid(ω)`. Action 1 moves to the other state with
/// probability 0.8, action 0 stays with probability 0.9. Reward is
/// `R[s][a]`.
#[derive(Debug, Clone)]
pub struct ToyMdp {
    pub gamma: f64,
}

pub const TOY_REWARD: [[f64; 2]; 2] = [[1.0, 0.0], [-0.5, 2.0]];

impl ToyMdp {
    pub fn init_prob(omega: f64) -> [f64; 2] {
        let p1 = 1.0 / (1.0 + (-omega).exp());
        [1.0 - p1, p1]
    }

    pub fn transition(s: usize, a: usize) -> [f64; 2] {
        let stay = if a == 0 { 0.9 } else { 0.2 };
        let mut p = [0.0; 2];
        p[s] = stay;
        p[1 - s] = 1.0 - stay;
        p
    }

    /// Features `[1{s=0}, 1{s=1}]`.
    pub fn policy() -> PolicyModel {
        boltzmann(2, 2, 1.0)
    }

    pub fn state(s: usize) -> Vec<f64> {
        if s == 0 {
            vec![1.0, 0.0]
        } else {
            vec![0.0, 1.0]
        }
    }

    /// Expected discounted return by enumerating every trajectory.
    pub fn exact_return(&self, theta: &DVector<f64>, omega: f64) -> f64 {
        // independent softmax: logit of action 0 is θ·φ(s), action 1 has logit 0
        let pi = |s: usize, a: usize| {
            let z = theta[s];
            let p0 = 1.0 / (1.0 + (-z).exp());
            if a == 0 {
                p0
            } else {
                1.0 - p0
            }
        };
        let mu = Self::init_prob(omega);
        let mut j = 0.0;
        for s0 in 0..2 {
            for a0 in 0..2 {
                for s1 in 0..2 {
                    for a1 in 0..2 {
                        let p = mu[s0] * pi(s0, a0) * Self::transition(s0, a0)[s1] * pi(s1, a1);
                        j += p * (TOY_REWARD[s0][a0] + self.gamma * TOY_REWARD[s1][a1]);
                    }
                }
            }
        }
        j
    }

    /// Central finite-difference gradient of the exact return.
    pub fn exact_gradient(&self, theta: &DVector<f64>, omega: f64) -> DVector<f64> {
        let h = 1e-6;
        DVector::from_iterator(
            theta.len(),
            (0..theta.len()).map(|k| {
                let (mut up, mut dn) = (theta.clone(), theta.clone());
                up[k] += h;
                dn[k] -= h;
                (self.exact_return(&up, omega) - self.exact_return(&dn, omega)) / (2.0 * h)
            }),
        )
    }
}

fn toy_index(s: &[f64]) -> Result<usize> {
    match s {
        [a, b, ..] if *a == 1.0 && *b == 0.0 => Ok(0),
        [a, b, ..] if *a == 0.0 && *b == 1.0 => Ok(1),
        _ => Err(Error::OutOfSupport),
    }
}

impl ConfMdp for ToyMdp {
    fn name(&self) -> &'static str {
        "toy"
    }

    fn horizon(&self) -> usize {
        2
    }

    fn gamma(&self) -> f64 {
        self.gamma
    }

    fn config_dim(&self) -> usize {
        1
    }

    fn default_config(&self) -> Vec<f64> {
        vec![0.0]
    }

    fn validate_config(&self, omega: &[f64]) -> Result<()> {
        if omega.len() == 1 && omega[0].is_finite() {
            Ok(())
        } else {
            Err(Error::ConfigOutOfRange("one finite logit".into()))
        }
    }

    fn reset(&self, omega: &[f64], rng: &mut SeededRng) -> Result<Vec<f64>> {
        self.validate_config(omega)?;
        let s = usize::from(rng.bernoulli(Self::init_prob(omega[0])[1]));
        Ok(Self::state(s))
    }

    fn step(&self, _omega: &[f64], s: &[f64], a: &Action, rng: &mut SeededRng) -> Result<Step> {
        let s = toy_index(s)?;
        let a = a.as_discrete().filter(|&a| a < 2).ok_or(Error::InvalidArgument("action".into()))?;
        let next = usize::from(rng.bernoulli(Self::transition(s, a)[1]));
        Ok(Step { state: Self::state(next), reward: TOY_REWARD[s][a], done: false })
    }

    fn log_init_density(&self, omega: &[f64], s0: &[f64]) -> Result<f64> {
        self.validate_config(omega)?;
        Ok(Self::init_prob(omega[0])[toy_index(s0)?].ln())
    }

    fn transition_depends_on_config(&self) -> bool {
        false
    }

    fn policy_space(&self) -> PolicyModel {
        Self::policy()
    }
}

/// Per-coordinate mean and standard error of a sample of vectors.
pub fn mean_and_se(samples: &[DVector<f64>]) -> (DVector<f64>, DVector<f64>) {
    let n = samples.len() as f64;
    let d = samples[0].len();
    let mean = samples.iter().fold(DVector::zeros(d), |acc, g| acc + g) / n;
    let var = samples.iter().fold(DVector::zeros(d), |acc: DVector<f64>, g| {
        let c = g - &mean;
        acc + c.component_mul(&c)
    }) / (n - 1.0);
    (mean, var.map(|v| (v / n).sqrt()))
}
