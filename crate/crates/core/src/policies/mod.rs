//! Parametric policy families.
//!
//! Linear policies identify one unit per coordinate. The neural policy
//! identifies one unit per network input: the unit is the group of
//! first-layer weights reading that input, and every other weight is shared
//! by all hypotheses.

mod boltzmann;
mod features;
mod gaussian;
mod neural;

pub use boltzmann::BoltzmannLinearPolicy;
pub use features::{FeatureMap, IdentityFeatures};
pub use gaussian::GaussianLinearPolicy;
pub use neural::{NeuralGaussianPolicy, HIDDEN_UNITS};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stats::SeededRng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Action {
    Discrete(usize),
    Continuous(Vec<f64>),
}

impl Action {
    pub fn as_continuous(&self) -> Option<&[f64]> {
        match self {
            Action::Continuous(v) => Some(v),
            Action::Discrete(_) => None,
        }
    }

    pub fn as_discrete(&self) -> Option<usize> {
        match *self {
            Action::Discrete(i) => Some(i),
            Action::Continuous(_) => None,
        }
    }
}

pub fn check_finite(v: &[f64], what: &str) -> Result<()> {
    if v.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite(what.to_string()))
    }
}

#[derive(Debug, Clone)]
pub enum PolicyModel {
    Gaussian(GaussianLinearPolicy),
    Boltzmann(BoltzmannLinearPolicy),
    Neural(NeuralGaussianPolicy),
}

impl PolicyModel {
    pub fn name(&self) -> &'static str {
        match self {
            PolicyModel::Gaussian(_) => "gaussian",
            PolicyModel::Boltzmann(_) => "boltzmann",
            PolicyModel::Neural(_) => "neural",
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            PolicyModel::Gaussian(p) => p.dim(),
            PolicyModel::Boltzmann(p) => p.dim(),
            PolicyModel::Neural(p) => p.dim(),
        }
    }

    pub fn is_exponential_family(&self) -> bool {
        !matches!(self, PolicyModel::Neural(_))
    }

    /// Coordinate groups tested as a whole.
    pub fn units(&self) -> Vec<Vec<usize>> {
        match self {
            PolicyModel::Neural(p) => (0..p.input_dim()).map(|j| p.input_group(j)).collect(),
            _ => (0..self.dim()).map(|k| vec![k]).collect(),
        }
    }

    pub fn unit_count(&self) -> usize {
        match self {
            PolicyModel::Neural(p) => p.input_dim(),
            _ => self.dim(),
        }
    }

    /// Coordinates free under every hypothesis.
    pub fn shared_coordinates(&self) -> Vec<usize> {
        match self {
            PolicyModel::Neural(p) => p.shared_coordinates(),
            _ => Vec::new(),
        }
    }

    /// Starting point for iterative fits and training.
    pub fn initial_parameters(&self, rng: &mut SeededRng) -> DVector<f64> {
        match self {
            PolicyModel::Neural(p) => p.initial_parameters(rng),
            _ => DVector::zeros(self.dim()),
        }
    }

    pub fn log_prob(&self, theta: &DVector<f64>, s: &[f64], a: &Action) -> Result<f64> {
        match self {
            PolicyModel::Gaussian(p) => p.log_prob(theta, s, a),
            PolicyModel::Boltzmann(p) => p.log_prob(theta, s, a),
            PolicyModel::Neural(p) => p.log_prob(theta, s, a),
        }
    }

    pub fn sample(&self, theta: &DVector<f64>, s: &[f64], rng: &mut SeededRng) -> Result<Action> {
        match self {
            PolicyModel::Gaussian(p) => p.sample(theta, s, rng),
            PolicyModel::Boltzmann(p) => p.sample(theta, s, rng),
            PolicyModel::Neural(p) => p.sample(theta, s, rng),
        }
    }

    pub fn grad_log_prob(&self, theta: &DVector<f64>, s: &[f64], a: &Action) -> Result<DVector<f64>> {
        match self {
            PolicyModel::Gaussian(p) => p.grad_log_prob(theta, s, a),
            PolicyModel::Boltzmann(p) => p.grad_log_prob(theta, s, a),
            PolicyModel::Neural(p) => p.grad_log_prob(theta, s, a),
        }
    }

    pub fn sufficient_statistic(&self, s: &[f64], a: &Action) -> Result<DVector<f64>> {
        match self {
            PolicyModel::Gaussian(p) => p.sufficient_statistic(s, a),
            PolicyModel::Boltzmann(p) => p.sufficient_statistic(s, a),
            PolicyModel::Neural(_) => Err(unsupported("sufficient_statistic")),
        }
    }

    pub fn expected_statistic(&self, theta: &DVector<f64>, s: &[f64]) -> Result<DVector<f64>> {
        match self {
            PolicyModel::Gaussian(p) => p.expected_statistic(theta, s),
            PolicyModel::Boltzmann(p) => p.expected_statistic(theta, s),
            PolicyModel::Neural(_) => Err(unsupported("expected_statistic")),
        }
    }

    /// `t̄(s, a, θ) = t(s, a) - E_{a'∼π_θ}[t(s, a')]`.
    pub fn centered_statistic(&self, theta: &DVector<f64>, s: &[f64], a: &Action) -> Result<DVector<f64>> {
        Ok(self.sufficient_statistic(s, a)? - self.expected_statistic(theta, s)?)
    }

    pub fn fisher_state(&self, theta: &DVector<f64>, s: &[f64]) -> Result<DMatrix<f64>> {
        match self {
            PolicyModel::Gaussian(p) => {
                crate::error::ensure_dim(p.dim(), theta.len())?;
                Ok(p.fisher_state(s))
            }
            PolicyModel::Boltzmann(p) => p.fisher_state(theta, s),
            PolicyModel::Neural(_) => Err(unsupported("fisher_state")),
        }
    }

    pub fn subgaussian_parameter(&self) -> Result<f64> {
        match self {
            PolicyModel::Gaussian(p) => p.subgaussian_parameter(),
            PolicyModel::Boltzmann(p) => p.subgaussian_parameter(),
            PolicyModel::Neural(_) => Err(unsupported("subgaussian_parameter")),
        }
    }
}

fn unsupported(op: &'static str) -> Error {
    Error::Unsupported { op, target: "the neural policy" }
}

impl From<GaussianLinearPolicy> for PolicyModel {
    fn from(p: GaussianLinearPolicy) -> Self {
        PolicyModel::Gaussian(p)
    }
}

impl From<BoltzmannLinearPolicy> for PolicyModel {
    fn from(p: BoltzmannLinearPolicy) -> Self {
        PolicyModel::Boltzmann(p)
    }
}

impl From<NeuralGaussianPolicy> for PolicyModel {
    fn from(p: NeuralGaussianPolicy) -> Self {
        PolicyModel::Neural(p)
    }
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;

    fn boltz(q: usize, actions: usize) -> PolicyModel {
        BoltzmannLinearPolicy::new(Arc::new(IdentityFeatures::new(q, Some(1.0))), actions).unwrap().into()
    }

    #[test]
    fn neural_rejects_exponential_family_ops() {
        let p: PolicyModel = NeuralGaussianPolicy::new(2, 1, 0.1).unwrap().into();
        let theta = DVector::zeros(p.dim());
        assert!(matches!(p.sufficient_statistic(&[0.0, 0.0], &Action::Continuous(vec![0.0])), Err(Error::Unsupported { .. })));
        assert!(p.fisher_state(&theta, &[0.0, 0.0]).is_err());
        assert!(p.subgaussian_parameter().is_err());
        assert_eq!(p.units().len(), 2);
    }

    #[test]
    fn boltzmann_sampling_frequencies() {
        let p = boltz(1, 2);
        let theta = DVector::zeros(1);
        let mut rng = SeededRng::new(11);
        let n = 100_000;
        let ones = (0..n).filter(|_| p.sample(&theta, &[1.0], &mut rng).unwrap() == Action::Discrete(0)).count();
        assert!((ones as f64 / n as f64 - 0.5).abs() < 0.01);
    }

    #[test]
    fn gaussian_sampling_moments() {
        let p: PolicyModel = GaussianLinearPolicy::isotropic(Arc::new(IdentityFeatures::new(1, Some(1.0))), 1, 1.0)
            .unwrap()
            .into();
        let theta = DVector::zeros(1);
        let mut rng = SeededRng::new(12);
        let xs: Vec<f64> = (0..100_000)
            .map(|_| p.sample(&theta, &[0.5], &mut rng).unwrap().as_continuous().unwrap()[0])
            .collect();
        let m = xs.iter().sum::<f64>() / xs.len() as f64;
        let v = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / xs.len() as f64;
        assert!(m.abs() < 0.02);
        assert!((v - 1.0).abs() < 0.03);
    }

    #[test]
    fn sampling_is_seeded() {
        let p = boltz(2, 4);
        let theta = DVector::from_vec(vec![0.3, -0.2, 0.5, 0.1, -0.4, 0.2]);
        let draw = |seed| {
            let mut rng = SeededRng::new(seed);
            (0..50).map(|_| p.sample(&theta, &[0.4, 0.6], &mut rng).unwrap()).collect::<Vec<_>>()
        };
        assert_eq!(draw(4), draw(4));
    }
}
