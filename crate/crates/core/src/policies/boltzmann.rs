//! Linear Boltzmann (softmax) policy over `k + 1` actions.
//!
//! Only the first `k` actions own a parameter row; the last action has an
//! implicit zero row, which removes the shift invariance of the softmax.
//! Layout is `θ = vec(Θ̃ᵀ)`, so `θ[a * q + j]` couples action `a < k` with
//! feature `j`. The sufficient statistic is `e_a ⊗ φ(s)` for `a < k` and
//! the zero vector for action `k`.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use super::{check_finite, Action, FeatureMap};
use crate::error::{ensure_dim, Error, Result};
use crate::stats::{kron, SeededRng};

#[derive(Debug, Clone)]
pub struct BoltzmannLinearPolicy {
    features: Arc<dyn FeatureMap>,
    action_count: usize,
}

impl BoltzmannLinearPolicy {
    pub fn new(features: Arc<dyn FeatureMap>, action_count: usize) -> Result<Self> {
        if action_count < 2 {
            return Err(Error::InvalidArgument("Boltzmann policy needs at least two actions".into()));
        }
        Ok(Self { features, action_count })
    }

    pub fn feature_map(&self) -> &Arc<dyn FeatureMap> {
        &self.features
    }

    pub fn feature_dim(&self) -> usize {
        self.features.dim()
    }

    pub fn action_count(&self) -> usize {
        self.action_count
    }

    /// Number of parameter rows `k`.
    pub fn rows(&self) -> usize {
        self.action_count - 1
    }

    pub fn dim(&self) -> usize {
        self.rows() * self.features.dim()
    }

    /// Action probabilities (all `k + 1`) for a precomputed feature vector.
    pub fn probs_from_features(&self, theta: &[f64], phi: &[f64], out: &mut [f64]) {
        let q = phi.len();
        let k = self.rows();
        let mut max = 0.0f64;
        for a in 0..k {
            let z: f64 = theta[a * q..(a + 1) * q].iter().zip(phi).map(|(t, p)| t * p).sum();
            out[a] = z;
            max = max.max(z);
        }
        out[k] = 0.0;
        let mut total = 0.0;
        for v in out.iter_mut() {
            *v = (*v - max).exp();
            total += *v;
        }
        for v in out.iter_mut() {
            *v /= total;
        }
    }

    pub fn probs(&self, theta: &DVector<f64>, s: &[f64]) -> Vec<f64> {
        let phi = self.features.evaluate(s);
        let mut out = vec![0.0; self.action_count];
        self.probs_from_features(theta.as_slice(), phi.as_slice(), &mut out);
        out
    }

    fn action(&self, a: &Action) -> Result<usize> {
        match *a {
            Action::Discrete(i) if i < self.action_count => Ok(i),
            Action::Discrete(i) => Err(Error::InvalidArgument(format!(
                "action {i} out of range for {} actions",
                self.action_count
            ))),
            Action::Continuous(_) => Err(Error::InvalidArgument("Boltzmann policy needs a discrete action".into())),
        }
    }

    pub fn log_prob(&self, theta: &DVector<f64>, s: &[f64], a: &Action) -> Result<f64> {
        ensure_dim(self.dim(), theta.len())?;
        check_finite(s, "state")?;
        let a = self.action(a)?;
        let phi = self.features.evaluate(s);
        let q = phi.len();
        let k = self.rows();
        let logits: Vec<f64> = (0..=k)
            .map(|b| if b == k { 0.0 } else { theta.rows(b * q, q).dot(&phi) })
            .collect();
        let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + logits.iter().map(|z| (z - max).exp()).sum::<f64>().ln();
        Ok(logits[a] - lse)
    }

    pub fn sample(&self, theta: &DVector<f64>, s: &[f64], rng: &mut SeededRng) -> Result<Action> {
        ensure_dim(self.dim(), theta.len())?;
        Ok(Action::Discrete(rng.categorical(&self.probs(theta, s))))
    }

    pub fn sufficient_statistic(&self, s: &[f64], a: &Action) -> Result<DVector<f64>> {
        let a = self.action(a)?;
        let phi = self.features.evaluate(s);
        let q = phi.len();
        let mut t = DVector::zeros(self.dim());
        if a < self.rows() {
            t.rows_mut(a * q, q).copy_from(&phi);
        }
        Ok(t)
    }

    /// `E_{a∼π}[t(s, a)] = π_{1..k} ⊗ φ(s)`, summed over the action set.
    pub fn expected_statistic(&self, theta: &DVector<f64>, s: &[f64]) -> Result<DVector<f64>> {
        ensure_dim(self.dim(), theta.len())?;
        let probs = self.probs(theta, s);
        let mut acc = DVector::zeros(self.dim());
        for (a, p) in probs.iter().enumerate() {
            acc += self.sufficient_statistic(s, &Action::Discrete(a))? * *p;
        }
        Ok(acc)
    }

    /// Score `(e_a - π) ⊗ φ(s)`, with `e_k = 0` for the last action.
    pub fn grad_log_prob(&self, theta: &DVector<f64>, s: &[f64], a: &Action) -> Result<DVector<f64>> {
        ensure_dim(self.dim(), theta.len())?;
        let a = self.action(a)?;
        let phi = self.features.evaluate(s);
        let q = phi.len();
        let mut probs = vec![0.0; self.action_count];
        self.probs_from_features(theta.as_slice(), phi.as_slice(), &mut probs);
        let mut g = DVector::zeros(self.dim());
        for b in 0..self.rows() {
            let coef = if b == a { 1.0 - probs[b] } else { -probs[b] };
            for j in 0..q {
                g[b * q + j] = coef * phi[j];
            }
        }
        Ok(g)
    }

    /// `(diag(π) - π πᵀ) ⊗ φ φᵀ` over the first `k` actions.
    pub fn fisher_state(&self, theta: &DVector<f64>, s: &[f64]) -> Result<DMatrix<f64>> {
        ensure_dim(self.dim(), theta.len())?;
        let phi = self.features.evaluate(s);
        let mut probs = vec![0.0; self.action_count];
        self.probs_from_features(theta.as_slice(), phi.as_slice(), &mut probs);
        let k = self.rows();
        let cov = DMatrix::from_fn(k, k, |i, j| {
            if i == j {
                probs[i] - probs[i] * probs[i]
            } else {
                -probs[i] * probs[j]
            }
        });
        Ok(kron(&cov, &(&phi * phi.transpose())))
    }

    /// `2 Φ_max`.
    pub fn subgaussian_parameter(&self) -> Result<f64> {
        Ok(2.0 * self.features.bound().ok_or(Error::UnboundedFeatures)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::policies::IdentityFeatures;

    fn policy(q: usize, actions: usize) -> BoltzmannLinearPolicy {
        BoltzmannLinearPolicy::new(Arc::new(IdentityFeatures::new(q, Some(1.0))), actions).unwrap()
    }

    #[test]
    fn uniform_at_zero() {
        let p = policy(1, 2);
        for a in 0..2 {
            let lp = p.log_prob(&DVector::zeros(1), &[1.0], &Action::Discrete(a)).unwrap();
            assert!((lp - 0.5f64.ln()).abs() < 1e-15);
        }
    }

    #[test]
    fn implicit_zero_row() {
        // θ = (1), φ = 1: log π(a₁) = 1 - log(1 + e)
        let p = policy(1, 2);
        let lp = p.log_prob(&DVector::from_vec(vec![1.0]), &[1.0], &Action::Discrete(0)).unwrap();
        assert!((lp - (1.0 - (1.0 + std::f64::consts::E).ln())).abs() < 1e-14);
    }

    #[test]
    fn sufficient_statistic_examples() {
        let p = policy(2, 2);
        let last = p.sufficient_statistic(&[1.0, 2.0], &Action::Discrete(1)).unwrap();
        assert_eq!(last.as_slice(), &[0.0, 0.0]);
        let first = p.sufficient_statistic(&[1.0, 2.0], &Action::Discrete(0)).unwrap();
        assert_eq!(first.as_slice(), &[1.0, 2.0]);
    }

    #[test]
    fn score_example() {
        let p = policy(1, 2);
        let g = p.grad_log_prob(&DVector::zeros(1), &[1.0], &Action::Discrete(0)).unwrap();
        assert!((g[0] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn fisher_example() {
        let p = policy(1, 2);
        let f = p.fisher_state(&DVector::zeros(1), &[1.0]).unwrap();
        assert!((f[(0, 0)] - 0.25).abs() < 1e-15);
    }

    #[test]
    fn subgaussian_example() {
        assert!((policy(3, 4).subgaussian_parameter().unwrap() - 2.0).abs() < 1e-15);
    }

    #[test]
    fn rejects_bad_action() {
        let p = policy(1, 2);
        assert!(p.log_prob(&DVector::zeros(1), &[1.0], &Action::Discrete(2)).is_err());
        assert!(p.log_prob(&DVector::zeros(1), &[f64::NAN], &Action::Discrete(0)).is_err());
    }

    #[test]
    fn large_logits_stay_finite() {
        let p = policy(1, 3);
        let theta = DVector::from_vec(vec![800.0, -800.0]);
        for a in 0..3 {
            assert!(p.log_prob(&theta, &[1.0], &Action::Discrete(a)).unwrap().is_finite());
        }
    }
}
