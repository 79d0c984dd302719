//! Linear Gaussian policy with fixed covariance.
//!
//! `a ~ N(Θ̃ φ(s), Σ)` with `Θ̃ ∈ R^{k×q}` stored as `θ = vec(Θ̃ᵀ)`, i.e.
//! `θ[r * q + j] = Θ̃[r][j]`. As an exponential family the sufficient
//! statistic is `t(s, a) = Σ⁻¹ a ⊗ φ(s)` and the per-state Fisher
//! information is `Σ⁻¹ ⊗ φ(s) φ(s)ᵀ`.

use std::sync::Arc;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use super::{check_finite, Action, FeatureMap};
use crate::error::{ensure_dim, Error, Result};
use crate::stats::{kron, min_eigenvalue_sym, SeededRng};

#[derive(Debug, Clone)]
pub struct GaussianLinearPolicy {
    features: Arc<dyn FeatureMap>,
    action_dim: usize,
    covariance: DMatrix<f64>,
    precision: DMatrix<f64>,
    chol: Cholesky<f64, Dyn>,
    log_norm: f64,
    min_cov_eig: f64,
}

impl GaussianLinearPolicy {
    pub fn new(features: Arc<dyn FeatureMap>, covariance: DMatrix<f64>) -> Result<Self> {
        let k = covariance.nrows();
        if k == 0 || covariance.ncols() != k {
            return Err(Error::InvalidArgument("covariance must be square and non-empty".into()));
        }
        let min_cov_eig = min_eigenvalue_sym(&covariance)?;
        if min_cov_eig <= 0.0 {
            return Err(Error::InvalidArgument("covariance must be positive definite".into()));
        }
        let chol = Cholesky::new(covariance.clone())
            .ok_or_else(|| Error::InvalidArgument("covariance must be positive definite".into()))?;
        let precision = chol.inverse();
        let log_det: f64 = chol.l().diagonal().iter().map(|v| 2.0 * v.ln()).sum();
        let log_norm = -0.5 * (k as f64) * (2.0 * std::f64::consts::PI).ln() - 0.5 * log_det;
        Ok(Self { features, action_dim: k, covariance, precision, chol, log_norm, min_cov_eig })
    }

    /// Isotropic covariance `variance · I_k`.
    pub fn isotropic(features: Arc<dyn FeatureMap>, action_dim: usize, variance: f64) -> Result<Self> {
        Self::new(features, DMatrix::identity(action_dim, action_dim) * variance)
    }

    pub fn feature_map(&self) -> &Arc<dyn FeatureMap> {
        &self.features
    }

    pub fn feature_dim(&self) -> usize {
        self.features.dim()
    }

    pub fn action_dim(&self) -> usize {
        self.action_dim
    }

    pub fn covariance(&self) -> &DMatrix<f64> {
        &self.covariance
    }

    pub fn precision(&self) -> &DMatrix<f64> {
        &self.precision
    }

    pub fn dim(&self) -> usize {
        self.action_dim * self.features.dim()
    }

    /// `Θ̃ φ` for a precomputed feature vector.
    pub fn mean_from_features(&self, theta: &DVector<f64>, phi: &[f64]) -> DVector<f64> {
        let q = phi.len();
        DVector::from_fn(self.action_dim, |r, _| {
            theta.as_slice()[r * q..(r + 1) * q].iter().zip(phi).map(|(t, p)| t * p).sum()
        })
    }

    pub fn mean(&self, theta: &DVector<f64>, s: &[f64]) -> DVector<f64> {
        let phi = self.features.evaluate(s);
        self.mean_from_features(theta, phi.as_slice())
    }

    fn action<'a>(&self, a: &'a Action) -> Result<&'a [f64]> {
        match a {
            Action::Continuous(v) if v.len() == self.action_dim => {
                check_finite(v, "action")?;
                Ok(v)
            }
            Action::Continuous(v) => Err(Error::DimensionMismatch { expected: self.action_dim, got: v.len() }),
            Action::Discrete(_) => Err(Error::InvalidArgument("Gaussian policy needs a continuous action".into())),
        }
    }

    pub fn log_prob(&self, theta: &DVector<f64>, s: &[f64], a: &Action) -> Result<f64> {
        ensure_dim(self.dim(), theta.len())?;
        check_finite(s, "state")?;
        let a = self.action(a)?;
        let mu = self.mean(theta, s);
        let diff = DVector::from_fn(self.action_dim, |r, _| a[r] - mu[r]);
        let quad = diff.dot(&(&self.precision * &diff));
        Ok(self.log_norm - 0.5 * quad)
    }

    pub fn sample(&self, theta: &DVector<f64>, s: &[f64], rng: &mut SeededRng) -> Result<Action> {
        ensure_dim(self.dim(), theta.len())?;
        let mu = self.mean(theta, s);
        let z = DVector::from_fn(self.action_dim, |_, _| rng.normal());
        let a = mu + self.chol.l() * z;
        Ok(Action::Continuous(a.as_slice().to_vec()))
    }

    /// `Σ⁻¹ a ⊗ φ(s)`.
    pub fn sufficient_statistic(&self, s: &[f64], a: &Action) -> Result<DVector<f64>> {
        let a = DVector::from_column_slice(self.action(a)?);
        let phi = self.features.evaluate(s);
        Ok(kron_vec(&(&self.precision * a), &phi))
    }

    /// `E_{a∼π}[t(s, a)] = Σ⁻¹ μ(s) ⊗ φ(s)`.
    pub fn expected_statistic(&self, theta: &DVector<f64>, s: &[f64]) -> Result<DVector<f64>> {
        ensure_dim(self.dim(), theta.len())?;
        let phi = self.features.evaluate(s);
        let mu = self.mean_from_features(theta, phi.as_slice());
        Ok(kron_vec(&(&self.precision * mu), &phi))
    }

    /// Score `∂ log π / ∂θ`, from differentiating the quadratic form directly.
    pub fn grad_log_prob(&self, theta: &DVector<f64>, s: &[f64], a: &Action) -> Result<DVector<f64>> {
        ensure_dim(self.dim(), theta.len())?;
        let a = self.action(a)?;
        let phi = self.features.evaluate(s);
        let q = phi.len();
        let mu = self.mean_from_features(theta, phi.as_slice());
        let resid = DVector::from_fn(self.action_dim, |r, _| a[r] - mu[r]);
        let w = &self.precision * resid;
        let mut g = DVector::zeros(self.dim());
        for r in 0..self.action_dim {
            for j in 0..q {
                g[r * q + j] = w[r] * phi[j];
            }
        }
        Ok(g)
    }

    pub fn fisher_state(&self, s: &[f64]) -> DMatrix<f64> {
        let phi = self.features.evaluate(s);
        kron(&self.precision, &(&phi * phi.transpose()))
    }

    /// `Φ_max / sqrt(λ_min(Σ))`.
    pub fn subgaussian_parameter(&self) -> Result<f64> {
        let bound = self.features.bound().ok_or(Error::UnboundedFeatures)?;
        Ok(bound / self.min_cov_eig.sqrt())
    }
}

pub(crate) fn kron_vec(a: &DVector<f64>, b: &DVector<f64>) -> DVector<f64> {
    let q = b.len();
    DVector::from_fn(a.len() * q, |i, _| a[i / q] * b[i % q])
}
