//! State feature maps `φ: S → R^q`.

use std::fmt::Debug;

use nalgebra::DVector;

pub trait FeatureMap: Send + Sync + Debug {
    fn dim(&self) -> usize;

    /// Writes `φ(s)` into `out` (length `dim()`).
    fn evaluate_into(&self, s: &[f64], out: &mut [f64]);

    /// `Φ_max ≥ sup_s ‖φ(s)‖₂`, or `None` when unbounded.
    fn bound(&self) -> Option<f64>;

    fn evaluate(&self, s: &[f64]) -> DVector<f64> {
        let mut v = DVector::zeros(self.dim());
        self.evaluate_into(s, v.as_mut_slice());
        v
    }
}

/// Uses the first `dim` state entries as features.
#[derive(Debug, Clone)]
pub struct IdentityFeatures {
    dim: usize,
    bound: Option<f64>,
}

impl IdentityFeatures {
    pub fn new(dim: usize, bound: Option<f64>) -> Self {
        Self { dim, bound }
    }
}

impl FeatureMap for IdentityFeatures {
    fn dim(&self) -> usize {
        self.dim
    }

    fn evaluate_into(&self, s: &[f64], out: &mut [f64]) {
        out.copy_from_slice(&s[..self.dim]);
    }

    fn bound(&self) -> Option<f64> {
        self.bound
    }
}
