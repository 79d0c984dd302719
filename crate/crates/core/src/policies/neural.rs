//! Gaussian policy whose mean is a one-hidden-layer tanh network.
//!
//! Parameter layout (flattened, in this order):
//! `W1` (`hidden × input`, row-major), `b1` (`hidden`), `W2` (`output × hidden`,
//! row-major), `b2` (`output`). The network reads the first `input_dim`
//! entries of the state.

use nalgebra::DVector;

use super::{check_finite, Action};
use crate::error::{ensure_dim, Error, Result};
use crate::stats::SeededRng;

pub const HIDDEN_UNITS: usize = 8;

#[derive(Debug, Clone)]
pub struct NeuralGaussianPolicy {
    input_dim: usize,
    hidden_dim: usize,
    action_dim: usize,
    variance: f64,
}

/// Cached forward pass for one input.
struct Forward {
    hidden: Vec<f64>,
    mean: Vec<f64>,
}

impl NeuralGaussianPolicy {
    pub fn new(input_dim: usize, action_dim: usize, variance: f64) -> Result<Self> {
        Self::with_hidden(input_dim, HIDDEN_UNITS, action_dim, variance)
    }

    pub fn with_hidden(input_dim: usize, hidden_dim: usize, action_dim: usize, variance: f64) -> Result<Self> {
        if input_dim == 0 || hidden_dim == 0 || action_dim == 0 {
            return Err(Error::InvalidArgument("network sizes must be positive".into()));
        }
        if !(variance > 0.0 && variance.is_finite()) {
            return Err(Error::InvalidArgument("variance must be positive".into()));
        }
        Ok(Self { input_dim, hidden_dim, action_dim, variance })
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn hidden_dim(&self) -> usize {
        self.hidden_dim
    }

    pub fn action_dim(&self) -> usize {
        self.action_dim
    }

    pub fn variance(&self) -> f64 {
        self.variance
    }

    pub fn dim(&self) -> usize {
        let (i, h, o) = (self.input_dim, self.hidden_dim, self.action_dim);
        h * i + h + o * h + o
    }

    fn offsets(&self) -> (usize, usize, usize) {
        let (i, h, o) = (self.input_dim, self.hidden_dim, self.action_dim);
        let b1 = h * i;
        let w2 = b1 + h;
        (b1, w2, w2 + o * h)
    }

    /// Indices of the first-layer weights reading input `j`.
    pub fn input_group(&self, j: usize) -> Vec<usize> {
        (0..self.hidden_dim).map(|r| r * self.input_dim + j).collect()
    }

    /// Coordinates outside every input group (biases and output layer).
    pub fn shared_coordinates(&self) -> Vec<usize> {
        (self.hidden_dim * self.input_dim..self.dim()).collect()
    }

    /// Scaled random weights, zero biases.
    pub fn initial_parameters(&self, rng: &mut SeededRng) -> DVector<f64> {
        let scale_in = 1.0 / (self.input_dim as f64).sqrt();
        let scale_out = 1.0 / (self.hidden_dim as f64).sqrt();
        let (b1, w2, b2) = self.offsets();
        DVector::from_fn(self.dim(), |k, _| {
            if k < b1 {
                scale_in * rng.normal()
            } else if (w2..b2).contains(&k) {
                0.1 * scale_out * rng.normal()
            } else {
                0.0
            }
        })
    }

    fn forward(&self, theta: &[f64], x: &[f64]) -> Forward {
        let (i, h, o) = (self.input_dim, self.hidden_dim, self.action_dim);
        let (b1, w2, b2) = self.offsets();
        let hidden: Vec<f64> = (0..h)
            .map(|r| {
                let z: f64 = theta[r * i..(r + 1) * i].iter().zip(x).map(|(w, v)| w * v).sum::<f64>() + theta[b1 + r];
                z.tanh()
            })
            .collect();
        let mean = (0..o)
            .map(|c| {
                theta[w2 + c * h..w2 + (c + 1) * h].iter().zip(&hidden).map(|(w, v)| w * v).sum::<f64>() + theta[b2 + c]
            })
            .collect();
        Forward { hidden, mean }
    }

    pub fn mean(&self, theta: &DVector<f64>, s: &[f64]) -> Result<Vec<f64>> {
        ensure_dim(self.dim(), theta.len())?;
        self.input(s)?;
        Ok(self.forward(theta.as_slice(), &s[..self.input_dim]).mean)
    }

    fn input<'a>(&self, s: &'a [f64]) -> Result<&'a [f64]> {
        if s.len() < self.input_dim {
            return Err(Error::DimensionMismatch { expected: self.input_dim, got: s.len() });
        }
        check_finite(&s[..self.input_dim], "state")?;
        Ok(&s[..self.input_dim])
    }

    fn action<'a>(&self, a: &'a Action) -> Result<&'a [f64]> {
        match a {
            Action::Continuous(v) if v.len() == self.action_dim => {
                check_finite(v, "action")?;
                Ok(v)
            }
            Action::Continuous(v) => Err(Error::DimensionMismatch { expected: self.action_dim, got: v.len() }),
            Action::Discrete(_) => Err(Error::InvalidArgument("neural policy needs a continuous action".into())),
        }
    }

    fn log_norm(&self) -> f64 {
        -0.5 * self.action_dim as f64 * (2.0 * std::f64::consts::PI * self.variance).ln()
    }

    pub fn log_prob(&self, theta: &DVector<f64>, s: &[f64], a: &Action) -> Result<f64> {
        ensure_dim(self.dim(), theta.len())?;
        let x = self.input(s)?;
        let a = self.action(a)?;
        let f = self.forward(theta.as_slice(), x);
        let sq: f64 = a.iter().zip(&f.mean).map(|(ai, mi)| (ai - mi).powi(2)).sum();
        Ok(self.log_norm() - 0.5 * sq / self.variance)
    }

    pub fn sample(&self, theta: &DVector<f64>, s: &[f64], rng: &mut SeededRng) -> Result<Action> {
        let mean = self.mean(theta, s)?;
        let sd = self.variance.sqrt();
        Ok(Action::Continuous(mean.iter().map(|m| m + sd * rng.normal()).collect()))
    }

    /// Accumulates `scale · ∂ log π(a|x) / ∂θ` into `grad` by backpropagation.
    fn backprop_into(&self, theta: &[f64], x: &[f64], a: &[f64], scale: f64, grad: &mut [f64]) -> f64 {
        let (i, h, o) = (self.input_dim, self.hidden_dim, self.action_dim);
        let (b1, w2, b2) = self.offsets();
        let f = self.forward(theta, x);
        let mut sq = 0.0;
        let mut dhidden = vec![0.0; h];
        for c in 0..o {
            let r = a[c] - f.mean[c];
            sq += r * r;
            let dmean = scale * r / self.variance;
            grad[b2 + c] += dmean;
            for u in 0..h {
                grad[w2 + c * h + u] += dmean * f.hidden[u];
                dhidden[u] += dmean * theta[w2 + c * h + u];
            }
        }
        for u in 0..h {
            let dz = dhidden[u] * (1.0 - f.hidden[u] * f.hidden[u]);
            grad[b1 + u] += dz;
            for j in 0..i {
                grad[u * i + j] += dz * x[j];
            }
        }
        self.log_norm() - 0.5 * sq / self.variance
    }

    pub fn grad_log_prob(&self, theta: &DVector<f64>, s: &[f64], a: &Action) -> Result<DVector<f64>> {
        ensure_dim(self.dim(), theta.len())?;
        let x = self.input(s)?;
        let a = self.action(a)?;
        let mut g = DVector::zeros(self.dim());
        self.backprop_into(theta.as_slice(), x, a, 1.0, g.as_mut_slice());
        Ok(g)
    }

    /// Mean negative log-likelihood and its gradient over a batch of
    /// `(input, action)` rows.
    pub fn mean_nll_and_grad(&self, theta: &DVector<f64>, inputs: &[Vec<f64>], actions: &[Vec<f64>]) -> (f64, DVector<f64>) {
        let n = inputs.len() as f64;
        let mut g = DVector::zeros(self.dim());
        let mut total = 0.0;
        for (x, a) in inputs.iter().zip(actions) {
            total += self.backprop_into(theta.as_slice(), x, a, -1.0 / n, g.as_mut_slice());
        }
        (-total / n, g)
    }

    /// Mean negative log-likelihood over a batch (forward pass only).
    pub fn mean_nll(&self, theta: &DVector<f64>, inputs: &[Vec<f64>], actions: &[Vec<f64>]) -> f64 {
        let n = inputs.len() as f64;
        let total: f64 = inputs
            .iter()
            .zip(actions)
            .map(|(x, a)| {
                let f = self.forward(theta.as_slice(), x);
                let sq: f64 = a.iter().zip(&f.mean).map(|(ai, mi)| (ai - mi).powi(2)).sum();
                self.log_norm() - 0.5 * sq / self.variance
            })
            .sum();
        -total / n
    }
}
