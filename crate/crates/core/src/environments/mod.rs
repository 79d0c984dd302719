//! Configurable MDPs: the configuration `ω` shapes the initial-state
//! distribution and, for some environments, the transitions.

mod car;
mod continuous_grid;
mod discrete_grid;
mod minigolf;

pub use car::{CarDriving, CarParams};
pub use continuous_grid::{ContinuousGridWorld, RbfFeatures};
pub use discrete_grid::{DiscreteGridWorld, GridFeatures, GRID_SIZE};
pub use minigolf::{Minigolf, MinigolfFeatures, MinigolfParams};

use std::fmt::Debug;

use crate::error::{Error, Result};
use crate::policies::{Action, PolicyModel};
use crate::stats::SeededRng;

#[derive(Debug, Clone, PartialEq)]
pub struct Step {
    pub state: Vec<f64>,
    pub reward: f64,
    pub done: bool,
}

pub trait ConfMdp: Send + Sync + Debug {
    fn name(&self) -> &'static str;
    fn horizon(&self) -> usize;
    fn gamma(&self) -> f64;
    fn config_dim(&self) -> usize;
    fn default_config(&self) -> Vec<f64>;

    /// Checks `ω ∈ Ω`.
    fn validate_config(&self, omega: &[f64]) -> Result<()>;

    /// Moves `ω` back into `Ω` after an unconstrained update.
    fn project_config(&self, _omega: &mut [f64]) {}

    /// Draws `s₀ ∼ μ_ω`.
    fn reset(&self, omega: &[f64], rng: &mut SeededRng) -> Result<Vec<f64>>;

    fn step(&self, omega: &[f64], s: &[f64], a: &Action, rng: &mut SeededRng) -> Result<Step>;

    /// `log μ_ω(s₀)`.
    fn log_init_density(&self, omega: &[f64], s0: &[f64]) -> Result<f64>;

    /// `log μ_ω` over many initial states; environments may share work.
    fn log_init_densities(&self, omega: &[f64], states: &[&[f64]]) -> Result<Vec<f64>> {
        states.iter().map(|s| self.log_init_density(omega, s)).collect()
    }

    fn transition_depends_on_config(&self) -> bool;

    /// `log p_ω(s' | s, a)` for environments whose transitions depend on `ω`.
    fn log_transition_density(&self, _omega: &[f64], _s: &[f64], _a: &Action, _next: &[f64]) -> Result<f64> {
        if self.transition_depends_on_config() {
            Err(Error::Unsupported { op: "log_transition_density", target: self.name() })
        } else {
            Ok(0.0)
        }
    }

    /// The super-policy space used for identification.
    fn policy_space(&self) -> PolicyModel;
}

pub(crate) fn check_config_len(omega: &[f64], expected: usize) -> Result<()> {
    if omega.len() != expected {
        return Err(Error::ConfigOutOfRange(format!("expected {expected} values, got {}", omega.len())));
    }
    if omega.iter().any(|v| !v.is_finite()) {
        return Err(Error::ConfigOutOfRange("non-finite value".into()));
    }
    Ok(())
}

/// Log-sum-exp of a slice.
pub(crate) fn log_sum_exp(xs: &[f64]) -> f64 {
    let max = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + xs.iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}
