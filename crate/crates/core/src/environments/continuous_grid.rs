//! Continuous grid world on `[0, 1]²`.
//!
//! State `[agent_x, agent_y, goal_x, goal_y]`; the action is a 2-D velocity,
//! clipped per component. Initial agent and goal positions are independent
//! Gaussians with configurable means `ω = (agent mean, goal mean)` and fixed
//! standard deviation, truncated to the unit square. The episode ends when the
//! agent enters the goal disc; every other step costs the remaining distance.

use std::sync::Arc;

use nalgebra::DMatrix;

use super::{check_config_len, ConfMdp, Step};
use crate::error::{Error, Result};
use crate::policies::{Action, FeatureMap, GaussianLinearPolicy, PolicyModel};
use crate::stats::special::{ln_normal_mass, normal_cdf};
use crate::stats::SeededRng;

const LATTICE: usize = 5;

/// Gaussian radial basis functions on a regular `5 × 5` lattice over the
/// unit square, once for the agent position and once for the goal.
#[derive(Debug, Clone)]
pub struct RbfFeatures {
    bandwidth: f64,
    bound: f64,
}

impl RbfFeatures {
    pub fn new(bandwidth: f64) -> Self {
        // The squared block norm factorises over the axes, so the sup over the
        // square is the squared sup of a 1-D sum. Grid search plus a margin
        // larger than the grid step times the derivative bound.
        let centers: Vec<f64> = (0..LATTICE).map(|i| i as f64 / (LATTICE - 1) as f64).collect();
        let axis = |x: f64| -> f64 { centers.iter().map(|c| (-(x - c).powi(2) / (bandwidth * bandwidth)).exp()).sum() };
        let steps = 20_000;
        let sup = (0..=steps).map(|i| axis(i as f64 / steps as f64)).fold(0.0f64, f64::max);
        let margin = LATTICE as f64 * 2.0 / (bandwidth * steps as f64);
        let block = sup + margin;
        Self { bandwidth, bound: (2.0f64).sqrt() * block }
    }

    fn block(&self, x: f64, y: f64, out: &mut [f64]) {
        let h = 1.0 / (LATTICE - 1) as f64;
        let two_var = 2.0 * self.bandwidth * self.bandwidth;
        for i in 0..LATTICE {
            for j in 0..LATTICE {
                let (cx, cy) = (i as f64 * h, j as f64 * h);
                out[i * LATTICE + j] = (-((x - cx).powi(2) + (y - cy).powi(2)) / two_var).exp();
            }
        }
    }
}

impl Default for RbfFeatures {
    fn default() -> Self {
        Self::new(0.15)
    }
}

impl FeatureMap for RbfFeatures {
    fn dim(&self) -> usize {
        2 * LATTICE * LATTICE
    }

    fn evaluate_into(&self, s: &[f64], out: &mut [f64]) {
        let n = LATTICE * LATTICE;
        let (a, g) = out.split_at_mut(n);
        self.block(s[0], s[1], a);
        self.block(s[2], s[3], g);
    }

    fn bound(&self) -> Option<f64> {
        Some(self.bound)
    }
}

#[derive(Debug, Clone)]
pub struct ContinuousGridWorld {
    pub horizon: usize,
    pub gamma: f64,
    pub init_std: f64,
    pub goal_radius: f64,
    pub max_speed: f64,
    pub policy_variance: f64,
}

impl Default for ContinuousGridWorld {
    fn default() -> Self {
        Self { horizon: 50, gamma: 0.98, init_std: 0.3, goal_radius: 0.1, max_speed: 0.1, policy_variance: 0.02 * 0.02 }
    }
}

impl ContinuousGridWorld {
    fn truncated_draw(&self, mean: f64, rng: &mut SeededRng) -> f64 {
        // inverse-CDF sampling restricted to [0, 1]
        let lo = normal_cdf((0.0 - mean) / self.init_std);
        let hi = normal_cdf((1.0 - mean) / self.init_std);
        let u = lo + (hi - lo) * rng.uniform();
        let z = inverse_normal_cdf(u.clamp(1e-300, 1.0 - 1e-16));
        (mean + self.init_std * z).clamp(0.0, 1.0)
    }

    fn log_truncated(&self, mean: f64, x: f64) -> f64 {
        let sd = self.init_std;
        let z = (x - mean) / sd;
        -0.5 * z * z - 0.5 * (2.0 * std::f64::consts::PI).ln() - sd.ln() - ln_normal_mass((0.0 - mean) / sd, (1.0 - mean) / sd)
    }
}

/// Standard normal quantile by Newton iterations on `normal_cdf`.
fn inverse_normal_cdf(p: f64) -> f64 {
    // rational start (Abramowitz–Stegun 26.2.23), then polish
    let tail = if p < 0.5 { p } else { 1.0 - p };
    let t = (-2.0 * tail.ln()).sqrt();
    let mut x = t - (2.515517 + 0.802853 * t + 0.010328 * t * t) / (1.0 + 1.432788 * t + 0.189269 * t * t + 0.001308 * t * t * t);
    if p < 0.5 {
        x = -x;
    }
    for _ in 0..3 {
        let pdf = (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt();
        if pdf < 1e-300 {
            break;
        }
        x -= (normal_cdf(x) - p) / pdf;
    }
    x
}

impl ConfMdp for ContinuousGridWorld {
    fn name(&self) -> &'static str {
        "continuous_grid"
    }

    fn horizon(&self) -> usize {
        self.horizon
    }

    fn gamma(&self) -> f64 {
        self.gamma
    }

    fn config_dim(&self) -> usize {
        4
    }

    fn default_config(&self) -> Vec<f64> {
        vec![0.2, 0.2, 0.8, 0.2]
    }

    fn validate_config(&self, omega: &[f64]) -> Result<()> {
        check_config_len(omega, 4)?;
        if omega.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::ConfigOutOfRange("means must lie in [0, 1]".into()));
        }
        Ok(())
    }

    fn project_config(&self, omega: &mut [f64]) {
        omega.iter_mut().for_each(|v| *v = v.clamp(0.0, 1.0));
    }

    fn reset(&self, omega: &[f64], rng: &mut SeededRng) -> Result<Vec<f64>> {
        self.validate_config(omega)?;
        Ok(omega.iter().map(|&m| self.truncated_draw(m, rng)).collect())
    }

    fn step(&self, _omega: &[f64], s: &[f64], a: &Action, _rng: &mut SeededRng) -> Result<Step> {
        let v = match a {
            Action::Continuous(v) if v.len() == 2 && v.iter().all(|x| x.is_finite()) => v,
            _ => return Err(Error::InvalidArgument("continuous grid actions are finite 2-D velocities".into())),
        };
        let x = (s[0] + v[0].clamp(-self.max_speed, self.max_speed)).clamp(0.0, 1.0);
        let y = (s[1] + v[1].clamp(-self.max_speed, self.max_speed)).clamp(0.0, 1.0);
        let dist = ((x - s[2]).powi(2) + (y - s[3]).powi(2)).sqrt();
        let done = dist <= self.goal_radius;
        Ok(Step { state: vec![x, y, s[2], s[3]], reward: if done { 0.0 } else { -dist }, done })
    }

    fn log_init_density(&self, omega: &[f64], s0: &[f64]) -> Result<f64> {
        self.validate_config(omega)?;
        if s0.len() < 4 || s0[..4].iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::OutOfSupport);
        }
        Ok(omega.iter().zip(s0).map(|(&m, &x)| self.log_truncated(m, x)).sum())
    }

    fn transition_depends_on_config(&self) -> bool {
        false
    }

    fn policy_space(&self) -> PolicyModel {
        let cov = DMatrix::identity(2, 2) * self.policy_variance;
        GaussianLinearPolicy::new(Arc::new(RbfFeatures::default()), cov)
            .expect("positive variance")
            .into()
    }
}
