//! 5×5 grid world with a configurable initial distribution over the agent
//! and goal cells.
//!
//! State `[agent_row, agent_col, goal_row, goal_col]`, row 0 at the top.
//! Actions: 0 up, 1 down, 2 left, 3 right; moves are clipped at the walls.
//! `ω` holds 25 agent-cell logits followed by 25 goal-cell logits and `μ_ω`
//! is the product of the two softmaxes.

use std::sync::Arc;

use super::{check_config_len, log_sum_exp, ConfMdp, Step};
use crate::error::{Error, Result};
use crate::policies::{Action, BoltzmannLinearPolicy, FeatureMap, PolicyModel};
use crate::stats::SeededRng;

pub const GRID_SIZE: usize = 5;
const CELLS: usize = GRID_SIZE * GRID_SIZE;

/// Row and column indicators for agent and goal, last row and column
/// omitted: `[agent rows 0..4, agent cols 0..4, goal rows 0..4, goal cols 0..4]`.
#[derive(Debug, Clone, Default)]
pub struct GridFeatures;

impl FeatureMap for GridFeatures {
    fn dim(&self) -> usize {
        4 * (GRID_SIZE - 1)
    }

    fn evaluate_into(&self, s: &[f64], out: &mut [f64]) {
        out.fill(0.0);
        let m = GRID_SIZE - 1;
        for (block, &v) in s[..4].iter().enumerate() {
            let idx = v as usize;
            if idx < m {
                out[block * m + idx] = 1.0;
            }
        }
    }

    fn bound(&self) -> Option<f64> {
        Some(2.0)
    }
}

#[derive(Debug, Clone)]
pub struct DiscreteGridWorld {
    horizon: usize,
    gamma: f64,
    concentration: f64,
}

impl Default for DiscreteGridWorld {
    fn default() -> Self {
        Self { horizon: 50, gamma: 0.98, concentration: 1.0 }
    }
}

fn cell(row: usize, col: usize) -> usize {
    row * GRID_SIZE + col
}

fn decode(s: &[f64]) -> Result<[usize; 4]> {
    if s.len() < 4 {
        return Err(Error::DimensionMismatch { expected: 4, got: s.len() });
    }
    let mut out = [0usize; 4];
    for (o, &v) in out.iter_mut().zip(s) {
        if !(v >= 0.0 && v < GRID_SIZE as f64 && v.fract() == 0.0) {
            return Err(Error::OutOfSupport);
        }
        *o = v as usize;
    }
    Ok(out)
}

impl DiscreteGridWorld {
    /// `concentration` scales how sharply the default `ω₀` favours the
    /// bottom-left (agent) and bottom-right (goal) corners.
    pub fn new(horizon: usize, gamma: f64, concentration: f64) -> Self {
        Self { horizon, gamma, concentration }
    }

    pub fn with_concentration(concentration: f64) -> Self {
        Self { concentration, ..Self::default() }
    }

    /// Per-cell log-probabilities of the agent and goal blocks.
    pub fn log_tables(&self, omega: &[f64]) -> Result<([f64; CELLS], [f64; CELLS])> {
        self.validate_config(omega)?;
        let za = log_sum_exp(&omega[..CELLS]);
        let zg = log_sum_exp(&omega[CELLS..]);
        let mut a = [0.0; CELLS];
        let mut g = [0.0; CELLS];
        for c in 0..CELLS {
            a[c] = omega[c] - za;
            g[c] = omega[CELLS + c] - zg;
        }
        Ok((a, g))
    }

    /// Configuration that is uniform over all cells.
    pub fn uniform_config() -> Vec<f64> {
        vec![0.0; 2 * CELLS]
    }
}

impl ConfMdp for DiscreteGridWorld {
    fn name(&self) -> &'static str {
        "discrete_grid"
    }

    fn horizon(&self) -> usize {
        self.horizon
    }

    fn gamma(&self) -> f64 {
        self.gamma
    }

    fn config_dim(&self) -> usize {
        2 * CELLS
    }

    fn default_config(&self) -> Vec<f64> {
        let k = self.concentration;
        let last = (GRID_SIZE - 1) as f64;
        let mut omega = vec![0.0; 2 * CELLS];
        for r in 0..GRID_SIZE {
            for c in 0..GRID_SIZE {
                let (rf, cf) = (r as f64, c as f64);
                omega[cell(r, c)] = -k * ((last - rf) + cf);
                omega[CELLS + cell(r, c)] = -k * ((last - rf) + (last - cf));
            }
        }
        omega
    }

    fn validate_config(&self, omega: &[f64]) -> Result<()> {
        check_config_len(omega, 2 * CELLS)
    }

    fn reset(&self, omega: &[f64], rng: &mut SeededRng) -> Result<Vec<f64>> {
        let (a, g) = self.log_tables(omega)?;
        let pa: Vec<f64> = a.iter().map(|v| v.exp()).collect();
        let pg: Vec<f64> = g.iter().map(|v| v.exp()).collect();
        let ca = rng.categorical(&pa);
        let cg = rng.categorical(&pg);
        Ok(vec![
            (ca / GRID_SIZE) as f64,
            (ca % GRID_SIZE) as f64,
            (cg / GRID_SIZE) as f64,
            (cg % GRID_SIZE) as f64,
        ])
    }

    fn step(&self, _omega: &[f64], s: &[f64], a: &Action, _rng: &mut SeededRng) -> Result<Step> {
        let [ar, ac, gr, gc] = decode(s)?;
        let dir = match a {
            Action::Discrete(i) if *i < 4 => *i,
            _ => return Err(Error::InvalidArgument("grid actions are 0..4".into())),
        };
        if ar == gr && ac == gc {
            return Ok(Step { state: s.to_vec(), reward: 1.0, done: true });
        }
        let last = GRID_SIZE - 1;
        let (nr, nc) = match dir {
            0 => (ar.saturating_sub(1), ac),
            1 => ((ar + 1).min(last), ac),
            2 => (ar, ac.saturating_sub(1)),
            _ => (ar, (ac + 1).min(last)),
        };
        Ok(Step { state: vec![nr as f64, nc as f64, gr as f64, gc as f64], reward: 0.0, done: false })
    }

    fn log_init_density(&self, omega: &[f64], s0: &[f64]) -> Result<f64> {
        let (a, g) = self.log_tables(omega)?;
        let [ar, ac, gr, gc] = decode(s0)?;
        Ok(a[cell(ar, ac)] + g[cell(gr, gc)])
    }

    fn log_init_densities(&self, omega: &[f64], states: &[&[f64]]) -> Result<Vec<f64>> {
        let (a, g) = self.log_tables(omega)?;
        states
            .iter()
            .map(|s| decode(s).map(|[ar, ac, gr, gc]| a[cell(ar, ac)] + g[cell(gr, gc)]))
            .collect()
    }

    fn transition_depends_on_config(&self) -> bool {
        false
    }

    fn policy_space(&self) -> PolicyModel {
        BoltzmannLinearPolicy::new(Arc::new(GridFeatures), 4)
            .expect("four actions")
            .into()
    }
}
