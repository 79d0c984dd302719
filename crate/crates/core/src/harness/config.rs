//! Experiment configuration. Every field is optional in the JSON document;
//! missing values fall back to per-environment defaults.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::configuration::ConfigSearch;
use crate::environments::{CarDriving, CarParams, ConfMdp, ContinuousGridWorld, DiscreteGridWorld, Minigolf, MinigolfParams};
use crate::error::{Error, Result};
use crate::estimation::FitOptions;
use crate::identification::Rule;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnvName {
    DiscreteGrid,
    ContinuousGrid,
    Minigolf,
    Car,
}

impl EnvName {
    pub fn as_str(self) -> &'static str {
        match self {
            EnvName::DiscreteGrid => "discrete_grid",
            EnvName::ContinuousGrid => "continuous_grid",
            EnvName::Minigolf => "minigolf",
            EnvName::Car => "car",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Protocol {
    /// Train, collect, identify (optionally with configuration).
    #[default]
    Identify,
    /// Putter-length selection strategies for a friction-unaware agent.
    MinigolfStrategies,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub steps: Option<usize>,
    pub batch_size: Option<usize>,
    pub learning_rate: Option<f64>,
    /// Steps used when retraining from a warm start between configuration rounds.
    pub retrain_steps: Option<usize>,
    /// Independent training runs per agent; the one with the best final
    /// return is kept.
    pub restarts: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub env: EnvName,
    pub protocol: Protocol,
    pub rule: Rule,
    pub conf: bool,
    pub delta: Option<f64>,
    /// Episode counts to sweep.
    pub episodes: Vec<usize>,
    /// Number of seeds; 25 for the grid worlds and 20 otherwise when absent.
    pub seeds: Option<usize>,
    pub seed_offset: u64,
    /// Units the simulated agent controls; environment default when absent.
    pub agent_units: Option<Vec<usize>>,
    pub omega0: Option<Vec<f64>>,
    /// Sharpness of the default grid-world initial distribution.
    pub concentration: Option<f64>,
    pub train: TrainConfig,
    pub fit: Option<FitOptions>,
    pub search: Option<ConfigSearch>,
    /// Episodes used to evaluate returns in the minigolf protocol.
    pub eval_episodes: usize,
    /// Putter grid step in the minigolf protocol.
    pub omega_step: f64,
    pub minigolf: Option<MinigolfParams>,
    pub car: Option<CarParams>,
    /// Record wall-clock seconds; when false the column is written as 0 so
    /// reports are byte-reproducible.
    pub timing: bool,
    pub output_dir: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            env: EnvName::DiscreteGrid,
            protocol: Protocol::Identify,
            rule: Rule::Simplified,
            conf: false,
            delta: None,
            episodes: vec![100, 1000],
            seeds: None,
            seed_offset: 0,
            agent_units: None,
            omega0: None,
            concentration: None,
            train: TrainConfig::default(),
            fit: None,
            search: None,
            eval_episodes: 1000,
            omega_step: 0.5,
            minigolf: None,
            car: None,
            timing: true,
            output_dir: PathBuf::from("out"),
        }
    }
}

/// Hyperparameters after defaults are applied.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Resolved {
    pub delta: f64,
    pub gamma: f64,
    pub steps: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub retrain_steps: usize,
    pub restarts: usize,
    pub fit: FitOptions,
    pub search: ConfigSearch,
    pub omega0: Vec<f64>,
    pub agent_units: Option<Vec<usize>>,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if self.episodes.is_empty() || self.episodes.contains(&0) {
            return bad("episodes must be a non-empty list of positive counts");
        }
        if self.seeds == Some(0) {
            return bad("seeds must be positive");
        }
        if let Some(d) = self.delta {
            if !(d > 0.0 && d < 1.0) {
                return bad("delta must lie in (0, 1)");
            }
        }
        if self.protocol == Protocol::MinigolfStrategies && self.env != EnvName::Minigolf {
            return bad("the strategies protocol needs the minigolf environment");
        }
        if self.conf && matches!(self.env, EnvName::Minigolf | EnvName::Car) {
            return bad("configuration search needs an environment whose transitions ignore the configuration and with a configurable initial distribution");
        }
        if !(self.omega_step > 0.0) || self.eval_episodes == 0 {
            return bad("omega_step and eval_episodes must be positive");
        }
        let env = self.build_env();
        let units = env.policy_space().unit_count();
        if let Some(u) = &self.agent_units {
            if u.iter().any(|&i| i >= units) {
                return bad(&format!("agent unit out of range (the policy has {units} units)"));
            }
        }
        if let Some(w) = &self.omega0 {
            env.validate_config(w).map_err(|e| Error::Config(e.to_string()))?;
        }
        Ok(())
    }

    pub fn seed_count(&self) -> usize {
        self.seeds.unwrap_or(match self.env {
            EnvName::DiscreteGrid | EnvName::ContinuousGrid => 25,
            EnvName::Minigolf | EnvName::Car => 20,
        })
    }

    pub fn build_env(&self) -> Box<dyn ConfMdp> {
        match self.env {
            EnvName::DiscreteGrid => Box::new(DiscreteGridWorld::with_concentration(self.concentration.unwrap_or(1.0))),
            EnvName::ContinuousGrid => Box::new(ContinuousGridWorld::default()),
            EnvName::Minigolf => Box::new(Minigolf::new(self.minigolf.clone().unwrap_or_default())),
            EnvName::Car => Box::new(CarDriving::new(self.car.clone().unwrap_or_default())),
        }
    }

    /// Applies the per-environment defaults.
    pub fn resolve(&self, env: &dyn ConfMdp) -> Resolved {
        // (steps, batch, lr, retrain, config steps, zeta, n_conf, delta)
        let (steps, batch, lr, retrain, conf_steps, zeta, n_conf, delta) = match self.env {
            EnvName::DiscreteGrid => (200, 250, 0.05, 50, 150, 0.125, 3, 0.01),
            EnvName::ContinuousGrid => (100, 100, 0.05, 30, 100, 1e-6, 3, 0.01),
            EnvName::Minigolf => (100, 100, 0.01, 30, 100, 0.25, 10, 0.01),
            EnvName::Car => (100, 50, 0.01, 30, 100, 0.0, 3, 0.1),
        };
        let fit = match self.env {
            EnvName::DiscreteGrid => FitOptions { max_iter: 1000, ..FitOptions::default() },
            EnvName::Car => FitOptions::adam(0.1, 200),
            _ => FitOptions::default(),
        };
        let step_size = match self.env {
            EnvName::ContinuousGrid => 0.01,
            _ => 0.1,
        };
        let t = &self.train;
        Resolved {
            delta: self.delta.unwrap_or(delta),
            gamma: env.gamma(),
            steps: t.steps.unwrap_or(steps),
            batch_size: t.batch_size.unwrap_or(batch),
            learning_rate: t.learning_rate.unwrap_or(lr),
            retrain_steps: t.retrain_steps.unwrap_or(retrain),
            restarts: t.restarts.unwrap_or(if self.env == EnvName::Minigolf { 3 } else { 1 }).max(1),
            fit: self.fit.clone().unwrap_or(fit),
            search: self
                .search
                .clone()
                .unwrap_or(ConfigSearch { zeta, steps: conf_steps, step_size, n_conf, ..ConfigSearch::default() }),
            omega0: self.omega0.clone().unwrap_or_else(|| env.default_config()),
            agent_units: self.agent_units.clone(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_unknown_keys() {
        assert!(ExperimentConfig::from_json(r#"{"env": "car", "colour": 1}"#).is_err());
        assert!(ExperimentConfig::from_json(r#"{"env": "car", "train": {"stepz": 1}}"#).is_err());
    }

    #[test]
    fn defaults_apply() {
        let cfg = ExperimentConfig::from_json(r#"{"env": "discrete_grid", "episodes": [100], "seeds": 2}"#).unwrap();
        let env = cfg.build_env();
        let r = cfg.resolve(env.as_ref());
        assert_eq!((r.steps, r.batch_size, r.delta), (200, 250, 0.01));
        assert_eq!(r.search.n_conf, 3);
        assert_eq!(cfg.seed_count(), 2);
        assert_eq!(ExperimentConfig::from_json(r#"{"env": "car"}"#).unwrap().seed_count(), 20);
        assert_eq!(r.omega0.len(), 50);
    }

    #[test]
    fn validation() {
        assert!(ExperimentConfig::from_json(r#"{"episodes": []}"#).is_err());
        assert!(ExperimentConfig::from_json(r#"{"delta": 1.5}"#).is_err());
        assert!(ExperimentConfig::from_json(r#"{"env": "minigolf", "conf": true}"#).is_err());
        assert!(ExperimentConfig::from_json(r#"{"agent_units": [48]}"#).is_err());
        assert!(ExperimentConfig::from_json(r#"{"protocol": "minigolf_strategies"}"#).is_err());
    }
}
