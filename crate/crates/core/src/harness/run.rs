//! Experiment execution: one worker per seed, rows merged in `(n, seed)` order.

use std::collections::HashMap;
use std::time::Instant;

use nalgebra::DVector;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{EnvName, ExperimentConfig, Protocol, Resolved};
use crate::configuration::{identify_with_configuration, ConfSetup};
use crate::environments::ConfMdp;
use crate::error::{Error, Result};
use crate::estimation::IndexSet;
use crate::identification::{identify, IdentificationOutcome, IdentifyOptions, Rule};
use crate::learning::{collect_trajectories, evaluate_policy, to_dataset, train_policy, TrainResult, TrainSpec};
use crate::policies::PolicyModel;
use crate::stats::{mean_ci95, SeededRng};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRow {
    pub env: String,
    pub rule: Rule,
    pub conf: bool,
    pub n: usize,
    pub seed: u64,
    pub alpha_hat: f64,
    pub beta_hat: f64,
    pub exact_match: bool,
    pub wallclock_s: f64,
    pub truth: IndexSet,
    pub selected: Vec<IndexSet>,
    pub lambdas: Vec<f64>,
    pub final_omega: Vec<f64>,
    pub config_rounds: usize,
    pub train_return: f64,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    pub n: usize,
    /// `"mean"` or `"ci95"` (half-width).
    pub stat: String,
    pub alpha_hat: f64,
    pub beta_hat: f64,
    pub exact_match: f64,
    pub wallclock_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrategyRow {
    pub seed: u64,
    pub strategy: String,
    pub omega: f64,
    pub mean_return: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub config: ExperimentConfig,
    pub resolved: Resolved,
    pub rows: Vec<RunRow>,
    pub aggregates: Vec<AggregateRow>,
    pub strategies: Vec<StrategyRow>,
}

pub const STRATEGIES: [&str; 4] = ["uniform", "a1_optimal", "identified", "oracle"];

/// Units controlled by the simulated agent for a given seed.
pub fn agent_truth(cfg: &ExperimentConfig, policy: &PolicyModel, seed: u64) -> Result<IndexSet> {
    let d = policy.unit_count();
    if let Some(u) = &cfg.agent_units {
        return IndexSet::new(u.clone(), d);
    }
    let units: Vec<usize> = match cfg.env {
        // own position and goal row, not the goal column
        EnvName::DiscreteGrid => (0..3).flat_map(|a| (0..12).map(move |j| a * 16 + j)).collect(),
        EnvName::ContinuousGrid => {
            let mut rng = SeededRng::new(seed).split(0xFEA7);
            let q = 50;
            let chosen: Vec<usize> = (0..q).filter(|_| rng.bernoulli(0.5)).collect();
            (0..2).flat_map(|a| chosen.iter().map(move |j| a * q + j)).collect()
        }
        // 1, x, √x
        EnvName::Minigolf => vec![0, 1, 3],
        // speed and the two left sensors
        EnvName::Car => vec![0, 3, 4],
    };
    IndexSet::new(units, d)
}

fn identify_options(res: &Resolved, seed: u64) -> IdentifyOptions {
    IdentifyOptions { delta: res.delta, fit: res.fit.clone(), init_seed: seed, parallel: true }
}

fn train_spec(res: &Resolved, free: &IndexSet) -> TrainSpec {
    TrainSpec {
        steps: res.steps,
        batch_size: res.batch_size,
        learning_rate: res.learning_rate,
        free: free.clone(),
        gamma: res.gamma,
    }
}

/// Best of `res.restarts` independent training runs by final return.
fn train_agent(
    env: &dyn ConfMdp,
    policy: &PolicyModel,
    res: &Resolved,
    free: &IndexSet,
    omega: &[f64],
    rng: &SeededRng,
) -> Result<TrainResult> {
    let spec = train_spec(res, free);
    let mut best: Option<TrainResult> = None;
    for k in 0..res.restarts {
        let r = train_policy(env, policy, &spec, omega, None, &mut rng.split(k as u64))?;
        // NaN final returns never replace a finite one
        if best.as_ref().is_none_or(|b| r.final_return() > b.final_return() || b.final_return().is_nan()) {
            best = Some(r);
        }
    }
    Ok(best.expect("at least one restart"))
}

fn failed_row(cfg: &ExperimentConfig, n: usize, seed: u64, truth: IndexSet, e: &Error, secs: f64) -> RunRow {
    RunRow {
        env: cfg.env.as_str().into(),
        rule: cfg.rule,
        conf: cfg.conf,
        n,
        seed,
        alpha_hat: f64::NAN,
        beta_hat: f64::NAN,
        exact_match: false,
        wallclock_s: secs,
        truth,
        selected: Vec::new(),
        lambdas: Vec::new(),
        final_omega: Vec::new(),
        config_rounds: 0,
        train_return: f64::NAN,
        error: Some(e.to_string()),
    }
}

fn outcome_row(
    cfg: &ExperimentConfig,
    n: usize,
    seed: u64,
    truth: &IndexSet,
    out: &IdentificationOutcome,
    final_omega: Vec<f64>,
    rounds: usize,
    train_return: f64,
    secs: f64,
) -> RunRow {
    let m = out.metrics(truth);
    RunRow {
        env: cfg.env.as_str().into(),
        rule: cfg.rule,
        conf: cfg.conf,
        n,
        seed,
        alpha_hat: m.alpha_hat,
        beta_hat: m.beta_hat,
        exact_match: m.exact_match,
        wallclock_s: secs,
        truth: truth.clone(),
        selected: out.selected.clone(),
        lambdas: out.tests.iter().map(|t| t.lambda).collect(),
        final_omega,
        config_rounds: rounds,
        train_return,
        error: None,
    }
}

fn identify_seed(cfg: &ExperimentConfig, res: &Resolved, env: &dyn ConfMdp, seed: u64) -> Vec<RunRow> {
    let policy = env.policy_space();
    let root = SeededRng::new(seed);
    let truth = match agent_truth(cfg, &policy, seed) {
        Ok(t) => t,
        Err(e) => return cfg.episodes.iter().map(|&n| failed_row(cfg, n, seed, IndexSet::empty(), &e, 0.0)).collect(),
    };
    let start = Instant::now();
    let trained = train_agent(env, &policy, res, &truth, &res.omega0, &root.split(0));
    let trained = match trained {
        Ok(t) => t,
        Err(e) => {
            let secs = start.elapsed().as_secs_f64();
            return cfg.episodes.iter().map(|&n| failed_row(cfg, n, seed, truth.clone(), &e, secs)).collect();
        }
    };
    let train_secs = start.elapsed().as_secs_f64();
    let opts = identify_options(res, seed);
    cfg.episodes
        .iter()
        .map(|&n| {
            let t0 = Instant::now();
            let mut rng = root.split(1 + n as u64);
            let result = if cfg.conf {
                let setup = ConfSetup {
                    policy: &policy,
                    theta0: trained.theta.clone(),
                    omega0: res.omega0.clone(),
                    episodes: n,
                    gamma: res.gamma,
                    rule: cfg.rule,
                    identify: opts.clone(),
                    search: res.search.clone(),
                };
                let retrain = TrainSpec { steps: res.retrain_steps, ..train_spec(res, &truth) };
                let mut agent = |omega: &[f64], theta: &DVector<f64>, rng: &mut SeededRng| {
                    train_policy(env, &policy, &retrain, omega, Some(theta), rng).map(|r| r.theta)
                };
                identify_with_configuration(env, &setup, &mut agent, &mut rng).map(|c| {
                    let last = c.rounds.iter().rev().find(|r| r.aborted.is_none()).map(|r| r.omega.clone());
                    (c.outcome, last.unwrap_or_else(|| res.omega0.clone()), c.rounds.len())
                })
            } else {
                collect_trajectories(env, &policy, &trained.theta, &res.omega0, n, &mut rng)
                    .and_then(|t| to_dataset(&t))
                    .and_then(|data| identify(&policy, &data, cfg.rule, &opts))
                    .map(|o| (o, res.omega0.clone(), 0))
            };
            let secs = if cfg.timing { t0.elapsed().as_secs_f64() + train_secs } else { 0.0 };
            match result {
                Ok((out, omega, rounds)) => {
                    outcome_row(cfg, n, seed, &truth, &out, omega, rounds, trained.final_return(), secs)
                }
                Err(e) => failed_row(cfg, n, seed, truth.clone(), &e, secs),
            }
        })
        .collect()
}

/// Putter lengths `lo, lo + step, …, hi`.
pub fn omega_grid(lo: f64, hi: f64, step: f64) -> Vec<f64> {
    let count = ((hi - lo) / step + 1e-9).floor() as usize + 1;
    (0..count).map(|i| lo + i as f64 * step).collect()
}

struct GridSearch<'a> {
    env: &'a dyn ConfMdp,
    policy: PolicyModel,
    res: &'a Resolved,
    eval_episodes: usize,
    root: SeededRng,
    grid: Vec<f64>,
    cache: HashMap<(u64, usize), (DVector<f64>, f64)>,
}

impl GridSearch<'_> {
    /// Trained parameters and estimated return for a space at grid point `k`.
    fn trained(&mut self, space: &IndexSet, k: usize) -> Result<(DVector<f64>, f64)> {
        let key = (space.mask(), k);
        if let Some(v) = self.cache.get(&key) {
            return Ok(v.clone());
        }
        let omega = [self.grid[k]];
        let rng = self.root.split(key.0.wrapping_mul(1000).wrapping_add(k as u64));
        let theta = train_agent(self.env, &self.policy, self.res, space, &omega, &rng)?.theta;
        let mut rng = rng.split(u64::MAX);
        let (ret, _) = evaluate_policy(self.env, &self.policy, &theta, &omega, self.eval_episodes, &mut rng)?;
        self.cache.insert(key, (theta.clone(), ret));
        Ok((theta, ret))
    }

    /// Grid putter length maximising the estimated return of `space`.
    fn best(&mut self, space: &IndexSet) -> Result<f64> {
        let mut best = (0, f64::NEG_INFINITY);
        for k in 0..self.grid.len() {
            let (_, r) = self.trained(space, k)?;
            if r > best.1 {
                best = (k, r);
            }
        }
        Ok(self.grid[best.0])
    }
}

/// Supervisor strategies for choosing the putter length of the agent whose
/// policy space is `truth`: a uniform draw, the optimum for a fully informed
/// agent, the optimum for the identified space, and the optimum for the true
/// space. Each choice is scored by training the true agent there and
/// evaluating on common random numbers.
fn strategies_seed(
    cfg: &ExperimentConfig,
    res: &Resolved,
    env: &dyn ConfMdp,
    seed: u64,
) -> Result<(RunRow, Vec<StrategyRow>)> {
    let policy = env.policy_space();
    let d = policy.unit_count();
    let root = SeededRng::new(seed);
    let truth = agent_truth(cfg, &policy, seed)?;
    let n = *cfg.episodes.iter().max().expect("validated");
    let t0 = Instant::now();
    let trained = train_agent(env, &policy, res, &truth, &res.omega0, &root.split(0))?;
    let trajs = collect_trajectories(env, &policy, &trained.theta, &res.omega0, n, &mut root.split(1))?;
    let out = identify(&policy, &to_dataset(&trajs)?, Rule::Simplified, &identify_options(res, seed))?;
    let identified = out.selected_union();
    let secs = if cfg.timing { t0.elapsed().as_secs_f64() } else { 0.0 };
    let row = outcome_row(cfg, n, seed, &truth, &out, res.omega0.clone(), 0, trained.final_return(), secs);

    let (lo, hi) = match cfg.minigolf.as_ref() {
        Some(p) => p.putter_range,
        None => crate::environments::MinigolfParams::default().putter_range,
    };
    let mut search = GridSearch {
        env,
        policy: policy.clone(),
        res,
        eval_episodes: cfg.eval_episodes,
        root: root.split(2),
        grid: omega_grid(lo, hi, cfg.omega_step),
        cache: HashMap::new(),
    };
    let uniform = root.split(3).uniform_range(lo, hi);
    let choices = [
        uniform,
        search.best(&IndexSet::full(d))?,
        search.best(&identified)?,
        search.best(&truth)?,
    ];
    let mut rows = Vec::with_capacity(4);
    for (name, omega) in STRATEGIES.iter().zip(choices) {
        let w = [omega];
        let theta = train_agent(env, &policy, res, &truth, &w, &root.split(4))?.theta;
        let (ret, _) = evaluate_policy(env, &policy, &theta, &w, cfg.eval_episodes, &mut root.split(5))?;
        rows.push(StrategyRow { seed, strategy: (*name).into(), omega, mean_return: ret });
    }
    Ok((row, rows))
}

fn aggregate(rows: &[RunRow], episodes: &[usize]) -> Vec<AggregateRow> {
    let mut out = Vec::new();
    for &n in episodes {
        let ok: Vec<&RunRow> = rows.iter().filter(|r| r.n == n && r.error.is_none()).collect();
        let col = |f: &dyn Fn(&RunRow) -> f64| mean_ci95(&ok.iter().map(|r| f(r)).collect::<Vec<_>>());
        let a = col(&|r| r.alpha_hat);
        let b = col(&|r| r.beta_hat);
        let m = col(&|r| if r.exact_match { 1.0 } else { 0.0 });
        let w = col(&|r| r.wallclock_s);
        out.push(AggregateRow { n, stat: "mean".into(), alpha_hat: a.0, beta_hat: b.0, exact_match: m.0, wallclock_s: w.0 });
        out.push(AggregateRow { n, stat: "ci95".into(), alpha_hat: a.1, beta_hat: b.1, exact_match: m.1, wallclock_s: w.1 });
    }
    out
}

/// Runs every seed of the sweep on a pool of `jobs` workers (all cores when 0).
pub fn run_experiment(cfg: &ExperimentConfig, jobs: usize) -> Result<RunReport> {
    cfg.validate()?;
    let env = cfg.build_env();
    let res = cfg.resolve(env.as_ref());
    let seeds: Vec<u64> = (0..cfg.seed_count() as u64).map(|s| cfg.seed_offset + s).collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| Error::Config(format!("worker pool: {e}")))?;
    let env_ref = env.as_ref();
    let (mut rows, strategies) = match cfg.protocol {
        Protocol::Identify => {
            let per_seed: Vec<Vec<RunRow>> =
                pool.install(|| seeds.par_iter().map(|&s| identify_seed(cfg, &res, env_ref, s)).collect());
            (per_seed.into_iter().flatten().collect::<Vec<_>>(), Vec::new())
        }
        Protocol::MinigolfStrategies => {
            let per_seed: Vec<Result<(RunRow, Vec<StrategyRow>)>> =
                pool.install(|| seeds.par_iter().map(|&s| strategies_seed(cfg, &res, env_ref, s)).collect());
            let mut rows = Vec::new();
            let mut strat = Vec::new();
            for r in per_seed {
                let (row, s) = r?;
                rows.push(row);
                strat.extend(s);
            }
            (rows, strat)
        }
    };
    rows.sort_by_key(|r| (r.n, r.seed));
    let ns: Vec<usize> = {
        let mut v: Vec<usize> = rows.iter().map(|r| r.n).collect();
        v.dedup();
        v
    };
    let aggregates = aggregate(&rows, &ns);
    Ok(RunReport { config: cfg.clone(), resolved: res, rows, aggregates, strategies })
}

/// Mean and CI half-width of each strategy's return.
pub fn strategy_summary(rows: &[StrategyRow]) -> Vec<(String, f64, f64)> {
    STRATEGIES
        .iter()
        .map(|s| {
            let v: Vec<f64> = rows.iter().filter(|r| r.strategy == *s).map(|r| r.mean_return).collect();
            let (m, c) = mean_ci95(&v);
            ((*s).to_string(), m, c)
        })
        .collect()
}
