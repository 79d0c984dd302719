//! Environment configuration for identification: importance-weighted
//! off-distribution gradients, the empirical 2-Rényi penalty, the surrogate
//! objective, and the identify-with-configuration loop.

use std::sync::atomic::{AtomicU64, Ordering};

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::environments::ConfMdp;
use crate::error::{ensure_dim, Error, Result};
use crate::estimation::{DemoDataset, IndexSet};
use crate::identification::{IdentificationOutcome, Identifier, IdentifyOptions, Rule};
use crate::learning::{average_terms, collect_trajectories, gpomdp_term, to_dataset, Trajectory};
use crate::policies::PolicyModel;
use crate::stats::{AdamState, Direction, SeededRng};

static CALLS: AtomicU64 = AtomicU64::new(0);

/// Number of configuration operations performed by this process.
pub fn configuration_call_count() -> u64 {
    CALLS.load(Ordering::Relaxed)
}

fn count_call() {
    CALLS.fetch_add(1, Ordering::Relaxed);
}

fn source_config(trajs: &[Trajectory]) -> Result<&[f64]> {
    let first = trajs.first().ok_or_else(|| Error::InvalidArgument("no trajectories".into()))?;
    if trajs.iter().any(|t| t.collected_under != first.collected_under) {
        return Err(Error::InvalidArgument("trajectories come from different configurations".into()));
    }
    Ok(&first.collected_under)
}

/// `log μ_ω(s₀)`, with `-∞` outside the support.
fn log_init_or_neg_inf(env: &dyn ConfMdp, omega: &[f64], s0: &[f64]) -> Result<f64> {
    match env.log_init_density(omega, s0) {
        Err(Error::OutOfSupport) => Ok(f64::NEG_INFINITY),
        other => other,
    }
}

/// Log importance weights of every prefix of `traj`: entry `t` covers the
/// initial state and the transitions out of steps `0..=t`.
pub fn log_prefix_weights(traj: &Trajectory, env: &dyn ConfMdp, omega: &[f64], omega0: &[f64]) -> Result<Vec<f64>> {
    env.validate_config(omega)?;
    let s0 = traj.initial_state();
    let base = log_init_or_neg_inf(env, omega, s0)? - env.log_init_density(omega0, s0)?;
    let mut out = Vec::with_capacity(traj.len());
    if !env.transition_depends_on_config() {
        out.resize(traj.len(), base);
        return Ok(out);
    }
    let mut acc = base;
    for t in 0..traj.len() {
        let next = if t + 1 < traj.len() { &traj.states[t + 1] } else { &traj.final_state };
        let s = &traj.states[t];
        let a = &traj.actions[t];
        acc += env.log_transition_density(omega, s, a, next)? - env.log_transition_density(omega0, s, a, next)?;
        out.push(acc);
    }
    Ok(out)
}

/// Weight of the prefix ending at step `t`. Zero when `s₀` lies outside the
/// support of `μ_ω`.
pub fn importance_weight(traj: &Trajectory, env: &dyn ConfMdp, omega: &[f64], omega0: &[f64], t: usize) -> Result<f64> {
    count_call();
    if t >= traj.len() {
        return Err(Error::InvalidArgument(format!("prefix {t} beyond trajectory length {}", traj.len())));
    }
    Ok(log_prefix_weights(traj, env, omega, omega0)?[t].exp())
}

/// Off-distribution G(PO)MDP estimate of `∇J` in `M_ω` from a batch
/// collected in `M_ω₀`.
pub fn off_dist_gradient(
    trajs: &[Trajectory],
    policy: &PolicyModel,
    theta: &DVector<f64>,
    env: &dyn ConfMdp,
    omega: &[f64],
    gamma: f64,
) -> Result<DVector<f64>> {
    count_call();
    let omega0 = source_config(trajs)?;
    ensure_dim(policy.dim(), theta.len())?;
    let mut any_positive = false;
    let mut terms = Vec::with_capacity(trajs.len());
    for t in trajs {
        let w: Vec<f64> = log_prefix_weights(t, env, omega, omega0)?.into_iter().map(f64::exp).collect();
        any_positive |= w.iter().any(|v| *v > 0.0);
        terms.push(gpomdp_term(t, policy, theta, gamma, Some(&w))?);
    }
    if !any_positive {
        return Err(Error::DegenerateWeights);
    }
    Ok(average_terms(terms, policy.dim()))
}

/// `(1/n) Σ_i w_i²` over full-length weights.
pub fn renyi2_hat(trajs: &[Trajectory], env: &dyn ConfMdp, omega: &[f64]) -> Result<f64> {
    count_call();
    let omega0 = source_config(trajs)?;
    let mut sum = 0.0;
    for t in trajs {
        let lw = log_prefix_weights(t, env, omega, omega0)?;
        let last = lw.last().copied().unwrap_or(0.0);
        sum += (2.0 * last).exp();
    }
    Ok(sum / trajs.len() as f64)
}

/// `‖∇̂J|_target‖² − ζ √(d̂₂ / n)`.
pub fn config_objective(
    trajs: &[Trajectory],
    policy: &PolicyModel,
    theta: &DVector<f64>,
    env: &dyn ConfMdp,
    omega: &[f64],
    gamma: f64,
    target: &[usize],
    zeta: f64,
) -> Result<f64> {
    let g = off_dist_gradient(trajs, policy, theta, env, omega, gamma)?;
    let d2 = renyi2_hat(trajs, env, omega)?;
    Ok(restricted_sq_norm(&g, target)? - zeta * (d2 / trajs.len() as f64).sqrt())
}

fn restricted_sq_norm(g: &DVector<f64>, target: &[usize]) -> Result<f64> {
    if target.is_empty() {
        return Err(Error::InvalidArgument("target set is empty".into()));
    }
    target
        .iter()
        .map(|&i| g.get(i).map(|v| v * v).ok_or_else(|| Error::InvalidArgument(format!("target index {i} out of range"))))
        .sum()
}

/// A batch collected under `ω₀` with its per-trajectory G(PO)MDP terms
/// precomputed, so the objective can be evaluated at many `ω` cheaply.
/// Requires transitions that do not depend on the configuration, where every
/// prefix of a trajectory carries the same weight.
#[derive(Debug)]
pub struct ImportanceWeightedBatch<'a> {
    env: &'a dyn ConfMdp,
    omega0: Vec<f64>,
    initial_states: Vec<Vec<f64>>,
    log_mu0: Vec<f64>,
    terms: Vec<DVector<f64>>,
    dim: usize,
}

impl<'a> ImportanceWeightedBatch<'a> {
    pub fn new(
        env: &'a dyn ConfMdp,
        trajs: &[Trajectory],
        policy: &PolicyModel,
        theta: &DVector<f64>,
        gamma: f64,
    ) -> Result<Self> {
        if env.transition_depends_on_config() {
            return Err(Error::Unsupported { op: "importance-weighted batch", target: env.name() });
        }
        let omega0 = source_config(trajs)?.to_vec();
        ensure_dim(policy.dim(), theta.len())?;
        let initial_states: Vec<Vec<f64>> = trajs.iter().map(|t| t.initial_state().to_vec()).collect();
        let refs: Vec<&[f64]> = initial_states.iter().map(Vec::as_slice).collect();
        let log_mu0 = env.log_init_densities(&omega0, &refs)?;
        let terms = trajs.iter().map(|t| gpomdp_term(t, policy, theta, gamma, None)).collect::<Result<Vec<_>>>()?;
        Ok(Self { env, omega0, initial_states, log_mu0, terms, dim: policy.dim() })
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn source(&self) -> &[f64] {
        &self.omega0
    }

    pub fn weights(&self, omega: &[f64]) -> Result<Vec<f64>> {
        count_call();
        self.env.validate_config(omega)?;
        let refs: Vec<&[f64]> = self.initial_states.iter().map(Vec::as_slice).collect();
        let lp = match self.env.log_init_densities(omega, &refs) {
            Err(Error::OutOfSupport) => {
                refs.iter().map(|s| log_init_or_neg_inf(self.env, omega, s)).collect::<Result<Vec<_>>>()?
            }
            other => other?,
        };
        Ok(lp.iter().zip(&self.log_mu0).map(|(a, b)| (a - b).exp()).collect())
    }

    fn gradient_with(&self, w: &[f64]) -> Result<DVector<f64>> {
        if w.iter().all(|v| *v == 0.0) {
            return Err(Error::DegenerateWeights);
        }
        let weighted = self.terms.iter().zip(w).map(|(g, &wi)| g * wi).collect();
        Ok(average_terms(weighted, self.dim))
    }

    pub fn gradient(&self, omega: &[f64]) -> Result<DVector<f64>> {
        self.gradient_with(&self.weights(omega)?)
    }

    pub fn renyi2(&self, omega: &[f64]) -> Result<f64> {
        let w = self.weights(omega)?;
        Ok(w.iter().map(|v| v * v).sum::<f64>() / w.len() as f64)
    }

    pub fn objective(&self, omega: &[f64], target: &[usize], zeta: f64) -> Result<f64> {
        if target.is_empty() {
            return Err(Error::InvalidArgument("target set is empty".into()));
        }
        if let Some(&bad) = target.iter().find(|&&i| i >= self.dim) {
            return Err(Error::InvalidArgument(format!("target index {bad} out of range")));
        }
        let w = self.weights(omega)?;
        if w.iter().all(|v| *v == 0.0) {
            return Err(Error::DegenerateWeights);
        }
        let n = w.len() as f64;
        // same summation order as the full gradient, target coordinates only
        let mut sq = 0.0;
        for &c in target {
            let mut acc = 0.0;
            for (g, &wi) in self.terms.iter().zip(&w) {
                acc += g[c] * wi;
            }
            let v = acc / n;
            sq += v * v;
        }
        let d2 = w.iter().map(|v| v * v).sum::<f64>() / n;
        Ok(sq - zeta * (d2 / n).sqrt())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ConfigSearch {
    pub zeta: f64,
    pub steps: usize,
    pub step_size: f64,
    /// Relative central-difference step.
    pub fd_step: f64,
    /// Attempts per unit.
    pub n_conf: usize,
    /// Identify on all data collected so far instead of the latest batch.
    pub pooling: bool,
}

impl Default for ConfigSearch {
    fn default() -> Self {
        Self { zeta: 0.125, steps: 150, step_size: 0.1, fd_step: 1e-4, n_conf: 3, pooling: false }
    }
}

impl ConfigSearch {
    fn validate(&self) -> Result<()> {
        if !(self.zeta >= 0.0) || !(self.step_size > 0.0) || !(self.fd_step > 0.0) {
            return Err(Error::InvalidArgument("zeta must be non-negative, step sizes positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ascent {
    pub omega: Vec<f64>,
    pub objective: f64,
    pub initial_objective: f64,
}

/// Adam ascent of the surrogate objective over `ω`, gradients by central
/// differences with step `fd_step · max(|ω_k|, 1)`.
pub fn optimize_configuration(batch: &ImportanceWeightedBatch<'_>, target: &[usize], search: &ConfigSearch) -> Result<Ascent> {
    search.validate()?;
    let env = batch.env;
    let mut omega = batch.source().to_vec();
    let eval = |w: &[f64]| -> Result<f64> {
        let v = batch.objective(w, target, search.zeta)?;
        if v.is_nan() {
            Err(Error::ObjectiveNaN)
        } else {
            Ok(v)
        }
    };
    let initial = eval(&omega)?;
    let k = omega.len();
    let mut adam = AdamState::new(k, search.step_size);
    let mut params = DVector::from_vec(omega.clone());
    let mut grad = DVector::zeros(k);
    for _ in 0..search.steps {
        for i in 0..k {
            let h = search.fd_step * omega[i].abs().max(1.0);
            let mut hi = omega.clone();
            let mut lo = omega.clone();
            hi[i] += h;
            lo[i] -= h;
            env.project_config(&mut hi);
            env.project_config(&mut lo);
            let span = hi[i] - lo[i];
            grad[i] = if span > 0.0 { (eval(&hi)? - eval(&lo)?) / span } else { 0.0 };
        }
        adam.step(&mut params, &grad, Direction::Ascend)?;
        env.project_config(params.as_mut_slice());
        omega.copy_from_slice(params.as_slice());
    }
    let objective = eval(&omega)?;
    Ok(Ascent { omega, objective, initial_objective: initial })
}

/// One configure-collect-identify round.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfRound {
    pub unit: usize,
    pub attempt: usize,
    pub omega: Vec<f64>,
    pub objective: f64,
    /// Union of everything selected after this round.
    pub selected_after: IndexSet,
    pub aborted: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfiguredOutcome {
    pub outcome: IdentificationOutcome,
    pub baseline: IdentificationOutcome,
    pub rounds: Vec<ConfRound>,
}

/// Everything the loop needs besides the environment.
pub struct ConfSetup<'a> {
    pub policy: &'a PolicyModel,
    /// Parameters of the demonstrating agent in `M_ω₀`.
    pub theta0: DVector<f64>,
    pub omega0: Vec<f64>,
    pub episodes: usize,
    pub gamma: f64,
    pub rule: Rule,
    pub identify: IdentifyOptions,
    pub search: ConfigSearch,
}

fn merge_family(family: &mut Vec<IndexSet>, new: &[IndexSet]) {
    for s in new {
        if !family.contains(s) {
            family.push(s.clone());
        }
    }
}

/// Baseline identification in `M_ω₀`, then for every unit not yet selected
/// up to `n_conf` rounds of: ascend the surrogate objective for that unit
/// starting from the previous configuration, let the agent adapt via
/// `agent(ω, θ_prev, rng)`, collect, identify, and union. A unit is left as
/// soon as it gets selected.
///
/// The objective is evaluated at the supervisor's unrestricted estimate
/// `θ̂`, not at the agent's parameters.
pub fn identify_with_configuration(
    env: &dyn ConfMdp,
    setup: &ConfSetup<'_>,
    agent: &mut dyn FnMut(&[f64], &DVector<f64>, &mut SeededRng) -> Result<DVector<f64>>,
    rng: &mut SeededRng,
) -> Result<ConfiguredOutcome> {
    setup.search.validate()?;
    let policy = setup.policy;
    let d = policy.unit_count();
    let units = policy.units();
    let run = |trajs: &[Trajectory]| -> Result<(IdentificationOutcome, DVector<f64>)> {
        let data = to_dataset(trajs)?;
        let ident = Identifier::new(policy, &data, &setup.identify)?;
        let out = ident.run(setup.rule, Some(&data.states))?;
        Ok((out, ident.full_fit().theta_hat.clone()))
    };

    let trajs0 = collect_trajectories(env, policy, &setup.theta0, &setup.omega0, setup.episodes, rng)?;
    let (baseline, theta_hat0) = run(&trajs0)?;
    let mut union = baseline.selected_union();
    let mut family = baseline.selected.clone();
    let mut rounds = Vec::new();
    let mut pool: Vec<Trajectory> = if setup.search.pooling { trajs0.clone() } else { Vec::new() };

    for unit in 0..d {
        if union.contains(unit) {
            continue;
        }
        let mut trajs = trajs0.clone();
        let mut theta_hat = theta_hat0.clone();
        let mut theta_agent = setup.theta0.clone();
        for attempt in 1..=setup.search.n_conf {
            let ascent = ImportanceWeightedBatch::new(env, &trajs, policy, &theta_hat, setup.gamma)
                .and_then(|b| optimize_configuration(&b, &units[unit], &setup.search));
            let ascent = match ascent {
                Ok(a) => a,
                Err(e @ (Error::ObjectiveNaN | Error::DegenerateWeights)) => {
                    rounds.push(ConfRound {
                        unit,
                        attempt,
                        omega: trajs[0].collected_under.clone(),
                        objective: f64::NAN,
                        selected_after: union.clone(),
                        aborted: Some(e.to_string()),
                    });
                    break;
                }
                Err(e) => return Err(e),
            };
            theta_agent = agent(&ascent.omega, &theta_agent, rng)?;
            trajs = collect_trajectories(env, policy, &theta_agent, &ascent.omega, setup.episodes, rng)?;
            let identified = if setup.search.pooling {
                pool.extend(trajs.iter().cloned());
                run(&pool)
            } else {
                run(&trajs)
            };
            let (out, th) = identified?;
            theta_hat = th;
            union = union.union(&out.selected_union());
            merge_family(&mut family, &out.selected);
            rounds.push(ConfRound {
                unit,
                attempt,
                omega: ascent.omega,
                objective: ascent.objective,
                selected_after: union.clone(),
                aborted: None,
            });
            if union.contains(unit) {
                break;
            }
        }
    }

    let mut outcome = baseline.clone();
    outcome.selected = match setup.rule {
        Rule::Simplified => vec![union],
        Rule::Combinatorial => family,
    };
    Ok(ConfiguredOutcome { outcome, baseline, rounds })
}

/// Pooled dataset of a batch list, for callers that want to identify on
/// several configurations at once.
pub fn pooled_dataset(batches: &[&[Trajectory]]) -> Result<DemoDataset> {
    let all: Vec<Trajectory> = batches.iter().flat_map(|b| b.iter().cloned()).collect();
    to_dataset(&all)
}
