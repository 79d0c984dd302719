//! Trajectory collection and G(PO)MDP policy-gradient training.

use nalgebra::DVector;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::environments::ConfMdp;
use crate::error::{ensure_dim, Error, Result};
use crate::estimation::{free_coordinates, DemoDataset, IndexSet};
use crate::policies::{Action, PolicyModel};
use crate::stats::{AdamState, Direction, SeededRng};

/// Parameter norm beyond which training is aborted.
pub const DIVERGENCE_NORM: f64 = 1e6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub states: Vec<Vec<f64>>,
    pub actions: Vec<Action>,
    pub rewards: Vec<f64>,
    pub collected_under: Vec<f64>,
    /// State reached after the last action.
    pub final_state: Vec<f64>,
    /// Terminated before the horizon.
    pub done: bool,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.rewards.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rewards.is_empty()
    }

    pub fn initial_state(&self) -> &[f64] {
        &self.states[0]
    }

    pub fn total_reward(&self) -> f64 {
        self.rewards.iter().sum()
    }

    pub fn discounted_return(&self, gamma: f64) -> f64 {
        let mut g = 1.0;
        let mut acc = 0.0;
        for r in &self.rewards {
            acc += g * r;
            g *= gamma;
        }
        acc
    }
}

/// Rolls out one episode of at most `env.horizon()` steps.
pub fn rollout(
    env: &dyn ConfMdp,
    policy: &PolicyModel,
    theta: &DVector<f64>,
    omega: &[f64],
    rng: &mut SeededRng,
) -> Result<Trajectory> {
    let horizon = env.horizon();
    let mut s = env.reset(omega, rng)?;
    let mut traj = Trajectory {
        states: Vec::with_capacity(horizon),
        actions: Vec::with_capacity(horizon),
        rewards: Vec::with_capacity(horizon),
        collected_under: omega.to_vec(),
        final_state: Vec::new(),
        done: false,
    };
    for _ in 0..horizon {
        let a = policy.sample(theta, &s, rng)?;
        let step = env.step(omega, &s, &a, rng)?;
        if !step.reward.is_finite() {
            return Err(Error::NonFinite("reward".into()));
        }
        traj.states.push(std::mem::replace(&mut s, step.state));
        traj.actions.push(a);
        traj.rewards.push(step.reward);
        if step.done {
            traj.done = true;
            break;
        }
    }
    traj.final_state = s;
    Ok(traj)
}

/// `count` episodes, each on its own stream split from one draw of `rng`.
pub fn collect_trajectories(
    env: &dyn ConfMdp,
    policy: &PolicyModel,
    theta: &DVector<f64>,
    omega: &[f64],
    count: usize,
    rng: &mut SeededRng,
) -> Result<Vec<Trajectory>> {
    if count == 0 {
        return Err(Error::InvalidArgument("trajectory count must be positive".into()));
    }
    env.validate_config(omega)?;
    ensure_dim(policy.dim(), theta.len())?;
    let base = rng.fork();
    (0..count)
        .into_par_iter()
        .map(|i| rollout(env, policy, theta, omega, &mut base.split(i as u64)))
        .collect()
}

/// Flattens the `(s, a)` pairs of a batch into a demonstration dataset.
pub fn to_dataset(trajectories: &[Trajectory]) -> Result<DemoDataset> {
    let source = trajectories.first().map(|t| t.collected_under.clone()).unwrap_or_default();
    let mut states = Vec::new();
    let mut actions = Vec::new();
    for t in trajectories {
        states.extend(t.states.iter().cloned());
        actions.extend(t.actions.iter().cloned());
    }
    DemoDataset::new(states, actions, source)
}

/// Per-trajectory G(PO)MDP contribution with per-step multipliers.
///
/// `weights[t]` multiplies the `t`-th term; `None` means all ones. The same
/// arithmetic runs in both cases, so unit weights reproduce the plain
/// estimator bit for bit.
pub(crate) fn gpomdp_term(
    traj: &Trajectory,
    policy: &PolicyModel,
    theta: &DVector<f64>,
    gamma: f64,
    weights: Option<&[f64]>,
) -> Result<DVector<f64>> {
    let d = policy.dim();
    let mut score = DVector::zeros(d);
    let mut acc = DVector::zeros(d);
    let mut discount = 1.0;
    for t in 0..traj.len() {
        score += policy.grad_log_prob(theta, &traj.states[t], &traj.actions[t])?;
        let w = weights.map_or(1.0, |w| w[t]);
        let c = discount * traj.rewards[t] * w;
        if c != 0.0 {
            acc.axpy(c, &score, 1.0);
        }
        discount *= gamma;
    }
    Ok(acc)
}

/// Averages per-trajectory terms in a fixed order.
pub(crate) fn average_terms(terms: Vec<DVector<f64>>, d: usize) -> DVector<f64> {
    let n = terms.len() as f64;
    let mut sum = DVector::zeros(d);
    for t in &terms {
        sum += t;
    }
    sum / n
}

/// `(1/n) Σ_i Σ_t γ^t r_{i,t} Σ_{j≤t} ∇ log π_θ(a_{i,j} | s_{i,j})`.
pub fn gpomdp_gradient(
    trajectories: &[Trajectory],
    policy: &PolicyModel,
    theta: &DVector<f64>,
    gamma: f64,
) -> Result<DVector<f64>> {
    if trajectories.is_empty() {
        return Err(Error::InvalidArgument("no trajectories".into()));
    }
    ensure_dim(policy.dim(), theta.len())?;
    let terms = trajectories
        .par_iter()
        .map(|t| gpomdp_term(t, policy, theta, gamma, None))
        .collect::<Result<Vec<_>>>()?;
    Ok(average_terms(terms, policy.dim()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainSpec {
    pub steps: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    /// Units the agent controls; the others stay at zero.
    pub free: IndexSet,
    pub gamma: f64,
}

impl TrainSpec {
    /// 200 steps of 250 trajectories at learning rate 0.05.
    pub fn new(free: IndexSet, gamma: f64) -> Self {
        Self { steps: 200, batch_size: 250, learning_rate: 0.05, free, gamma }
    }

    fn validate(&self, policy: &PolicyModel) -> Result<()> {
        if self.steps == 0 || self.batch_size == 0 {
            return Err(Error::InvalidArgument("step and batch counts must be positive".into()));
        }
        if !(self.learning_rate > 0.0) || !(0.0..=1.0).contains(&self.gamma) {
            return Err(Error::InvalidArgument("learning rate must be positive and gamma in [0, 1]".into()));
        }
        if self.free.iter().any(|u| u >= policy.unit_count()) {
            return Err(Error::InvalidArgument("free set exceeds the unit count".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainResult {
    pub theta: DVector<f64>,
    /// Mean discounted batch return at every step.
    pub returns: Vec<f64>,
    pub learning_rate: f64,
}

impl TrainResult {
    /// Mean of the last ten recorded returns; NaN when nothing was trained.
    pub fn final_return(&self) -> f64 {
        if self.returns.is_empty() {
            return f64::NAN;
        }
        let k = self.returns.len().min(10);
        self.returns[self.returns.len() - k..].iter().sum::<f64>() / k as f64
    }
}

/// Projected Adam ascent on the G(PO)MDP gradient.
///
/// Coordinates outside the free set start at zero and receive zero gradient,
/// so they never move. `init` warm-starts the free coordinates.
pub fn train_policy(
    env: &dyn ConfMdp,
    policy: &PolicyModel,
    spec: &TrainSpec,
    omega: &[f64],
    init: Option<&DVector<f64>>,
    rng: &mut SeededRng,
) -> Result<TrainResult> {
    spec.validate(policy)?;
    let d = policy.dim();
    let free = free_coordinates(policy, &spec.free);
    let mut mask = vec![false; d];
    for &i in &free {
        mask[i] = true;
    }
    let mut theta = match init {
        Some(t) => {
            ensure_dim(d, t.len())?;
            t.clone()
        }
        None => policy.initial_parameters(rng),
    };
    for (i, free) in mask.iter().enumerate() {
        if !free {
            theta[i] = 0.0;
        }
    }
    let mut returns = Vec::with_capacity(spec.steps);
    if free.is_empty() {
        return Ok(TrainResult { theta, returns, learning_rate: spec.learning_rate });
    }
    let mut adam = AdamState::new(d, spec.learning_rate);
    for _ in 0..spec.steps {
        let batch = collect_trajectories(env, policy, &theta, omega, spec.batch_size, rng)?;
        returns.push(batch.iter().map(|t| t.discounted_return(spec.gamma)).sum::<f64>() / batch.len() as f64);
        let mut grad = gpomdp_gradient(&batch, policy, &theta, spec.gamma)?;
        for (i, free) in mask.iter().enumerate() {
            if !free {
                grad[i] = 0.0;
            }
        }
        adam.step(&mut theta, &grad, Direction::Ascend)?;
        let norm = theta.norm();
        if !norm.is_finite() || norm > DIVERGENCE_NORM {
            return Err(Error::Divergence(norm));
        }
    }
    Ok(TrainResult { theta, returns, learning_rate: spec.learning_rate })
}

/// Monte-Carlo estimate of the mean discounted return and its standard error.
pub fn evaluate_policy(
    env: &dyn ConfMdp,
    policy: &PolicyModel,
    theta: &DVector<f64>,
    omega: &[f64],
    episodes: usize,
    rng: &mut SeededRng,
) -> Result<(f64, f64)> {
    let trajs = collect_trajectories(env, policy, theta, omega, episodes, rng)?;
    let r: Vec<f64> = trajs.iter().map(|t| t.discounted_return(env.gamma())).collect();
    let n = r.len() as f64;
    let mean = r.iter().sum::<f64>() / n;
    let var = if r.len() > 1 { r.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0) } else { 0.0 };
    Ok((mean, (var / n).sqrt()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::environments::DiscreteGridWorld;

    #[test]
    fn collection_is_deterministic() {
        let env = DiscreteGridWorld::default();
        let policy = env.policy_space();
        let theta = DVector::zeros(policy.dim());
        let omega = env.default_config();
        let a = collect_trajectories(&env, &policy, &theta, &omega, 3, &mut SeededRng::new(5)).unwrap();
        let b = collect_trajectories(&env, &policy, &theta, &omega, 3, &mut SeededRng::new(5)).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 3);
        assert!(to_dataset(&a).unwrap().len() <= 150);
    }

    #[test]
    fn zero_rewards_zero_gradient() {
        let env = DiscreteGridWorld::default();
        let policy = env.policy_space();
        let theta = DVector::from_element(policy.dim(), 0.1);
        let mut trajs =
            collect_trajectories(&env, &policy, &theta, &env.default_config(), 5, &mut SeededRng::new(1)).unwrap();
        for t in &mut trajs {
            t.rewards.iter_mut().for_each(|r| *r = 0.0);
        }
        let g = gpomdp_gradient(&trajs, &policy, &theta, 0.9).unwrap();
        assert!(g.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn bandit_case() {
        let env = DiscreteGridWorld::default();
        let policy = env.policy_space();
        let theta = DVector::from_fn(policy.dim(), |i, _| 0.01 * i as f64);
        let mut trajs =
            collect_trajectories(&env, &policy, &theta, &env.default_config(), 4, &mut SeededRng::new(3)).unwrap();
        for (k, t) in trajs.iter_mut().enumerate() {
            t.states.truncate(1);
            t.actions.truncate(1);
            t.rewards = vec![k as f64 + 1.0];
        }
        let g = gpomdp_gradient(&trajs, &policy, &theta, 0.5).unwrap();
        let mut want = DVector::zeros(policy.dim());
        for t in &trajs {
            want += policy.grad_log_prob(&theta, &t.states[0], &t.actions[0]).unwrap() * t.rewards[0];
        }
        want /= trajs.len() as f64;
        assert!((g - want).amax() < 1e-14);
    }

    #[test]
    fn empty_free_set_is_untouched() {
        let env = DiscreteGridWorld::default();
        let policy = env.policy_space();
        let spec = TrainSpec::new(IndexSet::empty(), env.gamma());
        let out = train_policy(&env, &policy, &spec, &env.default_config(), None, &mut SeededRng::new(0)).unwrap();
        assert!(out.theta.iter().all(|v| *v == 0.0));
        assert!(out.returns.is_empty());
    }

    #[test]
    fn pinned_coordinates_stay_zero() {
        let env = DiscreteGridWorld::default();
        let policy = env.policy_space();
        let free = IndexSet::new(vec![0, 3, 9], policy.unit_count()).unwrap();
        let spec = TrainSpec { steps: 5, batch_size: 20, ..TrainSpec::new(free.clone(), env.gamma()) };
        let out = train_policy(&env, &policy, &spec, &env.default_config(), None, &mut SeededRng::new(2)).unwrap();
        for i in 0..policy.dim() {
            if !free.contains(i) {
                assert_eq!(out.theta[i].to_bits(), 0.0f64.to_bits());
            }
        }
        let again = train_policy(&env, &policy, &spec, &env.default_config(), None, &mut SeededRng::new(2)).unwrap();
        assert_eq!(out, again);
    }
}
