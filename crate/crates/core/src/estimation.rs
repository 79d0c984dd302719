//! Likelihood, constrained maximum-likelihood fits and empirical Fisher
//! information over a demonstration dataset.
//!
//! Hypotheses are expressed as an [`IndexSet`] of free *units* (see
//! [`PolicyModel::units`]); every coordinate outside the free units and the
//! shared coordinates is pinned to zero.

use std::collections::HashMap;

use nalgebra::{Cholesky, DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{ensure_dim, Error, Result};
use crate::policies::{check_finite, Action, PolicyModel};
use crate::stats::{AdamState, Direction};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DemoDataset {
    pub states: Vec<Vec<f64>>,
    pub actions: Vec<Action>,
    pub source_config: Vec<f64>,
}

impl DemoDataset {
    pub fn new(states: Vec<Vec<f64>>, actions: Vec<Action>, source_config: Vec<f64>) -> Result<Self> {
        if states.is_empty() {
            return Err(Error::EmptyDataset);
        }
        ensure_dim(states.len(), actions.len())?;
        for s in &states {
            check_finite(s, "state")?;
        }
        for a in &actions {
            if let Action::Continuous(v) = a {
                check_finite(v, "action")?;
            }
        }
        Ok(Self { states, actions, source_config })
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    /// Concatenates two datasets; the source configuration of `self` is kept.
    pub fn extend(&mut self, other: &DemoDataset) {
        self.states.extend(other.states.iter().cloned());
        self.actions.extend(other.actions.iter().cloned());
    }
}

/// Sorted set of distinct indices below a universe size.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct IndexSet(Vec<usize>);

impl IndexSet {
    pub fn new(mut indices: Vec<usize>, universe: usize) -> Result<Self> {
        indices.sort_unstable();
        indices.dedup();
        if let Some(&last) = indices.last() {
            if last >= universe {
                return Err(Error::InvalidArgument(format!("index {last} out of range for {universe}")));
            }
        }
        Ok(Self(indices))
    }

    pub fn empty() -> Self {
        Self(Vec::new())
    }

    pub fn full(universe: usize) -> Self {
        Self((0..universe).collect())
    }

    /// Bit `i` of `mask` set means index `i` is included.
    pub fn from_mask(mask: u64) -> Self {
        Self((0..64).filter(|i| mask >> i & 1 == 1).collect())
    }

    pub fn mask(&self) -> u64 {
        self.0.iter().fold(0u64, |m, &i| m | (1u64 << i))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn contains(&self, i: usize) -> bool {
        self.0.binary_search(&i).is_ok()
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.0
    }

    pub fn iter(&self) -> impl Iterator<Item = usize> + '_ {
        self.0.iter().copied()
    }

    pub fn complement(&self, universe: usize) -> Self {
        Self((0..universe).filter(|i| !self.contains(*i)).collect())
    }

    pub fn union(&self, other: &IndexSet) -> Self {
        let mut v = self.0.clone();
        v.extend_from_slice(&other.0);
        v.sort_unstable();
        v.dedup();
        Self(v)
    }

    pub fn difference(&self, other: &IndexSet) -> Self {
        Self(self.0.iter().copied().filter(|i| !other.contains(*i)).collect())
    }

    pub fn without(&self, i: usize) -> Self {
        Self(self.0.iter().copied().filter(|&j| j != i).collect())
    }

    pub fn is_subset(&self, other: &IndexSet) -> bool {
        self.0.iter().all(|&i| other.contains(i))
    }
}

impl std::fmt::Display for IndexSet {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let parts: Vec<String> = self.0.iter().map(|i| i.to_string()).collect();
        write!(f, "{{{}}}", parts.join(" "))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Solver {
    /// Damped Newton with backtracking (exponential-family policies).
    Newton,
    /// Full-batch Adam on the mean negative log-likelihood.
    Adam,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FitOptions {
    pub solver: Solver,
    /// Gradient-norm tolerance on the summed negative log-likelihood.
    pub tol: f64,
    /// Slack allowed when comparing likelihoods of nested fits.
    pub tol_nll: f64,
    pub max_iter: usize,
    pub learning_rate: f64,
    /// Non-convergence and degenerate designs become errors.
    pub strict: bool,
    #[serde(skip)]
    pub warm_start: Option<DVector<f64>>,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            solver: Solver::Newton,
            tol: 1e-6,
            tol_nll: 1e-6,
            max_iter: 100,
            learning_rate: 0.03,
            strict: false,
            warm_start: None,
        }
    }
}

impl FitOptions {
    /// Adam with the given rate and step budget.
    pub fn adam(learning_rate: f64, max_iter: usize) -> Self {
        Self { solver: Solver::Adam, learning_rate, max_iter, ..Self::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub theta_hat: DVector<f64>,
    pub nll: f64,
    pub grad_norm_at_solution: f64,
    pub iterations: usize,
    pub converged: bool,
    /// A ridge was added to singular normal equations.
    pub degenerate: bool,
    pub tolerance: f64,
}

/// Coordinates free under a unit-level hypothesis, sorted.
pub fn free_coordinates(policy: &PolicyModel, free_units: &IndexSet) -> Vec<usize> {
    let units = policy.units();
    let mut coords = policy.shared_coordinates();
    for u in free_units.iter() {
        coords.extend_from_slice(&units[u]);
    }
    coords.sort_unstable();
    coords
}

/// `-Σ_i log π_θ(a_i | s_i)`, evaluated sample by sample.
pub fn neg_log_likelihood(policy: &PolicyModel, theta: &DVector<f64>, data: &DemoDataset) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mut total = 0.0;
    for (s, a) in data.states.iter().zip(&data.actions) {
        total -= policy.log_prob(theta, s, a)?;
    }
    Ok(total)
}

/// Average of the per-state Fisher information.
pub fn empirical_fim(policy: &PolicyModel, theta: &DVector<f64>, states: &[Vec<f64>]) -> Result<DMatrix<f64>> {
    if states.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let d = policy.dim();
    let mut acc = DMatrix::zeros(d, d);
    for s in states {
        acc += policy.fisher_state(theta, s)?;
    }
    Ok(acc / states.len() as f64)
}

pub fn mle_fit(policy: &PolicyModel, data: &DemoDataset, free: &IndexSet, opts: &FitOptions) -> Result<FitReport> {
    FitContext::new(policy, data)?.fit(free, opts)
}

/// Boltzmann data grouped by distinct feature vector.
#[derive(Debug)]
struct SoftmaxGroup {
    phi: Vec<f64>,
    nonzero: Vec<usize>,
    count: f64,
    action_counts: Vec<f64>,
}

#[derive(Debug)]
enum Compiled {
    Gaussian {
        /// `Σ⁻¹ ⊗ Σ_i φ_i φ_iᵀ`
        hessian: DMatrix<f64>,
        /// `Σ_i t(s_i, a_i)`
        stat_sum: DVector<f64>,
        /// nll(0)
        base: f64,
    },
    Boltzmann {
        groups: Vec<SoftmaxGroup>,
        rows: usize,
        q: usize,
    },
    Neural {
        inputs: Vec<Vec<f64>>,
        actions: Vec<Vec<f64>>,
    },
}

/// Dataset summary reused across the many fits of an identification run.
#[derive(Debug)]
pub struct FitContext<'a> {
    policy: &'a PolicyModel,
    n: usize,
    compiled: Compiled,
}

impl<'a> FitContext<'a> {
    pub fn new(policy: &'a PolicyModel, data: &DemoDataset) -> Result<Self> {
        if data.is_empty() {
            return Err(Error::EmptyDataset);
        }
        let n = data.len();
        let compiled = match policy {
            PolicyModel::Gaussian(p) => {
                let q = p.feature_dim();
                let mut gram = DMatrix::zeros(q, q);
                let mut stat_sum = DVector::zeros(p.dim());
                for (s, a) in data.states.iter().zip(&data.actions) {
                    check_finite(s, "state")?;
                    let phi = p.feature_map().evaluate(s);
                    gram.ger(1.0, &phi, &phi, 1.0);
                    stat_sum += p.sufficient_statistic(s, a)?;
                }
                let hessian = crate::stats::kron(p.precision(), &gram);
                let base = neg_log_likelihood(policy, &DVector::zeros(p.dim()), data)?;
                Compiled::Gaussian { hessian, stat_sum, base }
            }
            PolicyModel::Boltzmann(p) => {
                let q = p.feature_dim();
                let mut index: HashMap<Vec<u64>, usize> = HashMap::new();
                let mut groups: Vec<SoftmaxGroup> = Vec::new();
                let mut phi = vec![0.0; q];
                for (s, a) in data.states.iter().zip(&data.actions) {
                    check_finite(s, "state")?;
                    let a = match a {
                        Action::Discrete(i) if *i < p.action_count() => *i,
                        _ => return Err(Error::InvalidArgument("invalid action for Boltzmann policy".into())),
                    };
                    p.feature_map().evaluate_into(s, &mut phi);
                    let key: Vec<u64> = phi.iter().map(|v| v.to_bits()).collect();
                    let g = *index.entry(key).or_insert_with(|| {
                        groups.push(SoftmaxGroup {
                            phi: phi.clone(),
                            nonzero: (0..q).filter(|&j| phi[j] != 0.0).collect(),
                            count: 0.0,
                            action_counts: vec![0.0; p.action_count()],
                        });
                        groups.len() - 1
                    });
                    groups[g].count += 1.0;
                    groups[g].action_counts[a] += 1.0;
                }
                Compiled::Boltzmann { groups, rows: p.rows(), q }
            }
            PolicyModel::Neural(p) => {
                let mut inputs = Vec::with_capacity(n);
                let mut actions = Vec::with_capacity(n);
                for (s, a) in data.states.iter().zip(&data.actions) {
                    if s.len() < p.input_dim() {
                        return Err(Error::DimensionMismatch { expected: p.input_dim(), got: s.len() });
                    }
                    check_finite(s, "state")?;
                    let a = a
                        .as_continuous()
                        .filter(|v| v.len() == p.action_dim())
                        .ok_or_else(|| Error::InvalidArgument("invalid action for neural policy".into()))?;
                    inputs.push(s[..p.input_dim()].to_vec());
                    actions.push(a.to_vec());
                }
                Compiled::Neural { inputs, actions }
            }
        };
        Ok(Self { policy, n, compiled })
    }

    pub fn policy(&self) -> &PolicyModel {
        self.policy
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    /// Summed negative log-likelihood from the compiled summary.
    pub fn nll(&self, theta: &DVector<f64>) -> Result<f64> {
        ensure_dim(self.policy.dim(), theta.len())?;
        Ok(match &self.compiled {
            Compiled::Gaussian { hessian, stat_sum, base } => {
                base - theta.dot(stat_sum) + 0.5 * theta.dot(&(hessian * theta))
            }
            Compiled::Boltzmann { .. } => self.softmax_eval(theta, None, None),
            Compiled::Neural { inputs, actions } => match self.policy {
                PolicyModel::Neural(p) => p.mean_nll(theta, inputs, actions) * self.n as f64,
                _ => unreachable!(),
            },
        })
    }

    /// Gradient of the summed negative log-likelihood.
    pub fn nll_gradient(&self, theta: &DVector<f64>) -> Result<DVector<f64>> {
        ensure_dim(self.policy.dim(), theta.len())?;
        Ok(match &self.compiled {
            Compiled::Gaussian { hessian, stat_sum, .. } => hessian * theta - stat_sum,
            Compiled::Boltzmann { .. } => {
                let mut g = DVector::zeros(theta.len());
                self.softmax_eval(theta, Some(&mut g), None);
                g
            }
            Compiled::Neural { inputs, actions } => match self.policy {
                PolicyModel::Neural(p) => p.mean_nll_and_grad(theta, inputs, actions).1 * self.n as f64,
                _ => unreachable!(),
            },
        })
    }

    /// Value, and optionally gradient and Hessian restricted to `coords`,
    /// of the Boltzmann negative log-likelihood.
    fn softmax_eval(
        &self,
        theta: &DVector<f64>,
        mut grad: Option<&mut DVector<f64>>,
        mut hess: Option<(&[usize], &mut DMatrix<f64>)>,
    ) -> f64 {
        let (groups, rows, q) = match &self.compiled {
            Compiled::Boltzmann { groups, rows, q } => (groups, *rows, *q),
            _ => unreachable!(),
        };
        let th = theta.as_slice();
        // position of each coordinate in the restricted Hessian
        let pos: Option<Vec<Option<usize>>> = hess.as_ref().map(|(coords, _)| {
            let mut p = vec![None; rows * q];
            for (k, &c) in coords.iter().enumerate() {
                p[c] = Some(k);
            }
            p
        });
        let mut total = 0.0;
        let mut logits = vec![0.0; rows + 1];
        let mut active: Vec<(usize, usize, f64)> = Vec::new();
        for g in groups {
            let mut max = 0.0f64;
            for (b, z) in logits.iter_mut().enumerate().take(rows) {
                *z = g.nonzero.iter().map(|&j| th[b * q + j] * g.phi[j]).sum();
                max = max.max(*z);
            }
            logits[rows] = 0.0;
            let norm: f64 = logits.iter().map(|z| (z - max).exp()).sum();
            let lse = max + norm.ln();
            for (b, &c) in g.action_counts.iter().enumerate() {
                if c > 0.0 {
                    total += c * (lse - logits[b]);
                }
            }
            let probs: Vec<f64> = logits.iter().map(|z| (z - lse).exp()).collect();
            if let Some(gr) = grad.as_deref_mut() {
                for b in 0..rows {
                    let coef = g.count * probs[b] - g.action_counts[b];
                    if coef != 0.0 {
                        for &j in &g.nonzero {
                            gr[b * q + j] += coef * g.phi[j];
                        }
                    }
                }
            }
            if let (Some((_, h)), Some(pos)) = (hess.as_mut(), pos.as_ref()) {
                active.clear();
                for b in 0..rows {
                    for &j in &g.nonzero {
                        if let Some(k) = pos[b * q + j] {
                            active.push((k, b, g.phi[j]));
                        }
                    }
                }
                for &(k1, b1, v1) in &active {
                    for &(k2, b2, v2) in &active {
                        let cov = if b1 == b2 { probs[b1] - probs[b1] * probs[b1] } else { -probs[b1] * probs[b2] };
                        h[(k1, k2)] += g.count * cov * v1 * v2;
                    }
                }
            }
        }
        total
    }

    /// Constrained maximum-likelihood fit over the free units.
    pub fn fit(&self, free: &IndexSet, opts: &FitOptions) -> Result<FitReport> {
        let d = self.policy.dim();
        if let Some(&last) = free.as_slice().last() {
            if last >= self.policy.unit_count() {
                return Err(Error::InvalidArgument(format!("unit {last} out of range")));
            }
        }
        let coords = free_coordinates(self.policy, free);
        if coords.is_empty() {
            let theta = DVector::zeros(d);
            let nll = self.nll(&theta)?;
            return Ok(FitReport {
                theta_hat: theta,
                nll,
                grad_norm_at_solution: 0.0,
                iterations: 0,
                converged: true,
                degenerate: false,
                tolerance: opts.tol,
            });
        }
        let report = match (&self.compiled, opts.solver) {
            (Compiled::Gaussian { .. }, _) => self.fit_gaussian(&coords, opts)?,
            (Compiled::Boltzmann { .. }, Solver::Newton) => self.fit_newton(&coords, opts)?,
            _ => self.fit_adam(&coords, opts)?,
        };
        if opts.strict && !report.converged {
            return Err(Error::NonConvergence {
                iterations: report.iterations,
                grad_norm: report.grad_norm_at_solution,
            });
        }
        Ok(report)
    }

    fn projected_norm(&self, grad: &DVector<f64>, coords: &[usize]) -> f64 {
        coords.iter().map(|&c| grad[c] * grad[c]).sum::<f64>().sqrt()
    }

    fn fit_gaussian(&self, coords: &[usize], opts: &FitOptions) -> Result<FitReport> {
        let (hessian, stat_sum) = match &self.compiled {
            Compiled::Gaussian { hessian, stat_sum, .. } => (hessian, stat_sum),
            _ => unreachable!(),
        };
        let m = coords.len();
        let h = DMatrix::from_fn(m, m, |i, j| hessian[(coords[i], coords[j])]);
        let b = DVector::from_fn(m, |i, _| stat_sum[coords[i]]);
        // Cholesky can succeed on numerically singular systems, so also
        // check the pivot ratio.
        let well_posed = |c: &Cholesky<f64, nalgebra::Dyn>| {
            let diag = c.l_dirty().diagonal();
            let max = diag.iter().cloned().fold(0.0f64, f64::max);
            let min = diag.iter().cloned().fold(f64::INFINITY, f64::min);
            min > 1e-7 * max.max(1e-300)
        };
        let (chol, degenerate) = match Cholesky::new(h.clone()) {
            Some(c) if well_posed(&c) => (c, false),
            _ => {
                if opts.strict {
                    return Err(Error::DegenerateDesign);
                }
                let ridged = h + DMatrix::identity(m, m) * 1e-9;
                (Cholesky::new(ridged).ok_or(Error::DegenerateDesign)?, true)
            }
        };
        let sol = chol.solve(&b);
        let mut theta = DVector::zeros(self.policy.dim());
        for (k, &c) in coords.iter().enumerate() {
            theta[c] = sol[k];
        }
        let nll = self.nll(&theta)?;
        let grad_norm = self.projected_norm(&self.nll_gradient(&theta)?, coords);
        Ok(FitReport {
            theta_hat: theta,
            nll,
            grad_norm_at_solution: grad_norm,
            iterations: 1,
            converged: !degenerate || grad_norm <= opts.tol,
            degenerate,
            tolerance: opts.tol,
        })
    }

    fn start(&self, coords: &[usize], opts: &FitOptions) -> DVector<f64> {
        let d = self.policy.dim();
        let mut theta = DVector::zeros(d);
        if let Some(w) = opts.warm_start.as_ref().filter(|w| w.len() == d) {
            for &c in coords {
                theta[c] = w[c];
            }
        }
        theta
    }

    fn fit_newton(&self, coords: &[usize], opts: &FitOptions) -> Result<FitReport> {
        let m = coords.len();
        let mut theta = self.start(coords, opts);
        let mut grad = DVector::zeros(theta.len());
        let mut hess = DMatrix::zeros(m, m);
        let mut nll = self.softmax_eval(&theta, Some(&mut grad), Some((coords, &mut hess)));
        let mut iterations = 0;
        let mut grad_norm = self.projected_norm(&grad, coords);
        while grad_norm > opts.tol && iterations < opts.max_iter {
            iterations += 1;
            let g = DVector::from_fn(m, |i, _| grad[coords[i]]);
            let step = newton_direction(&hess, &g);
            let mut t = 1.0;
            let slope = -g.dot(&step);
            let mut accepted = false;
            // Predicted decrease below the rounding level of the NLL: the
            // comparison carries no information, take the full step.
            if -slope <= 1e-10 * nll.abs().max(1.0) {
                for (k, &c) in coords.iter().enumerate() {
                    theta[c] -= step[k];
                }
                accepted = true;
            }
            while !accepted && t > 1e-10 {
                let mut trial = theta.clone();
                for (k, &c) in coords.iter().enumerate() {
                    trial[c] -= t * step[k];
                }
                let val = self.softmax_eval(&trial, None, None);
                if val <= nll + 1e-4 * t * slope || (val <= nll && t < 1e-3) {
                    theta = trial;
                    accepted = true;
                    break;
                }
                t *= 0.5;
            }
            if !accepted {
                break;
            }
            grad.fill(0.0);
            hess.fill(0.0);
            nll = self.softmax_eval(&theta, Some(&mut grad), Some((coords, &mut hess)));
            grad_norm = self.projected_norm(&grad, coords);
        }
        Ok(FitReport {
            theta_hat: theta,
            nll,
            grad_norm_at_solution: grad_norm,
            iterations,
            converged: grad_norm <= opts.tol,
            degenerate: false,
            tolerance: opts.tol,
        })
    }

    fn fit_adam(&self, coords: &[usize], opts: &FitOptions) -> Result<FitReport> {
        let d = self.policy.dim();
        let n = self.n as f64;
        let mut theta = self.start(coords, opts);
        let mut adam = AdamState::new(d, opts.learning_rate);
        let mut mask = vec![false; d];
        for &c in coords {
            mask[c] = true;
        }
        let mut iterations = 0;
        let mut grad = self.nll_gradient(&theta)?;
        let mut grad_norm = self.projected_norm(&grad, coords);
        while grad_norm > opts.tol && iterations < opts.max_iter {
            iterations += 1;
            for (k, g) in grad.iter_mut().enumerate() {
                *g = if mask[k] { *g / n } else { 0.0 };
            }
            adam.step(&mut theta, &grad, Direction::Descend)?;
            grad = self.nll_gradient(&theta)?;
            grad_norm = self.projected_norm(&grad, coords);
            if !grad_norm.is_finite() {
                return Err(Error::NonFinite("likelihood gradient".into()));
            }
        }
        let nll = self.nll(&theta)?;
        Ok(FitReport {
            theta_hat: theta,
            nll,
            grad_norm_at_solution: grad_norm,
            iterations,
            converged: grad_norm <= opts.tol,
            degenerate: false,
            tolerance: opts.tol,
        })
    }
}

/// Solves `H x = g`, adding a growing ridge when `H` is not numerically
/// positive definite.
fn newton_direction(h: &DMatrix<f64>, g: &DVector<f64>) -> DVector<f64> {
    let m = h.nrows();
    let scale = (0..m).map(|i| h[(i, i)].abs()).fold(0.0f64, f64::max).max(1e-12);
    let mut ridge = 0.0;
    loop {
        let a = if ridge > 0.0 { h + DMatrix::identity(m, m) * ridge } else { h.clone() };
        if let Some(c) = Cholesky::new(a) {
            let x = c.solve(g);
            if x.iter().all(|v| v.is_finite()) {
                return x;
            }
        }
        ridge = if ridge == 0.0 { 1e-10 * scale } else { ridge * 10.0 };
        if ridge > 1e6 * scale {
            return g / scale;
        }
    }
}
