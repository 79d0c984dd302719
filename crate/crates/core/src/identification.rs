//! Generalized likelihood-ratio tests and the two identification rules.
//!
//! A hypothesis is a set of free units. Its statistic is
//! `λ = 2 (ℓ̂(θ̂_restricted) - ℓ̂(θ̂_full))` with `ℓ̂` the summed negative
//! log-likelihood, and its degrees of freedom are the number of pinned
//! coordinates.

use nalgebra::DVector;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimation::{empirical_fim, free_coordinates, DemoDataset, FitContext, FitOptions, FitReport, IndexSet};
use crate::policies::PolicyModel;
use crate::stats::{chi2_isf_ln, min_eigenvalue_sym, SeededRng};

/// Largest unit count accepted by the combinatorial rule.
pub const COMBINATORIAL_CAP: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Rule {
    #[default]
    Simplified,
    Combinatorial,
}

impl Rule {
    pub fn as_str(&self) -> &'static str {
        match self {
            Rule::Simplified => "simplified",
            Rule::Combinatorial => "combinatorial",
        }
    }
}

/// Chi-square critical value with a Bonferroni split of `delta` over `d`
/// simultaneous tests (`d` for the simplified rule, `2^d` for the
/// combinatorial one).
pub fn critical_value(pinned_count: usize, delta: f64, mode: Rule, d: usize) -> Result<f64> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::InvalidArgument(format!("delta must lie in (0, 1), got {delta}")));
    }
    if pinned_count == 0 || d == 0 {
        return Err(Error::InvalidArgument("critical value needs at least one pinned coordinate and one test".into()));
    }
    let ln_tail = match mode {
        Rule::Simplified => delta.ln() - (d as f64).ln(),
        Rule::Combinatorial => delta.ln() - d as f64 * std::f64::consts::LN_2,
    };
    Ok(chi2_isf_ln(pinned_count as u32, ln_tail))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GlrResult {
    /// Free units under the restricted hypothesis.
    pub free: IndexSet,
    /// Units pinned to zero.
    pub pinned: IndexSet,
    pub lambda: f64,
    pub dof: usize,
    pub critical: f64,
    pub rejected: bool,
    /// Restricted fit met its tolerance.
    pub converged: bool,
}

/// Turns a likelihood gap into a statistic, clamping optimizer noise.
pub fn clamp_statistic(nll_restricted: f64, nll_full: f64, tol_nll: f64) -> Result<f64> {
    let raw = 2.0 * (nll_restricted - nll_full);
    if !raw.is_finite() {
        return Err(Error::NonFinite("likelihood-ratio statistic".into()));
    }
    if raw >= 0.0 {
        Ok(raw)
    } else if raw >= -2.0 * tol_nll {
        Ok(0.0)
    } else {
        Err(Error::NegativeStatistic(raw))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct IdentifyOptions {
    pub delta: f64,
    pub fit: FitOptions,
    /// Seed for the starting point of non-convex fits.
    pub init_seed: u64,
    pub parallel: bool,
}

impl Default for IdentifyOptions {
    fn default() -> Self {
        Self { delta: 0.01, fit: FitOptions::default(), init_seed: 0, parallel: true }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IdentificationOutcome {
    pub rule: Rule,
    pub delta: f64,
    pub unit_count: usize,
    /// One set for the simplified rule, the family `Î_c` for the combinatorial one.
    pub selected: Vec<IndexSet>,
    pub tests: Vec<GlrResult>,
    pub full_nll: f64,
    /// Units whose test could not be run (fit failure).
    pub inconclusive: Vec<usize>,
    pub fim_min_eigenvalue: Option<f64>,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub alpha_hat: f64,
    pub beta_hat: f64,
    pub exact_match: bool,
}

/// `α̂ = |Î \ I*| / (d - |I*|)`, `β̂ = |I* \ Î| / |I*|`, with `0/0 = 0`.
pub fn identification_metrics(selected: &IndexSet, truth: &IndexSet, d: usize) -> (f64, f64) {
    let ratio = |num: usize, den: usize| if den == 0 { 0.0 } else { num as f64 / den as f64 };
    let alpha = ratio(selected.difference(truth).len(), d - truth.len());
    let beta = ratio(truth.difference(selected).len(), truth.len());
    (alpha, beta)
}

impl IdentificationOutcome {
    /// Member of `selected` closest to `truth` (smallest `α̂ + β̂`); the
    /// empty set when nothing was selected.
    pub fn best_match(&self, truth: &IndexSet) -> IndexSet {
        let d = self.unit_count;
        self.selected
            .iter()
            .map(|s| {
                let (a, b) = identification_metrics(s, truth, d);
                (a + b, s)
            })
            .fold(None::<(f64, &IndexSet)>, |best, cur| match best {
                Some(b) if b.0 <= cur.0 => Some(b),
                _ => Some(cur),
            })
            .map(|(_, s)| s.clone())
            .unwrap_or_else(IndexSet::empty)
    }

    pub fn metrics(&self, truth: &IndexSet) -> Metrics {
        let best = self.best_match(truth);
        let (alpha_hat, beta_hat) = identification_metrics(&best, truth, self.unit_count);
        Metrics { alpha_hat, beta_hat, exact_match: self.selected.iter().any(|s| s == truth) }
    }

    /// Union of every selected set.
    pub fn selected_union(&self) -> IndexSet {
        self.selected.iter().fold(IndexSet::empty(), |acc, s| acc.union(s))
    }
}

/// Recomputes `Î_c` from stored statistics: `I` is kept when it is not
/// rejected and every `I \ {i}` is.
pub fn combinatorial_family(tests: &[GlrResult], unit_count: usize) -> Vec<IndexSet> {
    let full = IndexSet::full(unit_count);
    let lookup = |set: &IndexSet| tests.iter().find(|t| &t.free == set);
    let mut out = Vec::new();
    let mut candidates: Vec<IndexSet> = tests.iter().map(|t| t.free.clone()).collect();
    candidates.push(full.clone());
    candidates.sort_by(|a, b| a.len().cmp(&b.len()).then_with(|| a.cmp(b)));
    candidates.dedup();
    for set in candidates {
        let accepted = set == full || lookup(&set).is_some_and(|t| !t.rejected);
        if !accepted {
            continue;
        }
        let minimal = set.iter().all(|i| lookup(&set.without(i)).is_some_and(|t| t.rejected));
        if minimal {
            out.push(set);
        }
    }
    out
}

/// Shared machinery for one dataset: the compiled likelihood and the
/// unrestricted fit.
pub struct Identifier<'a> {
    ctx: FitContext<'a>,
    opts: IdentifyOptions,
    full: FitReport,
}

impl<'a> Identifier<'a> {
    pub fn new(policy: &'a PolicyModel, data: &DemoDataset, opts: &IdentifyOptions) -> Result<Self> {
        if !(opts.delta > 0.0 && opts.delta < 1.0) {
            return Err(Error::InvalidArgument(format!("delta must lie in (0, 1), got {}", opts.delta)));
        }
        let ctx = FitContext::new(policy, data)?;
        let mut fit_opts = opts.fit.clone();
        if !policy.is_exponential_family() && fit_opts.warm_start.is_none() {
            fit_opts.warm_start = Some(policy.initial_parameters(&mut SeededRng::new(opts.init_seed)));
        }
        let full = ctx.fit(&IndexSet::full(policy.unit_count()), &fit_opts)?;
        Ok(Self { ctx, opts: opts.clone(), full })
    }

    pub fn policy(&self) -> &PolicyModel {
        self.ctx.policy()
    }

    pub fn full_fit(&self) -> &FitReport {
        &self.full
    }

    fn restricted_options(&self) -> FitOptions {
        let mut o = self.opts.fit.clone();
        if !self.policy().is_exponential_family() {
            o.warm_start = Some(self.full.theta_hat.clone());
        }
        o
    }

    fn fit_all(&self, sets: &[IndexSet]) -> Vec<Result<FitReport>> {
        let opts = self.restricted_options();
        if self.opts.parallel {
            sets.par_iter().map(|s| self.ctx.fit(s, &opts)).collect()
        } else {
            sets.iter().map(|s| self.ctx.fit(s, &opts)).collect()
        }
    }

    /// Reference likelihood for the unrestricted model. For non-convex
    /// models every restricted optimum is also feasible for the full model,
    /// so the best value found anywhere is used.
    fn reference_nll(&self, fits: &[Result<FitReport>]) -> f64 {
        if self.policy().is_exponential_family() {
            return self.full.nll;
        }
        fits.iter().flatten().map(|f| f.nll).fold(self.full.nll, f64::min)
    }

    fn dof(&self, free: &IndexSet) -> usize {
        self.policy().dim() - free_coordinates(self.policy(), free).len()
    }

    fn glr(&self, free: &IndexSet, fit: &FitReport, reference: f64, mode: Rule) -> Result<GlrResult> {
        let d = self.policy().unit_count();
        let pinned = free.complement(d);
        let dof = self.dof(free);
        let lambda = clamp_statistic(fit.nll, reference, self.opts.fit.tol_nll)?;
        let critical = if dof == 0 { f64::INFINITY } else { critical_value(dof, self.opts.delta, mode, d)? };
        Ok(GlrResult { free: free.clone(), pinned, lambda, dof, critical, rejected: lambda > critical, converged: fit.converged })
    }

    /// Statistic for a single restricted hypothesis.
    pub fn glr_statistic(&self, free: &IndexSet, mode: Rule) -> Result<GlrResult> {
        let fit = self.ctx.fit(free, &self.restricted_options())?;
        let reference = if self.policy().is_exponential_family() { self.full.nll } else { self.full.nll.min(fit.nll) };
        self.glr(free, &fit, reference, mode)
    }

    fn fim_check(&self, warnings: &mut Vec<String>, states: Option<&[Vec<f64>]>) -> Option<f64> {
        let states = states?;
        if !self.policy().is_exponential_family() {
            return None;
        }
        let fim = empirical_fim(self.policy(), &self.full.theta_hat, states).ok()?;
        let min = min_eigenvalue_sym(&fim).ok()?;
        if min < 1e-8 {
            warnings.push(format!("empirical Fisher information is near singular (min eigenvalue {min:.3e})"));
        }
        Some(min)
    }

    /// Identification Rule with one test per unit.
    pub fn simplified(&self, states: Option<&[Vec<f64>]>) -> Result<IdentificationOutcome> {
        let d = self.policy().unit_count();
        let full = IndexSet::full(d);
        let sets: Vec<IndexSet> = (0..d).map(|i| full.without(i)).collect();
        let fits = self.fit_all(&sets);
        let reference = self.reference_nll(&fits);
        let mut warnings = Vec::new();
        if !self.full.converged {
            warnings.push("unrestricted fit did not converge".into());
        }
        let mut tests = Vec::with_capacity(d);
        let mut inconclusive = Vec::new();
        let mut selected = Vec::new();
        for (i, (set, fit)) in sets.iter().zip(&fits).enumerate() {
            match fit.as_ref().map_err(Clone::clone).and_then(|f| self.glr(set, f, reference, Rule::Simplified)) {
                Ok(t) => {
                    if t.rejected {
                        selected.push(i);
                    }
                    tests.push(t);
                }
                Err(e) => {
                    warnings.push(format!("test for unit {i} inconclusive: {e}"));
                    inconclusive.push(i);
                }
            }
        }
        let fim_min_eigenvalue = self.fim_check(&mut warnings, states);
        Ok(IdentificationOutcome {
            rule: Rule::Simplified,
            delta: self.opts.delta,
            unit_count: d,
            selected: vec![IndexSet::new(selected, d)?],
            tests,
            full_nll: reference,
            inconclusive,
            fim_min_eigenvalue,
            warnings,
        })
    }

    /// Identification Rule over every subset of units.
    pub fn combinatorial(&self, states: Option<&[Vec<f64>]>) -> Result<IdentificationOutcome> {
        let d = self.policy().unit_count();
        if d > COMBINATORIAL_CAP {
            return Err(Error::TooManyUnits { d, cap: COMBINATORIAL_CAP });
        }
        let full_mask = (1u64 << d) - 1;
        // every proper subset, ordered by cardinality then mask
        let mut masks: Vec<u64> = (0..full_mask).collect();
        masks.sort_by_key(|m| (m.count_ones(), *m));
        let sets: Vec<IndexSet> = masks.iter().map(|&m| IndexSet::from_mask(m)).collect();
        let fits = self.fit_all(&sets);
        let reference = self.reference_nll(&fits);
        let mut warnings = Vec::new();
        let mut tests = Vec::with_capacity(sets.len());
        for (set, fit) in sets.iter().zip(fits) {
            let fit = fit?;
            tests.push(self.glr(set, &fit, reference, Rule::Combinatorial)?);
        }
        let selected = combinatorial_family(&tests, d);
        let fim_min_eigenvalue = self.fim_check(&mut warnings, states);
        Ok(IdentificationOutcome {
            rule: Rule::Combinatorial,
            delta: self.opts.delta,
            unit_count: d,
            selected,
            tests,
            full_nll: reference,
            inconclusive: Vec::new(),
            fim_min_eigenvalue,
            warnings,
        })
    }

    pub fn run(&self, rule: Rule, states: Option<&[Vec<f64>]>) -> Result<IdentificationOutcome> {
        match rule {
            Rule::Simplified => self.simplified(states),
            Rule::Combinatorial => self.combinatorial(states),
        }
    }
}

pub fn identify(policy: &PolicyModel, data: &DemoDataset, rule: Rule, opts: &IdentifyOptions) -> Result<IdentificationOutcome> {
    Identifier::new(policy, data, opts)?.run(rule, Some(&data.states))
}

pub fn identify_simplified(policy: &PolicyModel, data: &DemoDataset, delta: f64) -> Result<IdentificationOutcome> {
    identify(policy, data, Rule::Simplified, &IdentifyOptions { delta, ..IdentifyOptions::default() })
}

pub fn identify_combinatorial(policy: &PolicyModel, data: &DemoDataset, delta: f64) -> Result<IdentificationOutcome> {
    identify(policy, data, Rule::Combinatorial, &IdentifyOptions { delta, ..IdentifyOptions::default() })
}

/// `λ` for pinning the complement of `free`, with the combinatorial critical value.
pub fn glr_statistic(policy: &PolicyModel, data: &DemoDataset, free: &IndexSet, opts: &IdentifyOptions) -> Result<GlrResult> {
    Identifier::new(policy, data, opts)?.glr_statistic(free, Rule::Combinatorial)
}

/// Convenience: the fitted unrestricted parameters.
pub fn full_fit(policy: &PolicyModel, data: &DemoDataset, opts: &IdentifyOptions) -> Result<DVector<f64>> {
    Ok(Identifier::new(policy, data, opts)?.full.theta_hat)
}
