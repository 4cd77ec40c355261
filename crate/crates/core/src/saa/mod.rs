//! Sample-average approximation of the siting problem.
//!
//! The first-stage objective of a decision `x` over a weighted scenario set is
//!
//! ```text
//! exp_cost(x)   = build(x) + Σ_s w_s Q_s^cost(x)
//! cvar_shed(x)  = CVaR_alpha over (Q_s^shed(x), w_s)
//! scalarized(x) = exp_cost(x) + beta · cvar_shed(x)      (bo_cvar)
//!               = exp_cost(x) with penalty raised by beta (base)
//! ```
//!
//! Two solvers share that definition: exhaustive enumeration over
//! `{0,1}^J`, and an L-shaped method whose master is solved by
//! branch-and-bound over the simplex in [`crate::lp`].

mod master;

use std::collections::BTreeMap;
use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dispatch::{cut_coefficients, dispatch, BendersCut, DispatchError, Objective, SitingDecision};
use crate::grid_model::GridInstance;
use crate::lp::LpError;
use crate::weather::ScenarioSet;
use master::Master;

/// Largest site count accepted by [`solve_enumeration`].
pub const MAX_ENUMERATION_SITES: usize = 16;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SolveError {
    #[error("{0}")]
    Dispatch(#[from] DispatchError),
    #[error("master LP failed: {0}")]
    Lp(#[from] LpError),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("invalid solver configuration: {0}")]
    InvalidConfig(String),
    #[error("enumeration supports at most {max} sites, instance has {sites}")]
    TooManySites { sites: usize, max: usize },
    #[error("no values to aggregate")]
    Empty,
    #[error("iteration limit reached (bound {:.6}, incumbent {:.6})", .0.lower_bound, .0.scalarized)]
    IterationLimit(Box<Solution>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    /// Expected cost with a shed penalty.
    Base,
    /// Expected cost plus a CVaR-of-shed term.
    BoCvar,
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Variant::Base => "base",
            Variant::BoCvar => "bo_cvar",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolveConfig {
    pub variant: Variant,
    pub alpha: f64,
    /// Risk weight. Under `Base` it is added to the shed penalty instead.
    pub beta: f64,
    pub shed_penalty: Option<f64>,
    pub gap_tol: f64,
    pub max_iters: usize,
    pub verbose: bool,
}

impl Default for SolveConfig {
    fn default() -> Self {
        SolveConfig {
            variant: Variant::BoCvar,
            alpha: 0.99,
            beta: 0.0,
            shed_penalty: None,
            gap_tol: 1e-6,
            max_iters: 200,
            verbose: false,
        }
    }
}

impl SolveConfig {
    pub fn validate(&self) -> Result<(), SolveError> {
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(SolveError::InvalidConfig("alpha must lie in (0, 1)".into()));
        }
        if !(self.beta >= 0.0 && self.beta.is_finite()) {
            return Err(SolveError::InvalidConfig("beta must be finite and nonnegative".into()));
        }
        if !(self.gap_tol > 0.0 && self.gap_tol.is_finite()) {
            return Err(SolveError::InvalidConfig("gap_tol must be positive".into()));
        }
        if let Some(p) = self.shed_penalty {
            if !(p > 0.0 && p.is_finite()) {
                return Err(SolveError::InvalidConfig("shed_penalty must be positive".into()));
            }
        }
        Ok(())
    }

    /// Shed penalty used by the cost dispatch of this model.
    pub fn effective_penalty(&self, instance: &GridInstance) -> f64 {
        let base = self.shed_penalty.unwrap_or(instance.response.shed_penalty);
        match self.variant {
            Variant::Base => base + self.beta,
            Variant::BoCvar => base,
        }
    }

    fn risk_active(&self) -> bool {
        self.variant == Variant::BoCvar && self.beta > 0.0
    }

    fn scalarize(&self, exp_cost: f64, cvar_shed: f64) -> f64 {
        match self.variant {
            Variant::Base => exp_cost,
            Variant::BoCvar if self.beta == 0.0 => exp_cost,
            Variant::BoCvar => exp_cost + self.beta * cvar_shed,
        }
    }
}

/// CVaR at level `alpha` of a discrete distribution of `(value, weight)`
/// atoms: the mean of the worst `1 - alpha` probability mass, with the
/// boundary atom included fractionally.
pub fn cvar(values_with_weights: &[(f64, f64)], alpha: f64) -> Result<f64, SolveError> {
    if values_with_weights.is_empty() {
        return Err(SolveError::Empty);
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(SolveError::InvalidConfig("alpha must lie in (0, 1)".into()));
    }
    let mut sorted = values_with_weights.to_vec();
    sorted.sort_by(|a, b| b.0.total_cmp(&a.0));
    let tail = 1.0 - alpha;
    let mut mass = 0.0;
    let mut acc = 0.0;
    for &(v, w) in &sorted {
        let take = w.min(tail - mass);
        if take <= 0.0 {
            break;
        }
        acc += take * v;
        mass += take;
    }
    if mass < tail {
        // weights short of 1 by rounding: the remainder sits on the smallest value
        acc += (tail - mass) * sorted.last().unwrap().0;
    }
    Ok(acc / tail)
}

/// Rockafellar–Uryasev objective `η + E[(V - η)⁺] / (1 - alpha)`.
pub fn cvar_objective(values_with_weights: &[(f64, f64)], alpha: f64, eta: f64) -> f64 {
    eta + values_with_weights
        .iter()
        .map(|&(v, w)| w * (v - eta).max(0.0))
        .sum::<f64>()
        / (1.0 - alpha)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CutKind {
    /// Bounds the aggregated expected dispatch cost `θ`.
    Cost,
    /// Bounds one scenario's minimal shed through `η + e_s`.
    Shed,
}

/// Optimality cut `lhs ≥ constant + Σ coefficients_j x_j`, where `lhs` is
/// `θ` for cost cuts and `η + e_s` for the shed cut of scenario `s`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cut {
    pub kind: CutKind,
    pub scenario: Option<usize>,
    pub constant: f64,
    pub coefficients: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub x: SitingDecision,
    pub build_cost: f64,
    /// Build cost plus weighted expected cost dispatch value.
    pub exp_cost: f64,
    /// Per-scenario cost dispatch values.
    pub costs: Vec<f64>,
    /// Per-scenario minimal shed.
    pub sheds: Vec<f64>,
    pub cvar_shed: f64,
    pub scalarized: f64,
}

impl Evaluation {
    pub fn expected_shed(&self, scenarios: &ScenarioSet) -> f64 {
        self.sheds
            .iter()
            .zip(&scenarios.scenarios)
            .map(|(v, s)| v * s.weight)
            .sum()
    }
}

struct EvaluationWithCuts {
    eval: Evaluation,
    cost_cuts: Vec<BendersCut>,
    shed_cuts: Vec<BendersCut>,
}

fn evaluate_inner(
    x: &SitingDecision,
    scenarios: &ScenarioSet,
    instance: &GridInstance,
    cfg: &SolveConfig,
    with_cuts: bool,
) -> Result<EvaluationWithCuts, SolveError> {
    let per_scenario = scenarios
        .scenarios
        .par_iter()
        .map(|s| {
            let c = dispatch(instance, x, s, Objective::Cost)?;
            let m = dispatch(instance, x, s, Objective::MinShed)?;
            let cuts = with_cuts.then(|| (cut_coefficients(&c, instance, s), cut_coefficients(&m, instance, s)));
            Ok((c.objective, m.objective, cuts))
        })
        .collect::<Result<Vec<_>, DispatchError>>()?;

    let build_cost = x.build_cost(instance);
    let mut expected = 0.0;
    let mut costs = Vec::with_capacity(per_scenario.len());
    let mut sheds = Vec::with_capacity(per_scenario.len());
    let mut cost_cuts = Vec::new();
    let mut shed_cuts = Vec::new();
    for ((c, m, cuts), s) in per_scenario.into_iter().zip(&scenarios.scenarios) {
        expected += s.weight * c;
        costs.push(c);
        sheds.push(m);
        if let Some((cc, sc)) = cuts {
            cost_cuts.push(cc);
            shed_cuts.push(sc);
        }
    }
    let weighted: Vec<(f64, f64)> = sheds
        .iter()
        .zip(&scenarios.scenarios)
        .map(|(&v, s)| (v, s.weight))
        .collect();
    let cvar_shed = cvar(&weighted, cfg.alpha)?;
    let exp_cost = build_cost + expected;
    Ok(EvaluationWithCuts {
        eval: Evaluation {
            x: x.clone(),
            build_cost,
            exp_cost,
            costs,
            sheds,
            cvar_shed,
            scalarized: cfg.scalarize(exp_cost, cvar_shed),
        },
        cost_cuts,
        shed_cuts,
    })
}

/// Evaluates a siting decision on a scenario set: two dispatches per scenario.
pub fn evaluate_first_stage(
    x: &SitingDecision,
    scenarios: &ScenarioSet,
    instance: &GridInstance,
    cfg: &SolveConfig,
) -> Result<Evaluation, SolveError> {
    cfg.validate()?;
    let inst = instance.with_shed_penalty(cfg.effective_penalty(instance));
    Ok(evaluate_inner(x, scenarios, &inst, cfg, false)?.eval)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationLog {
    pub iter: usize,
    pub lower_bound: f64,
    pub upper_bound: f64,
    pub gap: f64,
    pub cuts_total: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Solution {
    pub x: SitingDecision,
    pub build_cost: f64,
    pub exp_cost: f64,
    pub cvar_shed: f64,
    pub scalarized: f64,
    pub lower_bound: f64,
    /// Probability-weighted minimal shed at `x`.
    pub expected_shed: f64,
    pub iters: usize,
    pub cuts_added: usize,
    pub trace: Vec<IterationLog>,
}

impl Solution {
    fn from_evaluation(eval: &Evaluation, scenarios: &ScenarioSet, lower_bound: f64) -> Self {
        Solution {
            x: eval.x.clone(),
            build_cost: eval.build_cost,
            exp_cost: eval.exp_cost,
            cvar_shed: eval.cvar_shed,
            scalarized: eval.scalarized,
            lower_bound,
            expected_shed: eval.expected_shed(scenarios),
            iters: 0,
            cuts_added: 0,
            trace: Vec::new(),
        }
    }

    pub fn gap(&self) -> f64 {
        relative_gap(self.lower_bound, self.scalarized)
    }
}

fn relative_gap(lb: f64, ub: f64) -> f64 {
    (ub - lb) / ub.abs().max(1.0)
}

/// Evaluations of every decision in `{0,1}^J`, indexed by bit mask.
pub fn evaluate_all(
    instance: &GridInstance,
    scenarios: &ScenarioSet,
    cfg: &SolveConfig,
) -> Result<Vec<Evaluation>, SolveError> {
    cfg.validate()?;
    let sites = instance.num_sites();
    if sites > MAX_ENUMERATION_SITES {
        return Err(SolveError::TooManySites {
            sites,
            max: MAX_ENUMERATION_SITES,
        });
    }
    let inst = instance.with_shed_penalty(cfg.effective_penalty(instance));
    (0..1u64 << sites)
        .map(|mask| {
            let x = SitingDecision::from_mask(mask, sites);
            evaluate_inner(&x, scenarios, &inst, cfg, false).map(|e| e.eval)
        })
        .collect()
}

/// Picks the best of precomputed evaluations under `cfg`'s scalarization.
/// Ties go to the lowest mask.
pub fn select_best(evals: &[Evaluation], scenarios: &ScenarioSet, cfg: &SolveConfig) -> Result<Solution, SolveError> {
    let best = evals
        .iter()
        .map(|e| (cfg.scalarize(e.exp_cost, e.cvar_shed), e))
        .fold(None::<(f64, &Evaluation)>, |acc, (v, e)| match acc {
            Some((bv, _)) if bv <= v => acc,
            _ => Some((v, e)),
        })
        .ok_or(SolveError::Empty)?;
    let mut eval = best.1.clone();
    eval.scalarized = best.0;
    let mut sol = Solution::from_evaluation(&eval, scenarios, eval.scalarized);
    sol.iters = evals.len();
    Ok(sol)
}

/// Global optimum by exhaustive enumeration; the correctness oracle.
pub fn solve_enumeration(
    instance: &GridInstance,
    scenarios: &ScenarioSet,
    cfg: &SolveConfig,
) -> Result<Solution, SolveError> {
    let evals = evaluate_all(instance, scenarios, cfg)?;
    select_best(&evals, scenarios, cfg)
}

/// L-shaped decomposition with an integer master.
///
/// Each iteration solves the master to integrality, evaluates the proposed
/// decision exactly, and adds the aggregated cost cut and any per-scenario
/// shed cuts the master solution violates.
pub fn solve_lshaped(
    instance: &GridInstance,
    scenarios: &ScenarioSet,
    cfg: &SolveConfig,
) -> Result<Solution, SolveError> {
    cfg.validate()?;
    if scenarios.is_empty() {
        return Err(SolveError::Empty);
    }
    let inst = instance.with_shed_penalty(cfg.effective_penalty(instance));
    let weights: Vec<f64> = scenarios.scenarios.iter().map(|s| s.weight).collect();
    let risk = cfg.risk_active();
    let mut master = Master::new(inst.site_build_costs(), weights.clone(), cfg.alpha, cfg.beta, risk);

    let mut evaluated: BTreeMap<SitingDecision, EvaluationWithCuts> = BTreeMap::new();
    let mut best: Option<Evaluation> = None;
    let mut lb = f64::NEG_INFINITY;
    let mut trace = Vec::new();

    for iter in 1..=cfg.max_iters.max(1) {
        let proposal = master.solve()?;
        lb = lb.max(proposal.value);
        if !evaluated.contains_key(&proposal.x) {
            let e = evaluate_inner(&proposal.x, scenarios, &inst, cfg, true)?;
            evaluated.insert(proposal.x.clone(), e);
        }
        let current = &evaluated[&proposal.x];
        if best.as_ref().is_none_or(|b| current.eval.scalarized < b.scalarized) {
            best = Some(current.eval.clone());
        }
        let ub = best.as_ref().unwrap().scalarized;

        // cuts violated by the master's own estimate at the proposal
        let tol = 1e-9 * ub.abs().max(1.0);
        let mut added = 0;
        let second_stage = current.eval.exp_cost - current.eval.build_cost;
        if proposal.theta < second_stage - tol {
            let agg = aggregate(&current.cost_cuts, &weights);
            master.add_cut(Cut {
                kind: CutKind::Cost,
                scenario: None,
                constant: agg.constant,
                coefficients: agg.coefficients,
            });
            added += 1;
        }
        if risk {
            for (s, cut) in current.shed_cuts.iter().enumerate() {
                if proposal.excess[s] < current.eval.sheds[s] - proposal.eta - tol {
                    master.add_cut(Cut {
                        kind: CutKind::Shed,
                        scenario: Some(s),
                        constant: cut.constant,
                        coefficients: cut.coefficients.clone(),
                    });
                    added += 1;
                }
            }
        }
        let gap = relative_gap(lb, ub);
        let log = IterationLog {
            iter,
            lower_bound: lb,
            upper_bound: ub,
            gap,
            cuts_total: master.num_cuts(),
        };
        if cfg.verbose {
            eprintln!(
                "iter {}, lb {:.6}, ub {:.6}, gap {:.3e}, cuts_total {}",
                log.iter, log.lower_bound, log.upper_bound, log.gap, log.cuts_total
            );
        }
        trace.push(log);

        let converged = gap <= cfg.gap_tol || added == 0;
        if converged || iter == cfg.max_iters.max(1) {
            let eval = best.unwrap();
            let mut sol = Solution::from_evaluation(&eval, scenarios, lb.min(eval.scalarized));
            sol.iters = iter;
            sol.cuts_added = master.num_cuts();
            sol.trace = trace;
            return if converged {
                Ok(sol)
            } else {
                Err(SolveError::IterationLimit(Box::new(sol)))
            };
        }
    }
    unreachable!("loop returns on its last iteration")
}

fn aggregate(cuts: &[BendersCut], weights: &[f64]) -> BendersCut {
    let j = cuts.first().map_or(0, |c| c.coefficients.len());
    let mut out = BendersCut {
        constant: 0.0,
        coefficients: vec![0.0; j],
    };
    for (cut, w) in cuts.iter().zip(weights) {
        out.constant += w * cut.constant;
        for (o, c) in out.coefficients.iter_mut().zip(&cut.coefficients) {
            *o += w * c;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn uniform(values: &[f64]) -> Vec<(f64, f64)> {
        let w = 1.0 / values.len() as f64;
        values.iter().map(|&v| (v, w)).collect()
    }

    #[test]
    fn cvar_examples() {
        for alpha in [0.1, 0.5, 0.99] {
            assert!((cvar(&uniform(&[7.0; 5]), alpha).unwrap() - 7.0).abs() < 1e-12);
        }
        assert!((cvar(&uniform(&[1.0, 2.0, 3.0, 4.0]), 0.5).unwrap() - 3.5).abs() < 1e-12);
        assert!((cvar(&uniform(&[0.0, 0.0, 0.0, 10.0]), 0.75).unwrap() - 10.0).abs() < 1e-12);
        assert_eq!(cvar(&[], 0.5), Err(SolveError::Empty));
    }

    #[test]
    fn cvar_fractional_boundary_atom() {
        // top 0.3 mass: 0.2 at 10 and 0.1 of the atom at 5
        let v = [(10.0, 0.2), (5.0, 0.5), (1.0, 0.3)];
        assert!((cvar(&v, 0.7).unwrap() - (0.2 * 10.0 + 0.1 * 5.0) / 0.3).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn cvar_matches_rockafellar_uryasev(
            raw in prop::collection::vec((0.0f64..100.0, 0.01f64..1.0), 1..30),
            alpha in 0.01f64..0.99,
        ) {
            let total: f64 = raw.iter().map(|p| p.1).sum();
            let vw: Vec<(f64, f64)> = raw.iter().map(|&(v, w)| (v, w / total)).collect();
            let c = cvar(&vw, alpha).unwrap();
            let ru = vw.iter().map(|&(eta, _)| cvar_objective(&vw, alpha, eta)).fold(f64::INFINITY, f64::min);
            prop_assert!((c - ru).abs() <= 1e-9 * ru.abs().max(1.0));
            let mean: f64 = vw.iter().map(|(v, w)| v * w).sum();
            let max = vw.iter().map(|p| p.0).fold(f64::NEG_INFINITY, f64::max);
            prop_assert!(c >= mean - 1e-9 && c <= max + 1e-9);
        }
    }
}
