//! Benders master problem and its branch-and-bound over the siting bits.
//!
//! Column layout: `x_0..x_{J-1}`, `θ` (aggregated expected second-stage
//! cost), then when the risk term is active `η` and one excess variable
//! `e_s` per scenario.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::dispatch::SitingDecision;
use crate::lp::{solve_lp, LpProblem, LpSolution, LpStatus, RowSense};

use super::{Cut, CutKind, SolveError};

const INT_TOL: f64 = 1e-6;

#[derive(Debug, Clone)]
pub(crate) struct Master {
    build_costs: Vec<f64>,
    weights: Vec<f64>,
    alpha: f64,
    beta: f64,
    risk: bool,
    cuts: Vec<Cut>,
}

#[derive(Debug, Clone)]
pub(crate) struct MasterSolution {
    pub x: SitingDecision,
    pub value: f64,
    pub theta: f64,
    pub eta: f64,
    pub excess: Vec<f64>,
}

impl Master {
    pub fn new(build_costs: Vec<f64>, weights: Vec<f64>, alpha: f64, beta: f64, risk: bool) -> Self {
        Master {
            build_costs,
            weights,
            alpha,
            beta,
            risk,
            cuts: Vec::new(),
        }
    }

    pub fn num_cuts(&self) -> usize {
        self.cuts.len()
    }

    pub fn add_cut(&mut self, cut: Cut) {
        self.cuts.push(cut);
    }

    fn sites(&self) -> usize {
        self.build_costs.len()
    }

    fn theta(&self) -> usize {
        self.sites()
    }

    fn eta(&self) -> usize {
        self.sites() + 1
    }

    fn excess(&self, s: usize) -> usize {
        self.sites() + 2 + s
    }

    fn relaxation(&self) -> LpProblem {
        let j = self.sites();
        let mut cost = self.build_costs.clone();
        cost.push(1.0);
        if self.risk {
            cost.push(self.beta);
            let scale = self.beta / (1.0 - self.alpha);
            cost.extend(self.weights.iter().map(|w| scale * w));
        }
        let n = cost.len();
        let mut lp = LpProblem::new(cost);
        for k in 0..j {
            lp.set_bounds(k, 0.0, 1.0);
        }
        // θ, η and e_s are nonnegative: costs and shed never go below zero.
        for cut in &self.cuts {
            let mut row = vec![0.0; n];
            for (r, g) in row.iter_mut().zip(&cut.coefficients) {
                *r = -g;
            }
            match (cut.kind, cut.scenario) {
                (CutKind::Cost, _) => row[self.theta()] = 1.0,
                (CutKind::Shed, Some(s)) if self.risk => {
                    row[self.eta()] = 1.0;
                    row[self.excess(s)] = 1.0;
                }
                (CutKind::Shed, _) => continue,
            }
            lp.add_row(row, RowSense::Ge, cut.constant);
        }
        lp
    }

    /// Solves the master to integrality: best-bound node selection,
    /// branching on the most fractional site.
    pub fn solve(&self) -> Result<MasterSolution, SolveError> {
        let j = self.sites();
        let base = self.relaxation();
        let depth_cap = 2 * j;

        let solve_node = |lower: &[f64], upper: &[f64]| -> Result<Option<LpSolution>, SolveError> {
            let mut lp = base.clone();
            for k in 0..j {
                lp.set_bounds(k, lower[k], upper[k]);
            }
            let sol = solve_lp(&lp)?;
            match sol.status {
                LpStatus::Optimal => Ok(Some(sol)),
                LpStatus::Infeasible => Ok(None),
                LpStatus::Unbounded => Err(SolveError::Numerical("unbounded master relaxation".into())),
            }
        };

        let mut heap = BinaryHeap::new();
        let mut seq = 0usize;
        let root_lo = vec![0.0; j];
        let root_hi = vec![1.0; j];
        let Some(root) = solve_node(&root_lo, &root_hi)? else {
            return Err(SolveError::Numerical("infeasible master relaxation".into()));
        };
        heap.push(Node {
            bound: root.objective,
            seq,
            depth: 0,
            lower: root_lo,
            upper: root_hi,
            sol: root,
        });
        let mut incumbent: Option<LpSolution> = None;

        while let Some(node) = heap.pop() {
            if let Some(inc) = &incumbent {
                if node.bound >= inc.objective - prune_tol(inc.objective) {
                    break;
                }
            }
            let branch = (0..j)
                .map(|k| (k, node.sol.x[k] - node.sol.x[k].floor()))
                .filter(|&(_, f)| f > INT_TOL && f < 1.0 - INT_TOL)
                .min_by(|a, b| {
                    let da = (a.1 - 0.5).abs();
                    let db = (b.1 - 0.5).abs();
                    da.total_cmp(&db).then(a.0.cmp(&b.0))
                });
            let Some((k, _)) = branch else {
                if incumbent.as_ref().is_none_or(|inc| node.sol.objective < inc.objective) {
                    incumbent = Some(node.sol);
                }
                continue;
            };
            if node.depth >= depth_cap {
                return Err(SolveError::Numerical("branch-and-bound depth cap reached".into()));
            }
            for fix in [0.0, 1.0] {
                let mut lower = node.lower.clone();
                let mut upper = node.upper.clone();
                lower[k] = fix;
                upper[k] = fix;
                if let Some(sol) = solve_node(&lower, &upper)? {
                    let keep = incumbent
                        .as_ref()
                        .is_none_or(|inc| sol.objective < inc.objective - prune_tol(inc.objective));
                    if keep {
                        seq += 1;
                        heap.push(Node {
                            bound: sol.objective,
                            seq,
                            depth: node.depth + 1,
                            lower,
                            upper,
                            sol,
                        });
                    }
                }
            }
        }

        let sol = incumbent.ok_or_else(|| SolveError::Numerical("no integral master solution".into()))?;
        let x = SitingDecision {
            build: sol.x[..j].iter().map(|&v| v > 0.5).collect(),
        };
        let (eta, excess) = if self.risk {
            (
                sol.x[self.eta()],
                (0..self.weights.len()).map(|s| sol.x[self.excess(s)]).collect(),
            )
        } else {
            (0.0, Vec::new())
        };
        Ok(MasterSolution {
            x,
            value: sol.objective,
            theta: sol.x[self.theta()],
            eta,
            excess,
        })
    }
}

fn prune_tol(v: f64) -> f64 {
    1e-9 * v.abs().max(1.0)
}

struct Node {
    bound: f64,
    seq: usize,
    depth: usize,
    lower: Vec<f64>,
    upper: Vec<f64>,
    sol: LpSolution,
}

impl PartialEq for Node {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Node {}

impl Ord for Node {
    fn cmp(&self, other: &Self) -> Ordering {
        // min-heap on (bound, seq)
        other
            .bound
            .total_cmp(&self.bound)
            .then_with(|| other.seq.cmp(&self.seq))
    }
}

impl PartialOrd for Node {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
