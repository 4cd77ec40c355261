//! Second-stage economic dispatch for one scenario and one siting decision.
//!
//! The dispatch is a transportation model: generators inject into their bus,
//! lines move power in either direction up to their limit, and unserved
//! demand is covered by shed arcs from the source. Every quantity is rounded
//! to a 1e-3 MW grid before solving, so the network has integral capacities.
//!
//! Node layout: `0` source, `1` sink, `2..2+B` buses, then one node per
//! generator.

pub mod flow;

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grid_model::GridInstance;
use crate::weather::Scenario;
pub use flow::{quantize, solve_min_cost_flow, units_to_mw, Arc, ArcRole, FlowNetwork, FlowSolution};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DispatchError {
    #[error("siting decision has {got} entries, instance has {expected} candidate sites")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("scenario does not match instance: {0}")]
    ScenarioMismatch(String),
    #[error("invalid flow network: {0}")]
    InvalidNetwork(String),
    #[error("network cannot carry {required_mw} MW (max flow {max_flow_mw} MW)")]
    Infeasible { required_mw: f64, max_flow_mw: f64 },
}

/// Binary build vector over candidate sites, in site order.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct SitingDecision {
    pub build: Vec<bool>,
}

impl SitingDecision {
    pub fn none(num_sites: usize) -> Self {
        SitingDecision {
            build: vec![false; num_sites],
        }
    }

    pub fn all(num_sites: usize) -> Self {
        SitingDecision {
            build: vec![true; num_sites],
        }
    }

    /// Decision whose site `j` is bit `j` of `mask`.
    pub fn from_mask(mask: u64, num_sites: usize) -> Self {
        SitingDecision {
            build: (0..num_sites).map(|j| mask >> j & 1 == 1).collect(),
        }
    }

    /// Parses a `0`/`1` string in site order.
    pub fn from_bits(bits: &str) -> Option<Self> {
        bits.chars()
            .map(|c| match c {
                '0' => Some(false),
                '1' => Some(true),
                _ => None,
            })
            .collect::<Option<Vec<_>>>()
            .map(|build| SitingDecision { build })
    }

    pub fn bits(&self) -> String {
        self.build.iter().map(|&b| if b { '1' } else { '0' }).collect()
    }

    pub fn len(&self) -> usize {
        self.build.len()
    }

    pub fn is_empty(&self) -> bool {
        self.build.is_empty()
    }

    pub fn as_f64(&self) -> Vec<f64> {
        self.build.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect()
    }

    /// Componentwise `self ≤ other`.
    pub fn is_subset_of(&self, other: &SitingDecision) -> bool {
        self.build.iter().zip(&other.build).all(|(a, b)| !a || *b)
    }

    pub fn build_cost(&self, instance: &GridInstance) -> f64 {
        instance
            .site_build_costs()
            .iter()
            .zip(&self.build)
            .filter(|(_, &b)| b)
            .map(|(c, _)| c)
            .sum()
    }
}

impl fmt::Display for SitingDecision {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.bits())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Objective {
    /// Generation cost plus shed penalty.
    Cost,
    /// Total shed only.
    MinShed,
}

const SOURCE: usize = 0;
const SINK: usize = 1;

fn bus_node(b: usize) -> usize {
    2 + b
}

pub fn build_network(
    instance: &GridInstance,
    x: &SitingDecision,
    s: &Scenario,
    objective: Objective,
) -> Result<FlowNetwork, DispatchError> {
    let sites = instance.num_sites();
    if x.len() != sites {
        return Err(DispatchError::DimensionMismatch {
            expected: sites,
            got: x.len(),
        });
    }
    let nb = instance.buses.len();
    let ng = instance.generators.len();
    if s.demands_mw.len() != nb || s.avail_mw.len() != ng {
        return Err(DispatchError::ScenarioMismatch(format!(
            "{} demands / {} capacities for {nb} buses / {ng} generators",
            s.demands_mw.len(),
            s.avail_mw.len()
        )));
    }
    let gen_node = |g: usize| 2 + nb + g;
    let demands: Vec<i64> = s.demands_mw.iter().map(|&d| quantize(d)).collect();
    let required: i64 = demands.iter().sum();

    let mut arcs = Vec::with_capacity(2 * ng + 2 * instance.lines.len() + 2 * nb);
    let mut site = 0;
    for (g, gen) in instance.generators.iter().enumerate() {
        let built = if gen.is_candidate() {
            site += 1;
            x.build[site - 1]
        } else {
            true
        };
        arcs.push(Arc {
            tail: SOURCE,
            head: gen_node(g),
            capacity: if built { quantize(s.avail_mw[g]) } else { 0 },
            cost: match objective {
                Objective::Cost => gen.marginal_cost,
                Objective::MinShed => 0.0,
            },
            role: ArcRole::Supply(g),
        });
    }
    for (g, b) in instance.generator_buses().into_iter().enumerate() {
        arcs.push(Arc {
            tail: gen_node(g),
            head: bus_node(b),
            capacity: required,
            cost: 0.0,
            role: ArcRole::Injection(g),
        });
    }
    let index = instance.bus_index();
    for (k, line) in instance.lines.iter().enumerate() {
        let (from, to) = (index[line.from_bus.as_str()], index[line.to_bus.as_str()]);
        let cap = quantize(line.capacity_mw);
        for (t, h) in [(from, to), (to, from)] {
            arcs.push(Arc {
                tail: bus_node(t),
                head: bus_node(h),
                capacity: cap,
                cost: 0.0,
                role: ArcRole::Line(k),
            });
        }
    }
    for (b, &d) in demands.iter().enumerate() {
        arcs.push(Arc {
            tail: SOURCE,
            head: bus_node(b),
            capacity: d,
            cost: match objective {
                Objective::Cost => instance.response.shed_penalty,
                Objective::MinShed => 1.0,
            },
            role: ArcRole::Shed(b),
        });
    }
    for (b, &d) in demands.iter().enumerate() {
        arcs.push(Arc {
            tail: bus_node(b),
            head: SINK,
            capacity: d,
            cost: 0.0,
            role: ArcRole::Demand(b),
        });
    }
    Ok(FlowNetwork {
        num_nodes: 2 + nb + ng,
        source: SOURCE,
        sink: SINK,
        arcs,
        required,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct DispatchResult {
    pub objective_kind: Objective,
    pub x: SitingDecision,
    /// $ for `Cost`, MW for `MinShed`.
    pub objective: f64,
    pub gen_mw: Vec<f64>,
    pub shed_mw: Vec<f64>,
    pub total_shed_mw: f64,
    /// Subgradient of the scenario value with respect to each site's build
    /// indicator. Never positive.
    pub sensitivities: Vec<f64>,
    /// Reduced cost of each candidate site's supply arc.
    pub site_reduced_costs: Vec<f64>,
    /// Dual objective recovered from the node potentials.
    pub dual_objective: f64,
}

/// Dispatch plus the flow-level solution it was read from.
pub fn dispatch_with_flows(
    instance: &GridInstance,
    x: &SitingDecision,
    s: &Scenario,
    objective: Objective,
) -> Result<(DispatchResult, FlowNetwork, FlowSolution), DispatchError> {
    let net = build_network(instance, x, s, objective)?;
    let mut sol = solve_min_cost_flow(&net)?;

    // An idle generator may sit at its bus potential; this is the smallest
    // dual-feasible value and gives the tightest capacity prices.
    for (k, a) in net.arcs.iter().enumerate() {
        if let ArcRole::Injection(_) = a.role {
            if sol.flows[k] == 0 {
                sol.potentials[a.tail] = sol.potentials[a.head];
            }
        }
    }

    let nb = instance.buses.len();
    let ng = instance.generators.len();
    let mut gen_mw = vec![0.0; ng];
    let mut shed_mw = vec![0.0; nb];
    let mut supply_arc = vec![0; ng];
    for (k, a) in net.arcs.iter().enumerate() {
        match a.role {
            ArcRole::Supply(g) => {
                gen_mw[g] = units_to_mw(sol.flows[k]);
                supply_arc[g] = k;
            }
            ArcRole::Shed(b) => shed_mw[b] = units_to_mw(sol.flows[k]),
            _ => {}
        }
    }
    let site_reduced_costs: Vec<f64> = instance
        .candidate_indices()
        .into_iter()
        .map(|g| sol.reduced_cost(&net, supply_arc[g]))
        .collect();
    let sensitivities = site_coefficients(instance, s, &site_reduced_costs);
    let total_shed_mw = units_to_mw(
        net.arcs
            .iter()
            .zip(&sol.flows)
            .filter(|(a, _)| matches!(a.role, ArcRole::Shed(_)))
            .map(|(_, &f)| f)
            .sum(),
    );
    let result = DispatchResult {
        objective_kind: objective,
        x: x.clone(),
        objective: sol.objective,
        gen_mw,
        shed_mw,
        total_shed_mw,
        sensitivities,
        site_reduced_costs,
        dual_objective: sol.dual_objective(&net),
    };
    Ok((result, net, sol))
}

/// Solves the recourse problem `Q_s(x)` for one objective.
pub fn dispatch(
    instance: &GridInstance,
    x: &SitingDecision,
    s: &Scenario,
    objective: Objective,
) -> Result<DispatchResult, DispatchError> {
    dispatch_with_flows(instance, x, s, objective).map(|(r, _, _)| r)
}

fn site_coefficients(instance: &GridInstance, s: &Scenario, reduced: &[f64]) -> Vec<f64> {
    instance
        .candidate_indices()
        .into_iter()
        .zip(reduced)
        .map(|(g, &r)| r.min(0.0) * units_to_mw(quantize(s.avail_mw[g])))
        .collect()
}

/// Affine under-estimator `constant + coefficients · x` of a scenario value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BendersCut {
    pub constant: f64,
    pub coefficients: Vec<f64>,
}

impl BendersCut {
    pub fn evaluate(&self, x: &SitingDecision) -> f64 {
        self.constant
            + self
                .coefficients
                .iter()
                .zip(&x.build)
                .filter(|(_, &b)| b)
                .map(|(c, _)| c)
                .sum::<f64>()
    }
}

/// Optimality cut from LP duality: the supply-arc capacity price of each
/// candidate site times its available capacity, anchored at the dispatch
/// value of the generating decision.
pub fn cut_coefficients(result: &DispatchResult, instance: &GridInstance, s: &Scenario) -> BendersCut {
    let coefficients = site_coefficients(instance, s, &result.site_reduced_costs);
    let at_x: f64 = coefficients
        .iter()
        .zip(&result.x.build)
        .filter(|(_, &b)| b)
        .map(|(c, _)| c)
        .sum();
    BendersCut {
        constant: result.objective - at_x,
        coefficients,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid_model::{Bus, GeneratorKind, GeneratorSpec, Line, ResponseParams};
    use crate::weather::Stratum;

    pub(crate) fn response(penalty: f64) -> ResponseParams {
        ResponseParams {
            comfort_lo_c: 15.0,
            comfort_hi_c: 25.0,
            demand_slope_per_c: 0.02,
            derate_start_c: 5.0,
            derate_full_c: 15.0,
            derate_max_frac: 0.4,
            shed_penalty: penalty,
        }
    }

    fn bus(id: &str, demand: f64) -> Bus {
        Bus {
            id: id.into(),
            x_km: 0.0,
            y_km: 0.0,
            base_demand_mw: demand,
            mean_temp_c: 20.0,
        }
    }

    fn gen(id: &str, bus: &str, cap: f64, cost: f64, build: Option<f64>) -> GeneratorSpec {
        GeneratorSpec {
            id: id.into(),
            bus: bus.into(),
            capacity_mw: cap,
            marginal_cost: cost,
            kind: if build.is_some() {
                GeneratorKind::Candidate
            } else {
                GeneratorKind::Existing
            },
            build_cost: build,
        }
    }

    /// Scenario at mean temperatures (no weather stress).
    fn calm(instance: &GridInstance) -> Scenario {
        let temps = instance.buses.iter().map(|b| b.mean_temp_c).collect();
        Scenario::realize(instance, temps, 1.0, Stratum::None, 0.0)
    }

    fn one_bus(cap: f64) -> GridInstance {
        GridInstance {
            buses: vec![bus("b1", 10.0)],
            lines: vec![],
            generators: vec![gen("g1", "b1", cap, 2.0, None)],
            response: response(100.0),
        }
    }

    #[test]
    fn network_shape_for_one_bus() {
        let inst = one_bus(15.0);
        let net = build_network(&inst, &SitingDecision::none(0), &calm(&inst), Objective::Cost).unwrap();
        let supply: Vec<_> = net
            .arcs
            .iter()
            .filter(|a| matches!(a.role, ArcRole::Supply(_)))
            .collect();
        let shed: Vec<_> = net.arcs.iter().filter(|a| matches!(a.role, ArcRole::Shed(_))).collect();
        assert_eq!(supply.len(), 1);
        assert_eq!(supply[0].capacity, quantize(15.0));
        assert_eq!(shed.len(), 1);
        assert_eq!(shed[0].capacity, quantize(10.0));
    }

    #[test]
    fn unbuilt_site_has_zero_capacity_and_min_shed_costs() {
        let mut inst = one_bus(15.0);
        inst.generators.push(gen("c1", "b1", 20.0, 1.0, Some(5.0)));
        let s = calm(&inst);
        let net = build_network(&inst, &SitingDecision::none(1), &s, Objective::MinShed).unwrap();
        let site_arc = net.arcs.iter().find(|a| a.role == ArcRole::Supply(1)).unwrap();
        assert_eq!(site_arc.capacity, 0);
        for a in &net.arcs {
            let expected = if matches!(a.role, ArcRole::Shed(_)) { 1.0 } else { 0.0 };
            assert_eq!(a.cost, expected);
        }
        assert!(matches!(
            build_network(&inst, &SitingDecision::none(2), &s, Objective::Cost),
            Err(DispatchError::DimensionMismatch { expected: 1, got: 2 })
        ));
    }

    #[test]
    fn dispatch_examples() {
        let inst = one_bus(15.0);
        let r = dispatch(&inst, &SitingDecision::none(0), &calm(&inst), Objective::Cost).unwrap();
        assert!((r.objective - 20.0).abs() < 1e-9);
        assert_eq!(r.total_shed_mw, 0.0);

        let inst = one_bus(6.0);
        let r = dispatch(&inst, &SitingDecision::none(0), &calm(&inst), Objective::Cost).unwrap();
        assert!((r.objective - 412.0).abs() < 1e-9);
        assert!((r.total_shed_mw - 4.0).abs() < 1e-9);

        let inst = GridInstance {
            buses: vec![bus("b1", 0.0), bus("b2", 5.0)],
            lines: vec![Line {
                from_bus: "b1".into(),
                to_bus: "b2".into(),
                capacity_mw: 3.0,
            }],
            generators: vec![gen("g1", "b1", 20.0, 1.0, None)],
            response: response(100.0),
        };
        let r = dispatch(&inst, &SitingDecision::none(0), &calm(&inst), Objective::Cost).unwrap();
        assert!((r.gen_mw[0] - 3.0).abs() < 1e-9);
        assert!((r.shed_mw[1] - 2.0).abs() < 1e-9);
        assert!((r.objective - 203.0).abs() < 1e-9);
        let m = dispatch(&inst, &SitingDecision::none(0), &calm(&inst), Objective::MinShed).unwrap();
        assert!((m.objective - 2.0).abs() < 1e-9);
        assert_eq!(m.objective, m.total_shed_mw);
    }

    #[test]
    fn unsaturated_candidate_gets_zero_cut() {
        let mut inst = one_bus(15.0);
        inst.generators.push(gen("c1", "b1", 20.0, 5.0, Some(1.0)));
        let s = calm(&inst);
        let r = dispatch(&inst, &SitingDecision::all(1), &s, Objective::Cost).unwrap();
        let cut = cut_coefficients(&r, &inst, &s);
        assert_eq!(cut.coefficients, vec![0.0]);
        assert_eq!(cut.constant, r.objective);
    }

    #[test]
    fn single_site_cut_is_valid_at_both_points() {
        let mut inst = one_bus(6.0);
        inst.generators.push(gen("c1", "b1", 3.0, 4.0, Some(1.0)));
        let s = calm(&inst);
        for obj in [Objective::Cost, Objective::MinShed] {
            let q: Vec<f64> = [false, true]
                .iter()
                .map(|&b| {
                    let x = SitingDecision { build: vec![b] };
                    dispatch(&inst, &x, &s, obj).unwrap().objective
                })
                .collect();
            for &b in &[false, true] {
                let x = SitingDecision { build: vec![b] };
                let r = dispatch(&inst, &x, &s, obj).unwrap();
                let cut = cut_coefficients(&r, &inst, &s);
                for (k, &bb) in [false, true].iter().enumerate() {
                    let v = cut.evaluate(&SitingDecision { build: vec![bb] });
                    assert!(v <= q[k] + 1e-9, "{obj:?}: cut {v} above Q {}", q[k]);
                }
                assert!((cut.evaluate(&x) - r.objective).abs() < 1e-9);
            }
        }
        // building 3 MW of cost-4 supply saves 3·(100-4)
        let r0 = dispatch(&inst, &SitingDecision::none(1), &s, Objective::Cost).unwrap();
        assert!((r0.sensitivities[0] + 3.0 * 96.0).abs() < 1e-9);
    }

    #[test]
    fn bits_round_trip() {
        let x = SitingDecision::from_mask(0b1011, 5);
        assert_eq!(x.bits(), "11010");
        assert_eq!(SitingDecision::from_bits("11010"), Some(x));
        assert_eq!(SitingDecision::from_bits("1x"), None);
    }
}
