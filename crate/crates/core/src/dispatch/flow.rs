//! Successive shortest paths with node potentials.
//!
//! Capacities and flows are integers on a 1e-3 MW grid; costs are $/MW. The
//! solver keeps reduced costs `c + p[tail] - p[head]` nonnegative on every
//! residual edge, so the returned potentials certify optimality through
//! complementary slackness.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use super::DispatchError;

/// Flow units per MW.
pub const UNITS_PER_MW: f64 = 1000.0;

/// Rounds a MW quantity to the flow grid.
pub fn quantize(mw: f64) -> i64 {
    (mw * UNITS_PER_MW).round() as i64
}

pub fn units_to_mw(units: i64) -> f64 {
    units as f64 / UNITS_PER_MW
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ArcRole {
    /// Source to generator node; payload is the generator index.
    Supply(usize),
    /// Generator node to its bus.
    Injection(usize),
    /// One direction of a transmission line.
    Line(usize),
    /// Source to bus, priced at the shed penalty.
    Shed(usize),
    /// Bus to sink, carrying the bus demand.
    Demand(usize),
    Other,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Arc {
    pub tail: usize,
    pub head: usize,
    /// Capacity in flow units.
    pub capacity: i64,
    /// Cost per MW.
    pub cost: f64,
    pub role: ArcRole,
}

/// Single-source single-sink network that must carry exactly `required`
/// units from `source` to `sink`.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowNetwork {
    pub num_nodes: usize,
    pub source: usize,
    pub sink: usize,
    pub arcs: Vec<Arc>,
    pub required: i64,
}

impl FlowNetwork {
    /// Plain-text arc list, one arc per line.
    pub fn dump(&self) -> String {
        let mut out = format!(
            "# nodes {} source {} sink {} required_mw {}\n# idx tail head capacity_mw cost role\n",
            self.num_nodes,
            self.source,
            self.sink,
            units_to_mw(self.required)
        );
        for (k, a) in self.arcs.iter().enumerate() {
            out.push_str(&format!(
                "{k} {} {} {} {} {:?}\n",
                a.tail,
                a.head,
                units_to_mw(a.capacity),
                a.cost,
                a.role
            ));
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FlowSolution {
    /// Flow per arc in units.
    pub flows: Vec<i64>,
    pub potentials: Vec<f64>,
    /// Σ cost · flow, in $.
    pub objective: f64,
}

impl FlowSolution {
    pub fn reduced_cost(&self, net: &FlowNetwork, arc: usize) -> f64 {
        let a = &net.arcs[arc];
        a.cost + self.potentials[a.tail] - self.potentials[a.head]
    }

    /// Dual value `(p[sink] - p[source])·D + Σ u·min(0, reduced cost)`.
    pub fn dual_objective(&self, net: &FlowNetwork) -> f64 {
        let mut v = (self.potentials[net.sink] - self.potentials[net.source]) * units_to_mw(net.required);
        for (k, a) in net.arcs.iter().enumerate() {
            let r = self.reduced_cost(net, k);
            if r < 0.0 {
                v += r * units_to_mw(a.capacity);
            }
        }
        v
    }

    /// Largest complementary-slackness violation over all arcs.
    pub fn slackness_violation(&self, net: &FlowNetwork) -> f64 {
        let mut worst: f64 = 0.0;
        for (k, a) in net.arcs.iter().enumerate() {
            let r = self.reduced_cost(net, k);
            if self.flows[k] < a.capacity {
                worst = worst.max(-r);
            }
            if self.flows[k] > 0 {
                worst = worst.max(r);
            }
        }
        worst
    }

    /// Largest conservation violation in units (source and sink carry ±required).
    pub fn conservation_violation(&self, net: &FlowNetwork) -> i64 {
        let mut balance = vec![0i64; net.num_nodes];
        for (a, &f) in net.arcs.iter().zip(&self.flows) {
            balance[a.tail] -= f;
            balance[a.head] += f;
        }
        balance[net.source] += net.required;
        balance[net.sink] -= net.required;
        balance.iter().map(|b| b.abs()).max().unwrap_or(0)
    }
}

#[derive(Clone, Copy, PartialEq)]
struct HeapEntry {
    dist: f64,
    node: usize,
}

impl Eq for HeapEntry {}

impl Ord for HeapEntry {
    fn cmp(&self, other: &Self) -> Ordering {
        // min-heap on (dist, node)
        other
            .dist
            .total_cmp(&self.dist)
            .then_with(|| other.node.cmp(&self.node))
    }
}

impl PartialOrd for HeapEntry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Minimum-cost flow of `net.required` units from source to sink.
///
/// Arc costs must be finite and nonnegative, capacities nonnegative.
pub fn solve_min_cost_flow(net: &FlowNetwork) -> Result<FlowSolution, DispatchError> {
    let n = net.num_nodes;
    if net.source >= n || net.sink >= n || net.source == net.sink {
        return Err(DispatchError::InvalidNetwork("bad source/sink".into()));
    }
    for a in &net.arcs {
        if a.tail >= n || a.head >= n {
            return Err(DispatchError::InvalidNetwork("arc endpoint out of range".into()));
        }
        if a.capacity < 0 || !(a.cost.is_finite() && a.cost >= 0.0) {
            return Err(DispatchError::InvalidNetwork(
                "arc capacity and cost must be nonnegative".into(),
            ));
        }
    }

    // Residual edge 2k is arc k forward, 2k+1 its reverse.
    let m = net.arcs.len();
    let mut adjacency: Vec<Vec<usize>> = vec![Vec::new(); n];
    for (k, a) in net.arcs.iter().enumerate() {
        adjacency[a.tail].push(2 * k);
        adjacency[a.head].push(2 * k + 1);
    }
    for edges in &mut adjacency {
        edges.sort_unstable();
    }
    let mut flows = vec![0i64; m];
    let edge_ends = |e: usize| {
        let a = &net.arcs[e / 2];
        if e.is_multiple_of(2) {
            (a.tail, a.head, a.cost)
        } else {
            (a.head, a.tail, -a.cost)
        }
    };
    let residual = |flows: &[i64], e: usize| {
        let k = e / 2;
        if e.is_multiple_of(2) {
            net.arcs[k].capacity - flows[k]
        } else {
            flows[k]
        }
    };

    let mut potentials = vec![0.0; n];
    let mut dist = vec![f64::INFINITY; n];
    let mut parent = vec![usize::MAX; n];
    let mut done = vec![false; n];
    let mut sent = 0i64;
    let mut heap = BinaryHeap::new();

    while sent < net.required {
        dist.fill(f64::INFINITY);
        parent.fill(usize::MAX);
        done.fill(false);
        dist[net.source] = 0.0;
        heap.push(HeapEntry {
            dist: 0.0,
            node: net.source,
        });
        while let Some(HeapEntry { dist: d, node: u }) = heap.pop() {
            if done[u] {
                continue;
            }
            done[u] = true;
            for &e in &adjacency[u] {
                if residual(&flows, e) <= 0 {
                    continue;
                }
                let (_, v, c) = edge_ends(e);
                if done[v] {
                    continue;
                }
                let rc = (c + potentials[u] - potentials[v]).max(0.0);
                let nd = d + rc;
                if nd < dist[v] {
                    dist[v] = nd;
                    parent[v] = e;
                    heap.push(HeapEntry { dist: nd, node: v });
                }
            }
        }
        if !dist[net.sink].is_finite() {
            return Err(DispatchError::Infeasible {
                required_mw: units_to_mw(net.required),
                max_flow_mw: units_to_mw(sent),
            });
        }
        let reach_max = dist.iter().copied().filter(|d| d.is_finite()).fold(0.0, f64::max);
        for (p, &d) in potentials.iter_mut().zip(&dist) {
            *p += if d.is_finite() { d } else { reach_max };
        }

        let mut push = net.required - sent;
        let mut v = net.sink;
        while v != net.source {
            let e = parent[v];
            push = push.min(residual(&flows, e));
            v = edge_ends(e).0;
        }
        let mut v = net.sink;
        while v != net.source {
            let e = parent[v];
            if e.is_multiple_of(2) {
                flows[e / 2] += push;
            } else {
                flows[e / 2] -= push;
            }
            v = edge_ends(e).0;
        }
        sent += push;
    }

    let objective = net.arcs.iter().zip(&flows).map(|(a, &f)| a.cost * units_to_mw(f)).sum();
    Ok(FlowSolution {
        flows,
        potentials,
        objective,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn arc(tail: usize, head: usize, cap_mw: f64, cost: f64) -> Arc {
        Arc {
            tail,
            head,
            capacity: quantize(cap_mw),
            cost,
            role: ArcRole::Other,
        }
    }

    #[test]
    fn single_arc() {
        let net = FlowNetwork {
            num_nodes: 2,
            source: 0,
            sink: 1,
            arcs: vec![arc(0, 1, 5.0, 2.0)],
            required: quantize(5.0),
        };
        let sol = solve_min_cost_flow(&net).unwrap();
        assert_eq!(sol.flows, vec![5000]);
        assert!((sol.objective - 10.0).abs() < 1e-12);
        assert!((sol.dual_objective(&net) - 10.0).abs() < 1e-9);
    }

    #[test]
    fn parallel_arcs_fill_cheapest_first() {
        let net = FlowNetwork {
            num_nodes: 2,
            source: 0,
            sink: 1,
            arcs: vec![arc(0, 1, 4.0, 1.0), arc(0, 1, 10.0, 3.0)],
            required: quantize(6.0),
        };
        let sol = solve_min_cost_flow(&net).unwrap();
        assert_eq!(sol.flows, vec![4000, 2000]);
        assert!((sol.objective - 10.0).abs() < 1e-12);
        assert!(sol.slackness_violation(&net) <= 1e-9);
        assert!((sol.dual_objective(&net) - sol.objective).abs() < 1e-6);
    }

    #[test]
    fn rerouting_through_reverse_edges() {
        // The first augmenting path must be partially undone.
        let net = FlowNetwork {
            num_nodes: 4,
            source: 0,
            sink: 3,
            arcs: vec![
                arc(0, 1, 1.0, 1.0),
                arc(0, 2, 1.0, 2.0),
                arc(1, 2, 1.0, 0.0),
                arc(1, 3, 1.0, 3.0),
                arc(2, 3, 1.0, 1.0),
            ],
            required: quantize(2.0),
        };
        let sol = solve_min_cost_flow(&net).unwrap();
        assert!((sol.objective - 7.0).abs() < 1e-12);
        assert_eq!(sol.conservation_violation(&net), 0);
        assert!(sol.slackness_violation(&net) <= 1e-9);
        assert!((sol.dual_objective(&net) - 7.0).abs() < 1e-6);
    }

    #[test]
    fn infeasible_network_is_reported() {
        let net = FlowNetwork {
            num_nodes: 2,
            source: 0,
            sink: 1,
            arcs: vec![arc(0, 1, 1.0, 1.0)],
            required: quantize(2.0),
        };
        assert!(matches!(
            solve_min_cost_flow(&net),
            Err(DispatchError::Infeasible { .. })
        ));
    }

    #[test]
    fn negative_cost_is_rejected() {
        let net = FlowNetwork {
            num_nodes: 2,
            source: 0,
            sink: 1,
            arcs: vec![arc(0, 1, 1.0, -1.0)],
            required: 0,
        };
        assert!(solve_min_cost_flow(&net).is_err());
    }
}
