//! Random instances shared by the integration tests.
#![allow(dead_code)]

use gridsite::dispatch::flow::{units_to_mw, FlowNetwork};
use gridsite::grid_model::{Bus, GeneratorKind, GeneratorSpec, GridInstance, Line, ResponseParams};
use gridsite::lp::{LpProblem, RowSense};
use gridsite::weather::{sample_iid, Kernel, ScenarioSet, SpatialModel};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Random instance with `1..=max_buses` buses, a random spanning tree of
/// lines plus extras, one or two existing generators and `sites` candidates.
pub fn random_instance(rng: &mut ChaCha8Rng, max_buses: usize, sites: usize) -> GridInstance {
    let nb = rng.random_range(1..=max_buses);
    let buses: Vec<Bus> = (0..nb)
        .map(|b| Bus {
            id: format!("n{b}"),
            x_km: rng.random_range(0.0..400.0),
            y_km: rng.random_range(0.0..400.0),
            base_demand_mw: rng.random_range(0.0..80.0),
            mean_temp_c: rng.random_range(15.0..25.0),
        })
        .collect();
    let mut lines = Vec::new();
    for b in 1..nb {
        let a = rng.random_range(0..b);
        lines.push((a, b));
    }
    for _ in 0..rng.random_range(0..=nb) {
        let a = rng.random_range(0..nb);
        let b = rng.random_range(0..nb);
        if a != b {
            lines.push((a, b));
        }
    }
    let lines = lines
        .into_iter()
        .map(|(a, b)| Line {
            from_bus: buses[a].id.clone(),
            to_bus: buses[b].id.clone(),
            capacity_mw: rng.random_range(5.0..60.0),
        })
        .collect();
    let total: f64 = buses.iter().map(|b| b.base_demand_mw).sum();
    let mut generators = Vec::new();
    for g in 0..rng.random_range(1..=2) {
        generators.push(GeneratorSpec {
            id: format!("e{g}"),
            bus: buses[rng.random_range(0..nb)].id.clone(),
            capacity_mw: rng.random_range(0.3..0.9) * total,
            marginal_cost: rng.random_range(10.0..50.0),
            kind: GeneratorKind::Existing,
            build_cost: None,
        });
    }
    for j in 0..sites {
        generators.push(GeneratorSpec {
            id: format!("c{j}"),
            bus: buses[rng.random_range(0..nb)].id.clone(),
            capacity_mw: rng.random_range(5.0..50.0),
            marginal_cost: rng.random_range(5.0..60.0),
            kind: GeneratorKind::Candidate,
            build_cost: Some(rng.random_range(0.0..800.0)),
        });
    }
    let lo = rng.random_range(12.0..18.0);
    let start = rng.random_range(0.0..5.0);
    GridInstance {
        buses,
        lines,
        generators,
        response: ResponseParams {
            comfort_lo_c: lo,
            comfort_hi_c: lo + rng.random_range(2.0..8.0),
            demand_slope_per_c: rng.random_range(0.0..0.05),
            derate_start_c: start,
            derate_full_c: start + rng.random_range(2.0..15.0),
            derate_max_frac: rng.random_range(0.0..0.6),
            shed_penalty: rng.random_range(100.0..2000.0),
        },
    }
}

pub fn field() -> SpatialModel {
    SpatialModel::new(6.0, 300.0, Kernel::Exponential).unwrap()
}

pub fn scenarios(instance: &GridInstance, n: usize, seed: u64) -> ScenarioSet {
    sample_iid(instance, &field(), n, seed).unwrap()
}

/// Arc-flow LP of a network in MW: flow bounds `[0, capacity]`, one
/// conservation row per node.
pub fn network_lp(net: &FlowNetwork) -> LpProblem {
    let m = net.arcs.len();
    let mut lp = LpProblem::new(net.arcs.iter().map(|a| a.cost).collect());
    for (k, a) in net.arcs.iter().enumerate() {
        lp.set_bounds(k, 0.0, units_to_mw(a.capacity));
    }
    let d = units_to_mw(net.required);
    for v in 0..net.num_nodes {
        let mut row = vec![0.0; m];
        for (k, a) in net.arcs.iter().enumerate() {
            if a.head == v {
                row[k] += 1.0;
            }
            if a.tail == v {
                row[k] -= 1.0;
            }
        }
        let rhs = if v == net.source {
            -d
        } else if v == net.sink {
            d
        } else {
            0.0
        };
        lp.add_row(row, RowSense::Eq, rhs);
    }
    lp
}
