//! Synthetic demo grids.
//!
//! Buses sit on a rectangular lattice with 100 km spacing and lines join
//! lattice neighbours. Parameters drawn per seed, all uniform:
//!
//! | quantity                      | range                         |
//! |-------------------------------|-------------------------------|
//! | bus base demand               | 50 – 150 MW                   |
//! | bus mean temperature          | 18 – 22 °C                    |
//! | line capacity                 | 100 – 200 MW                  |
//! | existing generator share      | 0.5 – 1.5 (then normalized)   |
//! | existing marginal cost        | 30 – 45 $/MWh                 |
//! | candidate capacity            | 40 – 80 MW                    |
//! | candidate marginal cost       | 25 – 40 $/MWh                 |
//! | candidate build cost          | 300 – 900 $ (per hour)        |
//!
//! Existing capacity totals 1.15 × total base demand. The response is fixed:
//! comfort band [16, 24] °C, demand slope 0.03 /°C, derating from 5 °C to
//! 20 °C of deviation up to 40 %, shed penalty 1000 $/MWh.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::grid_model::{Bus, GeneratorKind, GeneratorSpec, GridInstance, Line, ResponseParams};

pub const SPACING_KM: f64 = 100.0;
pub const EXISTING_MARGIN: f64 = 1.15;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DemoSize {
    /// 2 × 4 lattice: 8 buses, 10 lines, 3 existing generators, 6 sites.
    Small,
    /// 5 × 5 lattice: 25 buses, 40 lines, 6 existing generators, 12 sites.
    Medium,
}

impl DemoSize {
    fn layout(self) -> (usize, usize, usize, usize) {
        // rows, cols, existing, candidates
        match self {
            DemoSize::Small => (2, 4, 3, 6),
            DemoSize::Medium => (5, 5, 6, 12),
        }
    }
}

pub fn demo_response() -> ResponseParams {
    ResponseParams {
        comfort_lo_c: 16.0,
        comfort_hi_c: 24.0,
        demand_slope_per_c: 0.03,
        derate_start_c: 5.0,
        derate_full_c: 20.0,
        derate_max_frac: 0.4,
        shed_penalty: 1000.0,
    }
}

/// Rounds to three decimals so the text form is short and exact.
fn r3(v: f64) -> f64 {
    (v * 1000.0).round() / 1000.0
}

/// Deterministic demo instance for `(size, seed)`.
pub fn demo_instance(size: DemoSize, seed: u64) -> GridInstance {
    let (rows, cols, n_existing, n_candidates) = size.layout();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rows * cols;

    let buses: Vec<Bus> = (0..n)
        .map(|k| Bus {
            id: format!("b{}", k + 1),
            x_km: SPACING_KM * (k % cols) as f64,
            y_km: SPACING_KM * (k / cols) as f64,
            base_demand_mw: r3(rng.random_range(50.0..150.0)),
            mean_temp_c: r3(rng.random_range(18.0..22.0)),
        })
        .collect();

    let mut lines = Vec::new();
    for r in 0..rows {
        for c in 0..cols {
            let k = r * cols + c;
            if c + 1 < cols {
                lines.push((k, k + 1));
            }
            if r + 1 < rows {
                lines.push((k, k + cols));
            }
        }
    }
    let lines: Vec<Line> = lines
        .into_iter()
        .map(|(a, b)| Line {
            from_bus: buses[a].id.clone(),
            to_bus: buses[b].id.clone(),
            capacity_mw: r3(rng.random_range(100.0..200.0)),
        })
        .collect();

    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    let total_demand: f64 = buses.iter().map(|b| b.base_demand_mw).sum();
    let shares: Vec<f64> = (0..n_existing).map(|_| rng.random_range(0.5..1.5)).collect();
    let share_sum: f64 = shares.iter().sum();

    let mut generators = Vec::new();
    for (g, share) in shares.iter().enumerate() {
        generators.push(GeneratorSpec {
            id: format!("g{}", g + 1),
            bus: buses[order[g]].id.clone(),
            capacity_mw: r3(EXISTING_MARGIN * total_demand * share / share_sum),
            marginal_cost: r3(rng.random_range(30.0..45.0)),
            kind: GeneratorKind::Existing,
            build_cost: None,
        });
    }
    for j in 0..n_candidates {
        // sites cycle over the buses without existing plants first
        let bus = order[n_existing + j % (n - n_existing)];
        generators.push(GeneratorSpec {
            id: format!("c{}", j + 1),
            bus: buses[bus].id.clone(),
            capacity_mw: r3(rng.random_range(40.0..80.0)),
            marginal_cost: r3(rng.random_range(25.0..40.0)),
            kind: GeneratorKind::Candidate,
            build_cost: Some(r3(rng.random_range(300.0..900.0))),
        });
    }

    GridInstance {
        buses,
        lines,
        generators,
        response: demo_response(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid_model::load_instance;

    #[test]
    fn small_layout_counts() {
        let inst = demo_instance(DemoSize::Small, 7);
        assert_eq!(inst.buses.len(), 8);
        assert_eq!(inst.lines.len(), 10);
        assert_eq!(inst.num_sites(), 6);
        assert_eq!(inst.generators.len() - inst.num_sites(), 3);
        inst.validate().unwrap();
    }

    #[test]
    fn medium_layout_counts() {
        let inst = demo_instance(DemoSize::Medium, 7);
        assert_eq!(inst.buses.len(), 25);
        assert_eq!(inst.lines.len(), 40);
        assert_eq!(inst.num_sites(), 12);
        inst.validate().unwrap();
    }

    #[test]
    fn deterministic_text() {
        let a = demo_instance(DemoSize::Small, 7).to_toml_string();
        let b = demo_instance(DemoSize::Small, 7).to_toml_string();
        assert_eq!(a, b);
        assert_ne!(a, demo_instance(DemoSize::Small, 8).to_toml_string());
        assert_eq!(load_instance(&a).unwrap(), demo_instance(DemoSize::Small, 7));
    }
}
