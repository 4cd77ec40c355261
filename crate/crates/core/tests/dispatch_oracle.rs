//! Dispatch against the simplex on the same arc-flow LP, plus the
//! recourse properties that the Benders cuts rely on.

mod common;

use gridsite::dispatch::flow::solve_min_cost_flow;
use gridsite::dispatch::{build_network, cut_coefficients, dispatch, dispatch_with_flows, Objective, SitingDecision};
use gridsite::lp::{solve_lp, LpStatus};
use proptest::prelude::*;
use rand::Rng;

#[test]
fn min_cost_flow_matches_simplex() {
    let mut rng = common::rng(30);
    for case in 0..40 {
        let sites = rng.random_range(0..=3);
        let inst = common::random_instance(&mut rng, 6, sites);
        let set = common::scenarios(&inst, 1, case);
        let x = SitingDecision::from_mask(rng.random_range(0..1u64 << sites), sites);
        for objective in [Objective::Cost, Objective::MinShed] {
            let net = build_network(&inst, &x, &set.scenarios[0], objective).unwrap();
            let flow = solve_min_cost_flow(&net).unwrap();
            let lp = solve_lp(&common::network_lp(&net)).unwrap();
            assert_eq!(lp.status, LpStatus::Optimal);
            assert!(
                (flow.objective - lp.objective).abs() <= 1e-6 * lp.objective.abs().max(1.0),
                "case {case}: flow {} vs lp {}",
                flow.objective,
                lp.objective
            );
            assert!(flow.slackness_violation(&net) <= 1e-9);
            assert_eq!(flow.conservation_violation(&net), 0);
            assert!((flow.dual_objective(&net) - flow.objective).abs() <= 1e-6 * flow.objective.abs().max(1.0));
        }
    }
}

#[test]
fn cuts_underestimate_every_siting_vector() {
    let mut rng = common::rng(31);
    let mut nonzero = 0;
    for case in 0..40 {
        let sites = rng.random_range(1..=4);
        let inst = common::random_instance(&mut rng, 6, sites);
        let set = common::scenarios(&inst, 3, 100 + case);
        for s in &set.scenarios {
            for objective in [Objective::Cost, Objective::MinShed] {
                let values: Vec<f64> = (0..1u64 << sites)
                    .map(|mask| {
                        dispatch(&inst, &SitingDecision::from_mask(mask, sites), s, objective)
                            .unwrap()
                            .objective
                    })
                    .collect();
                for at in 0..1u64 << sites {
                    let x = SitingDecision::from_mask(at, sites);
                    let r = dispatch(&inst, &x, s, objective).unwrap();
                    let cut = cut_coefficients(&r, &inst, s);
                    nonzero += cut.coefficients.iter().filter(|c| **c < 0.0).count();
                    let tol = 1e-6 * r.objective.abs().max(1.0);
                    assert!((cut.evaluate(&x) - r.objective).abs() <= tol, "not tight");
                    for (mask, &q) in values.iter().enumerate() {
                        let y = SitingDecision::from_mask(mask as u64, sites);
                        assert!(
                            cut.evaluate(&y) <= q + tol,
                            "case {case}: cut from {x} overestimates at {y}: {} > {q}",
                            cut.evaluate(&y)
                        );
                    }
                }
            }
        }
    }
    assert!(nonzero > 100, "only {nonzero} nonzero cut coefficients");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn recourse_invariants(seed in any::<u64>(), sites in 0usize..4, mask in any::<u64>()) {
        let mut rng = common::rng(seed);
        let inst = common::random_instance(&mut rng, 6, sites);
        let set = common::scenarios(&inst, 1, seed);
        let s = &set.scenarios[0];
        let full = (1u64 << sites) - 1;
        let x = SitingDecision::from_mask(mask & full, sites);
        let more = SitingDecision::from_mask((mask | rng.random_range(0..=full)) & full, sites);

        for objective in [Objective::Cost, Objective::MinShed] {
            let (r, net, flow) = dispatch_with_flows(&inst, &x, s, objective).unwrap();
            // bus balance: generation + shed + imports = demand + exports
            let mut balance = s.demands_mw.iter().map(|d| -d).collect::<Vec<f64>>();
            for (g, &b) in inst.generator_buses().iter().enumerate() {
                balance[b] += r.gen_mw[g];
                prop_assert!(r.gen_mw[g] <= s.avail_mw[g] + 1e-3);
            }
            for (b, sh) in r.shed_mw.iter().enumerate() {
                balance[b] += sh;
                prop_assert!(*sh >= 0.0 && *sh <= s.demands_mw[b] + 1e-3);
            }
            let index = inst.bus_index();
            for (k, a) in net.arcs.iter().enumerate() {
                if let gridsite::dispatch::flow::ArcRole::Line(l) = a.role {
                    let line = &inst.lines[l];
                    let from = index[line.from_bus.as_str()];
                    let to = index[line.to_bus.as_str()];
                    let f = flow.flows[k] as f64 / 1000.0;
                    let (t, h) = if a.tail == 2 + from && a.head == 2 + to { (from, to) } else { (to, from) };
                    balance[t] -= f;
                    balance[h] += f;
                }
            }
            for v in balance {
                // demand is quantized to 1e-3 MW before solving
                prop_assert!(v.abs() <= 1e-3);
            }
            prop_assert!(r.sensitivities.iter().all(|&c| c <= 0.0));
            let r_more = dispatch(&inst, &more, s, objective).unwrap();
            prop_assert!(r_more.objective <= r.objective + 1e-6 * r.objective.abs().max(1.0));
        }

        let m = dispatch(&inst, &x, s, Objective::MinShed).unwrap();
        prop_assert!((m.objective - m.total_shed_mw).abs() <= 1e-6);
        let mut repriced = inst.clone();
        for g in &mut repriced.generators {
            g.marginal_cost = rng.random_range(0.0..100.0);
        }
        let m2 = dispatch(&repriced, &x, s, Objective::MinShed).unwrap();
        prop_assert_eq!(m.objective, m2.objective);
    }
}
