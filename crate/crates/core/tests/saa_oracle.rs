//! L-shaped decomposition against exhaustive enumeration, and the
//! monotonicity properties of the two scalarizations.

mod common;

use gridsite::demo::{demo_instance, DemoSize};
use gridsite::dispatch::{dispatch, Objective, SitingDecision};
use gridsite::grid_model::{Bus, GeneratorKind, GeneratorSpec, GridInstance, Line, ResponseParams};
use gridsite::saa::{
    cvar, evaluate_all, evaluate_first_stage, select_best, solve_enumeration, solve_lshaped, SolveConfig, SolveError,
    Variant,
};
use gridsite::weather::{sample_iid, sample_stratified, Kernel, SpatialModel, StratificationPlan};
use rand::Rng;

fn config(variant: Variant, beta: f64) -> SolveConfig {
    SolveConfig {
        variant,
        alpha: 0.9,
        beta,
        gap_tol: 1e-9,
        max_iters: 500,
        ..SolveConfig::default()
    }
}

#[test]
fn lshaped_agrees_with_enumeration() {
    let mut rng = common::rng(40);
    for case in 0..30 {
        let sites = rng.random_range(0..=6);
        let inst = common::random_instance(&mut rng, 8, sites);
        let set = common::scenarios(&inst, rng.random_range(1..=20), 500 + case);
        let variant = if case % 3 == 0 { Variant::Base } else { Variant::BoCvar };
        let beta = [0.0, 10.0, 300.0][case as usize % 3];
        let cfg = config(variant, beta);
        let exact = solve_enumeration(&inst, &set, &cfg).unwrap();
        let benders = solve_lshaped(&inst, &set, &cfg).unwrap();
        let rel = (exact.scalarized - benders.scalarized).abs() / exact.scalarized.abs().max(1.0);
        assert!(
            rel <= 1e-6,
            "case {case}: enumeration {} vs l-shaped {}",
            exact.scalarized,
            benders.scalarized
        );
        assert!(benders.lower_bound <= benders.scalarized);
        assert!(benders.gap() <= cfg.gap_tol);
        assert!(benders.lower_bound <= exact.scalarized + 1e-6 * exact.scalarized.abs().max(1.0));
        if variant == Variant::BoCvar && beta > 0.0 {
            // ties in the objective may pick a different x with another cvar
            let alt = evaluate_first_stage(&benders.x, &set, &inst, &cfg).unwrap();
            assert!((alt.scalarized - benders.scalarized).abs() <= 1e-9 * alt.scalarized.abs().max(1.0));
        }
        let mut last = f64::NEG_INFINITY;
        for log in &benders.trace {
            assert!(log.lower_bound >= last, "bound decreased");
            assert!(log.lower_bound <= log.upper_bound + 1e-9 * log.upper_bound.abs().max(1.0));
            last = log.lower_bound;
        }
    }
}

#[test]
fn enumeration_edge_cases() {
    let mut rng = common::rng(41);
    let inst = common::random_instance(&mut rng, 3, 0);
    let set = common::scenarios(&inst, 4, 1);
    let cfg = config(Variant::BoCvar, 5.0);
    let sol = solve_enumeration(&inst, &set, &cfg).unwrap();
    assert!(sol.x.is_empty());
    assert_eq!(sol.lower_bound, sol.scalarized);
    let ev = evaluate_first_stage(&sol.x, &set, &inst, &cfg).unwrap();
    assert_eq!(ev.scalarized, sol.scalarized);

    let inst = common::random_instance(&mut rng, 3, 1);
    let set = common::scenarios(&inst, 4, 2);
    let sol = solve_enumeration(&inst, &set, &cfg).unwrap();
    let values: Vec<f64> = (0..2)
        .map(|m| {
            evaluate_first_stage(&SitingDecision::from_mask(m, 1), &set, &inst, &cfg)
                .unwrap()
                .scalarized
        })
        .collect();
    assert_eq!(sol.scalarized, values[0].min(values[1]));

    let inst = common::random_instance(&mut rng, 3, 17);
    assert!(matches!(
        solve_enumeration(&inst, &set, &cfg),
        Err(SolveError::TooManySites { sites: 17, .. })
    ));
}

fn three_bus() -> GridInstance {
    let bus = |id: &str, x: f64, d: f64| Bus {
        id: id.into(),
        x_km: x,
        y_km: 0.0,
        base_demand_mw: d,
        mean_temp_c: 20.0,
    };
    let line = |a: &str, b: &str, c: f64| Line {
        from_bus: a.into(),
        to_bus: b.into(),
        capacity_mw: c,
    };
    let gen = |id: &str, bus: &str, cap: f64, mc: f64, build: Option<f64>| GeneratorSpec {
        id: id.into(),
        bus: bus.into(),
        capacity_mw: cap,
        marginal_cost: mc,
        kind: if build.is_some() {
            GeneratorKind::Candidate
        } else {
            GeneratorKind::Existing
        },
        build_cost: build,
    };
    GridInstance {
        buses: vec![bus("a", 0.0, 40.0), bus("b", 100.0, 60.0), bus("c", 200.0, 30.0)],
        lines: vec![line("a", "b", 50.0), line("b", "c", 20.0)],
        generators: vec![
            gen("g", "a", 110.0, 30.0, None),
            gen("s1", "b", 25.0, 20.0, Some(100.0)),
            gen("s2", "c", 30.0, 10.0, Some(250.0)),
        ],
        response: ResponseParams {
            comfort_lo_c: 17.0,
            comfort_hi_c: 23.0,
            demand_slope_per_c: 0.04,
            derate_start_c: 2.0,
            derate_full_c: 10.0,
            derate_max_frac: 0.5,
            shed_penalty: 500.0,
        },
    }
}

#[test]
fn first_stage_matches_hand_assembly() {
    let inst = three_bus();
    let model = SpatialModel::new(6.0, 150.0, Kernel::Exponential).unwrap();
    let set = sample_iid(&inst, &model, 5, 9).unwrap();
    let cfg = config(Variant::BoCvar, 7.0);
    for mask in 0..4 {
        let x = SitingDecision::from_mask(mask, 2);
        let ev = evaluate_first_stage(&x, &set, &inst, &cfg).unwrap();
        let mut exp_cost = [100.0, 250.0]
            .iter()
            .zip(&x.build)
            .filter(|(_, b)| **b)
            .map(|(c, _)| c)
            .sum::<f64>();
        let mut sheds = Vec::new();
        for s in &set.scenarios {
            exp_cost += 0.2 * dispatch(&inst, &x, s, Objective::Cost).unwrap().objective;
            sheds.push((dispatch(&inst, &x, s, Objective::MinShed).unwrap().objective, 0.2));
        }
        let cv = cvar(&sheds, 0.9).unwrap();
        assert!((ev.exp_cost - exp_cost).abs() <= 1e-9 * exp_cost);
        assert!((ev.cvar_shed - cv).abs() <= 1e-12);
        assert!((ev.scalarized - (exp_cost + 7.0 * cv)).abs() <= 1e-9 * exp_cost);
    }
}

#[test]
fn sufficient_existing_capacity_has_no_risk() {
    let mut inst = three_bus();
    inst.generators[0].capacity_mw = 1000.0;
    inst.lines[0].capacity_mw = 500.0;
    inst.lines[1].capacity_mw = 500.0;
    let set = common::scenarios(&inst, 20, 3);
    let cfg = config(Variant::BoCvar, 1.0);
    let none = evaluate_first_stage(&SitingDecision::none(2), &set, &inst, &cfg).unwrap();
    assert_eq!(none.cvar_shed, 0.0);
    let all = evaluate_first_stage(&SitingDecision::all(2), &set, &inst, &cfg).unwrap();
    // second-stage cost never rises with more capacity
    assert!(all.exp_cost - 350.0 <= none.exp_cost + 1e-9);
}

#[test]
fn large_beta_removes_shed_when_possible() {
    let mut inst = three_bus();
    inst.lines[1].capacity_mw = 200.0;
    inst.generators[2].capacity_mw = 150.0;
    let set = common::scenarios(&inst, 20, 4);
    let cfg = config(Variant::BoCvar, 1e6);
    let none = evaluate_first_stage(&SitingDecision::none(2), &set, &inst, &cfg).unwrap();
    assert!(none.cvar_shed > 0.0, "instance must shed without new capacity");
    let all = evaluate_first_stage(&SitingDecision::all(2), &set, &inst, &cfg).unwrap();
    assert_eq!(all.cvar_shed, 0.0, "instance must be shed-free with every site built");
    let sol = solve_lshaped(&inst, &set, &cfg).unwrap();
    assert_eq!(sol.cvar_shed, 0.0);
}

#[test]
fn raising_the_penalty_never_raises_expected_shed() {
    let inst = demo_instance(DemoSize::Small, 7);
    let model = SpatialModel::new(5.0, 500.0, Kernel::Exponential).unwrap();
    for seed in 0..4 {
        let set = sample_iid(&inst, &model, 200, 60 + seed).unwrap();
        let mut last = f64::INFINITY;
        for penalty in [1e2, 1e3, 1e4] {
            let cfg = SolveConfig {
                shed_penalty: Some(penalty),
                ..config(Variant::Base, 0.0)
            };
            let sol = solve_enumeration(&inst, &set, &cfg).unwrap();
            assert!(
                sol.expected_shed <= last + 1e-9,
                "penalty {penalty}: {} > {last}",
                sol.expected_shed
            );
            last = sol.expected_shed;
        }
    }
}

#[test]
fn risk_weight_trades_cost_for_cvar() {
    let inst = demo_instance(DemoSize::Small, 7);
    let model = SpatialModel::new(5.0, 500.0, Kernel::Exponential).unwrap();
    let plan = StratificationPlan::new(0.01, [100, 100, 100]).unwrap();
    let set = sample_stratified(&inst, &model, &plan, 77).unwrap();
    let cfg = SolveConfig {
        alpha: 0.99,
        ..config(Variant::BoCvar, 0.0)
    };
    let table = evaluate_all(&inst, &set, &cfg).unwrap();
    let mut prev: Option<(f64, f64)> = None;
    let mut distinct = std::collections::BTreeSet::new();
    for beta in [0.0, 1.0, 10.0, 30.0, 100.0, 300.0, 1e3, 1e4, 1e5] {
        let sol = select_best(&table, &set, &SolveConfig { beta, ..cfg }).unwrap();
        if let Some((cost, risk)) = prev {
            assert!(sol.cvar_shed <= risk + 1e-12);
            assert!(sol.exp_cost >= cost - 1e-9);
        }
        prev = Some((sol.exp_cost, sol.cvar_shed));
        distinct.insert(sol.x.bits());
        let benders = solve_lshaped(&inst, &set, &SolveConfig { beta, ..cfg }).unwrap();
        assert!((benders.scalarized - sol.scalarized).abs() <= 1e-6 * sol.scalarized.abs());
    }
    assert!(distinct.len() >= 2, "sweep never moved: {distinct:?}");
}
