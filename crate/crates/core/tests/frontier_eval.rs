//! Out-of-sample evaluation and beta sweeps on the demo instance.

use gridsite::demo::{demo_instance, DemoSize};
use gridsite::dispatch::SitingDecision;
use gridsite::frontier::{
    evaluate_oos, pareto_indices, sweep, sweep_with, Dependence, EvalConfig, ModelLabel, OosEvaluator, PointStatus,
    SolverMethod, TrainingSpec,
};
use gridsite::saa::{solve_lshaped, SolveConfig, Variant};
use gridsite::weather::{Kernel, SpatialModel, StratificationPlan};

fn model() -> SpatialModel {
    SpatialModel::new(5.0, 500.0, Kernel::Exponential).unwrap()
}

fn spec(label: ModelLabel, seed: u64) -> TrainingSpec {
    TrainingSpec {
        label,
        dependence: Dependence::Dependent,
        model: model(),
        n: 120,
        plan: StratificationPlan::new(0.01, [40, 40, 40]).unwrap(),
        seed,
        method: SolverMethod::Lshaped,
    }
}

fn eval_cfg(m: usize) -> EvalConfig {
    EvalConfig {
        m,
        tau: 0.01,
        seed: 4242,
    }
}

#[test]
fn evaluation_ignores_thread_count() {
    let inst = demo_instance(DemoSize::Small, 7);
    let x = SitingDecision::from_bits("101100").unwrap();
    let run = |threads| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| evaluate_oos(&x, &inst, &model(), &eval_cfg(5000)).unwrap())
    };
    let one = run(1);
    let four = run(4);
    assert_eq!(one.avg_cost.to_bits(), four.avg_cost.to_bits());
    assert_eq!(one.tail_shed.to_bits(), four.tail_shed.to_bits());
}

#[test]
fn common_draws_order_nested_decisions() {
    let inst = demo_instance(DemoSize::Small, 7);
    let evaluator = OosEvaluator::new(&inst, &model(), eval_cfg(5000)).unwrap();
    let mut last = f64::INFINITY;
    for mask in [0b000000u64, 0b000001, 0b000011, 0b010011, 0b110011, 0b111111] {
        let m = evaluator.evaluate(&SitingDecision::from_mask(mask, 6)).unwrap();
        // per-draw minimal shed never rises with added capacity, so neither does its tail
        assert!(m.tail_shed <= last, "{mask:06b}: {} > {last}", m.tail_shed);
        last = m.tail_shed;
    }
}

#[test]
fn zero_demand_costs_only_the_build() {
    let mut inst = demo_instance(DemoSize::Small, 7);
    for b in &mut inst.buses {
        b.base_demand_mw = 0.0;
    }
    let x = SitingDecision::from_bits("110001").unwrap();
    let m = evaluate_oos(&x, &inst, &model(), &eval_cfg(2000)).unwrap();
    assert_eq!(m.tail_shed, 0.0);
    assert!((m.avg_cost - x.build_cost(&inst)).abs() <= 1e-9);
}

#[test]
fn single_beta_sweep_is_the_base_solve() {
    let inst = demo_instance(DemoSize::Small, 7);
    let spec = spec(ModelLabel::Base, 3);
    let solve = SolveConfig::default();
    let points = sweep(&inst, &spec, &[0.0], &solve, &eval_cfg(2000)).unwrap();
    assert_eq!(points.len(), 1);
    let training = spec.sample(&inst).unwrap();
    let direct = solve_lshaped(
        &inst,
        &training,
        &SolveConfig {
            variant: Variant::Base,
            ..solve
        },
    )
    .unwrap();
    assert_eq!(points[0].status, PointStatus::Ok);
    assert_eq!(points[0].x.as_ref(), Some(&direct.x));
    assert_eq!(points[0].in_sample.unwrap().0, direct.exp_cost);
}

#[test]
fn risk_weight_lowers_in_sample_cvar() {
    let inst = demo_instance(DemoSize::Small, 7);
    let evaluator = OosEvaluator::new(&inst, &model(), eval_cfg(2000)).unwrap();
    for label in [ModelLabel::BoCvar, ModelLabel::BoCvarCond] {
        let points = sweep_with(&inst, &spec(label, 5), &[0.0, 1e3], &SolveConfig::default(), &evaluator).unwrap();
        let (c0, r0) = points[0].in_sample.unwrap();
        let (c1, r1) = points[1].in_sample.unwrap();
        assert!(r1 <= r0, "{label}: cvar {r1} > {r0}");
        assert!(c1 >= c0 - 1e-9, "{label}: cost {c1} < {c0}");
    }
}

#[test]
fn base_frontier_has_a_trade_off() {
    let inst = demo_instance(DemoSize::Small, 7);
    let spec = TrainingSpec {
        n: 300,
        ..spec(ModelLabel::Base, 11)
    };
    let points = sweep(
        &inst,
        &spec,
        &[0.0, 1e3, 1e4, 1e5],
        &SolveConfig::default(),
        &eval_cfg(20_000),
    )
    .unwrap();
    assert!(points.iter().all(|p| p.status == PointStatus::Ok));
    let oos: Vec<(f64, f64)> = points
        .iter()
        .map(|p| {
            let m = p.oos.unwrap();
            (m.avg_cost, m.tail_shed)
        })
        .collect();
    let front = pareto_indices(&oos);
    let distinct: std::collections::BTreeSet<String> =
        front.iter().map(|&i| points[i].x.as_ref().unwrap().bits()).collect();
    assert!(distinct.len() >= 2, "frontier collapsed to {distinct:?}");
}
