//! `gridsite` command-line front end.
//!
//! Exit codes: 0 success, 1 malformed input or other error, 2 iteration
//! limit on every solve, 3 partial failure of a sweep.

mod args;
mod plot;

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::Parser;
use gridsite::demo::demo_instance;
use gridsite::dispatch::{build_network, Objective, SitingDecision};
use gridsite::frontier::{
    read_frontier_csv, sweep_with, validate_betas, write_frontier_csv, EvalConfig, ModelLabel, OosEvaluator,
    PointStatus, SolverMethod, TrainingSpec,
};
use gridsite::grid_model::{load_instance, GridInstance};
use gridsite::saa::{solve_enumeration, solve_lshaped, Solution, SolveConfig, SolveError};
use gridsite::weather::{sample_iid, sample_stratified, SpatialModel, StratificationPlan};
use serde::Serialize;
use serde_json::json;

use args::{Cli, Command, FieldArgs, OosArgs, SampleArgs, SolverArgs};

/// Offset separating the default evaluation seed from the training seed.
const EVAL_SEED_OFFSET: u64 = 0x9e37_79b9_7f4a_7c15;

/// Nonzero outcomes that are not errors.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Outcome {
    Success,
    IterationLimit,
    Partial,
}

impl From<Outcome> for ExitCode {
    fn from(o: Outcome) -> Self {
        ExitCode::from(match o {
            Outcome::Success => 0,
            Outcome::IterationLimit => 2,
            Outcome::Partial => 3,
        })
    }
}

#[derive(Serialize)]
struct RunManifest<'a> {
    command: &'a str,
    parameters: serde_json::Value,
    seeds: serde_json::Value,
    artifacts: Vec<String>,
    tool_version: &'static str,
    wall_time_s: f64,
}

struct Run {
    command: &'static str,
    seed: Option<u64>,
    threads: usize,
    verbose: bool,
    started: Instant,
}

impl Run {
    fn seed(&self) -> Result<u64> {
        self.seed
            .with_context(|| format!("`{}` needs an explicit --seed", self.command))
    }

    fn write_manifest(
        &self,
        out: &Path,
        parameters: &impl Serialize,
        seeds: serde_json::Value,
        artifacts: &[&Path],
    ) -> Result<()> {
        let manifest = RunManifest {
            command: self.command,
            parameters: json!({
                "command": serde_json::to_value(parameters)?,
                "threads": self.threads,
                "verbose": self.verbose,
            }),
            seeds,
            artifacts: artifacts.iter().map(|p| p.display().to_string()).collect(),
            tool_version: env!("CARGO_PKG_VERSION"),
            wall_time_s: self.started.elapsed().as_secs_f64(),
        };
        let path = manifest_path(out);
        let text = serde_json::to_string_pretty(&manifest)? + "\n";
        fs::write(&path, text).with_context(|| format!("writing {}", path.display()))
    }
}

fn manifest_path(out: &Path) -> PathBuf {
    let mut name = out.file_name().unwrap_or_default().to_os_string();
    name.push(".manifest.json");
    out.with_file_name(name)
}

fn read_instance(path: &Path) -> Result<GridInstance> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    load_instance(&text).with_context(|| format!("loading {}", path.display()))
}

fn field_model(f: &FieldArgs) -> Result<SpatialModel> {
    Ok(SpatialModel::new(f.sigma_c, f.range_km, f.kernel.into())?)
}

fn plan(s: &SampleArgs) -> Result<StratificationPlan> {
    let alloc: [usize; 3] = s
        .alloc
        .as_slice()
        .try_into()
        .context("--alloc takes exactly three counts")?;
    Ok(StratificationPlan::new(s.tail_prob, alloc)?)
}

fn solve_config(s: &SolverArgs, beta: f64, verbose: bool) -> SolveConfig {
    SolveConfig {
        alpha: s.alpha,
        beta,
        shed_penalty: s.shed_penalty,
        gap_tol: s.gap_tol,
        max_iters: s.max_iters,
        verbose,
        ..SolveConfig::default()
    }
}

fn eval_config(o: &OosArgs, seed: u64) -> EvalConfig {
    let eval_seed = o.eval_seed.unwrap_or(seed.wrapping_add(EVAL_SEED_OFFSET));
    if eval_seed == seed {
        log::warn!("evaluation seed equals the training seed {seed}");
    }
    EvalConfig {
        m: o.m,
        tau: o.tau,
        seed: eval_seed,
    }
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(
        File::create(path).with_context(|| format!("creating {}", path.display()))?,
    ))
}

fn cmd_demo(run: &Run, a: &args::DemoArgs) -> Result<Outcome> {
    let seed = run.seed()?;
    let inst = demo_instance(a.size.into(), seed);
    fs::write(&a.out, inst.to_toml_string()).with_context(|| format!("writing {}", a.out.display()))?;
    run.write_manifest(&a.out, a, json!({ "seed": seed }), &[&a.out])?;
    Ok(Outcome::Success)
}

fn cmd_gen(run: &Run, a: &args::GenArgs) -> Result<Outcome> {
    let seed = run.seed()?;
    let inst = read_instance(&a.instance)?;
    let model = field_model(&a.field)?;
    let set = if a.stratified {
        sample_stratified(&inst, &model, &plan(&a.sample)?, seed)?
    } else {
        sample_iid(&inst, &model, a.sample.n, seed)?
    };
    let mut w = create(&a.out)?;
    set.write_csv(&inst, &mut w)?;
    w.flush()?;
    let plan_used = set.plan;
    run.write_manifest(
        &a.out,
        &json!({ "args": a, "plan": plan_used }),
        json!({ "seed": seed }),
        &[&a.out],
    )?;
    Ok(Outcome::Success)
}

fn training_spec(
    variant: args::VariantArg,
    dependence: args::DependenceArg,
    field: &FieldArgs,
    sample: &SampleArgs,
    method: SolverMethod,
    seed: u64,
) -> Result<TrainingSpec> {
    Ok(TrainingSpec {
        label: variant.into(),
        dependence: dependence.into(),
        model: field_model(field)?,
        n: sample.n,
        plan: plan(sample)?,
        seed,
        method,
    })
}

fn cmd_solve(run: &Run, a: &args::SolveArgs) -> Result<Outcome> {
    let seed = run.seed()?;
    let inst = read_instance(&a.instance)?;
    let spec = training_spec(
        a.variant,
        a.dependence,
        &a.field,
        &a.sample,
        a.solver.method.into(),
        seed,
    )?;
    let training = spec.sample(&inst)?;
    let cfg = SolveConfig {
        variant: spec.label.variant(),
        ..solve_config(&a.solver, a.beta, run.verbose)
    };
    let result = match spec.method {
        SolverMethod::Lshaped => solve_lshaped(&inst, &training, &cfg),
        SolverMethod::Enumeration => solve_enumeration(&inst, &training, &cfg),
    };
    let (solution, outcome): (Solution, Outcome) = match result {
        Ok(s) => (s, Outcome::Success),
        Err(SolveError::IterationLimit(s)) => (*s, Outcome::IterationLimit),
        Err(e) => return Err(e.into()),
    };
    let mut artifacts: Vec<&Path> = vec![&a.out];
    if let Some(path) = &a.dump_network {
        let inst_eff = inst.with_shed_penalty(cfg.effective_penalty(&inst));
        let net = build_network(&inst_eff, &solution.x, &training.scenarios[0], Objective::Cost)?;
        fs::write(path, net.dump()).with_context(|| format!("writing {}", path.display()))?;
        artifacts.push(path);
    }
    let report = json!({
        "label": spec.label,
        "dependence": spec.dependence,
        "beta": a.beta,
        "x_bits": solution.x.bits(),
        "status": if outcome == Outcome::Success { "ok" } else { "iteration_limit" },
        "solution": solution,
    });
    fs::write(&a.out, serde_json::to_string_pretty(&report)? + "\n")
        .with_context(|| format!("writing {}", a.out.display()))?;
    let plan_used = training.plan;
    run.write_manifest(
        &a.out,
        &json!({ "args": a, "plan": plan_used, "solve": cfg }),
        json!({ "seed": seed }),
        &artifacts,
    )?;
    Ok(outcome)
}

fn cmd_sweep(run: &Run, a: &args::SweepArgs) -> Result<Outcome> {
    let seed = run.seed()?;
    validate_betas(&a.betas)?;
    let inst = read_instance(&a.instance)?;
    let spec = training_spec(
        a.variant,
        a.dependence,
        &a.field,
        &a.sample,
        a.solver.method.into(),
        seed,
    )?;
    let eval = eval_config(&a.oos, seed);
    let solve = solve_config(&a.solver, 0.0, run.verbose);
    let evaluator = OosEvaluator::new(&inst, &spec.model, eval)?;
    let points = sweep_with(&inst, &spec, &a.betas, &solve, &evaluator)?;

    let mut w = create(&a.out)?;
    write_frontier_csv(&points, &mut w)?;
    w.flush()?;
    let plan_used = (spec.label == ModelLabel::BoCvarCond).then_some(spec.plan);
    run.write_manifest(
        &a.out,
        &json!({ "args": a, "plan": plan_used, "solve": solve, "eval": eval }),
        json!({ "seed": seed, "eval_seed": eval.seed }),
        &[&a.out],
    )?;

    Ok(sweep_outcome(points.iter().map(|p| &p.status)))
}

fn sweep_outcome<'a>(statuses: impl Iterator<Item = &'a PointStatus>) -> Outcome {
    let (mut total, mut ok, mut limited) = (0, 0, 0);
    for s in statuses {
        total += 1;
        match s {
            PointStatus::Ok => ok += 1,
            PointStatus::IterationLimit => limited += 1,
            PointStatus::Failed(_) => {}
        }
    }
    if ok == total {
        Outcome::Success
    } else if limited == total {
        Outcome::IterationLimit
    } else {
        Outcome::Partial
    }
}

fn cmd_eval(run: &Run, a: &args::EvalArgs) -> Result<Outcome> {
    let seed = run.seed()?;
    let inst = read_instance(&a.instance)?;
    let x = SitingDecision::from_bits(&a.x).context("--x must be a 0/1 string")?;
    if x.len() != inst.num_sites() {
        bail!("--x has {} sites, instance has {}", x.len(), inst.num_sites());
    }
    let eval = eval_config(&a.oos, seed);
    let model = field_model(&a.field)?;
    let metrics = OosEvaluator::new(&inst, &model, eval)?.evaluate(&x)?;
    let report = json!({ "x_bits": x.bits(), "metrics": metrics });
    fs::write(&a.out, serde_json::to_string_pretty(&report)? + "\n")
        .with_context(|| format!("writing {}", a.out.display()))?;
    run.write_manifest(
        &a.out,
        &json!({ "args": a, "eval": eval }),
        json!({ "seed": seed, "eval_seed": eval.seed }),
        &[&a.out],
    )?;
    Ok(Outcome::Success)
}

fn cmd_plot(run: &Run, a: &args::PlotArgs) -> Result<Outcome> {
    let mut rows = Vec::new();
    for path in &a.inputs {
        let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
        rows.extend(read_frontier_csv(file).with_context(|| format!("reading {}", path.display()))?);
    }
    let svg = plot::render(&rows)?;
    fs::write(&a.out, svg).with_context(|| format!("writing {}", a.out.display()))?;
    run.write_manifest(&a.out, a, json!({}), &[&a.out])?;
    Ok(Outcome::Success)
}

fn execute(cli: Cli) -> Result<Outcome> {
    let command = match &cli.command {
        Command::Demo(_) => "demo",
        Command::Gen(_) => "gen",
        Command::Solve(_) => "solve",
        Command::Sweep(_) => "sweep",
        Command::Eval(_) => "eval",
        Command::Plot(_) => "plot",
    };
    if cli.threads == 0 {
        bail!("--threads must be at least 1");
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(cli.threads)
        .build_global()
        .context("configuring worker threads")?;
    let run = Run {
        command,
        seed: cli.seed,
        threads: cli.threads,
        verbose: cli.verbose,
        started: Instant::now(),
    };
    match &cli.command {
        Command::Demo(a) => cmd_demo(&run, a),
        Command::Gen(a) => cmd_gen(&run, a),
        Command::Solve(a) => cmd_solve(&run, a),
        Command::Sweep(a) => cmd_sweep(&run, a),
        Command::Eval(a) => cmd_eval(&run, a),
        Command::Plot(a) => cmd_plot(&run, a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(if cli.verbose {
        "info"
    } else {
        "warn"
    }))
    .init();
    match execute(cli) {
        Ok(outcome) => outcome.into(),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
