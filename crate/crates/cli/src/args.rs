use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use gridsite::demo::DemoSize;
use gridsite::frontier::{Dependence, ModelLabel, SolverMethod};
use gridsite::weather::Kernel;
use serde::Serialize;

#[derive(Debug, Parser)]
#[command(name = "gridsite", version, about = "Generator siting under weather uncertainty")]
pub struct Cli {
    /// Seed for every random draw of the run.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads; results do not depend on this.
    #[arg(long, global = true, default_value_t = 1)]
    pub threads: usize,
    /// Per-iteration solver log on standard error.
    #[arg(long, global = true)]
    pub verbose: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a synthetic demo instance.
    Demo(DemoArgs),
    /// Sample a scenario set to CSV.
    Gen(GenArgs),
    /// Solve one siting problem.
    Solve(SolveArgs),
    /// Sweep the risk weight and evaluate every point out of sample.
    Sweep(SweepArgs),
    /// Evaluate a fixed siting decision out of sample.
    Eval(EvalArgs),
    /// Plot frontier CSVs as SVG.
    Plot(PlotArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum SizeArg {
    Small,
    Medium,
}

impl From<SizeArg> for DemoSize {
    fn from(s: SizeArg) -> Self {
        match s {
            SizeArg::Small => DemoSize::Small,
            SizeArg::Medium => DemoSize::Medium,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum KernelArg {
    Exponential,
    Independent,
}

impl From<KernelArg> for Kernel {
    fn from(k: KernelArg) -> Self {
        match k {
            KernelArg::Exponential => Kernel::Exponential,
            KernelArg::Independent => Kernel::Independent,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum VariantArg {
    #[value(name = "base")]
    Base,
    #[value(name = "bo_cvar")]
    BoCvar,
    #[value(name = "bo_cvar_cond")]
    BoCvarCond,
}

impl From<VariantArg> for ModelLabel {
    fn from(v: VariantArg) -> Self {
        match v {
            VariantArg::Base => ModelLabel::Base,
            VariantArg::BoCvar => ModelLabel::BoCvar,
            VariantArg::BoCvarCond => ModelLabel::BoCvarCond,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum DependenceArg {
    Dependent,
    Independent,
}

impl From<DependenceArg> for Dependence {
    fn from(d: DependenceArg) -> Self {
        match d {
            DependenceArg::Dependent => Dependence::Dependent,
            DependenceArg::Independent => Dependence::Independent,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum MethodArg {
    Lshaped,
    Enumeration,
}

impl From<MethodArg> for SolverMethod {
    fn from(m: MethodArg) -> Self {
        match m {
            MethodArg::Lshaped => SolverMethod::Lshaped,
            MethodArg::Enumeration => SolverMethod::Enumeration,
        }
    }
}

#[derive(Debug, Args, Serialize)]
pub struct DemoArgs {
    #[arg(long, value_enum, default_value = "small")]
    pub size: SizeArg,
    /// Output instance file.
    #[arg(long)]
    pub out: PathBuf,
}

/// Ground-truth temperature field.
#[derive(Debug, Clone, Args, Serialize)]
pub struct FieldArgs {
    /// Marginal standard deviation of the temperature anomaly, °C.
    #[arg(long, default_value_t = 5.0)]
    pub sigma_c: f64,
    /// Correlation length, km.
    #[arg(long, default_value_t = 500.0)]
    pub range_km: f64,
    #[arg(long, value_enum, default_value = "exponential")]
    pub kernel: KernelArg,
}

/// Training sample.
#[derive(Debug, Clone, Args, Serialize)]
pub struct SampleArgs {
    /// i.i.d. training sample size.
    #[arg(long, default_value_t = 300)]
    pub n: usize,
    /// Probability of each extreme stratum.
    #[arg(long, default_value_t = 0.01)]
    pub tail_prob: f64,
    /// Stratum sample counts `low,mid,high`.
    #[arg(long, value_delimiter = ',', default_values_t = [100usize, 100, 100])]
    pub alloc: Vec<usize>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct SolverArgs {
    /// CVaR level.
    #[arg(long, default_value_t = 0.99)]
    pub alpha: f64,
    /// Override of the instance shed penalty, $/MWh.
    #[arg(long)]
    pub shed_penalty: Option<f64>,
    #[arg(long, default_value_t = 1e-6)]
    pub gap_tol: f64,
    #[arg(long, default_value_t = 200)]
    pub max_iters: usize,
    #[arg(long, value_enum, default_value = "lshaped")]
    pub method: MethodArg,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct OosArgs {
    /// Out-of-sample Monte Carlo size.
    #[arg(long, default_value_t = 100_000)]
    pub m: usize,
    /// Tail fraction of the shed metric.
    #[arg(long, default_value_t = 0.01)]
    pub tau: f64,
    /// Evaluation seed; derived from `--seed` when absent.
    #[arg(long)]
    pub eval_seed: Option<u64>,
}

#[derive(Debug, Args, Serialize)]
pub struct GenArgs {
    #[arg(long)]
    pub instance: PathBuf,
    #[command(flatten)]
    pub field: FieldArgs,
    #[command(flatten)]
    pub sample: SampleArgs,
    /// Tail-conditional stratified sample instead of i.i.d.
    #[arg(long)]
    pub stratified: bool,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct SolveArgs {
    #[arg(long)]
    pub instance: PathBuf,
    #[arg(long, value_enum, default_value = "bo_cvar")]
    pub variant: VariantArg,
    #[arg(long, value_enum, default_value = "dependent")]
    pub dependence: DependenceArg,
    /// Risk weight; under `base` it is added to the shed penalty.
    #[arg(long, default_value_t = 0.0)]
    pub beta: f64,
    #[command(flatten)]
    pub field: FieldArgs,
    #[command(flatten)]
    pub sample: SampleArgs,
    #[command(flatten)]
    pub solver: SolverArgs,
    /// Write the first scenario's dispatch network at the solution as a text arc list.
    #[arg(long)]
    pub dump_network: Option<PathBuf>,
    /// Output JSON.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct SweepArgs {
    #[arg(long)]
    pub instance: PathBuf,
    #[arg(long, value_enum)]
    pub variant: VariantArg,
    #[arg(long, value_enum, default_value = "dependent")]
    pub dependence: DependenceArg,
    /// Strictly increasing risk weights.
    #[arg(long, value_delimiter = ',', default_values_t = [0.0, 10.0, 30.0, 100.0, 300.0, 1000.0, 3000.0, 10000.0])]
    pub betas: Vec<f64>,
    #[command(flatten)]
    pub field: FieldArgs,
    #[command(flatten)]
    pub sample: SampleArgs,
    #[command(flatten)]
    pub solver: SolverArgs,
    #[command(flatten)]
    pub oos: OosArgs,
    /// Output frontier CSV.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct EvalArgs {
    #[arg(long)]
    pub instance: PathBuf,
    /// Siting vector as a 0/1 string in site order.
    #[arg(long)]
    pub x: String,
    #[command(flatten)]
    pub field: FieldArgs,
    #[command(flatten)]
    pub oos: OosArgs,
    /// Output JSON.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct PlotArgs {
    /// Frontier CSVs.
    #[arg(required = true)]
    pub inputs: Vec<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}
