//! Risk-weight sweeps, out-of-sample evaluation and Pareto filtering.
//!
//! Every decision in a sweep is judged on one common evaluation sample drawn
//! from the dependent ground-truth field, whatever model it was trained on.

use std::collections::BTreeMap;
use std::fmt;
use std::io::{Read, Write};
use std::sync::Mutex;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dispatch::{dispatch, DispatchError, Objective, SitingDecision};
use crate::grid_model::GridInstance;
use crate::saa::{evaluate_all, select_best, solve_lshaped, SolveConfig, SolveError, Variant};
use crate::weather::{sample_iid, sample_stratified, ScenarioSet, SpatialModel, StratificationPlan, WeatherError};

pub const FRONTIER_HEADER: [&str; 9] = [
    "label",
    "dependence",
    "beta",
    "x_bits",
    "in_exp_cost",
    "in_cvar_shed",
    "oos_avg_cost",
    "oos_tail_shed",
    "status",
];

#[derive(Debug, Error)]
pub enum FrontierError {
    #[error("no values to aggregate")]
    Empty,
    #[error("tail fraction must lie in (0, 1], got {0}")]
    InvalidTau(f64),
    #[error("invalid evaluation config: {0}")]
    InvalidEval(String),
    #[error("invalid betas: {0}")]
    InvalidBetas(String),
    #[error(transparent)]
    Weather(#[from] WeatherError),
    #[error(transparent)]
    Dispatch(#[from] DispatchError),
    #[error(transparent)]
    Solve(#[from] SolveError),
    #[error("frontier CSV column `{column}`: {reason}")]
    Schema { column: String, reason: String },
    #[error("frontier CSV: {0}")]
    Csv(String),
}

/// Mean of the largest `⌈tau·n⌉` values.
pub fn tail_average(values: &[f64], tau: f64) -> Result<f64, FrontierError> {
    if values.is_empty() {
        return Err(FrontierError::Empty);
    }
    if !(tau > 0.0 && tau <= 1.0) {
        return Err(FrontierError::InvalidTau(tau));
    }
    let n = values.len();
    // guard against tau·n landing a hair above an integer
    let k = ((tau * n as f64 - 1e-9).ceil() as usize).clamp(1, n);
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    Ok(sorted[..k].iter().sum::<f64>() / k as f64)
}

/// Indices of the points not dominated in `(cost, shed)`, both minimized,
/// in input order.
pub fn pareto_indices(points: &[(f64, f64)]) -> Vec<usize> {
    (0..points.len())
        .filter(|&i| {
            let (a, b) = points[i];
            !points.iter().any(|&(c, d)| c <= a && d <= b && (c < a || d < b))
        })
        .collect()
}

/// Nondominated subset of `points` under `key`, order preserved.
pub fn pareto_filter<T: Clone>(points: &[T], key: impl Fn(&T) -> (f64, f64)) -> Vec<T> {
    let coords: Vec<(f64, f64)> = points.iter().map(&key).collect();
    pareto_indices(&coords).into_iter().map(|i| points[i].clone()).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalConfig {
    pub m: usize,
    pub tau: f64,
    pub seed: u64,
}

impl EvalConfig {
    pub fn validate(&self) -> Result<(), FrontierError> {
        if self.m == 0 {
            return Err(FrontierError::InvalidEval("m must be at least 1".into()));
        }
        if !(self.tau > 0.0 && self.tau < 1.0) {
            return Err(FrontierError::InvalidTau(self.tau));
        }
        Ok(())
    }
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            m: 100_000,
            tau: 0.01,
            seed: 0x5eed_0e7a1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OosMetrics {
    /// Build cost plus mean cost-dispatch value at the nominal penalty.
    pub avg_cost: f64,
    /// Tail average of minimal shed.
    pub tail_shed: f64,
    /// Standard error of the mean dispatch cost.
    pub avg_cost_se: f64,
}

/// Out-of-sample evaluator holding one common evaluation sample; results are
/// cached per decision.
pub struct OosEvaluator<'a> {
    instance: &'a GridInstance,
    cfg: EvalConfig,
    sample: ScenarioSet,
    cache: Mutex<BTreeMap<SitingDecision, OosMetrics>>,
}

impl<'a> OosEvaluator<'a> {
    pub fn new(instance: &'a GridInstance, model: &SpatialModel, cfg: EvalConfig) -> Result<Self, FrontierError> {
        cfg.validate()?;
        let sample = sample_iid(instance, model, cfg.m, cfg.seed)?;
        Ok(OosEvaluator {
            instance,
            cfg,
            sample,
            cache: Mutex::new(BTreeMap::new()),
        })
    }

    pub fn config(&self) -> &EvalConfig {
        &self.cfg
    }

    pub fn sample(&self) -> &ScenarioSet {
        &self.sample
    }

    pub fn evaluate(&self, x: &SitingDecision) -> Result<OosMetrics, FrontierError> {
        if let Some(m) = self.cache.lock().unwrap().get(x) {
            return Ok(*m);
        }
        let values = self
            .sample
            .scenarios
            .par_iter()
            .map(|s| {
                let c = dispatch(self.instance, x, s, Objective::Cost)?;
                let m = dispatch(self.instance, x, s, Objective::MinShed)?;
                Ok((c.objective, m.objective))
            })
            .collect::<Result<Vec<_>, DispatchError>>()?;
        let n = values.len() as f64;
        let mean = values.iter().map(|v| v.0).sum::<f64>() / n;
        let var = if values.len() > 1 {
            values.iter().map(|v| (v.0 - mean).powi(2)).sum::<f64>() / (n - 1.0)
        } else {
            0.0
        };
        let sheds: Vec<f64> = values.iter().map(|v| v.1).collect();
        let metrics = OosMetrics {
            avg_cost: x.build_cost(self.instance) + mean,
            tail_shed: tail_average(&sheds, self.cfg.tau)?,
            avg_cost_se: (var / n).sqrt(),
        };
        self.cache.lock().unwrap().insert(x.clone(), metrics);
        Ok(metrics)
    }
}

/// One-off out-of-sample evaluation of `x` under the ground-truth `model`.
pub fn evaluate_oos(
    x: &SitingDecision,
    instance: &GridInstance,
    model: &SpatialModel,
    cfg: &EvalConfig,
) -> Result<OosMetrics, FrontierError> {
    OosEvaluator::new(instance, model, *cfg)?.evaluate(x)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelLabel {
    /// Expected cost with shed penalty, i.i.d. training sample.
    Base,
    /// Cost plus CVaR of shed, i.i.d. training sample.
    BoCvar,
    /// Cost plus CVaR of shed, stratified tail-conditional training sample.
    BoCvarCond,
}

impl ModelLabel {
    pub fn variant(self) -> Variant {
        match self {
            ModelLabel::Base => Variant::Base,
            ModelLabel::BoCvar | ModelLabel::BoCvarCond => Variant::BoCvar,
        }
    }
}

impl fmt::Display for ModelLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ModelLabel::Base => "base",
            ModelLabel::BoCvar => "bo_cvar",
            ModelLabel::BoCvarCond => "bo_cvar_cond",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Dependence {
    Dependent,
    Independent,
}

impl fmt::Display for Dependence {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Dependence::Dependent => "dependent",
            Dependence::Independent => "independent",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolverMethod {
    Lshaped,
    Enumeration,
}

/// How a sweep's training sample is drawn.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainingSpec {
    pub label: ModelLabel,
    pub dependence: Dependence,
    /// Ground-truth field; replaced by its independent counterpart when
    /// `dependence` is `Independent`.
    pub model: SpatialModel,
    /// i.i.d. sample size (unused for `BoCvarCond`).
    pub n: usize,
    /// Stratification used for `BoCvarCond`.
    pub plan: StratificationPlan,
    pub seed: u64,
    pub method: SolverMethod,
}

impl TrainingSpec {
    pub fn training_model(&self) -> SpatialModel {
        match self.dependence {
            Dependence::Dependent => self.model,
            Dependence::Independent => self.model.independent(),
        }
    }

    pub fn sample(&self, instance: &GridInstance) -> Result<ScenarioSet, FrontierError> {
        let model = self.training_model();
        Ok(match self.label {
            ModelLabel::BoCvarCond => sample_stratified(instance, &model, &self.plan, self.seed)?,
            _ => sample_iid(instance, &model, self.n, self.seed)?,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PointStatus {
    Ok,
    /// Iteration limit hit; the point carries the incumbent.
    IterationLimit,
    Failed(String),
}

impl fmt::Display for PointStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PointStatus::Ok => f.write_str("ok"),
            PointStatus::IterationLimit => f.write_str("iteration_limit"),
            PointStatus::Failed(msg) => write!(f, "error: {msg}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrontierPoint {
    pub label: ModelLabel,
    pub dependence: Dependence,
    pub beta: f64,
    pub x: Option<SitingDecision>,
    /// In-sample `(exp_cost, cvar_shed)`.
    pub in_sample: Option<(f64, f64)>,
    pub oos: Option<OosMetrics>,
    pub status: PointStatus,
}

pub fn validate_betas(betas: &[f64]) -> Result<(), FrontierError> {
    if betas.is_empty() {
        return Err(FrontierError::InvalidBetas("empty list".into()));
    }
    if betas.iter().any(|b| !(b.is_finite() && *b >= 0.0)) {
        return Err(FrontierError::InvalidBetas(
            "values must be finite and nonnegative".into(),
        ));
    }
    if betas.windows(2).any(|w| w[1] <= w[0]) {
        return Err(FrontierError::InvalidBetas("values must be strictly increasing".into()));
    }
    Ok(())
}

/// Solves one point per beta on the training sample and evaluates each
/// decision with `evaluator`. A failed solve is recorded, not propagated.
pub fn sweep_with(
    instance: &GridInstance,
    spec: &TrainingSpec,
    betas: &[f64],
    solve: &SolveConfig,
    evaluator: &OosEvaluator,
) -> Result<Vec<FrontierPoint>, FrontierError> {
    validate_betas(betas)?;
    if spec.seed == evaluator.config().seed {
        log::warn!("training seed equals evaluation seed {}", spec.seed);
    }
    let training = spec.sample(instance)?;
    let base_cfg = SolveConfig {
        variant: spec.label.variant(),
        ..*solve
    };
    // β does not change the evaluations of the risk variants: one table serves all points.
    let shared_table = match (spec.method, base_cfg.variant) {
        (SolverMethod::Enumeration, Variant::BoCvar) => Some(evaluate_all(instance, &training, &base_cfg)),
        _ => None,
    };

    let mut points = Vec::with_capacity(betas.len());
    for &beta in betas {
        let cfg = SolveConfig { beta, ..base_cfg };
        let result = match (&shared_table, spec.method) {
            (Some(Ok(table)), _) => select_best(table, &training, &cfg),
            (Some(Err(e)), _) => Err(e.clone()),
            (None, SolverMethod::Enumeration) => {
                evaluate_all(instance, &training, &cfg).and_then(|t| select_best(&t, &training, &cfg))
            }
            (None, SolverMethod::Lshaped) => solve_lshaped(instance, &training, &cfg),
        };
        let (solution, status) = match result {
            Ok(s) => (Some(s), PointStatus::Ok),
            Err(SolveError::IterationLimit(s)) => (Some(*s), PointStatus::IterationLimit),
            Err(e) => (None, PointStatus::Failed(e.to_string())),
        };
        let mut point = FrontierPoint {
            label: spec.label,
            dependence: spec.dependence,
            beta,
            x: None,
            in_sample: None,
            oos: None,
            status,
        };
        if let Some(sol) = solution {
            match evaluator.evaluate(&sol.x) {
                Ok(m) => point.oos = Some(m),
                Err(e) => point.status = PointStatus::Failed(e.to_string()),
            }
            point.in_sample = Some((sol.exp_cost, sol.cvar_shed));
            point.x = Some(sol.x);
        }
        points.push(point);
    }
    Ok(points)
}

/// [`sweep_with`] on a fresh evaluation sample from the ground-truth model.
pub fn sweep(
    instance: &GridInstance,
    spec: &TrainingSpec,
    betas: &[f64],
    solve: &SolveConfig,
    eval: &EvalConfig,
) -> Result<Vec<FrontierPoint>, FrontierError> {
    validate_betas(betas)?;
    let evaluator = OosEvaluator::new(instance, &spec.model, *eval)?;
    sweep_with(instance, spec, betas, solve, &evaluator)
}

/// One row of the frontier CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrontierRow {
    pub label: ModelLabel,
    pub dependence: Dependence,
    pub beta: f64,
    pub x_bits: String,
    pub in_exp_cost: Option<f64>,
    pub in_cvar_shed: Option<f64>,
    pub oos_avg_cost: Option<f64>,
    pub oos_tail_shed: Option<f64>,
    pub status: String,
}

impl FrontierRow {
    pub fn oos(&self) -> Option<(f64, f64)> {
        Some((self.oos_avg_cost?, self.oos_tail_shed?))
    }
}

impl From<&FrontierPoint> for FrontierRow {
    fn from(p: &FrontierPoint) -> Self {
        FrontierRow {
            label: p.label,
            dependence: p.dependence,
            beta: p.beta,
            x_bits: p.x.as_ref().map(|x| x.bits()).unwrap_or_default(),
            in_exp_cost: p.in_sample.map(|v| v.0),
            in_cvar_shed: p.in_sample.map(|v| v.1),
            oos_avg_cost: p.oos.map(|m| m.avg_cost),
            oos_tail_shed: p.oos.map(|m| m.tail_shed),
            status: p.status.to_string(),
        }
    }
}

pub fn write_frontier_csv<W: Write>(points: &[FrontierPoint], out: W) -> Result<(), FrontierError> {
    let mut w = csv::Writer::from_writer(out);
    if points.is_empty() {
        w.write_record(FRONTIER_HEADER)
            .map_err(|e| FrontierError::Csv(e.to_string()))?;
    }
    for p in points {
        w.serialize(FrontierRow::from(p))
            .map_err(|e| FrontierError::Csv(e.to_string()))?;
    }
    w.flush().map_err(|e| FrontierError::Csv(e.to_string()))
}

/// Reads a frontier CSV, checking the header column by column.
pub fn read_frontier_csv<R: Read>(input: R) -> Result<Vec<FrontierRow>, FrontierError> {
    let mut r = csv::Reader::from_reader(input);
    let headers = r.headers().map_err(|e| FrontierError::Csv(e.to_string()))?.clone();
    for (k, expected) in FRONTIER_HEADER.iter().enumerate() {
        match headers.get(k) {
            Some(h) if h == *expected => {}
            Some(h) => {
                return Err(FrontierError::Schema {
                    column: h.to_string(),
                    reason: format!("expected `{expected}` at position {}", k + 1),
                })
            }
            None => {
                return Err(FrontierError::Schema {
                    column: expected.to_string(),
                    reason: "missing".into(),
                })
            }
        }
    }
    if let Some(extra) = headers.get(FRONTIER_HEADER.len()) {
        return Err(FrontierError::Schema {
            column: extra.to_string(),
            reason: "unexpected column".into(),
        });
    }
    let mut rows = Vec::new();
    for rec in r.deserialize::<FrontierRow>() {
        match rec {
            Ok(row) => rows.push(row),
            Err(e) => {
                let column = match e.kind() {
                    csv::ErrorKind::Deserialize { err, .. } => err
                        .field()
                        .and_then(|f| FRONTIER_HEADER.get(f as usize))
                        .map(|c| c.to_string()),
                    _ => None,
                };
                return Err(match column {
                    Some(column) => FrontierError::Schema {
                        column,
                        reason: e.to_string(),
                    },
                    None => FrontierError::Csv(e.to_string()),
                });
            }
        }
    }
    Ok(rows)
}
