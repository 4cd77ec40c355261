//! Generator siting under weather uncertainty.
//!
//! The crate builds a two-stage stochastic integer program: a binary siting
//! decision over candidate generator sites, followed by a per-scenario
//! economic dispatch solved as a min-cost flow. The risk side of the model
//! is the CVaR of scenario load shed, sampled either i.i.d. from a spatially
//! correlated temperature field or by stratifying on the tails of the
//! field's spatial-mean anomaly.
//!
//! Module map:
//!
//! - [`grid_model`]: instance data, validation, file format, weather response maps.
//! - [`weather`]: Gaussian random fields, i.i.d. and stratified scenario sampling.
//! - [`dispatch`]: second-stage network construction, min-cost flow, Benders cuts.
//! - [`lp`]: dense bounded-variable simplex used by the master problem.
//! - [`saa`]: CVaR, first-stage evaluation, enumeration and L-shaped solvers.
//! - [`frontier`]: risk-weight sweeps, out-of-sample evaluation, Pareto filtering.
//! - [`demo`]: seeded synthetic instances.

pub mod demo;
pub mod dispatch;
pub mod frontier;
pub mod grid_model;
pub mod lp;
pub mod saa;
pub mod weather;

pub use dispatch::{dispatch, DispatchResult, Objective, SitingDecision};
pub use grid_model::{load_instance, GridInstance};
pub use saa::{Solution, SolveConfig, Variant};
pub use weather::{Scenario, ScenarioSet, SpatialModel, StratificationPlan};
