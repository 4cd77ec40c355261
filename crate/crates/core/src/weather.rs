//! Spatially correlated temperature scenarios.
//!
//! Temperatures are a Gaussian random field over the buses: the bus mean
//! temperature plus an anomaly with covariance `sigma² exp(-d / range)` (or a
//! diagonal covariance for the independence ablation). Two samplers are
//! provided:
//!
//! - [`sample_iid`]: plain Monte Carlo with uniform weights.
//! - [`sample_stratified`]: strata on the spatial-mean anomaly
//!   `A = mean_b(T_b - mean_temp_b)`, which is exactly Gaussian. Each stratum
//!   draws `A` from its truncated law and then the field from the exact
//!   conditional Gaussian given `A`. Weights are stratum probability over
//!   stratum sample count, so weighted sums stay unbiased.
//!
//! Every scenario owns an RNG substream keyed by `(seed, scenario index)`, so
//! generation can run in parallel and still be reproducible.

use std::fmt;
use std::io::{self, Write};
use std::ops::{Index, IndexMut};

use rand::distr::Open01;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};
use thiserror::Error;

use crate::grid_model::{available_capacity, demand_at, Bus, GridInstance};

#[derive(Debug, Error, PartialEq)]
pub enum WeatherError {
    #[error("matrix is not positive definite (pivot {pivot} at row {row})")]
    NotPositiveDefinite { row: usize, pivot: f64 },
    #[error("degenerate truncation interval [{lo}, {hi}]: probability mass underflows")]
    DegenerateInterval { lo: f64, hi: f64 },
    #[error("invalid sampler parameter: {0}")]
    InvalidParameter(String),
}

/// Dense row-major square matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct SquareMatrix {
    n: usize,
    data: Vec<f64>,
}

impl SquareMatrix {
    pub fn zeros(n: usize) -> Self {
        SquareMatrix {
            n,
            data: vec![0.0; n * n],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let n = rows.len();
        let mut m = Self::zeros(n);
        for (i, row) in rows.iter().enumerate() {
            assert_eq!(row.len(), n, "matrix must be square");
            m.data[i * n..(i + 1) * n].copy_from_slice(row);
        }
        m
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.n..(i + 1) * self.n]
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// `self * selfᵀ`.
    pub fn mul_transpose(&self) -> SquareMatrix {
        let n = self.n;
        let mut out = Self::zeros(n);
        for i in 0..n {
            for j in 0..n {
                out[(i, j)] = self.row(i).iter().zip(self.row(j)).map(|(a, b)| a * b).sum();
            }
        }
        out
    }

    pub fn mul_vec(&self, v: &[f64]) -> Vec<f64> {
        (0..self.n)
            .map(|i| self.row(i).iter().zip(v).map(|(a, b)| a * b).sum())
            .collect()
    }

    /// `selfᵀ * v`.
    pub fn transpose_mul_vec(&self, v: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.n];
        for (i, vi) in v.iter().enumerate() {
            for (o, a) in out.iter_mut().zip(self.row(i)) {
                *o += a * vi;
            }
        }
        out
    }
}

impl Index<(usize, usize)> for SquareMatrix {
    type Output = f64;
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.data[i * self.n + j]
    }
}

impl IndexMut<(usize, usize)> for SquareMatrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.data[i * self.n + j]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Kernel {
    Exponential,
    Independent,
}

impl fmt::Display for Kernel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Kernel::Exponential => "exponential",
            Kernel::Independent => "independent",
        })
    }
}

pub const DEFAULT_NUGGET: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpatialModel {
    pub sigma_c: f64,
    pub range_km: f64,
    pub kernel: Kernel,
    pub nugget: f64,
}

impl SpatialModel {
    pub fn new(sigma_c: f64, range_km: f64, kernel: Kernel) -> Result<Self, WeatherError> {
        let m = SpatialModel {
            sigma_c,
            range_km,
            kernel,
            nugget: DEFAULT_NUGGET,
        };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<(), WeatherError> {
        if !(self.sigma_c > 0.0 && self.sigma_c.is_finite()) {
            return Err(WeatherError::InvalidParameter("sigma_c must be positive".into()));
        }
        if !(self.range_km > 0.0 && self.range_km.is_finite()) {
            return Err(WeatherError::InvalidParameter("range_km must be positive".into()));
        }
        if !(self.nugget >= 0.0 && self.nugget.is_finite()) {
            return Err(WeatherError::InvalidParameter("nugget must be nonnegative".into()));
        }
        Ok(())
    }

    /// Same marginals, spatial dependence removed.
    pub fn independent(&self) -> Self {
        SpatialModel {
            kernel: Kernel::Independent,
            ..*self
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StratificationPlan {
    pub tail_prob: f64,
    /// Sample counts for the low, middle and high strata.
    pub allocation: [usize; 3],
}

impl StratificationPlan {
    pub fn new(tail_prob: f64, allocation: [usize; 3]) -> Result<Self, WeatherError> {
        let plan = StratificationPlan { tail_prob, allocation };
        plan.validate()?;
        Ok(plan)
    }

    pub fn validate(&self) -> Result<(), WeatherError> {
        if !(self.tail_prob > 0.0 && self.tail_prob < 0.5) {
            return Err(WeatherError::InvalidParameter("tail_prob must lie in (0, 0.5)".into()));
        }
        if self.allocation.contains(&0) {
            return Err(WeatherError::InvalidParameter(
                "every stratum needs at least one sample".into(),
            ));
        }
        Ok(())
    }

    pub fn stratum_probs(&self) -> [f64; 3] {
        [self.tail_prob, 1.0 - 2.0 * self.tail_prob, self.tail_prob]
    }

    pub fn total(&self) -> usize {
        self.allocation.iter().sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stratum {
    Low,
    Mid,
    High,
    None,
}

impl fmt::Display for Stratum {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Stratum::Low => "low",
            Stratum::Mid => "mid",
            Stratum::High => "high",
            Stratum::None => "none",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub temps_c: Vec<f64>,
    pub weight: f64,
    pub demands_mw: Vec<f64>,
    /// Available capacity of every generator (existing and candidate).
    pub avail_mw: Vec<f64>,
    pub stratum: Stratum,
    /// Spatial-mean anomaly `A` the scenario was generated with.
    pub mean_anomaly: f64,
}

impl Scenario {
    /// Realizes demands and capacities for a temperature field.
    pub fn realize(
        instance: &GridInstance,
        temps_c: Vec<f64>,
        weight: f64,
        stratum: Stratum,
        mean_anomaly: f64,
    ) -> Scenario {
        let p = &instance.response;
        let demands_mw = instance
            .buses
            .iter()
            .zip(&temps_c)
            .map(|(b, &t)| demand_at(b, t, p))
            .collect();
        let avail_mw = instance
            .generators
            .iter()
            .zip(instance.generator_buses())
            .map(|(g, b)| available_capacity(g, temps_c[b], p))
            .collect();
        Scenario {
            temps_c,
            weight,
            demands_mw,
            avail_mw,
            stratum,
            mean_anomaly,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioSet {
    pub scenarios: Vec<Scenario>,
    pub seed: u64,
    pub model: SpatialModel,
    pub plan: Option<StratificationPlan>,
}

impl ScenarioSet {
    pub fn len(&self) -> usize {
        self.scenarios.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scenarios.is_empty()
    }

    pub fn total_weight(&self) -> f64 {
        self.scenarios.iter().map(|s| s.weight).sum()
    }

    /// Writes the `scenario,stratum,weight,bus_id,temp_c,demand_mw` CSV, one
    /// row per (scenario, bus).
    pub fn write_csv<W: Write>(&self, instance: &GridInstance, mut out: W) -> io::Result<()> {
        writeln!(out, "scenario,stratum,weight,bus_id,temp_c,demand_mw")?;
        for (k, s) in self.scenarios.iter().enumerate() {
            for (b, bus) in instance.buses.iter().enumerate() {
                writeln!(
                    out,
                    "{k},{},{},{},{},{}",
                    s.stratum, s.weight, bus.id, s.temps_c[b], s.demands_mw[b]
                )?;
            }
        }
        Ok(())
    }
}

/// Covariance of the temperature anomaly over `buses`.
pub fn build_covariance(buses: &[Bus], model: &SpatialModel) -> SquareMatrix {
    let n = buses.len();
    let s2 = model.sigma_c * model.sigma_c;
    let mut cov = SquareMatrix::zeros(n);
    for i in 0..n {
        for j in 0..n {
            cov[(i, j)] = if i == j {
                s2 + model.nugget
            } else {
                match model.kernel {
                    Kernel::Independent => 0.0,
                    Kernel::Exponential => {
                        let d = (buses[i].x_km - buses[j].x_km).hypot(buses[i].y_km - buses[j].y_km);
                        s2 * (-d / model.range_km).exp()
                    }
                }
            };
        }
    }
    cov
}

/// Lower-triangular Cholesky factor `L` with `L Lᵀ = m`.
pub fn cholesky(m: &SquareMatrix) -> Result<SquareMatrix, WeatherError> {
    let n = m.dim();
    let mut l = SquareMatrix::zeros(n);
    for j in 0..n {
        let mut pivot = m[(j, j)];
        for k in 0..j {
            pivot -= l[(j, k)] * l[(j, k)];
        }
        if !(pivot > 0.0) {
            return Err(WeatherError::NotPositiveDefinite { row: j, pivot });
        }
        let d = pivot.sqrt();
        l[(j, j)] = d;
        for i in j + 1..n {
            let mut s = m[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = s / d;
        }
    }
    Ok(l)
}

fn standard_normal() -> Normal {
    Normal::standard()
}

/// Inverse-CDF draw from `N(mu, sigma²)` truncated to `[lo, hi]`.
///
/// Upper-tail intervals are sampled through the reflected interval so the CDF
/// differences keep full relative precision.
pub fn sample_truncated_normal<R: Rng + ?Sized>(
    mu: f64,
    sigma: f64,
    lo: f64,
    hi: f64,
    rng: &mut R,
) -> Result<f64, WeatherError> {
    if !(lo < hi) || !(sigma > 0.0) {
        return Err(WeatherError::DegenerateInterval { lo, hi });
    }
    let a = (lo - mu) / sigma;
    let b = (hi - mu) / sigma;
    let (a_eff, b_eff, flip) = if a > 0.0 { (-b, -a, true) } else { (a, b, false) };
    let std = standard_normal();
    let pa = std.cdf(a_eff);
    let pb = std.cdf(b_eff);
    if !(pb - pa > 0.0) {
        return Err(WeatherError::DegenerateInterval { lo, hi });
    }
    let u: f64 = rng.sample(Open01);
    let p = pa + (pb - pa) * u;
    let mut z = std.inverse_cdf(p).clamp(a_eff, b_eff);
    if flip {
        z = -z;
    }
    Ok((mu + sigma * z).clamp(lo, hi))
}

/// Closed-form moments of the anomaly field given its spatial mean equals
/// `value`: mean `c value / v`, covariance `Σ - c cᵀ / v`, where `c = Σ1/n`
/// and `v = 1ᵀΣ1/n²`.
pub fn conditional_moments(cov: &SquareMatrix, value: f64) -> (Vec<f64>, SquareMatrix) {
    let n = cov.dim();
    let ones = vec![1.0 / n as f64; n];
    let c = cov.mul_vec(&ones);
    let v: f64 = c.iter().sum::<f64>() / n as f64;
    let mean = c.iter().map(|ci| ci * value / v).collect();
    let mut out = cov.clone();
    for i in 0..n {
        for j in 0..n {
            out[(i, j)] -= c[i] * c[j] / v;
        }
    }
    (mean, out)
}

/// Precomputed field sampler for one instance and spatial model.
#[derive(Debug, Clone)]
pub struct FieldSampler {
    chol: SquareMatrix,
    means: Vec<f64>,
    /// `Lᵀ 1 / n`, so that the spatial-mean anomaly of `L z` is `a · z`.
    mean_functional: Vec<f64>,
    mean_anomaly_sd: f64,
}

impl FieldSampler {
    pub fn new(instance: &GridInstance, model: &SpatialModel) -> Result<Self, WeatherError> {
        model.validate()?;
        let cov = build_covariance(&instance.buses, model);
        let chol = cholesky(&cov)?;
        let n = instance.buses.len();
        let mean_functional = chol.transpose_mul_vec(&vec![1.0 / n as f64; n]);
        let mean_anomaly_sd = mean_functional.iter().map(|a| a * a).sum::<f64>().sqrt();
        Ok(FieldSampler {
            chol,
            means: instance.buses.iter().map(|b| b.mean_temp_c).collect(),
            mean_functional,
            mean_anomaly_sd,
        })
    }

    /// Standard deviation of the spatial-mean anomaly `A`.
    pub fn mean_anomaly_sd(&self) -> f64 {
        self.mean_anomaly_sd
    }

    fn draw_z(&self, rng: &mut ChaCha8Rng) -> Vec<f64> {
        (0..self.means.len()).map(|_| rng.sample(StandardNormal)).collect()
    }

    fn temps(&self, z: &[f64]) -> Vec<f64> {
        self.chol
            .mul_vec(z)
            .into_iter()
            .zip(&self.means)
            .map(|(a, m)| m + a)
            .collect()
    }

    /// Unconditional field; returns temperatures and the spatial-mean anomaly.
    pub fn draw(&self, rng: &mut ChaCha8Rng) -> (Vec<f64>, f64) {
        let z = self.draw_z(rng);
        let anomaly = dot(&self.mean_functional, &z);
        (self.temps(&z), anomaly)
    }

    /// Field drawn from its exact conditional law given spatial-mean anomaly
    /// `value`. Projects a standard normal `z` onto the hyperplane `a·z = value`.
    pub fn draw_conditional(&self, value: f64, rng: &mut ChaCha8Rng) -> Vec<f64> {
        let mut z = self.draw_z(rng);
        let a = &self.mean_functional;
        let s2 = self.mean_anomaly_sd * self.mean_anomaly_sd;
        let shift = (value - dot(a, &z)) / s2;
        for (zi, ai) in z.iter_mut().zip(a) {
            *zi += ai * shift;
        }
        self.temps(&z)
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// RNG substream for one scenario.
pub fn scenario_rng(seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    rng
}

pub fn sample_iid(
    instance: &GridInstance,
    model: &SpatialModel,
    n: usize,
    seed: u64,
) -> Result<ScenarioSet, WeatherError> {
    if n == 0 {
        return Err(WeatherError::InvalidParameter("n must be at least 1".into()));
    }
    let sampler = FieldSampler::new(instance, model)?;
    let weight = 1.0 / n as f64;
    let scenarios = (0..n)
        .into_par_iter()
        .map(|k| {
            let mut rng = scenario_rng(seed, k);
            let (temps, anomaly) = sampler.draw(&mut rng);
            Scenario::realize(instance, temps, weight, Stratum::None, anomaly)
        })
        .collect();
    Ok(ScenarioSet {
        scenarios,
        seed,
        model: *model,
        plan: None,
    })
}

/// Quantiles `(q_low, q_high)` of the spatial-mean anomaly bounding the tail strata.
pub fn stratum_bounds(mean_anomaly_sd: f64, tail_prob: f64) -> (f64, f64) {
    let q = standard_normal().inverse_cdf(tail_prob) * mean_anomaly_sd;
    (q, -q)
}

pub fn sample_stratified(
    instance: &GridInstance,
    model: &SpatialModel,
    plan: &StratificationPlan,
    seed: u64,
) -> Result<ScenarioSet, WeatherError> {
    plan.validate()?;
    let sampler = FieldSampler::new(instance, model)?;
    let sd = sampler.mean_anomaly_sd();
    let (q_low, q_high) = stratum_bounds(sd, plan.tail_prob);
    let probs = plan.stratum_probs();
    let strata = [
        (Stratum::Low, f64::NEG_INFINITY, q_low),
        (Stratum::Mid, q_low, q_high),
        (Stratum::High, q_high, f64::INFINITY),
    ];
    let mut jobs = Vec::with_capacity(plan.total());
    for (k, &(stratum, lo, hi)) in strata.iter().enumerate() {
        let weight = probs[k] / plan.allocation[k] as f64;
        jobs.extend(std::iter::repeat_n((stratum, lo, hi, weight), plan.allocation[k]));
    }
    let scenarios = jobs
        .into_par_iter()
        .enumerate()
        .map(|(k, (stratum, lo, hi, weight))| {
            let mut rng = scenario_rng(seed, k);
            let anomaly = sample_truncated_normal(0.0, sd, lo, hi, &mut rng)?;
            let temps = sampler.draw_conditional(anomaly, &mut rng);
            Ok(Scenario::realize(instance, temps, weight, stratum, anomaly))
        })
        .collect::<Result<Vec<_>, WeatherError>>()?;
    Ok(ScenarioSet {
        scenarios,
        seed,
        model: *model,
        plan: Some(*plan),
    })
}
