//! Grid instance data model and the deterministic weather response maps.
//!
//! Instances are stored as TOML with four top-level sections:
//!
//! ```toml
//! [[buses]]
//! id = "b1"
//! x_km = 0.0
//! y_km = 0.0
//! base_demand_mw = 100.0
//! mean_temp_c = 20.0
//!
//! [[lines]]
//! from_bus = "b1"
//! to_bus = "b2"
//! capacity_mw = 80.0
//!
//! [[generators]]
//! id = "g1"
//! bus = "b1"
//! capacity_mw = 120.0
//! marginal_cost = 25.0
//! kind = "existing"
//!
//! [response]
//! comfort_lo_c = 15.0
//! comfort_hi_c = 25.0
//! demand_slope_per_c = 0.02
//! derate_start_c = 5.0
//! derate_full_c = 15.0
//! derate_max_frac = 0.4
//! shed_penalty = 1000.0
//! ```
//!
//! All quantities describe one representative hour: MW for power, $/MWh for
//! marginal costs and the shed penalty, and $ per hour for build costs (the
//! instance author amortizes capital costs to that hour). Unknown fields are
//! rejected.

use std::collections::{HashMap, HashSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum InstanceError {
    #[error("parse error: {0}")]
    Parse(String),
    #[error("instance has no buses")]
    NoBuses,
    #[error("duplicate id {id:?} in {section}")]
    DuplicateId { section: &'static str, id: String },
    #[error("unknown bus id {id:?} referenced by {context}")]
    UnknownBus { context: String, id: String },
    #[error("negative capacity {value} on {context}")]
    NegativeCapacity { context: String, value: f64 },
    #[error("invalid value for {field} on {context}: {reason}")]
    InvalidValue {
        context: String,
        field: &'static str,
        reason: String,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Bus {
    pub id: String,
    pub x_km: f64,
    pub y_km: f64,
    pub base_demand_mw: f64,
    pub mean_temp_c: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Line {
    pub from_bus: String,
    pub to_bus: String,
    /// Symmetric flow limit in either direction.
    pub capacity_mw: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GeneratorKind {
    Existing,
    Candidate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeneratorSpec {
    pub id: String,
    pub bus: String,
    pub capacity_mw: f64,
    pub marginal_cost: f64,
    pub kind: GeneratorKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub build_cost: Option<f64>,
}

impl GeneratorSpec {
    pub fn is_candidate(&self) -> bool {
        self.kind == GeneratorKind::Candidate
    }
}

/// Temperature response of demand and generation, plus the shed penalty.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ResponseParams {
    pub comfort_lo_c: f64,
    pub comfort_hi_c: f64,
    pub demand_slope_per_c: f64,
    pub derate_start_c: f64,
    pub derate_full_c: f64,
    pub derate_max_frac: f64,
    pub shed_penalty: f64,
}

impl ResponseParams {
    /// Distance (°C) of `temp_c` outside the comfort band, zero inside it.
    pub fn deviation(&self, temp_c: f64) -> f64 {
        (self.comfort_lo_c - temp_c).max(temp_c - self.comfort_hi_c).max(0.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridInstance {
    pub buses: Vec<Bus>,
    #[serde(default)]
    pub lines: Vec<Line>,
    pub generators: Vec<GeneratorSpec>,
    pub response: ResponseParams,
}

/// Demand at a bus for a given temperature.
///
/// Linear in the deviation from the comfort band, so heat and cold both
/// raise demand.
pub fn demand_at(bus: &Bus, temp_c: f64, p: &ResponseParams) -> f64 {
    bus.base_demand_mw * (1.0 + p.demand_slope_per_c * p.deviation(temp_c))
}

/// Derated capacity of a generator at the temperature of its bus.
pub fn available_capacity(gen: &GeneratorSpec, temp_c: f64, p: &ResponseParams) -> f64 {
    let delta = p.deviation(temp_c);
    let phi = ((delta - p.derate_start_c) / (p.derate_full_c - p.derate_start_c)).clamp(0.0, 1.0);
    gen.capacity_mw * (1.0 - p.derate_max_frac * phi)
}

/// Parses and validates an instance document.
pub fn load_instance(text: &str) -> Result<GridInstance, InstanceError> {
    let instance: GridInstance = toml::from_str(text).map_err(|e| InstanceError::Parse(e.to_string()))?;
    instance.validate()?;
    Ok(instance)
}

impl GridInstance {
    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("instance fields are always representable in TOML")
    }

    pub fn validate(&self) -> Result<(), InstanceError> {
        if self.buses.is_empty() {
            return Err(InstanceError::NoBuses);
        }
        let mut bus_ids = HashSet::new();
        for bus in &self.buses {
            if !bus_ids.insert(bus.id.as_str()) {
                return Err(InstanceError::DuplicateId {
                    section: "buses",
                    id: bus.id.clone(),
                });
            }
            let ctx = || format!("bus {:?}", bus.id);
            finite(ctx, "x_km", bus.x_km)?;
            finite(ctx, "y_km", bus.y_km)?;
            finite(ctx, "mean_temp_c", bus.mean_temp_c)?;
            finite(ctx, "base_demand_mw", bus.base_demand_mw)?;
            if bus.base_demand_mw < 0.0 {
                return Err(invalid(ctx(), "base_demand_mw", "must be nonnegative"));
            }
        }

        for (k, line) in self.lines.iter().enumerate() {
            let ctx = format!("line #{k} ({} -> {})", line.from_bus, line.to_bus);
            for end in [&line.from_bus, &line.to_bus] {
                if !bus_ids.contains(end.as_str()) {
                    return Err(InstanceError::UnknownBus {
                        context: ctx,
                        id: end.clone(),
                    });
                }
            }
            if line.from_bus == line.to_bus {
                return Err(invalid(ctx, "to_bus", "line endpoints must differ"));
            }
            capacity(&ctx, line.capacity_mw)?;
        }

        let mut gen_ids = HashSet::new();
        for gen in &self.generators {
            if !gen_ids.insert(gen.id.as_str()) {
                return Err(InstanceError::DuplicateId {
                    section: "generators",
                    id: gen.id.clone(),
                });
            }
            let ctx = format!("generator {:?}", gen.id);
            if !bus_ids.contains(gen.bus.as_str()) {
                return Err(InstanceError::UnknownBus {
                    context: ctx,
                    id: gen.bus.clone(),
                });
            }
            capacity(&ctx, gen.capacity_mw)?;
            finite(|| ctx.clone(), "marginal_cost", gen.marginal_cost)?;
            if gen.marginal_cost < 0.0 {
                return Err(invalid(ctx, "marginal_cost", "must be nonnegative"));
            }
            match (gen.kind, gen.build_cost) {
                (GeneratorKind::Candidate, None) => {
                    return Err(invalid(ctx, "build_cost", "required for candidate sites"));
                }
                (GeneratorKind::Candidate, Some(c)) if !(c.is_finite() && c >= 0.0) => {
                    return Err(invalid(ctx, "build_cost", "must be finite and nonnegative"));
                }
                (GeneratorKind::Existing, Some(c)) if c != 0.0 => {
                    return Err(invalid(ctx, "build_cost", "existing generators carry no build cost"));
                }
                _ => {}
            }
        }

        let r = &self.response;
        let ctx = || "response".to_string();
        for (field, v) in [
            ("comfort_lo_c", r.comfort_lo_c),
            ("comfort_hi_c", r.comfort_hi_c),
            ("demand_slope_per_c", r.demand_slope_per_c),
            ("derate_start_c", r.derate_start_c),
            ("derate_full_c", r.derate_full_c),
            ("derate_max_frac", r.derate_max_frac),
            ("shed_penalty", r.shed_penalty),
        ] {
            finite(ctx, field, v)?;
        }
        if r.comfort_lo_c > r.comfort_hi_c {
            return Err(invalid(ctx(), "comfort_hi_c", "must be at least comfort_lo_c"));
        }
        if r.demand_slope_per_c < 0.0 {
            return Err(invalid(ctx(), "demand_slope_per_c", "must be nonnegative"));
        }
        if r.derate_start_c < 0.0 {
            return Err(invalid(ctx(), "derate_start_c", "must be nonnegative"));
        }
        if r.derate_full_c <= r.derate_start_c {
            return Err(invalid(ctx(), "derate_full_c", "must exceed derate_start_c"));
        }
        if !(0.0..=1.0).contains(&r.derate_max_frac) {
            return Err(invalid(ctx(), "derate_max_frac", "must lie in [0, 1]"));
        }
        if r.shed_penalty <= 0.0 {
            return Err(invalid(ctx(), "shed_penalty", "must be positive"));
        }
        Ok(())
    }

    /// Map from bus id to its position in `buses`.
    pub fn bus_index(&self) -> HashMap<&str, usize> {
        self.buses.iter().enumerate().map(|(i, b)| (b.id.as_str(), i)).collect()
    }

    /// Bus position of every generator, in generator order.
    pub fn generator_buses(&self) -> Vec<usize> {
        let index = self.bus_index();
        self.generators.iter().map(|g| index[g.bus.as_str()]).collect()
    }

    /// Generator positions of the candidate sites. Site `j` of a siting
    /// decision refers to `generators[candidate_indices()[j]]`.
    pub fn candidate_indices(&self) -> Vec<usize> {
        self.generators
            .iter()
            .enumerate()
            .filter(|(_, g)| g.is_candidate())
            .map(|(i, _)| i)
            .collect()
    }

    pub fn num_sites(&self) -> usize {
        self.generators.iter().filter(|g| g.is_candidate()).count()
    }

    /// Build cost of every candidate site, in site order.
    pub fn site_build_costs(&self) -> Vec<f64> {
        self.generators
            .iter()
            .filter(|g| g.is_candidate())
            .map(|g| g.build_cost.unwrap_or(0.0))
            .collect()
    }

    /// Copy of the instance with a different shed penalty.
    pub fn with_shed_penalty(&self, penalty: f64) -> GridInstance {
        let mut out = self.clone();
        out.response.shed_penalty = penalty;
        out
    }
}

fn invalid(context: String, field: &'static str, reason: &str) -> InstanceError {
    InstanceError::InvalidValue {
        context,
        field,
        reason: reason.to_string(),
    }
}

fn finite(ctx: impl Fn() -> String, field: &'static str, v: f64) -> Result<(), InstanceError> {
    if v.is_finite() {
        Ok(())
    } else {
        Err(invalid(ctx(), field, "must be finite"))
    }
}

fn capacity(ctx: &str, v: f64) -> Result<(), InstanceError> {
    if !v.is_finite() {
        return Err(invalid(ctx.to_string(), "capacity_mw", "must be finite"));
    }
    if v < 0.0 {
        return Err(InstanceError::NegativeCapacity {
            context: ctx.to_string(),
            value: v,
        });
    }
    Ok(())
}
