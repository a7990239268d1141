//! The three case-study families: instance types, builders that turn an
//! instance into a [`TwoStageProblem`] plus its dual-key extractor, and seeded
//! generators.
//!
//! Every `≤`/`≥` row of a recourse problem is turned into an equality with a
//! slack column in `W`, so the recourse matrix stays scenario independent.

pub mod cpp;
pub mod flcvar;
pub mod smcf;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::TwoStageProblem;
use crate::partition::DualKeyExtractor;

pub use cpp::{build_cpp, generate_cpp, CppInstance, CppShape};
pub use flcvar::{build_flcvar, generate_flcvar, tail_cvar, FlCvarInstance, FlCvarShape};
pub use smcf::{build_smcf, generate_smcf, SmcfArc, SmcfCommodity, SmcfInstance, SmcfShape};

#[derive(Clone, Debug, Error, PartialEq)]
pub enum InstanceError {
    #[error("{field}: {message}")]
    Invalid { field: String, message: String },
}

pub(crate) fn invalid(field: impl Into<String>, message: impl Into<String>) -> InstanceError {
    InstanceError::Invalid {
        field: field.into(),
        message: message.into(),
    }
}

/// One demand realization.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DemandScenario {
    pub probability: f64,
    pub demand: Vec<f64>,
}

/// A built problem with the extractor that groups its scenarios.
#[derive(Clone, Debug)]
pub struct Built {
    pub problem: TwoStageProblem<f64>,
    pub extractor: DualKeyExtractor,
}

/// Probabilities and demand vectors shared by all three families.
pub(crate) fn check_scenarios(
    scenarios: &[DemandScenario],
    demand_len: usize,
    demand_field: &str,
) -> Result<(), InstanceError> {
    if scenarios.is_empty() {
        return Err(invalid("scenarios", "at least one scenario is required"));
    }
    let mut total = 0.0;
    for (s, sc) in scenarios.iter().enumerate() {
        if !(sc.probability > 0.0) || !sc.probability.is_finite() {
            return Err(invalid(
                format!("scenarios[{s}].probability"),
                "must be positive",
            ));
        }
        total += sc.probability;
        if sc.demand.len() != demand_len {
            return Err(invalid(
                format!("scenarios[{s}].demand"),
                format!(
                    "expected {demand_len} entries ({demand_field}), got {}",
                    sc.demand.len()
                ),
            ));
        }
        if let Some(j) = sc
            .demand
            .iter()
            .position(|&d| !(d >= 0.0) || !d.is_finite())
        {
            return Err(invalid(
                format!("scenarios[{s}].demand[{j}]"),
                "must be finite and non-negative",
            ));
        }
    }
    if (total - 1.0).abs() > 1e-6 {
        return Err(invalid(
            "scenarios",
            format!("probabilities must sum to 1 (got {total})"),
        ));
    }
    Ok(())
}

pub(crate) fn check_len<T>(v: &[T], len: usize, field: &str) -> Result<(), InstanceError> {
    if v.len() != len {
        return Err(invalid(
            field,
            format!("expected {len} entries, got {}", v.len()),
        ));
    }
    Ok(())
}

pub(crate) fn check_matrix(
    m: &[Vec<f64>],
    rows: usize,
    cols: usize,
    field: &str,
) -> Result<(), InstanceError> {
    check_len(m, rows, field)?;
    for (i, r) in m.iter().enumerate() {
        check_len(r, cols, &format!("{field}[{i}]"))?;
        if r.iter().any(|v| !v.is_finite()) {
            return Err(invalid(format!("{field}[{i}]"), "entries must be finite"));
        }
    }
    Ok(())
}

pub(crate) fn check_nonnegative(v: &[f64], field: &str, strict: bool) -> Result<(), InstanceError> {
    for (i, &x) in v.iter().enumerate() {
        let ok = x.is_finite() && if strict { x > 0.0 } else { x >= 0.0 };
        if !ok {
            let what = if strict { "positive" } else { "non-negative" };
            return Err(invalid(
                format!("{field}[{i}]"),
                format!("must be {what} (got {x})"),
            ));
        }
    }
    Ok(())
}

/// Equal probabilities for `n` scenarios.
pub(crate) fn uniform_probability(n: usize) -> f64 {
    1.0 / n as f64
}
