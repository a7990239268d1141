//! JSON instance files, tagged by `family`.

use std::fs;
use std::path::Path;

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

use benders_lab_core::lp::Constraint;
use benders_lab_core::problems::{
    self, Built, CppInstance, CppShape, FlCvarInstance, FlCvarShape, SmcfInstance, SmcfShape,
};
use benders_lab_core::{DualKeyExtractor, Scenario, TwoStageProblem};

/// A problem given directly in `min cᵀx + E[Q]` form. Missing bounds
/// (`null`) are infinite.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GenericInstance {
    pub n_first_stage: usize,
    pub n_recourse_rows: usize,
    pub n_recourse_vars: usize,
    pub first_stage_cost: Vec<f64>,
    #[serde(default)]
    pub first_stage_rows: Vec<Constraint<f64>>,
    pub first_stage_lower: Vec<Option<f64>>,
    pub first_stage_upper: Vec<Option<f64>>,
    #[serde(default)]
    pub first_stage_binary: Vec<usize>,
    pub recourse_matrix: Vec<Vec<f64>>,
    pub recourse_cost: Vec<f64>,
    pub recourse_lower: Vec<Option<f64>>,
    pub recourse_upper: Vec<Option<f64>>,
    pub scenarios: Vec<Scenario<f64>>,
    pub theta_lb: Option<f64>,
    /// Recourse rows whose duals group scenarios; all rows when absent.
    #[serde(default)]
    pub key_rows: Option<Vec<usize>>,
}

impl GenericInstance {
    fn problem(&self) -> Result<TwoStageProblem<f64>> {
        let lower = |v: &[Option<f64>]| v.iter().map(|b| b.unwrap_or(f64::NEG_INFINITY)).collect();
        let upper = |v: &[Option<f64>]| v.iter().map(|b| b.unwrap_or(f64::INFINITY)).collect();
        let dims = [
            (
                "first_stage_cost",
                self.first_stage_cost.len(),
                self.n_first_stage,
            ),
            (
                "first_stage_lower",
                self.first_stage_lower.len(),
                self.n_first_stage,
            ),
            (
                "first_stage_upper",
                self.first_stage_upper.len(),
                self.n_first_stage,
            ),
            (
                "recourse_matrix",
                self.recourse_matrix.len(),
                self.n_recourse_rows,
            ),
            (
                "recourse_cost",
                self.recourse_cost.len(),
                self.n_recourse_vars,
            ),
            (
                "recourse_lower",
                self.recourse_lower.len(),
                self.n_recourse_vars,
            ),
            (
                "recourse_upper",
                self.recourse_upper.len(),
                self.n_recourse_vars,
            ),
        ];
        for (field, got, want) in dims {
            if got != want {
                bail!("{field}: expected {want} entries, got {got}");
            }
        }
        let mut problem = TwoStageProblem {
            first_stage_cost: self.first_stage_cost.clone(),
            first_stage_rows: self.first_stage_rows.clone(),
            first_stage_lower: lower(&self.first_stage_lower),
            first_stage_upper: upper(&self.first_stage_upper),
            first_stage_binary: self.first_stage_binary.clone(),
            recourse_matrix: self.recourse_matrix.clone(),
            recourse_cost: self.recourse_cost.clone(),
            recourse_lower: lower(&self.recourse_lower),
            recourse_upper: upper(&self.recourse_upper),
            scenarios: self.scenarios.clone(),
            theta_lb: 0.0,
        };
        problem.theta_lb = match self.theta_lb.or_else(|| problem.default_theta_lb()) {
            Some(v) => v,
            None => {
                bail!("theta_lb: required because the recourse cost is unbounded below on its box")
            }
        };
        problem.validate()?;
        Ok(problem)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "lowercase")]
pub enum Instance {
    Cpp(CppInstance),
    Smcf(SmcfInstance),
    Flcvar(FlCvarInstance),
    Generic(GenericInstance),
}

impl Instance {
    pub fn family(&self) -> &'static str {
        match self {
            Instance::Cpp(_) => "cpp",
            Instance::Smcf(_) => "smcf",
            Instance::Flcvar(_) => "flcvar",
            Instance::Generic(_) => "generic",
        }
    }

    pub fn num_scenarios(&self) -> usize {
        match self {
            Instance::Cpp(i) => i.scenarios.len(),
            Instance::Smcf(i) => i.scenarios.len(),
            Instance::Flcvar(i) => i.scenarios.len(),
            Instance::Generic(i) => i.scenarios.len(),
        }
    }

    /// First violated invariant, if any.
    pub fn validate(&self) -> Result<()> {
        match self {
            Instance::Cpp(i) => i.validate()?,
            Instance::Smcf(i) => i.validate()?,
            Instance::Flcvar(i) => i.validate()?,
            Instance::Generic(i) => {
                i.problem()?;
            }
        }
        Ok(())
    }

    pub fn build(&self) -> Result<Built> {
        Ok(match self {
            Instance::Cpp(i) => problems::build_cpp(i)?,
            Instance::Smcf(i) => problems::build_smcf(i)?,
            Instance::Flcvar(i) => problems::build_flcvar(i)?,
            Instance::Generic(i) => Built {
                problem: i.problem()?,
                extractor: match &i.key_rows {
                    Some(rows) => DualKeyExtractor::rows(rows.iter().copied()),
                    None => DualKeyExtractor::full(),
                },
            },
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text =
            fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)?;
        fs::write(path, text + "\n").with_context(|| format!("writing {}", path.display()))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    Cpp,
    Smcf,
    Flcvar,
}

/// Seeded generator call at the default desk-scale shape of each family.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeneratorSpec {
    pub family: Family,
    pub scenarios: usize,
    pub seed: u64,
    #[serde(default)]
    pub correlation: f64,
    /// SMCF cost/capacity level, 0 to 4.
    #[serde(default)]
    pub grid: Option<usize>,
}

impl GeneratorSpec {
    pub fn name(&self) -> String {
        format!(
            "{}-s{}-seed{}",
            family_name(self.family),
            self.scenarios,
            self.seed
        )
    }

    pub fn generate(&self) -> Result<Instance> {
        Ok(match self.family {
            Family::Cpp => Instance::Cpp(problems::generate_cpp(
                CppShape::default(),
                self.scenarios,
                self.seed,
            )?),
            Family::Smcf => {
                let shape = SmcfShape {
                    grid: self.grid.unwrap_or((self.seed % 5) as usize),
                    ..SmcfShape::default()
                };
                Instance::Smcf(problems::generate_smcf(
                    shape,
                    self.correlation,
                    self.scenarios,
                    self.seed,
                )?)
            }
            Family::Flcvar => Instance::Flcvar(problems::generate_flcvar(
                FlCvarShape::default(),
                self.scenarios,
                self.seed,
            )?),
        })
    }
}

fn family_name(f: Family) -> &'static str {
    match f {
        Family::Cpp => "cpp",
        Family::Smcf => "smcf",
        Family::Flcvar => "flcvar",
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn family_tag_round_trips() {
        let spec = GeneratorSpec {
            family: Family::Flcvar,
            scenarios: 3,
            seed: 1,
            correlation: 0.0,
            grid: None,
        };
        let inst = spec.generate().unwrap();
        let text = serde_json::to_string(&inst).unwrap();
        assert!(text.starts_with(r#"{"family":"flcvar""#));
        let back: Instance = serde_json::from_str(&text).unwrap();
        assert_eq!(back, inst);
    }

    #[test]
    fn generic_instance_uses_null_for_infinite_bounds() {
        let text = r#"{
            "family": "generic",
            "n_first_stage": 1, "n_recourse_rows": 1, "n_recourse_vars": 1,
            "first_stage_cost": [1.0],
            "first_stage_lower": [0.0], "first_stage_upper": [10.0],
            "recourse_matrix": [[1.0]], "recourse_cost": [2.0],
            "recourse_lower": [0.0], "recourse_upper": [null],
            "scenarios": [{"probability": 1.0, "technology": [[1.0]], "rhs": [4.0]}],
            "theta_lb": null
        }"#;
        let inst: Instance = serde_json::from_str(text).unwrap();
        let built = inst.build().unwrap();
        assert_eq!(built.problem.recourse_upper, vec![f64::INFINITY]);
        assert_eq!(built.problem.theta_lb, 0.0);
    }
}
