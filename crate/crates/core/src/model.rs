//! Two-stage stochastic programs with fixed recourse:
//! `min cᵀx + Σ pˢ Q(x, ξˢ)` with `Q(x, ξ) = min{ qᵀy : W y = h − T x, l ≤ y ≤ u }`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::lp::{self, BasisHint, Constraint, LinearProgram, LpError, LpOutcome, Relation};
use crate::partition::Partition;
use crate::scalar::Scalar;

#[derive(Clone, Debug, Error, PartialEq)]
pub enum ModelError {
    #[error("cell is empty")]
    EmptyCell,
    #[error("scenario index {0} is out of range")]
    InvalidScenario(usize),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("invalid problem: {0}")]
    Invalid(String),
    #[error("the deterministic equivalent of a problem with binary first-stage variables needs branch-and-bound")]
    BinaryNotSupportedHere,
    #[error("first-stage point violates its constraints by {0}")]
    FirstStageInfeasible(f64),
    #[error(transparent)]
    Lp(#[from] LpError),
}

/// One realization `ξˢ = (Tˢ, hˢ)` with its probability.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct Scenario<T> {
    pub probability: T,
    /// `p × n`, stored by rows.
    pub technology: Vec<Vec<T>>,
    pub rhs: Vec<T>,
    #[serde(default)]
    pub label: String,
}

/// Probability-weighted average of the scenarios in a cell.
#[derive(Clone, Debug, PartialEq)]
pub struct AggregatedScenario<T> {
    pub cell: Vec<usize>,
    pub probability: T,
    pub technology: Vec<Vec<T>>,
    pub rhs: Vec<T>,
}

/// Read access shared by scenarios and aggregated cells.
pub trait ScenarioData<T> {
    fn probability(&self) -> T;
    fn technology(&self) -> &[Vec<T>];
    fn rhs(&self) -> &[T];

    /// `h − T x`.
    fn rhs_at(&self, x: &[T]) -> Vec<T>
    where
        T: Scalar,
    {
        self.rhs()
            .iter()
            .zip(self.technology())
            .map(|(&h, row)| h - crate::scalar::dot(row, x))
            .collect()
    }

    /// `Tᵀλ`.
    fn technology_transpose(&self, lambda: &[T], n: usize) -> Vec<T>
    where
        T: Scalar,
    {
        let mut out = vec![T::zero(); n];
        for (row, &l) in self.technology().iter().zip(lambda) {
            if l.is_zero() {
                continue;
            }
            for (o, &t) in out.iter_mut().zip(row) {
                *o += t * l;
            }
        }
        out
    }
}

impl<T: Scalar> ScenarioData<T> for Scenario<T> {
    fn probability(&self) -> T {
        self.probability
    }
    fn technology(&self) -> &[Vec<T>] {
        &self.technology
    }
    fn rhs(&self) -> &[T] {
        &self.rhs
    }
}

impl<T: Scalar> ScenarioData<T> for AggregatedScenario<T> {
    fn probability(&self) -> T {
        self.probability
    }
    fn technology(&self) -> &[Vec<T>] {
        &self.technology
    }
    fn rhs(&self) -> &[T] {
        &self.rhs
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct TwoStageProblem<T> {
    pub first_stage_cost: Vec<T>,
    pub first_stage_rows: Vec<Constraint<T>>,
    pub first_stage_lower: Vec<T>,
    pub first_stage_upper: Vec<T>,
    #[serde(default)]
    pub first_stage_binary: Vec<usize>,
    /// `W`, `p × m`, stored by rows.
    pub recourse_matrix: Vec<Vec<T>>,
    pub recourse_cost: Vec<T>,
    pub recourse_lower: Vec<T>,
    pub recourse_upper: Vec<T>,
    pub scenarios: Vec<Scenario<T>>,
    /// Lower bound imposed on every recourse-value variable.
    pub theta_lb: T,
}

/// Maps the flat primal vector of a deterministic equivalent back to `x`
/// and the per-cell recourse blocks.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DeIndex {
    pub num_first_stage: usize,
    pub num_recourse: usize,
    pub cells: Vec<Vec<usize>>,
}

impl DeIndex {
    pub fn x<'a, T>(&self, primal: &'a [T]) -> &'a [T] {
        &primal[..self.num_first_stage]
    }

    pub fn y<'a, T>(&self, primal: &'a [T], cell: usize) -> &'a [T] {
        let start = self.num_first_stage + cell * self.num_recourse;
        &primal[start..start + self.num_recourse]
    }
}

/// Second-stage result for one scenario or cell at a fixed `x`.
#[derive(Clone, Debug, PartialEq)]
pub enum RecourseOutcome<T> {
    Optimal {
        value: T,
        dual: Vec<T>,
        /// `value − (h − T x)ᵀλ`: contribution of active `y` bounds, zero when
        /// `y ≥ 0` is the only bound.
        bound_term: T,
    },
    Infeasible {
        /// Unit infinity-norm Farkas ray over the recourse rows.
        ray: Vec<T>,
        /// `max{ (Wᵀray)ᵀy : l ≤ y ≤ u }`.
        box_term: T,
    },
}

impl<T: Scalar> RecourseOutcome<T> {
    pub fn is_feasible(&self) -> bool {
        matches!(self, RecourseOutcome::Optimal { .. })
    }

    pub fn value(&self) -> Option<T> {
        match self {
            RecourseOutcome::Optimal { value, .. } => Some(*value),
            RecourseOutcome::Infeasible { .. } => None,
        }
    }

    pub fn dual(&self) -> Option<&[T]> {
        match self {
            RecourseOutcome::Optimal { dual, .. } => Some(dual),
            RecourseOutcome::Infeasible { .. } => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Evaluation<T> {
    Feasible { upper_bound: T, values: Vec<T> },
    Infeasible { scenarios: Vec<usize> },
}

impl<T: Scalar> TwoStageProblem<T> {
    pub fn num_first_stage(&self) -> usize {
        self.first_stage_cost.len()
    }

    pub fn num_recourse_rows(&self) -> usize {
        self.recourse_matrix.len()
    }

    pub fn num_recourse_vars(&self) -> usize {
        self.recourse_cost.len()
    }

    pub fn num_scenarios(&self) -> usize {
        self.scenarios.len()
    }

    pub fn probabilities(&self) -> Vec<T> {
        self.scenarios.iter().map(|s| s.probability).collect()
    }

    /// `Σ min{ qᵢlᵢ, qᵢuᵢ }` when every term is finite.
    pub fn default_theta_lb(&self) -> Option<T> {
        let mut total = T::zero();
        for i in 0..self.num_recourse_vars() {
            let q = self.recourse_cost[i];
            if q.is_zero() {
                continue;
            }
            let a = q * self.recourse_lower[i];
            let b = q * self.recourse_upper[i];
            let v = a.min(b);
            if !v.is_finite() {
                return None;
            }
            total += v;
        }
        Some(total)
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let n = self.num_first_stage();
        let p = self.num_recourse_rows();
        let m = self.num_recourse_vars();
        let dim = |what: String| Err(ModelError::DimensionMismatch(what));
        if self.first_stage_lower.len() != n || self.first_stage_upper.len() != n {
            return dim(format!("first-stage bounds must have length {n}"));
        }
        for (i, row) in self.first_stage_rows.iter().enumerate() {
            if row.coeffs.iter().any(|&(j, _)| j >= n) {
                return dim(format!(
                    "first-stage row {i} references a column beyond {n}"
                ));
            }
        }
        if let Some(&j) = self.first_stage_binary.iter().find(|&&j| j >= n) {
            return dim(format!(
                "binary index {j} is beyond {n} first-stage variables"
            ));
        }
        for &j in &self.first_stage_binary {
            if self.first_stage_lower[j] < T::zero() || self.first_stage_upper[j] > T::one() {
                return Err(ModelError::Invalid(format!(
                    "binary variable {j} must have bounds within [0, 1]"
                )));
            }
        }
        if let Some(i) = self.recourse_matrix.iter().position(|r| r.len() != m) {
            return dim(format!("recourse_matrix row {i} must have length {m}"));
        }
        if self.recourse_lower.len() != m || self.recourse_upper.len() != m {
            return dim(format!("recourse bounds must have length {m}"));
        }
        for j in 0..m {
            if self.recourse_lower[j] > self.recourse_upper[j] {
                return Err(ModelError::Invalid(format!(
                    "recourse variable {j} has lower bound above upper bound"
                )));
            }
        }
        for j in 0..n {
            if self.first_stage_lower[j] > self.first_stage_upper[j] {
                return Err(ModelError::Invalid(format!(
                    "first-stage variable {j} has lower bound above upper bound"
                )));
            }
        }
        if self.scenarios.is_empty() {
            return Err(ModelError::Invalid(
                "at least one scenario is required".into(),
            ));
        }
        let mut total = T::zero();
        for (s, sc) in self.scenarios.iter().enumerate() {
            if !(sc.probability > T::zero()) {
                return Err(ModelError::Invalid(format!(
                    "scenario {s} must have positive probability"
                )));
            }
            total += sc.probability;
            if sc.rhs.len() != p || sc.technology.len() != p {
                return dim(format!("scenario {s} must have {p} recourse rows"));
            }
            if let Some(i) = sc.technology.iter().position(|r| r.len() != n) {
                return dim(format!(
                    "scenario {s} technology row {i} must have length {n}"
                ));
            }
            let finite = sc.rhs.iter().all(|v| v.is_finite())
                && sc.technology.iter().flatten().all(|v| v.is_finite());
            if !finite {
                return Err(ModelError::Invalid(format!(
                    "scenario {s} has non-finite data"
                )));
            }
        }
        let sum_tol = if T::epsilon() > T::lit(1e-10) {
            T::lit(1e-5)
        } else {
            T::lit(1e-12)
        };
        if (total - T::one()).abs() > sum_tol * T::lit(self.num_scenarios() as f64).max(T::one()) {
            return Err(ModelError::Invalid(format!(
                "probabilities must sum to 1 (got {total})"
            )));
        }
        if !self.theta_lb.is_finite() {
            return Err(ModelError::Invalid("theta_lb must be finite".into()));
        }
        let finite = self.first_stage_cost.iter().all(|v| v.is_finite())
            && self.recourse_cost.iter().all(|v| v.is_finite())
            && self.recourse_matrix.iter().flatten().all(|v| v.is_finite());
        if !finite {
            return Err(ModelError::Invalid("costs and W must be finite".into()));
        }
        Ok(())
    }

    pub fn aggregate_cell(&self, cell: &[usize]) -> Result<AggregatedScenario<T>, ModelError> {
        if cell.is_empty() {
            return Err(ModelError::EmptyCell);
        }
        if let Some(&s) = cell.iter().find(|&&s| s >= self.num_scenarios()) {
            return Err(ModelError::InvalidScenario(s));
        }
        let n = self.num_first_stage();
        let p = self.num_recourse_rows();
        if let [s] = cell {
            let sc = &self.scenarios[*s];
            return Ok(AggregatedScenario {
                cell: cell.to_vec(),
                probability: sc.probability,
                technology: sc.technology.clone(),
                rhs: sc.rhs.clone(),
            });
        }
        let mut prob = T::zero();
        let mut rhs = vec![T::zero(); p];
        let mut tech = vec![vec![T::zero(); n]; p];
        for &s in cell {
            let sc = &self.scenarios[s];
            let w = sc.probability;
            prob += w;
            for i in 0..p {
                rhs[i] += w * sc.rhs[i];
                for (acc, &t) in tech[i].iter_mut().zip(&sc.technology[i]) {
                    *acc += w * t;
                }
            }
        }
        rhs.iter_mut().for_each(|v| *v /= prob);
        tech.iter_mut().flatten().for_each(|v| *v /= prob);
        Ok(AggregatedScenario {
            cell: cell.to_vec(),
            probability: prob,
            technology: tech,
            rhs,
        })
    }

    /// Recourse LP `min qᵀy, W y = rhs` with the given right-hand side.
    pub fn recourse_lp(&self, rhs: &[T]) -> LinearProgram<T> {
        let m = self.num_recourse_vars();
        let mut lp = LinearProgram::new(m);
        lp.cost = self.recourse_cost.clone();
        lp.lower = self.recourse_lower.clone();
        lp.upper = self.recourse_upper.clone();
        for (row, &b) in self.recourse_matrix.iter().zip(rhs) {
            lp.add_row(Constraint::dense(row, Relation::Eq, b));
        }
        lp
    }

    pub fn build_subproblem<S: ScenarioData<T>>(
        &self,
        x: &[T],
        source: &S,
    ) -> Result<LinearProgram<T>, ModelError> {
        if x.len() != self.num_first_stage() {
            return Err(ModelError::DimensionMismatch(format!(
                "x has length {} but the first stage has {} variables",
                x.len(),
                self.num_first_stage()
            )));
        }
        Ok(self.recourse_lp(&source.rhs_at(x)))
    }

    /// Solves the recourse problem for `source` at `x`, optionally warm
    /// started. Returns the outcome and the final basis.
    pub fn solve_recourse<S: ScenarioData<T>>(
        &self,
        x: &[T],
        source: &S,
        hint: Option<&BasisHint>,
    ) -> Result<(RecourseOutcome<T>, BasisHint), ModelError> {
        let rhs = source.rhs_at(x);
        let lp = self.recourse_lp(&rhs);
        let out = match hint {
            Some(h) => lp::solve_with_basis(&lp, h)?,
            None => lp::solve(&lp)?,
        };
        let basis = out.basis().clone();
        let outcome =
            match out {
                LpOutcome::Optimal(sol) => {
                    let linear = crate::scalar::dot(&rhs, &sol.dual);
                    RecourseOutcome::Optimal {
                        value: sol.objective,
                        bound_term: sol.objective - linear,
                        dual: sol.dual,
                    }
                }
                LpOutcome::Infeasible(cert) => {
                    let box_term = self.box_term(&cert.ray);
                    RecourseOutcome::Infeasible {
                        ray: cert.ray,
                        box_term,
                    }
                }
                LpOutcome::Unbounded(_) => return Err(ModelError::Invalid(
                    "recourse problem is unbounded; the two-stage problem has no finite optimum"
                        .into(),
                )),
            };
        Ok((outcome, basis))
    }

    /// `max{ (Wᵀray)ᵀy : l ≤ y ≤ u }`, ignoring negligible components.
    pub fn box_term(&self, ray: &[T]) -> T {
        let m = self.num_recourse_vars();
        let mut combo = vec![T::zero(); m];
        for (row, &r) in self.recourse_matrix.iter().zip(ray) {
            if r.is_zero() {
                continue;
            }
            for (c, &w) in combo.iter_mut().zip(row) {
                *c += w * r;
            }
        }
        let tiny = T::lit(1e-9);
        let mut total = T::zero();
        for (j, &g) in combo.iter().enumerate() {
            if g.abs() <= tiny {
                continue;
            }
            let b = if g > T::zero() {
                self.recourse_upper[j]
            } else {
                self.recourse_lower[j]
            };
            if b.is_finite() {
                total += g * b;
            }
        }
        total
    }

    /// First stage alone: `min cᵀx` over its rows and bounds.
    pub fn first_stage_lp(&self) -> LinearProgram<T> {
        let n = self.num_first_stage();
        let mut lp = LinearProgram::new(n);
        lp.cost = self.first_stage_cost.clone();
        lp.lower = self.first_stage_lower.clone();
        lp.upper = self.first_stage_upper.clone();
        lp.rows = self.first_stage_rows.clone();
        lp
    }

    pub fn build_deterministic_equivalent(
        &self,
        partition: &Partition,
    ) -> Result<(LinearProgram<T>, DeIndex), ModelError> {
        if !self.first_stage_binary.is_empty() {
            return Err(ModelError::BinaryNotSupportedHere);
        }
        self.relaxed_deterministic_equivalent(partition)
    }

    /// Deterministic equivalent over `partition` with binary restrictions
    /// dropped.
    pub fn relaxed_deterministic_equivalent(
        &self,
        partition: &Partition,
    ) -> Result<(LinearProgram<T>, DeIndex), ModelError> {
        if partition.num_scenarios() != self.num_scenarios() {
            return Err(ModelError::DimensionMismatch(format!(
                "partition covers {} scenarios but the problem has {}",
                partition.num_scenarios(),
                self.num_scenarios()
            )));
        }
        let n = self.num_first_stage();
        let m = self.num_recourse_vars();
        let k = partition.cells().len();
        let mut lp = LinearProgram::new(n + k * m);
        lp.cost[..n].copy_from_slice(&self.first_stage_cost);
        lp.lower[..n].copy_from_slice(&self.first_stage_lower);
        lp.upper[..n].copy_from_slice(&self.first_stage_upper);
        lp.rows = self.first_stage_rows.clone();
        for (c, cell) in partition.cells().iter().enumerate() {
            let agg = self.aggregate_cell(cell)?;
            let off = n + c * m;
            for j in 0..m {
                lp.cost[off + j] = agg.probability * self.recourse_cost[j];
                lp.lower[off + j] = self.recourse_lower[j];
                lp.upper[off + j] = self.recourse_upper[j];
            }
            for (i, wrow) in self.recourse_matrix.iter().enumerate() {
                let mut coeffs: Vec<(usize, T)> = agg.technology[i]
                    .iter()
                    .enumerate()
                    .filter(|(_, v)| !v.is_zero())
                    .map(|(j, &v)| (j, v))
                    .collect();
                coeffs.extend(
                    wrow.iter()
                        .enumerate()
                        .filter(|(_, v)| !v.is_zero())
                        .map(|(j, &v)| (off + j, v)),
                );
                lp.add_row(Constraint::new(coeffs, Relation::Eq, agg.rhs[i]));
            }
        }
        let index = DeIndex {
            num_first_stage: n,
            num_recourse: m,
            cells: partition.cells().to_vec(),
        };
        Ok((lp, index))
    }

    /// Largest violation of the first-stage rows and bounds at `x`.
    pub fn first_stage_violation(&self, x: &[T]) -> T {
        self.first_stage_lp().max_violation(x)
    }

    /// `cᵀx + Σ pˢ Q(x, ξˢ)`, or the scenarios whose recourse is infeasible.
    pub fn evaluate_first_stage(&self, x: &[T]) -> Result<Evaluation<T>, ModelError> {
        if x.len() != self.num_first_stage() {
            return Err(ModelError::DimensionMismatch(format!(
                "x has length {} but the first stage has {} variables",
                x.len(),
                self.num_first_stage()
            )));
        }
        let viol = self.first_stage_violation(x);
        if viol > T::lit(1e-7).max(T::epsilon().sqrt()) {
            return Err(ModelError::FirstStageInfeasible(viol.as_f64()));
        }
        let mut values = Vec::with_capacity(self.num_scenarios());
        let mut infeasible = Vec::new();
        for (s, sc) in self.scenarios.iter().enumerate() {
            match self.solve_recourse(x, sc, None)?.0 {
                RecourseOutcome::Optimal { value, .. } => values.push(value),
                RecourseOutcome::Infeasible { .. } => infeasible.push(s),
            }
        }
        if !infeasible.is_empty() {
            return Ok(Evaluation::Infeasible {
                scenarios: infeasible,
            });
        }
        let mut total = crate::scalar::dot(&self.first_stage_cost, x);
        for (sc, &v) in self.scenarios.iter().zip(&values) {
            total += sc.probability * v;
        }
        Ok(Evaluation::Feasible {
            upper_bound: total,
            values,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// `min x + Σ pˢ yˢ` with `y = h − x`, `0 ≤ x ≤ 10`, identity recourse.
    fn identity_problem(h: &[(f64, f64)]) -> TwoStageProblem<f64> {
        TwoStageProblem {
            first_stage_cost: vec![0.5],
            first_stage_rows: vec![],
            first_stage_lower: vec![0.0],
            first_stage_upper: vec![10.0],
            first_stage_binary: vec![],
            recourse_matrix: vec![vec![1.0]],
            recourse_cost: vec![1.0],
            recourse_lower: vec![0.0],
            recourse_upper: vec![f64::INFINITY],
            scenarios: h
                .iter()
                .map(|&(p, h)| Scenario {
                    probability: p,
                    technology: vec![vec![1.0]],
                    rhs: vec![h],
                    label: String::new(),
                })
                .collect(),
            theta_lb: 0.0,
        }
    }

    #[test]
    fn singleton_aggregate_is_the_scenario() {
        let pr = identity_problem(&[(0.3, 2.0), (0.7, 5.0)]);
        let agg = pr.aggregate_cell(&[1]).unwrap();
        assert_eq!(agg.probability, 0.7);
        assert_eq!(agg.rhs, vec![5.0]);
        assert_eq!(agg.technology, vec![vec![1.0]]);
    }

    #[test]
    fn aggregate_is_weighted_mean() {
        let pr = identity_problem(&[(0.5, 2.0), (0.5, 4.0)]);
        assert_eq!(pr.aggregate_cell(&[0, 1]).unwrap().rhs, vec![3.0]);
        let pr = identity_problem(&[(0.2, 10.0), (0.8, 0.0)]);
        let agg = pr.aggregate_cell(&[0, 1]).unwrap();
        assert!((agg.rhs[0] - 2.0).abs() < 1e-12);
        assert!((agg.probability - 1.0).abs() < 1e-12);
        assert_eq!(pr.aggregate_cell(&[]), Err(ModelError::EmptyCell));
        assert_eq!(pr.aggregate_cell(&[4]), Err(ModelError::InvalidScenario(4)));
    }

    #[test]
    fn aggregation_composes_over_subcells() {
        let pr = identity_problem(&[(0.1, 1.0), (0.2, -3.0), (0.3, 7.0), (0.4, 2.5)]);
        let whole = pr.aggregate_cell(&[0, 1, 2, 3]).unwrap();
        let a = pr.aggregate_cell(&[0, 2]).unwrap();
        let b = pr.aggregate_cell(&[1, 3]).unwrap();
        let combined =
            (a.probability * a.rhs[0] + b.probability * b.rhs[0]) / (a.probability + b.probability);
        assert!((combined - whole.rhs[0]).abs() <= 1e-12 * whole.rhs[0].abs().max(1.0));
    }

    #[test]
    fn subproblem_rhs_at_zero_is_h() {
        let pr = identity_problem(&[(1.0, 4.0)]);
        let lp = pr.build_subproblem(&[0.0], &pr.scenarios[0]).unwrap();
        assert_eq!(lp.rows[0].rhs, 4.0);
        assert!(pr.build_subproblem(&[0.0, 1.0], &pr.scenarios[0]).is_err());
    }

    #[test]
    fn identity_recourse_closed_form() {
        let pr = identity_problem(&[(1.0, 4.0)]);
        let (out, _) = pr.solve_recourse(&[1.5], &pr.scenarios[0], None).unwrap();
        assert_eq!(out.value(), Some(2.5));
        let (out, _) = pr.solve_recourse(&[6.0], &pr.scenarios[0], None).unwrap();
        let RecourseOutcome::Infeasible { ray, box_term } = out else {
            panic!("expected infeasible");
        };
        assert!(ray[0] < 0.0);
        assert_eq!(box_term, 0.0);
    }

    #[test]
    fn de_on_one_scenario_stacks_first_and_second_stage() {
        let pr = identity_problem(&[(1.0, 4.0)]);
        let (lp, idx) = pr
            .build_deterministic_equivalent(&Partition::whole(1))
            .unwrap();
        assert_eq!(lp.num_vars(), 2);
        assert_eq!(lp.num_rows(), 1);
        let sol = crate::lp::solve(&lp).unwrap();
        let sol = sol.optimal().unwrap();
        // Cheaper to buy x at 0.5 than recourse at 1.
        assert!((idx.x(&sol.primal)[0] - 4.0).abs() < 1e-9);
        assert!((sol.objective - 2.0).abs() < 1e-9);
    }

    #[test]
    fn de_objective_matches_evaluation_at_its_optimum() {
        let pr = identity_problem(&[(0.4, 3.0), (0.6, 8.0)]);
        let (lp, idx) = pr
            .build_deterministic_equivalent(&Partition::singletons(2))
            .unwrap();
        let sol = crate::lp::solve(&lp).unwrap();
        let sol = sol.optimal().unwrap();
        let Evaluation::Feasible { upper_bound, .. } =
            pr.evaluate_first_stage(idx.x(&sol.primal)).unwrap()
        else {
            panic!("feasible");
        };
        assert!((upper_bound - sol.objective).abs() < 1e-9);
    }

    #[test]
    fn identical_scenarios_aggregate_losslessly() {
        let pr = identity_problem(&[(0.25, 3.0), (0.75, 3.0)]);
        let whole = pr
            .build_deterministic_equivalent(&Partition::whole(2))
            .unwrap()
            .0;
        let split = pr
            .build_deterministic_equivalent(&Partition::singletons(2))
            .unwrap()
            .0;
        let a = crate::lp::solve(&whole).unwrap().objective().unwrap();
        let b = crate::lp::solve(&split).unwrap().objective().unwrap();
        assert!((a - b).abs() < 1e-9);
    }

    #[test]
    fn binary_de_is_refused() {
        let mut pr = identity_problem(&[(1.0, 4.0)]);
        pr.first_stage_upper[0] = 1.0;
        pr.first_stage_binary = vec![0];
        assert_eq!(
            pr.build_deterministic_equivalent(&Partition::whole(1))
                .unwrap_err(),
            ModelError::BinaryNotSupportedHere
        );
    }

    #[test]
    fn evaluation_reports_infeasible_scenarios() {
        let pr = identity_problem(&[(0.5, 1.0), (0.5, 9.0)]);
        match pr.evaluate_first_stage(&[5.0]).unwrap() {
            Evaluation::Infeasible { scenarios } => assert_eq!(scenarios, vec![0]),
            other => panic!("{other:?}"),
        }
        assert!(matches!(
            pr.evaluate_first_stage(&[11.0]),
            Err(ModelError::FirstStageInfeasible(_))
        ));
    }

    #[test]
    fn validation_catches_bad_probabilities() {
        let pr = identity_problem(&[(0.5, 1.0), (0.4, 9.0)]);
        let err = pr.validate().unwrap_err().to_string();
        assert!(err.contains("probabilities must sum to 1"), "{err}");
        assert!(identity_problem(&[(0.5, 1.0), (0.5, 9.0)])
            .validate()
            .is_ok());
    }

    #[test]
    fn default_theta_lb_needs_finite_bounds() {
        let mut pr = identity_problem(&[(1.0, 1.0)]);
        assert_eq!(pr.default_theta_lb(), Some(0.0));
        pr.recourse_cost[0] = -1.0;
        assert_eq!(pr.default_theta_lb(), None);
        pr.recourse_upper[0] = 3.0;
        assert_eq!(pr.default_theta_lb(), Some(-3.0));
    }
}
