//! Linear programming kernel.
//!
//! A bounded-variable, two-phase revised simplex over a sparse LU
//! factorization of the basis. Every outcome carries a certificate:
//! optimal primal/dual pairs, Farkas rays for infeasible programs and
//! recession directions for unbounded ones.
//!
//! Sign convention: for the minimization `min cᵀx` a row `aᵀx (≤,=,≥) b`
//! contributes `b·λ` to the dual objective, so `λ ≤ 0` on `≤` rows,
//! `λ ≥ 0` on `≥` rows and `λ` is free on equality rows.

mod lu;
mod simplex;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::{LpTolerances, Scalar};

pub use simplex::SimplexOptions;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Relation {
    #[serde(rename = "<=")]
    LessEq,
    #[serde(rename = "=")]
    Eq,
    #[serde(rename = ">=")]
    GreaterEq,
}

/// One constraint row stored as sparse `(column, coefficient)` pairs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct Constraint<T> {
    pub coeffs: Vec<(usize, T)>,
    pub relation: Relation,
    pub rhs: T,
}

impl<T: Scalar> Constraint<T> {
    pub fn new(coeffs: Vec<(usize, T)>, relation: Relation, rhs: T) -> Self {
        Self {
            coeffs,
            relation,
            rhs,
        }
    }

    /// Builds a row from a dense coefficient slice, dropping exact zeros.
    pub fn dense(coeffs: &[T], relation: Relation, rhs: T) -> Self {
        let coeffs = coeffs
            .iter()
            .enumerate()
            .filter(|(_, v)| !v.is_zero())
            .map(|(j, &v)| (j, v))
            .collect();
        Self::new(coeffs, relation, rhs)
    }

    pub fn activity(&self, x: &[T]) -> T {
        crate::scalar::sparse_dot(&self.coeffs, x)
    }
}

/// `min cost·x` subject to rows and per-variable bounds.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct LinearProgram<T> {
    pub cost: Vec<T>,
    pub rows: Vec<Constraint<T>>,
    pub lower: Vec<T>,
    pub upper: Vec<T>,
}

impl<T: Scalar> LinearProgram<T> {
    /// `n` variables, zero cost, bounds `[0, +inf)`.
    pub fn new(n: usize) -> Self {
        Self {
            cost: vec![T::zero(); n],
            rows: Vec::new(),
            lower: vec![T::zero(); n],
            upper: vec![T::infinity(); n],
        }
    }

    pub fn num_vars(&self) -> usize {
        self.cost.len()
    }

    pub fn num_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn add_row(&mut self, row: Constraint<T>) -> usize {
        self.rows.push(row);
        self.rows.len() - 1
    }

    pub fn set_bounds(&mut self, j: usize, lower: T, upper: T) {
        self.lower[j] = lower;
        self.upper[j] = upper;
    }

    pub fn objective(&self, x: &[T]) -> T {
        crate::scalar::dot(&self.cost, x)
    }

    /// Checks dimensions, finiteness and bound ordering.
    pub fn validate(&self) -> Result<(), LpError> {
        let n = self.num_vars();
        if self.lower.len() != n || self.upper.len() != n {
            return Err(LpError::Malformed(format!(
                "bounds have length {}/{} but there are {n} variables",
                self.lower.len(),
                self.upper.len()
            )));
        }
        if let Some(j) = self.cost.iter().position(|c| !c.is_finite()) {
            return Err(LpError::Malformed(format!("cost[{j}] is not finite")));
        }
        for j in 0..n {
            let (l, u) = (self.lower[j], self.upper[j]);
            if l.is_nan() || u.is_nan() || l == T::infinity() || u == T::neg_infinity() {
                return Err(LpError::Malformed(format!(
                    "variable {j} has invalid bounds"
                )));
            }
            if l > u {
                return Err(LpError::Malformed(format!(
                    "variable {j} has lower bound {l} above upper bound {u}"
                )));
            }
        }
        let mut seen = vec![usize::MAX; n];
        for (i, row) in self.rows.iter().enumerate() {
            if !row.rhs.is_finite() {
                return Err(LpError::Malformed(format!("row {i} has a non-finite rhs")));
            }
            for &(j, v) in &row.coeffs {
                if j >= n {
                    return Err(LpError::Malformed(format!(
                        "row {i} references column {j} but there are {n} variables"
                    )));
                }
                if !v.is_finite() {
                    return Err(LpError::Malformed(format!(
                        "row {i} column {j} is not finite"
                    )));
                }
                if seen[j] == i {
                    return Err(LpError::Malformed(format!(
                        "row {i} lists column {j} more than once"
                    )));
                }
                seen[j] = i;
            }
        }
        Ok(())
    }

    /// Largest violation of rows and bounds at `x`.
    pub fn max_violation(&self, x: &[T]) -> T {
        let mut worst = T::zero();
        for row in &self.rows {
            let a = row.activity(x);
            let v = match row.relation {
                Relation::LessEq => a - row.rhs,
                Relation::GreaterEq => row.rhs - a,
                Relation::Eq => (a - row.rhs).abs(),
            };
            worst = worst.max(v);
        }
        for j in 0..self.num_vars() {
            worst = worst.max(self.lower[j] - x[j]).max(x[j] - self.upper[j]);
        }
        worst
    }
}

/// Basis description that can seed a later solve of the same program
/// (possibly with rows appended or bounds changed).
///
/// Variables are numbered `0..n` for columns and `n + i` for the slack of
/// row `i`.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct BasisHint {
    pub num_vars: usize,
    pub basic: Vec<usize>,
    pub at_upper: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct OptimalSolution<T> {
    pub primal: Vec<T>,
    pub objective: T,
    /// One multiplier per row.
    pub dual: Vec<T>,
    /// `c - Aᵀλ` per column.
    pub reduced_costs: Vec<T>,
    pub basis: BasisHint,
}

impl<T: Scalar> OptimalSolution<T> {
    /// `bᵀλ` plus the bound contributions of the reduced costs.
    pub fn dual_objective(&self, lp: &LinearProgram<T>) -> T {
        let mut total = T::zero();
        for (row, &y) in lp.rows.iter().zip(&self.dual) {
            total += row.rhs * y;
        }
        for (j, &d) in self.reduced_costs.iter().enumerate() {
            if d > T::zero() && lp.lower[j].is_finite() {
                total += d * lp.lower[j];
            } else if d < T::zero() && lp.upper[j].is_finite() {
                total += d * lp.upper[j];
            }
        }
        total
    }
}

/// Row multipliers proving that no point satisfies rows and bounds.
#[derive(Clone, Debug, PartialEq)]
pub struct FarkasCertificate<T> {
    /// Unit infinity-norm multipliers, one per row.
    pub ray: Vec<T>,
    pub basis: BasisHint,
}

impl<T: Scalar> FarkasCertificate<T> {
    /// `rayᵀb − max{ (Aᵀray)ᵀx : lower ≤ x ≤ upper }`, strictly positive for a
    /// valid certificate. Returns `-inf` if the ray has the wrong sign on a
    /// row or pairs a nonzero column combination with an infinite bound.
    pub fn certified_gap(&self, lp: &LinearProgram<T>) -> T {
        let tiny = T::lit(1e-11);
        let mut lhs = T::zero();
        let mut combo = vec![T::zero(); lp.num_vars()];
        for (row, &y) in lp.rows.iter().zip(&self.ray) {
            let sign_ok = match row.relation {
                Relation::LessEq => y <= tiny,
                Relation::GreaterEq => y >= -tiny,
                Relation::Eq => true,
            };
            if !sign_ok {
                return T::neg_infinity();
            }
            lhs += row.rhs * y;
            for &(j, a) in &row.coeffs {
                combo[j] += a * y;
            }
        }
        let mut best = T::zero();
        for (j, &g) in combo.iter().enumerate() {
            if g.abs() <= tiny {
                continue;
            }
            let bound = if g > T::zero() {
                lp.upper[j]
            } else {
                lp.lower[j]
            };
            if !bound.is_finite() {
                return T::neg_infinity();
            }
            best += g * bound;
        }
        lhs - best
    }
}

/// Improving direction along which the objective decreases without limit.
#[derive(Clone, Debug, PartialEq)]
pub struct UnboundedRay<T> {
    /// Unit infinity-norm direction over the columns.
    pub ray: Vec<T>,
    /// A feasible point the ray starts from.
    pub origin: Vec<T>,
    pub basis: BasisHint,
}

impl<T: Scalar> UnboundedRay<T> {
    /// Largest violation of the recession-cone conditions, and the cost slope.
    pub fn check(&self, lp: &LinearProgram<T>) -> (T, T) {
        let mut worst = T::zero();
        for row in &lp.rows {
            let a = row.activity(&self.ray);
            let v = match row.relation {
                Relation::LessEq => a,
                Relation::GreaterEq => -a,
                Relation::Eq => a.abs(),
            };
            worst = worst.max(v);
        }
        for (j, &r) in self.ray.iter().enumerate() {
            if lp.lower[j].is_finite() {
                worst = worst.max(-r);
            }
            if lp.upper[j].is_finite() {
                worst = worst.max(r);
            }
        }
        (worst, lp.objective(&self.ray))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
}

#[derive(Clone, Debug, PartialEq)]
pub enum LpOutcome<T> {
    Optimal(OptimalSolution<T>),
    Infeasible(FarkasCertificate<T>),
    Unbounded(UnboundedRay<T>),
}

impl<T: Scalar> LpOutcome<T> {
    pub fn status(&self) -> LpStatus {
        match self {
            LpOutcome::Optimal(_) => LpStatus::Optimal,
            LpOutcome::Infeasible(_) => LpStatus::Infeasible,
            LpOutcome::Unbounded(_) => LpStatus::Unbounded,
        }
    }

    pub fn basis(&self) -> &BasisHint {
        match self {
            LpOutcome::Optimal(s) => &s.basis,
            LpOutcome::Infeasible(c) => &c.basis,
            LpOutcome::Unbounded(r) => &r.basis,
        }
    }

    pub fn optimal(&self) -> Option<&OptimalSolution<T>> {
        match self {
            LpOutcome::Optimal(s) => Some(s),
            _ => None,
        }
    }

    pub fn objective(&self) -> Option<T> {
        self.optimal().map(|s| s.objective)
    }
}

#[derive(Clone, Debug, Error, PartialEq)]
pub enum LpError {
    #[error("malformed linear program: {0}")]
    Malformed(String),
    #[error("numerical failure: {0}")]
    NumericalFailure(String),
}

/// Solves `lp` from the all-slack basis with default options.
pub fn solve<T: Scalar>(lp: &LinearProgram<T>) -> Result<LpOutcome<T>, LpError> {
    solve_with_options(lp, None, &SimplexOptions::default())
}

/// Solves `lp` starting from `hint`. Falls back to a cold start whenever the
/// hint does not describe a usable basis.
pub fn solve_with_basis<T: Scalar>(
    lp: &LinearProgram<T>,
    hint: &BasisHint,
) -> Result<LpOutcome<T>, LpError> {
    solve_with_options(lp, Some(hint), &SimplexOptions::default())
}

pub fn solve_with_options<T: Scalar>(
    lp: &LinearProgram<T>,
    hint: Option<&BasisHint>,
    options: &SimplexOptions<T>,
) -> Result<LpOutcome<T>, LpError> {
    lp.validate()?;
    simplex::run(lp, hint, options)
}

impl<T: Scalar> Default for SimplexOptions<T> {
    fn default() -> Self {
        Self {
            tolerances: LpTolerances::default(),
            max_iterations: None,
            refactor_interval: 64,
        }
    }
}
