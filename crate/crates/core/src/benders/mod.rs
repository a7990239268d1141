//! Benders decomposition: cut construction, the master problem and the
//! single-cut, multi-cut, adaptive-cut and adaptive-single-cut drivers.

mod engine;
mod master;

use serde::{Deserialize, Serialize};

use crate::model::{AggregatedScenario, ScenarioData, TwoStageProblem};
use crate::partition::DualKeyExtractor;
use crate::report::{Method, SolveError, SolveReport, SolverConfig};
use crate::scalar::Scalar;

pub(crate) use engine::{Refinement, Run};
pub(crate) use master::{Master, MasterOutcome, ThetaMode};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum CutKind {
    Optimality,
    Feasibility,
}

/// Recourse-value variable of the master problem.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ThetaVar {
    /// `θˢ` of one scenario.
    Scenario(usize),
    /// The single aggregate `Θ`.
    Total,
}

/// `constant + coeff_xᵀx ≤ Σ weight·θ`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct Cut<T> {
    pub kind: CutKind,
    pub coeff_x: Vec<T>,
    pub coeff_theta: Vec<(ThetaVar, T)>,
    pub constant: T,
    pub origin_cell: Vec<usize>,
    pub generation: usize,
}

impl<T: Scalar> Cut<T> {
    /// `θ`-side value at `theta`, read through `lookup`.
    pub fn theta_side(&self, theta: impl Fn(ThetaVar) -> T) -> T {
        self.coeff_theta
            .iter()
            .fold(T::zero(), |acc, &(v, w)| acc + w * theta(v))
    }

    /// Left side minus right side; positive iff the point violates the cut.
    pub fn violation(&self, x: &[T], theta: impl Fn(ThetaVar) -> T) -> T {
        self.constant + crate::scalar::dot(&self.coeff_x, x) - self.theta_side(theta)
    }
}

/// Aggregated optimality cut `pᴾ(hᴾ − Tᴾx)ᵀλ ≤ Σ_{s∈P} pˢθˢ`, shifted by
/// `pᴾ·bound_term` when recourse variables sit at finite bounds.
pub fn optimality_cut<T: Scalar>(
    problem: &TwoStageProblem<T>,
    cell: &AggregatedScenario<T>,
    dual: &[T],
    bound_term: T,
    generation: usize,
) -> Cut<T> {
    let n = problem.num_first_stage();
    let pp = cell.probability;
    let constant = pp * (crate::scalar::dot(&cell.rhs, dual) + bound_term);
    let coeff_x = cell
        .technology_transpose(dual, n)
        .into_iter()
        .map(|v| -pp * v)
        .collect();
    let coeff_theta = cell
        .cell
        .iter()
        .map(|&s| (ThetaVar::Scenario(s), problem.scenarios[s].probability))
        .collect();
    Cut {
        kind: CutKind::Optimality,
        coeff_x,
        coeff_theta,
        constant,
        origin_cell: cell.cell.clone(),
        generation,
    }
}

/// Feasibility cut `(hᴾ − Tᴾx)ᵀλ̃ − box_term ≤ 0` from a Farkas ray of the
/// cell's recourse problem at `x`. Fails when the cut does not cut off `x`.
pub fn feasibility_cut<T: Scalar>(
    problem: &TwoStageProblem<T>,
    cell: &AggregatedScenario<T>,
    ray: &[T],
    x: &[T],
    generation: usize,
) -> Result<Cut<T>, SolveError> {
    let norm = crate::scalar::inf_norm(ray);
    let scaled: Vec<T> = if norm > T::zero() {
        ray.iter().map(|&v| v / norm).collect()
    } else {
        ray.to_vec()
    };
    let n = problem.num_first_stage();
    let box_term = problem.box_term(&scaled);
    let cut = Cut {
        kind: CutKind::Feasibility,
        coeff_x: cell
            .technology_transpose(&scaled, n)
            .into_iter()
            .map(|v| -v)
            .collect(),
        coeff_theta: Vec::new(),
        constant: crate::scalar::dot(&cell.rhs, &scaled) - box_term,
        origin_cell: cell.cell.clone(),
        generation,
    };
    let v = cut.violation(x, |_| T::zero());
    if !(v > T::lit(1e-9).max(T::epsilon().sqrt() * T::lit(1e-2))) {
        return Err(SolveError::CutNotViolated(cell.cell.clone()));
    }
    Ok(cut)
}

/// `Σ_P pᴾ(hᴾ − Tᴾx)ᵀλᴾ ≤ Θ` from one optimality cut per cell.
pub fn single_cut<T: Scalar>(cell_cuts: &[Cut<T>], n: usize, generation: usize) -> Cut<T> {
    let mut coeff_x = vec![T::zero(); n];
    let mut constant = T::zero();
    let mut origin = Vec::new();
    for c in cell_cuts {
        constant += c.constant;
        for (acc, &v) in coeff_x.iter_mut().zip(&c.coeff_x) {
            *acc += v;
        }
        origin.extend_from_slice(&c.origin_cell);
    }
    origin.sort_unstable();
    Cut {
        kind: CutKind::Optimality,
        coeff_x,
        coeff_theta: vec![(ThetaVar::Total, T::one())],
        constant,
        origin_cell: origin,
        generation,
    }
}

/// Solves a continuous problem with one of the four Benders methods.
pub fn run<T: Scalar>(
    method: Method,
    problem: &TwoStageProblem<T>,
    extractor: &DualKeyExtractor,
    config: &SolverConfig<T>,
) -> Result<SolveReport<T>, SolveError> {
    if !problem.first_stage_binary.is_empty() {
        return Err(SolveError::BinaryNotSupported(method));
    }
    problem.validate()?;
    let run = Run::new(method, problem, extractor, config)?;
    match method {
        Method::SingleCut => run.drive_single(),
        Method::MultiCut => run.drive_multi(),
        Method::AdaptiveCut | Method::AdaptiveSingleCut => run.drive_adaptive(),
        Method::DeterministicEquivalent | Method::Gapm => {
            unreachable!("{method} is not a Benders method")
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Scenario;

    fn toy() -> TwoStageProblem<f64> {
        TwoStageProblem {
            first_stage_cost: vec![1.0, 0.0],
            first_stage_rows: vec![],
            first_stage_lower: vec![0.0, 0.0],
            first_stage_upper: vec![5.0, 5.0],
            first_stage_binary: vec![],
            recourse_matrix: vec![vec![1.0, -1.0]],
            recourse_cost: vec![2.0, 0.0],
            recourse_lower: vec![0.0, 0.0],
            recourse_upper: vec![f64::INFINITY, f64::INFINITY],
            scenarios: vec![
                Scenario {
                    probability: 0.5,
                    technology: vec![vec![1.0, 0.0]],
                    rhs: vec![2.0],
                    label: "a".into(),
                },
                Scenario {
                    probability: 0.5,
                    technology: vec![vec![1.0, 0.0]],
                    rhs: vec![4.0],
                    label: "b".into(),
                },
            ],
            theta_lb: 0.0,
        }
    }

    #[test]
    fn hand_built_violation() {
        let cut = Cut {
            kind: CutKind::Optimality,
            coeff_x: vec![2.0],
            coeff_theta: vec![(ThetaVar::Scenario(0), 1.0)],
            constant: 0.0,
            origin_cell: vec![0],
            generation: 0,
        };
        assert_eq!(cut.violation(&[1.0], |_| 1.0), 1.0);
        assert_eq!(cut.violation(&[1.0], |_| 2.0), 0.0);
    }

    #[test]
    fn zero_dual_gives_trivial_cut() {
        let pr = toy();
        let agg = pr.aggregate_cell(&[0]).unwrap();
        let cut = optimality_cut(&pr, &agg, &[0.0], 0.0, 0);
        assert_eq!(cut.constant, 0.0);
        assert!(cut.coeff_x.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn aggregated_cut_with_equal_duals_is_sum_of_singletons() {
        let pr = toy();
        let lam = [1.5];
        let whole = optimality_cut(&pr, &pr.aggregate_cell(&[0, 1]).unwrap(), &lam, 0.0, 0);
        let a = optimality_cut(&pr, &pr.aggregate_cell(&[0]).unwrap(), &lam, 0.0, 0);
        let b = optimality_cut(&pr, &pr.aggregate_cell(&[1]).unwrap(), &lam, 0.0, 0);
        assert!((whole.constant - (a.constant + b.constant)).abs() < 1e-12);
        for j in 0..2 {
            assert!((whole.coeff_x[j] - (a.coeff_x[j] + b.coeff_x[j])).abs() < 1e-12);
        }
        assert_eq!(
            whole.coeff_theta,
            vec![(ThetaVar::Scenario(0), 0.5), (ThetaVar::Scenario(1), 0.5)]
        );
    }

    #[test]
    fn single_cut_adds_cell_cuts() {
        let pr = toy();
        let a = optimality_cut(&pr, &pr.aggregate_cell(&[0]).unwrap(), &[1.0], 0.0, 0);
        let b = optimality_cut(&pr, &pr.aggregate_cell(&[1]).unwrap(), &[2.0], 0.0, 0);
        let s = single_cut(&[a.clone(), b.clone()], 2, 0);
        assert_eq!(s.constant, a.constant + b.constant);
        assert_eq!(s.coeff_x[0], a.coeff_x[0] + b.coeff_x[0]);
        assert_eq!(s.coeff_theta, vec![(ThetaVar::Total, 1.0)]);
    }

    #[test]
    fn feasibility_cut_is_scale_free_and_violated() {
        // Recourse y0 = h − x0 with y1 fixed to zero is infeasible for x0 > h.
        let mut pr = toy();
        pr.recourse_upper[1] = 0.0;
        let agg = pr.aggregate_cell(&[0]).unwrap();
        let x = [3.0, 0.0];
        let (out, _) = pr.solve_recourse(&x, &agg, None).unwrap();
        let crate::model::RecourseOutcome::Infeasible { ray, .. } = out else {
            panic!("expected infeasible");
        };
        let c1 = feasibility_cut(&pr, &agg, &ray, &x, 0).unwrap();
        let doubled: Vec<f64> = ray.iter().map(|v| 2.0 * v).collect();
        let c2 = feasibility_cut(&pr, &agg, &doubled, &x, 0).unwrap();
        assert_eq!(c1, c2);
        assert!(c1.violation(&x, |_| 0.0) > 1e-9);
        assert!(c1.violation(&[2.0, 0.0], |_| 0.0) <= 1e-12);
        assert!(matches!(
            feasibility_cut(&pr, &agg, &ray, &[1.0, 0.0], 0),
            Err(SolveError::CutNotViolated(_))
        ));
    }
}
