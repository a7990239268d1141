//! Generalized adaptive partition method: solve the deterministic equivalent
//! over a scenario partition, check the aggregation conditions at its first
//! stage, refine and repeat.

use std::time::Instant;

use log::debug;

use crate::lp::{self, BasisHint, LinearProgram, LpOutcome};
use crate::mip::lp_branch_and_bound;
use crate::model::{RecourseOutcome, TwoStageProblem};
use crate::partition::{check_cell_conditions, DualKey, DualKeyExtractor, Partition};
use crate::report::{
    InfeasibleIteratePolicy, Method, SolveError, SolveReport, SolveStatus, SolverConfig, TracePoint,
};
use crate::scalar::Scalar;

/// Result of one deterministic-equivalent solve.
pub(crate) struct DeSolve<T> {
    pub status: SolveStatus,
    pub x: Option<Vec<T>>,
    pub objective: T,
    pub bound: T,
    pub nodes: usize,
}

/// Solves a (possibly aggregated) deterministic equivalent, branching on the
/// first-stage binaries when there are any.
pub(crate) fn solve_de_lp<T: Scalar>(
    problem: &TwoStageProblem<T>,
    lp: &LinearProgram<T>,
    tol_gap: T,
    deadline: Option<Instant>,
) -> Result<DeSolve<T>, SolveError> {
    let n = problem.num_first_stage();
    if !problem.first_stage_binary.is_empty() {
        let out = lp_branch_and_bound(lp, &problem.first_stage_binary, tol_gap, deadline)?;
        return Ok(DeSolve {
            status: out.status,
            x: out.x.map(|mut x| {
                x.truncate(n);
                x
            }),
            objective: out.objective,
            bound: out.bound,
            nodes: out.nodes,
        });
    }
    match lp::solve(lp)? {
        LpOutcome::Optimal(sol) => Ok(DeSolve {
            status: SolveStatus::Optimal,
            x: Some(sol.primal[..n].to_vec()),
            objective: sol.objective,
            bound: sol.objective,
            nodes: 0,
        }),
        LpOutcome::Infeasible(_) => Ok(DeSolve {
            status: SolveStatus::Infeasible,
            x: None,
            objective: T::infinity(),
            bound: T::infinity(),
            nodes: 0,
        }),
        LpOutcome::Unbounded(_) => Err(SolveError::MasterUnbounded),
    }
}

/// Deterministic equivalent over every scenario.
pub fn solve_deterministic_equivalent<T: Scalar>(
    problem: &TwoStageProblem<T>,
    config: &SolverConfig<T>,
) -> Result<SolveReport<T>, SolveError> {
    problem.validate()?;
    let start = Instant::now();
    let partition = Partition::singletons(problem.num_scenarios());
    let (lp, _) = problem.relaxed_deterministic_equivalent(&partition)?;
    let deadline = config.time_limit.map(|d| start + d);
    let de = solve_de_lp(problem, &lp, config.tol_gap, deadline)?;
    let wall_seconds = start.elapsed().as_secs_f64();
    let lower = if de.status == SolveStatus::Infeasible {
        T::infinity()
    } else {
        de.bound
    };
    Ok(SolveReport {
        method: Method::DeterministicEquivalent,
        status: de.status,
        x: de.x.unwrap_or_default(),
        objective: de.objective,
        lower_bound: lower,
        upper_bound: de.objective,
        iterations: 1,
        optimality_cuts: 0,
        feasibility_cuts: 0,
        refinements: 0,
        nodes: de.nodes,
        trace: vec![TracePoint {
            elapsed_seconds: wall_seconds,
            z_lower: lower,
            z_upper: de.objective,
            partition_size: partition.len(),
            cumulative_cuts: 0,
        }],
        generation_bounds: vec![de.objective],
        final_partition: partition,
        cuts: Vec::new(),
        wall_seconds,
    })
}

pub fn solve_gapm<T: Scalar>(
    problem: &TwoStageProblem<T>,
    extractor: &DualKeyExtractor,
    config: &SolverConfig<T>,
) -> Result<SolveReport<T>, SolveError> {
    problem.validate()?;
    let start = Instant::now();
    let deadline = config.time_limit.map(|d| start + d);
    let s_count = problem.num_scenarios();
    let mut partition = config.initial_partition.build(s_count)?;
    let mut hints: Vec<Option<BasisHint>> = vec![None; s_count];
    let mut z_lower = T::neg_infinity();
    let mut z_upper = T::infinity();
    let mut incumbent: Option<Vec<T>> = None;
    let mut iterations = 0;
    let mut refinements = 0;
    let mut nodes = 0;
    let mut trace = Vec::new();
    let mut generation_bounds = Vec::new();

    let status = loop {
        if config.time_limit.is_some_and(|d| start.elapsed() >= d) {
            break SolveStatus::TimeLimit;
        }
        if config.iteration_limit.is_some_and(|k| iterations >= k) {
            break SolveStatus::IterLimit;
        }
        let (lp, _) = problem.relaxed_deterministic_equivalent(&partition)?;
        let de = solve_de_lp(problem, &lp, config.tol_gap, deadline)?;
        iterations += 1;
        nodes += de.nodes;
        // The aggregated problem relaxes the original one.
        if de.status == SolveStatus::Infeasible {
            z_lower = T::infinity();
            break SolveStatus::Infeasible;
        }
        generation_bounds.push(de.bound);
        z_lower = z_lower.max(de.bound);
        let Some(x) = de.x else {
            break de.status;
        };

        let mut outcomes = Vec::with_capacity(s_count);
        for (s, sc) in problem.scenarios.iter().enumerate() {
            let (out, basis) = problem.solve_recourse(&x, sc, hints[s].as_ref())?;
            hints[s] = Some(basis);
            outcomes.push(out);
        }
        if outcomes.iter().all(|o| o.is_feasible()) {
            let mut total = crate::scalar::dot(&problem.first_stage_cost, &x);
            for (sc, o) in problem.scenarios.iter().zip(&outcomes) {
                total += sc.probability * o.value().expect("feasible");
            }
            if total < z_upper {
                z_upper = total;
                incumbent = Some(x.clone());
            }
        } else if config.infeasible_iterate == InfeasibleIteratePolicy::Error {
            let bad = (0..s_count)
                .filter(|&s| !outcomes[s].is_feasible())
                .collect();
            return Err(SolveError::ScenarioInfeasibleAtIterate(bad));
        }
        trace.push(TracePoint {
            elapsed_seconds: start.elapsed().as_secs_f64(),
            z_lower,
            z_upper,
            partition_size: partition.len(),
            cumulative_cuts: 0,
        });
        if de.status != SolveStatus::Optimal {
            break de.status;
        }

        let duals: Vec<Option<&[T]>> = outcomes.iter().map(|o| o.dual()).collect();
        let mut failing = vec![false; partition.len()];
        for (c, cell) in partition.cells().iter().enumerate() {
            failing[c] = cell.iter().any(|&s| duals[s].is_none())
                || !check_cell_conditions(problem, cell, &duals, &x, config.condition_tol)?;
        }
        if !failing.iter().any(|&f| f) {
            break SolveStatus::Optimal;
        }
        if z_upper.is_finite() && z_upper - z_lower <= config.tol_gap * (T::one() + z_upper.abs()) {
            break SolveStatus::Optimal;
        }
        let keys: Vec<DualKey<T>> = outcomes
            .iter()
            .map(|o| match o {
                RecourseOutcome::Optimal { dual, .. } => extractor.dual_key(dual),
                RecourseOutcome::Infeasible { ray, .. } => extractor.ray_key(ray),
            })
            .collect();
        let refined = partition.refine_strict(&keys, config.refine_tol, &failing)?;
        debug!(
            "gapm refinement {}: {} -> {} cells",
            refinements + 1,
            partition.len(),
            refined.len()
        );
        partition = refined;
        refinements += 1;
    };

    if status == SolveStatus::Optimal && z_upper.is_finite() {
        z_lower = z_lower.min(z_upper);
    }
    let wall_seconds = start.elapsed().as_secs_f64();
    trace.push(TracePoint {
        elapsed_seconds: wall_seconds,
        z_lower,
        z_upper,
        partition_size: partition.len(),
        cumulative_cuts: 0,
    });
    Ok(SolveReport {
        method: Method::Gapm,
        status,
        x: incumbent.unwrap_or_default(),
        objective: z_upper,
        lower_bound: z_lower,
        upper_bound: z_upper,
        iterations,
        optimality_cuts: 0,
        feasibility_cuts: 0,
        refinements,
        nodes,
        trace,
        generation_bounds,
        final_partition: partition,
        cuts: Vec::new(),
        wall_seconds,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Scenario;

    fn newsvendor(demands: &[f64]) -> TwoStageProblem<f64> {
        // Order x at cost 1, sell min(x, d) at 3, salvage leftovers at 0:
        // y0 sold, y1 leftover, y0 + y1 = x, y0 ≤ d via slack y2.
        let p = 1.0 / demands.len() as f64;
        TwoStageProblem {
            first_stage_cost: vec![1.0],
            first_stage_rows: vec![],
            first_stage_lower: vec![0.0],
            first_stage_upper: vec![100.0],
            first_stage_binary: vec![],
            recourse_matrix: vec![vec![1.0, 1.0, 0.0], vec![1.0, 0.0, 1.0]],
            recourse_cost: vec![-3.0, 0.0, 0.0],
            recourse_lower: vec![0.0; 3],
            recourse_upper: vec![f64::INFINITY; 3],
            scenarios: demands
                .iter()
                .map(|&d| Scenario {
                    probability: p,
                    technology: vec![vec![-1.0], vec![0.0]],
                    rhs: vec![0.0, d],
                    label: String::new(),
                })
                .collect(),
            theta_lb: -300.0,
        }
    }

    #[test]
    fn duplicate_scenarios_stay_in_one_cell() {
        let pr = newsvendor(&[5.0, 5.0, 5.0]);
        let rep = solve_gapm(&pr, &DualKeyExtractor::full(), &SolverConfig::default()).unwrap();
        assert_eq!(rep.status, SolveStatus::Optimal);
        assert_eq!(rep.final_partition_size(), 1);
        assert!((rep.objective + 10.0).abs() < 1e-9);
    }

    #[test]
    fn agrees_with_deterministic_equivalent() {
        let pr = newsvendor(&[2.0, 4.0, 6.0, 9.0]);
        let cfg = SolverConfig::default();
        let de = solve_deterministic_equivalent(&pr, &cfg).unwrap();
        let g = solve_gapm(&pr, &DualKeyExtractor::full(), &cfg).unwrap();
        assert_eq!(g.status, SolveStatus::Optimal);
        assert!((de.objective - g.objective).abs() < 1e-7 * (1.0 + de.objective.abs()));
        // Generation bounds of a refining sequence never decrease.
        for w in g.generation_bounds.windows(2) {
            assert!(w[1] >= w[0] - 1e-9);
        }
    }

    #[test]
    fn single_scenario_needs_one_solve() {
        let pr = newsvendor(&[7.0]);
        let rep = solve_gapm(&pr, &DualKeyExtractor::full(), &SolverConfig::default()).unwrap();
        assert_eq!(rep.iterations, 1);
        assert!((rep.objective + 14.0).abs() < 1e-9);
    }
}
