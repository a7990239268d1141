//! Best-first branch-and-bound for binary first-stage variables.
//!
//! Benders cuts are separated lazily at integral node solutions and kept in
//! one global pool; the adaptive methods share one partition across the
//! whole tree.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::time::Instant;

use log::debug;

use crate::benders::Run;
use crate::lp::{self, LinearProgram, LpOutcome};
use crate::model::TwoStageProblem;
use crate::partition::DualKeyExtractor;
use crate::report::{Method, SolveError, SolveReport, SolveStatus, SolverConfig};
use crate::scalar::Scalar;

/// Distance from the nearest integer below which a value counts as binary.
pub const INTEGRALITY_TOL: f64 = 1e-6;

#[derive(Clone, Debug)]
struct Node<T> {
    id: usize,
    bound: T,
    depth: usize,
    fixings: Vec<(usize, bool)>,
}

impl<T: Scalar> PartialEq for Node<T> {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl<T: Scalar> Eq for Node<T> {}

impl<T: Scalar> PartialOrd for Node<T> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl<T: Scalar> Ord for Node<T> {
    /// Reversed so that `BinaryHeap` pops the smallest bound, then the
    /// oldest node.
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .bound
            .as_f64()
            .total_cmp(&self.bound.as_f64())
            .then_with(|| other.id.cmp(&self.id))
    }
}

struct Tree<T> {
    heap: BinaryHeap<Node<T>>,
    next_id: usize,
}

impl<T: Scalar> Tree<T> {
    fn new() -> Self {
        let mut heap = BinaryHeap::new();
        heap.push(Node {
            id: 0,
            bound: T::neg_infinity(),
            depth: 0,
            fixings: Vec::new(),
        });
        Self { heap, next_id: 1 }
    }

    fn branch(&mut self, parent: &Node<T>, bound: T, var: usize) {
        for value in [false, true] {
            let mut fixings = parent.fixings.clone();
            fixings.push((var, value));
            self.heap.push(Node {
                id: self.next_id,
                bound,
                depth: parent.depth + 1,
                fixings,
            });
            self.next_id += 1;
        }
    }

    fn best_bound(&self) -> Option<T> {
        self.heap.peek().map(|n| n.bound)
    }
}

/// Most fractional binary, ties broken by the lowest index.
fn branching_variable<T: Scalar>(x: &[T], binary: &[usize]) -> Option<usize> {
    let tol = T::lit(INTEGRALITY_TOL);
    let mut best: Option<(usize, T)> = None;
    for &j in binary {
        let frac = (x[j] - x[j].floor()).min(x[j].ceil() - x[j]);
        if frac > tol && best.is_none_or(|(_, b)| frac > b) {
            best = Some((j, frac));
        }
    }
    best.map(|(j, _)| j)
}

fn prunable<T: Scalar>(bound: T, incumbent: T, tol_gap: T) -> bool {
    incumbent.is_finite() && bound >= incumbent - tol_gap * (T::one() + incumbent.abs())
}

#[derive(Clone, Debug, PartialEq)]
pub struct BnbOutcome<T> {
    pub status: SolveStatus,
    pub x: Option<Vec<T>>,
    pub objective: T,
    pub bound: T,
    pub nodes: usize,
}

/// Branch-and-bound over an LP whose `binary` columns must end at 0 or 1.
pub fn lp_branch_and_bound<T: Scalar>(
    lp: &LinearProgram<T>,
    binary: &[usize],
    tol_gap: T,
    deadline: Option<Instant>,
) -> Result<BnbOutcome<T>, SolveError> {
    let mut tree: Tree<T> = Tree::new();
    let mut work = lp.clone();
    let mut incumbent: Option<Vec<T>> = None;
    let mut best = T::infinity();
    let mut nodes = 0;
    let mut hint = None;
    while let Some(node) = tree.heap.pop() {
        if deadline.is_some_and(|d| Instant::now() >= d) {
            let bound = node.bound.min(tree.best_bound().unwrap_or(node.bound));
            return Ok(BnbOutcome {
                status: SolveStatus::TimeLimit,
                x: incumbent,
                objective: best,
                bound,
                nodes,
            });
        }
        if prunable(node.bound, best, tol_gap) {
            continue;
        }
        for &j in binary {
            work.lower[j] = lp.lower[j];
            work.upper[j] = lp.upper[j];
        }
        for &(j, v) in &node.fixings {
            let v = if v { T::one() } else { T::zero() };
            work.lower[j] = v;
            work.upper[j] = v;
        }
        nodes += 1;
        let out = match &hint {
            Some(h) => lp::solve_with_basis(&work, h)?,
            None => lp::solve(&work)?,
        };
        hint = Some(out.basis().clone());
        let sol = match out {
            LpOutcome::Optimal(sol) => sol,
            LpOutcome::Infeasible(_) => continue,
            LpOutcome::Unbounded(_) => return Err(SolveError::MasterUnbounded),
        };
        if prunable(sol.objective, best, tol_gap) {
            continue;
        }
        match branching_variable(&sol.primal, binary) {
            Some(j) => tree.branch(&node, sol.objective, j),
            None => {
                if sol.objective < best {
                    best = sol.objective;
                    let mut x = sol.primal;
                    for &j in binary {
                        x[j] = x[j].round();
                    }
                    incumbent = Some(x);
                }
            }
        }
    }
    let status = if incumbent.is_some() {
        SolveStatus::Optimal
    } else {
        SolveStatus::Infeasible
    };
    Ok(BnbOutcome {
        status,
        x: incumbent,
        objective: best,
        bound: best,
        nodes,
    })
}

/// Solves a problem with binary first-stage variables by branch-and-bound
/// over the Benders master of `method`.
pub fn solve_binary<T: Scalar>(
    method: Method,
    problem: &TwoStageProblem<T>,
    extractor: &DualKeyExtractor,
    config: &SolverConfig<T>,
) -> Result<SolveReport<T>, SolveError> {
    if problem.first_stage_binary.is_empty() {
        return Err(SolveError::NoBinaryVariables);
    }
    problem.validate()?;
    let adaptive = matches!(method, Method::AdaptiveCut | Method::AdaptiveSingleCut);
    let binary = problem.first_stage_binary.clone();
    let mut run = Run::new(method, problem, extractor, config)?;
    let mut tree: Tree<T> = Tree::new();
    let tol_gap = config.tol_gap;

    while let Some(node) = tree.heap.pop() {
        if let Some(status) = run.limit_status() {
            let open = tree.best_bound().unwrap_or(node.bound).min(node.bound);
            run.z_lower = run.z_lower.max(open.min(run.z_upper));
            run.last_bound = run.z_lower;
            return Ok(run.finish(status));
        }
        if prunable(node.bound, run.z_upper, tol_gap) {
            continue;
        }
        for &j in &binary {
            run.master.set_bounds(
                j,
                problem.first_stage_lower[j],
                problem.first_stage_upper[j],
            );
        }
        for &(j, v) in &node.fixings {
            let v = if v { T::one() } else { T::zero() };
            run.master.set_bounds(j, v, v);
        }
        run.nodes += 1;
        let mut pending = None;
        loop {
            if run.limit_status().is_some() {
                tree.heap.push(node.clone());
                break;
            }
            let point = match pending.take() {
                Some(p) => p,
                None => {
                    let Some(point) = run.solve_master()? else {
                        break;
                    };
                    let open = tree
                        .best_bound()
                        .map_or(point.objective, |b| b.min(point.objective));
                    run.z_lower = run.z_lower.max(open.min(run.z_upper));
                    // A node's master value bounds only its subtree.
                    run.last_bound = run.z_lower;
                    run.record();
                    point
                }
            };
            if prunable(point.objective, run.z_upper, tol_gap) {
                break;
            }
            if let Some(j) = branching_variable(&point.x, &binary) {
                debug!("node {} depth {}: branch on x{j}", node.id, node.depth);
                tree.branch(&node, point.objective, j);
                break;
            }
            let mut x = point.x.clone();
            for &j in &binary {
                x[j] = x[j].round();
            }
            let (added, outcomes) = run.separate_cells(&x, &point.theta)?;
            if !adaptive {
                run.offer_upper(&x, &outcomes);
            }
            if added > 0 {
                continue;
            }
            if !adaptive {
                break;
            }
            match run.evaluate_and_refine(&x)? {
                crate::benders::Refinement::Converged => break,
                crate::benders::Refinement::Refined => pending = Some(point),
            }
        }
    }
    if run.incumbent.is_none() {
        run.z_lower = T::infinity();
        run.last_bound = run.z_lower;
        return Ok(run.finish(SolveStatus::Infeasible));
    }
    run.z_lower = run.z_upper;
    run.last_bound = run.z_lower;
    Ok(run.finish(SolveStatus::Optimal))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lp::{Constraint, Relation};

    #[test]
    fn knapsack_by_branching() {
        // max 5a + 4b + 3c s.t. 2a + 3b + c <= 4 (binary): a + c = 8.
        let mut lp = LinearProgram::<f64>::new(3);
        lp.cost = vec![-5.0, -4.0, -3.0];
        lp.upper = vec![1.0; 3];
        lp.add_row(Constraint::dense(&[2.0, 3.0, 1.0], Relation::LessEq, 4.0));
        let out = lp_branch_and_bound(&lp, &[0, 1, 2], 1e-9, None).unwrap();
        assert_eq!(out.status, SolveStatus::Optimal);
        assert!((out.objective + 8.0).abs() < 1e-9);
        assert_eq!(out.x.unwrap(), vec![1.0, 0.0, 1.0]);
    }

    #[test]
    fn integral_relaxation_needs_one_node() {
        let mut lp = LinearProgram::<f64>::new(2);
        lp.cost = vec![-1.0, 2.0];
        lp.upper = vec![1.0; 2];
        let out = lp_branch_and_bound(&lp, &[0, 1], 1e-9, None).unwrap();
        assert_eq!(out.nodes, 1);
        assert!((out.objective + 1.0).abs() < 1e-12);
    }

    #[test]
    fn infeasible_integer_program() {
        let mut lp = LinearProgram::<f64>::new(1);
        lp.upper = vec![1.0];
        lp.add_row(Constraint::dense(&[2.0], Relation::Eq, 1.0));
        let out = lp_branch_and_bound(&lp, &[0], 1e-9, None).unwrap();
        assert_eq!(out.status, SolveStatus::Infeasible);
    }

    #[test]
    fn most_fractional_with_lowest_index_ties() {
        assert_eq!(branching_variable(&[0.5, 0.5, 0.2], &[0, 1, 2]), Some(0));
        assert_eq!(branching_variable(&[0.9, 0.4, 1.0], &[0, 1, 2]), Some(1));
        assert_eq!(branching_variable(&[1.0, 0.0], &[0, 1]), None);
    }

    #[test]
    fn heap_pops_smallest_bound_first() {
        let mut heap = BinaryHeap::new();
        for (id, b) in [(0, 3.0), (1, 1.0), (2, 2.0), (3, 1.0)] {
            heap.push(Node {
                id,
                bound: b,
                depth: 0,
                fixings: vec![],
            });
        }
        let order: Vec<usize> = std::iter::from_fn(|| heap.pop().map(|n| n.id)).collect();
        assert_eq!(order, vec![1, 3, 2, 0]);
    }
}
