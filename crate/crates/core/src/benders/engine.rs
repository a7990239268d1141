use std::collections::HashMap;
use std::time::Instant;

use log::{debug, info};
use rayon::prelude::*;

use crate::lp::BasisHint;
use crate::model::{AggregatedScenario, RecourseOutcome, ScenarioData, TwoStageProblem};
use crate::partition::{check_cell_conditions, DualKey, DualKeyExtractor, Partition};
use crate::report::{Method, SolveError, SolveReport, SolveStatus, SolverConfig, TracePoint};
use crate::scalar::Scalar;

use super::{
    feasibility_cut, optimality_cut, single_cut, Cut, CutKind, Master, MasterOutcome, ThetaMode,
};

pub(crate) enum Refinement {
    Converged,
    Refined,
}

/// Master solve result handed to the drivers.
pub(crate) struct MasterPoint<T> {
    pub x: Vec<T>,
    pub theta: Vec<T>,
    pub objective: T,
}

/// State shared by every Benders driver, including the branch-and-bound one.
pub(crate) struct Run<'a, T: Scalar> {
    pub method: Method,
    pub problem: &'a TwoStageProblem<T>,
    extractor: &'a DualKeyExtractor,
    pub config: &'a SolverConfig<T>,
    pub start: Instant,
    pub master: Master<T>,
    pub partition: Partition,
    aggregates: Vec<AggregatedScenario<T>>,
    cell_hints: Vec<Option<BasisHint>>,
    scenario_hints: Vec<Option<BasisHint>>,
    pool: Option<rayon::ThreadPool>,
    pub z_lower: T,
    pub z_upper: T,
    /// Master objective of the latest solve.
    pub last_bound: T,
    pub incumbent: Option<Vec<T>>,
    pub iterations: usize,
    pub optimality_cuts: usize,
    pub feasibility_cuts: usize,
    pub refinements: usize,
    pub nodes: usize,
    pub trace: Vec<TracePoint<T>>,
    pub generation_bounds: Vec<T>,
    cuts: Vec<Cut<T>>,
    /// Per-scenario outcomes at the last evaluated point.
    cache: Option<(Vec<T>, Vec<RecourseOutcome<T>>)>,
}

fn solve_batch<T: Scalar, S: ScenarioData<T> + Sync>(
    problem: &TwoStageProblem<T>,
    pool: Option<&rayon::ThreadPool>,
    x: &[T],
    sources: &[&S],
    hints: &mut [&mut Option<BasisHint>],
) -> Result<Vec<RecourseOutcome<T>>, SolveError> {
    let one = |src: &S, hint: &mut Option<BasisHint>| {
        let (out, basis) = problem.solve_recourse(x, src, hint.as_ref())?;
        *hint = Some(basis);
        Ok(out)
    };
    match pool {
        Some(pool) => pool.install(|| {
            sources
                .par_iter()
                .zip(hints.par_iter_mut())
                .map(|(src, hint)| one(src, hint))
                .collect()
        }),
        None => sources
            .iter()
            .zip(hints.iter_mut())
            .map(|(src, hint)| one(src, hint))
            .collect(),
    }
}

impl<'a, T: Scalar> Run<'a, T> {
    pub fn new(
        method: Method,
        problem: &'a TwoStageProblem<T>,
        extractor: &'a DualKeyExtractor,
        config: &'a SolverConfig<T>,
    ) -> Result<Self, SolveError> {
        let s = problem.num_scenarios();
        let (mode, partition) = match method {
            Method::MultiCut => (ThetaMode::PerScenario, Partition::singletons(s)),
            Method::SingleCut => (ThetaMode::Single, Partition::singletons(s)),
            Method::AdaptiveCut => (ThetaMode::PerScenario, config.initial_partition.build(s)?),
            Method::AdaptiveSingleCut => (ThetaMode::Single, config.initial_partition.build(s)?),
            Method::DeterministicEquivalent | Method::Gapm => {
                unreachable!("{method} does not use a Benders master")
            }
        };
        let aggregates = partition
            .cells()
            .iter()
            .map(|c| problem.aggregate_cell(c))
            .collect::<Result<Vec<_>, _>>()?;
        let pool = if config.threads > 1 {
            rayon::ThreadPoolBuilder::new()
                .num_threads(config.threads)
                .build()
                .ok()
        } else {
            None
        };
        Ok(Self {
            method,
            problem,
            extractor,
            config,
            start: Instant::now(),
            master: Master::new(problem, mode),
            cell_hints: vec![None; partition.len()],
            scenario_hints: vec![None; s],
            partition,
            aggregates,
            pool,
            z_lower: T::neg_infinity(),
            z_upper: T::infinity(),
            last_bound: T::neg_infinity(),
            incumbent: None,
            iterations: 0,
            optimality_cuts: 0,
            feasibility_cuts: 0,
            refinements: 0,
            nodes: 0,
            trace: Vec::new(),
            generation_bounds: Vec::new(),
            cuts: Vec::new(),
            cache: None,
        })
    }

    pub fn elapsed(&self) -> f64 {
        self.start.elapsed().as_secs_f64()
    }

    pub fn limit_status(&self) -> Option<SolveStatus> {
        if let Some(limit) = self.config.time_limit {
            if self.start.elapsed() >= limit {
                return Some(SolveStatus::TimeLimit);
            }
        }
        if let Some(limit) = self.config.iteration_limit {
            if self.iterations >= limit {
                return Some(SolveStatus::IterLimit);
            }
        }
        None
    }

    pub fn gap_closed(&self) -> bool {
        self.z_upper.is_finite()
            && self.z_upper - self.z_lower <= self.config.tol_gap * (T::one() + self.z_upper.abs())
    }

    pub fn record(&mut self) {
        let point = TracePoint {
            elapsed_seconds: self.elapsed(),
            z_lower: self.z_lower,
            z_upper: self.z_upper,
            partition_size: self.partition.len(),
            cumulative_cuts: self.optimality_cuts + self.feasibility_cuts,
        };
        self.trace.push(point);
    }

    pub fn solve_master(&mut self) -> Result<Option<MasterPoint<T>>, SolveError> {
        self.iterations += 1;
        match self.master.solve()? {
            MasterOutcome::Optimal {
                x,
                theta,
                objective,
            } => {
                self.last_bound = objective;
                Ok(Some(MasterPoint {
                    x,
                    theta,
                    objective,
                }))
            }
            MasterOutcome::Infeasible => Ok(None),
        }
    }

    fn add_cut(&mut self, cut: Cut<T>) {
        self.master.add_cut(&cut);
        match cut.kind {
            CutKind::Optimality => self.optimality_cuts += 1,
            CutKind::Feasibility => self.feasibility_cuts += 1,
        }
        if self.config.record_cuts {
            self.cuts.push(cut);
        }
    }

    fn violated(&self, cut: &Cut<T>, x: &[T], theta: &[T]) -> bool {
        let rhs = cut.theta_side(|v| self.master.theta_value(theta, v));
        let v = cut.constant + crate::scalar::dot(&cut.coeff_x, x) - rhs;
        v > self.config.tol_cut * (T::one() + rhs.abs())
    }

    fn cached_at(&self, x: &[T]) -> Option<&[RecourseOutcome<T>]> {
        match &self.cache {
            Some((cx, outs)) if cx.as_slice() == x => Some(outs),
            _ => None,
        }
    }

    /// Recourse outcomes of every cell at `x`.
    fn solve_cells(&mut self, x: &[T]) -> Result<Vec<RecourseOutcome<T>>, SolveError> {
        let k = self.partition.len();
        let mut results: Vec<Option<RecourseOutcome<T>>> = vec![None; k];
        if let Some(cached) = self.cached_at(x) {
            for (c, cell) in self.partition.cells().iter().enumerate() {
                if let [s] = cell.as_slice() {
                    results[c] = Some(cached[*s].clone());
                }
            }
        }
        let todo: Vec<usize> = (0..k).filter(|&c| results[c].is_none()).collect();
        if !todo.is_empty() {
            let sources: Vec<&AggregatedScenario<T>> =
                todo.iter().map(|&c| &self.aggregates[c]).collect();
            let mut hint_refs: Vec<&mut Option<BasisHint>> = Vec::with_capacity(todo.len());
            let mut pending = todo.iter().peekable();
            for (c, h) in self.cell_hints.iter_mut().enumerate() {
                if pending.peek() == Some(&&c) {
                    hint_refs.push(h);
                    pending.next();
                }
            }
            let outs = solve_batch(
                self.problem,
                self.pool.as_ref(),
                x,
                &sources,
                &mut hint_refs,
            )?;
            for (c, out) in todo.into_iter().zip(outs) {
                results[c] = Some(out);
            }
        }
        Ok(results
            .into_iter()
            .map(|r| r.expect("every cell solved"))
            .collect())
    }

    /// Recourse outcomes of every scenario at `x`, cached per point.
    fn solve_scenarios(&mut self, x: &[T]) -> Result<Vec<RecourseOutcome<T>>, SolveError> {
        if let Some(cached) = self.cached_at(x) {
            return Ok(cached.to_vec());
        }
        let sources: Vec<_> = self.problem.scenarios.iter().collect();
        let mut hint_refs: Vec<&mut Option<BasisHint>> = self.scenario_hints.iter_mut().collect();
        let outs = solve_batch(
            self.problem,
            self.pool.as_ref(),
            x,
            &sources,
            &mut hint_refs,
        )?;
        self.cache = Some((x.to_vec(), outs.clone()));
        Ok(outs)
    }

    /// Records `cᵀx + Σ pˢ Qˢ` as a candidate upper bound.
    pub fn offer_upper(&mut self, x: &[T], outcomes: &[RecourseOutcome<T>]) -> Option<T> {
        let mut total = crate::scalar::dot(&self.problem.first_stage_cost, x);
        for (sc, out) in self.problem.scenarios.iter().zip(outcomes) {
            total += sc.probability * out.value()?;
        }
        if total < self.z_upper {
            self.z_upper = total;
            self.incumbent = Some(x.to_vec());
        }
        Some(total)
    }

    /// Generates the cuts of every cell at `(x, θ)` and returns how many
    /// were added together with the cell outcomes.
    pub fn separate_cells(
        &mut self,
        x: &[T],
        theta: &[T],
    ) -> Result<(usize, Vec<RecourseOutcome<T>>), SolveError> {
        let outcomes = self.solve_cells(x)?;
        let generation = self.partition.generation();
        let mut fresh = Vec::new();
        let mut cell_cuts = Vec::new();
        for (c, out) in outcomes.iter().enumerate() {
            let agg = &self.aggregates[c];
            match out {
                RecourseOutcome::Infeasible { ray, .. } => {
                    fresh.push(feasibility_cut(self.problem, agg, ray, x, generation)?);
                }
                RecourseOutcome::Optimal {
                    dual, bound_term, ..
                } => cell_cuts.push(optimality_cut(
                    self.problem,
                    agg,
                    dual,
                    *bound_term,
                    generation,
                )),
            }
        }
        match self.master.mode() {
            ThetaMode::PerScenario => {
                for cut in cell_cuts {
                    if self.violated(&cut, x, theta) {
                        fresh.push(cut);
                    }
                }
            }
            ThetaMode::Single => {
                if fresh.is_empty() {
                    let n = self.problem.num_first_stage();
                    let cut = single_cut(&cell_cuts, n, generation);
                    if self.violated(&cut, x, theta) {
                        fresh.push(cut);
                    }
                }
            }
        }
        // Feasibility cuts first, each group in cell order.
        fresh.sort_by_key(|c| c.kind != CutKind::Feasibility);
        let added = fresh.len();
        for cut in fresh {
            self.add_cut(cut);
        }
        Ok((added, outcomes))
    }

    /// Evaluates every scenario at `x`, then either confirms that every cell
    /// meets the aggregation conditions or refines the failing cells.
    pub fn evaluate_and_refine(&mut self, x: &[T]) -> Result<Refinement, SolveError> {
        let outcomes = self.solve_scenarios(x)?;
        self.offer_upper(x, &outcomes);
        let duals: Vec<Option<&[T]>> = outcomes.iter().map(|o| o.dual()).collect();
        let mut failing = vec![false; self.partition.len()];
        for (c, cell) in self.partition.cells().iter().enumerate() {
            failing[c] = cell.iter().any(|&s| duals[s].is_none())
                || !check_cell_conditions(
                    self.problem,
                    cell,
                    &duals,
                    x,
                    self.config.condition_tol,
                )?;
        }
        if !failing.iter().any(|&f| f) {
            return Ok(Refinement::Converged);
        }
        let keys: Vec<DualKey<T>> = outcomes
            .iter()
            .map(|o| match o {
                RecourseOutcome::Optimal { dual, .. } => self.extractor.dual_key(dual),
                RecourseOutcome::Infeasible { ray, .. } => self.extractor.ray_key(ray),
            })
            .collect();
        let refined = self
            .partition
            .refine_strict(&keys, self.config.refine_tol, &failing)?;
        debug!(
            "refinement {}: {} -> {} cells",
            self.refinements + 1,
            self.partition.len(),
            refined.len()
        );
        self.generation_bounds.push(self.last_bound);
        self.install_partition(refined)?;
        self.refinements += 1;
        let generation = self.partition.generation();

        // One singleton feasibility cut per group of scenarios sharing a ray.
        let mut cuts = Vec::new();
        let mut seen_rays: Vec<&DualKey<T>> = Vec::new();
        for cell in self.partition.cells() {
            for &s in cell {
                if let RecourseOutcome::Infeasible { ray, .. } = &outcomes[s] {
                    if seen_rays.iter().any(|k| **k == keys[s]) {
                        continue;
                    }
                    seen_rays.push(&keys[s]);
                    let agg = self.problem.aggregate_cell(&[s])?;
                    cuts.push(feasibility_cut(self.problem, &agg, ray, x, generation)?);
                }
            }
        }
        if self.master.mode() == ThetaMode::Single && outcomes.iter().all(|o| o.is_feasible()) {
            let per_scenario: Vec<Cut<T>> = outcomes
                .iter()
                .enumerate()
                .map(|(s, o)| {
                    let RecourseOutcome::Optimal {
                        dual, bound_term, ..
                    } = o
                    else {
                        unreachable!("all scenarios are feasible")
                    };
                    let agg = self.problem.aggregate_cell(&[s])?;
                    Ok(optimality_cut(
                        self.problem,
                        &agg,
                        dual,
                        *bound_term,
                        generation,
                    ))
                })
                .collect::<Result<_, SolveError>>()?;
            cuts.push(single_cut(
                &per_scenario,
                self.problem.num_first_stage(),
                generation,
            ));
        }
        for cut in cuts {
            self.add_cut(cut);
        }
        Ok(Refinement::Refined)
    }

    fn install_partition(&mut self, partition: Partition) -> Result<(), SolveError> {
        let mut old: HashMap<Vec<usize>, (AggregatedScenario<T>, Option<BasisHint>)> = self
            .partition
            .cells()
            .iter()
            .cloned()
            .zip(self.aggregates.drain(..).zip(self.cell_hints.drain(..)))
            .collect();
        for cell in partition.cells() {
            match old.remove(cell) {
                Some((agg, hint)) => {
                    self.aggregates.push(agg);
                    self.cell_hints.push(hint);
                }
                None => {
                    self.aggregates.push(self.problem.aggregate_cell(cell)?);
                    self.cell_hints.push(None);
                }
            }
        }
        self.partition = partition;
        Ok(())
    }

    pub fn finish(mut self, status: SolveStatus) -> SolveReport<T> {
        self.generation_bounds.push(self.last_bound);
        self.record();
        let wall_seconds = self.elapsed();
        info!(
            "{}: {status} objective {} bounds [{}, {}] after {} iterations",
            self.method, self.z_upper, self.z_lower, self.z_upper, self.iterations
        );
        SolveReport {
            method: self.method,
            status,
            x: self.incumbent.unwrap_or_default(),
            objective: self.z_upper,
            lower_bound: self.z_lower,
            upper_bound: self.z_upper,
            iterations: self.iterations,
            optimality_cuts: self.optimality_cuts,
            feasibility_cuts: self.feasibility_cuts,
            refinements: self.refinements,
            nodes: self.nodes,
            trace: self.trace,
            generation_bounds: self.generation_bounds,
            final_partition: self.partition,
            cuts: self.cuts,
            wall_seconds,
        }
    }

    fn infeasible(mut self) -> SolveReport<T> {
        self.z_lower = T::infinity();
        self.finish(SolveStatus::Infeasible)
    }

    /// Multi-cut and single-cut loop: cuts from every scenario at every
    /// master solution until none is violated.
    pub fn drive_fixed(mut self) -> Result<SolveReport<T>, SolveError> {
        let gap_stop = self.method == Method::SingleCut;
        loop {
            if let Some(status) = self.limit_status() {
                return Ok(self.finish(status));
            }
            let Some(point) = self.solve_master()? else {
                return Ok(self.infeasible());
            };
            self.z_lower = self.z_lower.max(point.objective);
            let (added, outcomes) = self.separate_cells(&point.x, &point.theta)?;
            self.offer_upper(&point.x, &outcomes);
            self.record();
            if added == 0 || (gap_stop && self.gap_closed()) {
                return Ok(self.finish(SolveStatus::Optimal));
            }
        }
    }

    pub fn drive_single(self) -> Result<SolveReport<T>, SolveError> {
        self.drive_fixed()
    }

    pub fn drive_multi(self) -> Result<SolveReport<T>, SolveError> {
        self.drive_fixed()
    }

    /// Adaptive loop: cuts per cell until none is violated, then a full
    /// scenario sweep that either proves optimality or refines the
    /// partition and re-checks the same point.
    pub fn drive_adaptive(mut self) -> Result<SolveReport<T>, SolveError> {
        let mut pending: Option<MasterPoint<T>> = None;
        loop {
            if let Some(status) = self.limit_status() {
                return Ok(self.finish(status));
            }
            let point = match pending.take() {
                Some(p) => p,
                None => {
                    let Some(point) = self.solve_master()? else {
                        return Ok(self.infeasible());
                    };
                    self.z_lower = self.z_lower.max(point.objective);
                    self.record();
                    if self.gap_closed() {
                        return Ok(self.finish(SolveStatus::Optimal));
                    }
                    point
                }
            };
            let (added, _) = self.separate_cells(&point.x, &point.theta)?;
            if added > 0 {
                continue;
            }
            match self.evaluate_and_refine(&point.x)? {
                Refinement::Converged => return Ok(self.finish(SolveStatus::Optimal)),
                Refinement::Refined => {
                    if self.gap_closed() {
                        return Ok(self.finish(SolveStatus::Optimal));
                    }
                    pending = Some(point);
                }
            }
        }
    }
}
