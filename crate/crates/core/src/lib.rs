//! Solvers for two-stage stochastic linear programs with fixed recourse.
//!
//! The LP kernel, partitions and decomposition methods are generic over the
//! floating-point scalar; the aliases below fix it to `f64`.

pub mod benders;
pub mod gapm;
pub mod lp;
pub mod mip;
pub mod model;
pub mod partition;
pub mod problems;
pub mod report;
pub mod scalar;

pub use model::{ModelError, Scenario, TwoStageProblem};
pub use partition::{DualKeyExtractor, Partition};
pub use report::{
    InfeasibleIteratePolicy, InitialPartition, Method, SolveError, SolveReport, SolveStatus,
    SolverConfig, TracePoint,
};
pub use scalar::{LpTolerances, Scalar};

pub type Problem = model::TwoStageProblem<f64>;
pub type Config = report::SolverConfig<f64>;
pub type Report = report::SolveReport<f64>;
pub type Lp = lp::LinearProgram<f64>;
pub type Cut = benders::Cut<f64>;

/// Solves `problem` with `method`. Problems with binary first-stage
/// variables go through branch-and-bound.
pub fn solve<T: Scalar>(
    method: Method,
    problem: &TwoStageProblem<T>,
    extractor: &DualKeyExtractor,
    config: &SolverConfig<T>,
) -> Result<SolveReport<T>, SolveError> {
    match method {
        Method::DeterministicEquivalent => gapm::solve_deterministic_equivalent(problem, config),
        Method::Gapm => gapm::solve_gapm(problem, extractor, config),
        _ if !problem.first_stage_binary.is_empty() => {
            mip::solve_binary(method, problem, extractor, config)
        }
        _ => benders::run(method, problem, extractor, config),
    }
}
