//! Method selection, solver configuration and run reports.

use std::fmt;
use std::str::FromStr;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::benders::Cut;
use crate::lp::LpError;
use crate::model::ModelError;
use crate::partition::{Partition, PartitionError};
use crate::scalar::Scalar;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Method {
    #[serde(rename = "de")]
    DeterministicEquivalent,
    #[serde(rename = "gapm")]
    Gapm,
    #[serde(rename = "single")]
    SingleCut,
    #[serde(rename = "multi")]
    MultiCut,
    #[serde(rename = "adaptive")]
    AdaptiveCut,
    #[serde(rename = "adaptive-single")]
    AdaptiveSingleCut,
}

impl Method {
    pub const ALL: [Method; 6] = [
        Method::DeterministicEquivalent,
        Method::Gapm,
        Method::SingleCut,
        Method::MultiCut,
        Method::AdaptiveCut,
        Method::AdaptiveSingleCut,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::DeterministicEquivalent => "de",
            Method::Gapm => "gapm",
            Method::SingleCut => "single",
            Method::MultiCut => "multi",
            Method::AdaptiveCut => "adaptive",
            Method::AdaptiveSingleCut => "adaptive-single",
        }
    }

    pub fn is_benders(self) -> bool {
        !matches!(self, Method::DeterministicEquivalent | Method::Gapm)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Debug, Error, PartialEq, Eq)]
#[error(
    "unknown method `{0}` (expected one of de, gapm, single, multi, adaptive, adaptive-single)"
)]
pub struct UnknownMethod(pub String);

impl FromStr for Method {
    type Err = UnknownMethod;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| UnknownMethod(s.to_string()))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SolveStatus {
    Optimal,
    TimeLimit,
    IterLimit,
    Infeasible,
}

impl fmt::Display for SolveStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            SolveStatus::Optimal => "optimal",
            SolveStatus::TimeLimit => "time_limit",
            SolveStatus::IterLimit => "iter_limit",
            SolveStatus::Infeasible => "infeasible",
        };
        f.write_str(s)
    }
}

/// Starting partition of the adaptive methods.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum InitialPartition {
    Whole,
    Singletons,
    /// `cells` cells of a seeded random shuffle, as equal as possible.
    Random {
        cells: usize,
        seed: u64,
    },
    Given(Partition),
}

impl InitialPartition {
    pub fn build(&self, num_scenarios: usize) -> Result<Partition, PartitionError> {
        use rand::seq::SliceRandom;
        use rand::SeedableRng;
        match self {
            InitialPartition::Whole => Ok(Partition::whole(num_scenarios)),
            InitialPartition::Singletons => Ok(Partition::singletons(num_scenarios)),
            InitialPartition::Random { cells, seed } => {
                let k = (*cells).clamp(1, num_scenarios.max(1));
                let mut order: Vec<usize> = (0..num_scenarios).collect();
                let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(*seed);
                order.shuffle(&mut rng);
                let mut groups = vec![Vec::new(); k];
                for (i, s) in order.into_iter().enumerate() {
                    groups[i % k].push(s);
                }
                for g in &mut groups {
                    g.sort_unstable();
                }
                Partition::from_cells(groups, num_scenarios)
            }
            InitialPartition::Given(p) => Partition::from_cells(p.cells().to_vec(), num_scenarios),
        }
    }
}

/// What GAPM does when a scenario is infeasible at its current iterate.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum InfeasibleIteratePolicy {
    /// Split the offending cells by Farkas-ray keys and continue.
    Refine,
    /// Stop with [`SolveError::ScenarioInfeasibleAtIterate`].
    Error,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SolverConfig<T> {
    /// Relative gap `z_U − z_L ≤ tol_gap·(1 + |z_U|)` accepted as optimal.
    pub tol_gap: T,
    /// Cuts are added when violated by more than `tol_cut·(1 + |rhs|)`.
    pub tol_cut: T,
    /// Infinity-norm distance under which two dual keys share a cell.
    pub refine_tol: T,
    /// Relative tolerance of the cell aggregation conditions.
    pub condition_tol: T,
    pub time_limit: Option<Duration>,
    /// Cap on master (or deterministic-equivalent) solves.
    pub iteration_limit: Option<usize>,
    pub initial_partition: InitialPartition,
    /// Worker threads for subproblem sweeps; 1 keeps them sequential.
    pub threads: usize,
    /// Keep every generated cut in the report.
    pub record_cuts: bool,
    pub infeasible_iterate: InfeasibleIteratePolicy,
}

impl<T: Scalar> Default for SolverConfig<T> {
    fn default() -> Self {
        Self {
            tol_gap: T::lit(1e-6),
            tol_cut: T::lit(1e-6),
            refine_tol: T::lit(1e-6),
            condition_tol: T::lit(1e-6),
            time_limit: None,
            iteration_limit: None,
            initial_partition: InitialPartition::Whole,
            threads: 1,
            record_cuts: false,
            infeasible_iterate: InfeasibleIteratePolicy::Refine,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct TracePoint<T> {
    pub elapsed_seconds: f64,
    pub z_lower: T,
    pub z_upper: T,
    pub partition_size: usize,
    pub cumulative_cuts: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SolveReport<T> {
    pub method: Method,
    pub status: SolveStatus,
    /// Best first-stage solution found (empty if none).
    pub x: Vec<T>,
    /// Evaluated objective of `x`.
    pub objective: T,
    pub lower_bound: T,
    pub upper_bound: T,
    pub iterations: usize,
    pub optimality_cuts: usize,
    pub feasibility_cuts: usize,
    pub refinements: usize,
    /// Branch-and-bound nodes processed (0 for continuous problems).
    pub nodes: usize,
    /// One point per master or deterministic-equivalent solve.
    pub trace: Vec<TracePoint<T>>,
    /// Lower bound reached within each partition generation, in order.
    pub generation_bounds: Vec<T>,
    pub final_partition: Partition,
    pub cuts: Vec<Cut<T>>,
    pub wall_seconds: f64,
}

impl<T: Scalar> SolveReport<T> {
    pub fn final_partition_size(&self) -> usize {
        self.final_partition.len()
    }

    pub fn total_cuts(&self) -> usize {
        self.optimality_cuts + self.feasibility_cuts
    }
}

#[derive(Debug, Error)]
pub enum SolveError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Lp(#[from] LpError),
    #[error(transparent)]
    Partition(#[from] PartitionError),
    #[error("master problem is unbounded; add first-stage bounds or a finite theta_lb")]
    MasterUnbounded,
    #[error("scenarios {0:?} are infeasible at the current iterate")]
    ScenarioInfeasibleAtIterate(Vec<usize>),
    #[error("feasibility cut from cell {0:?} is not violated at its generating point")]
    CutNotViolated(Vec<usize>),
    #[error("method {0} needs a continuous first stage; use the branch-and-bound entry point")]
    BinaryNotSupported(Method),
    #[error("problem has no binary first-stage variables")]
    NoBinaryVariables,
}
