use crate::lp::{self, BasisHint, Constraint, LinearProgram, LpOutcome, Relation};
use crate::model::TwoStageProblem;
use crate::report::SolveError;
use crate::scalar::Scalar;

use super::{Cut, ThetaVar};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) enum ThetaMode {
    PerScenario,
    Single,
}

pub(crate) enum MasterOutcome<T> {
    Optimal {
        x: Vec<T>,
        theta: Vec<T>,
        objective: T,
    },
    Infeasible,
}

/// `min cᵀx + Σ pˢθˢ` (or `+ Θ`) over the first stage plus accumulated cuts.
pub(crate) struct Master<T> {
    lp: LinearProgram<T>,
    n: usize,
    mode: ThetaMode,
    hint: Option<BasisHint>,
}

impl<T: Scalar> Master<T> {
    pub fn new(problem: &TwoStageProblem<T>, mode: ThetaMode) -> Self {
        let n = problem.num_first_stage();
        let k = match mode {
            ThetaMode::PerScenario => problem.num_scenarios(),
            ThetaMode::Single => 1,
        };
        let mut lp = LinearProgram::new(n + k);
        lp.cost[..n].copy_from_slice(&problem.first_stage_cost);
        lp.lower[..n].copy_from_slice(&problem.first_stage_lower);
        lp.upper[..n].copy_from_slice(&problem.first_stage_upper);
        match mode {
            ThetaMode::PerScenario => {
                for (s, sc) in problem.scenarios.iter().enumerate() {
                    lp.cost[n + s] = sc.probability;
                }
            }
            ThetaMode::Single => lp.cost[n] = T::one(),
        }
        for j in n..n + k {
            lp.lower[j] = problem.theta_lb;
        }
        lp.rows = problem.first_stage_rows.clone();
        Self {
            lp,
            n,
            mode,
            hint: None,
        }
    }

    pub fn mode(&self) -> ThetaMode {
        self.mode
    }

    fn column(&self, v: ThetaVar) -> usize {
        match (v, self.mode) {
            (ThetaVar::Scenario(s), ThetaMode::PerScenario) => self.n + s,
            (ThetaVar::Total, ThetaMode::Single) => self.n,
            _ => panic!(
                "cut variable {v:?} does not exist in a {:?} master",
                self.mode
            ),
        }
    }

    /// Value of `v` in a master solution's `theta` block.
    pub fn theta_value(&self, theta: &[T], v: ThetaVar) -> T {
        theta[self.column(v) - self.n]
    }

    pub fn add_cut(&mut self, cut: &Cut<T>) {
        let mut coeffs: Vec<(usize, T)> = cut
            .coeff_x
            .iter()
            .enumerate()
            .filter(|(_, v)| !v.is_zero())
            .map(|(j, &v)| (j, v))
            .collect();
        for &(v, w) in &cut.coeff_theta {
            coeffs.push((self.column(v), -w));
        }
        self.lp
            .add_row(Constraint::new(coeffs, Relation::LessEq, -cut.constant));
    }

    pub fn set_bounds(&mut self, j: usize, lower: T, upper: T) {
        self.lp.set_bounds(j, lower, upper);
    }

    pub fn solve(&mut self) -> Result<MasterOutcome<T>, SolveError> {
        let out = match &self.hint {
            Some(h) => lp::solve_with_basis(&self.lp, h)?,
            None => lp::solve(&self.lp)?,
        };
        self.hint = Some(out.basis().clone());
        match out {
            LpOutcome::Optimal(sol) => {
                let theta = sol.primal[self.n..].to_vec();
                let mut x = sol.primal;
                x.truncate(self.n);
                Ok(MasterOutcome::Optimal {
                    x,
                    theta,
                    objective: sol.objective,
                })
            }
            LpOutcome::Infeasible(_) => Ok(MasterOutcome::Infeasible),
            LpOutcome::Unbounded(_) => Err(SolveError::MasterUnbounded),
        }
    }
}
