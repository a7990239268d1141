//! Capacitated facility location minimizing opening cost plus the CVaR of
//! the transportation cost.
//!
//! First stage: binary `x_i` per facility, then the value-at-risk level `τ`
//! (column `|I|`), kept in `[0, C_max]` where `C_max` bounds every scenario's
//! cost. Recourse columns: assignments `y_ij` (index `i·|J| + j`), the excess
//! `z`, then slacks for the cost row, the client rows and the facility rows.
//! Recourse rows: `Σ c_ij y_ij − z + s = τ`, then client rows
//! `Σ_i y_ij − t_j = d_j`, then facility rows `Σ_j y_ij + s_i = K_i x_i`.
//! `z` costs `1/(1−σ)`, so the expected recourse is the CVaR excess term.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::lp::{Constraint, Relation};
use crate::model::{Scenario, TwoStageProblem};
use crate::partition::DualKeyExtractor;

use super::{
    check_len, check_matrix, check_nonnegative, check_scenarios, invalid, uniform_probability,
    Built, DemandScenario, InstanceError,
};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FlCvarInstance {
    pub n_facilities: usize,
    pub n_clients: usize,
    /// `f_i`.
    pub opening_cost: Vec<f64>,
    /// `K_i`.
    pub capacity: Vec<f64>,
    /// `c_ij`, indexed `[facility][client]`.
    pub assignment_cost: Vec<Vec<f64>>,
    /// `σ` in `(0, 1)`.
    pub risk_level: f64,
    /// Demand per client.
    pub scenarios: Vec<DemandScenario>,
}

impl FlCvarInstance {
    /// `D`: the largest total demand over all scenarios.
    pub fn peak_demand(&self) -> f64 {
        self.scenarios
            .iter()
            .map(|s| s.demand.iter().sum::<f64>())
            .fold(0.0, f64::max)
    }

    /// Upper bound on the transportation cost of any scenario.
    pub fn max_scenario_cost(&self) -> f64 {
        let worst: Vec<f64> = (0..self.n_clients)
            .map(|j| {
                self.assignment_cost
                    .iter()
                    .map(|row| row[j])
                    .fold(0.0, f64::max)
            })
            .collect();
        self.scenarios
            .iter()
            .map(|s| s.demand.iter().zip(&worst).map(|(d, c)| d * c).sum::<f64>())
            .fold(0.0, f64::max)
    }

    pub fn validate(&self) -> Result<(), InstanceError> {
        let (i, j) = (self.n_facilities, self.n_clients);
        if i == 0 || j == 0 {
            return Err(invalid(
                "n_facilities",
                "facilities and clients must be non-empty",
            ));
        }
        check_len(&self.opening_cost, i, "opening_cost")?;
        check_nonnegative(&self.opening_cost, "opening_cost", false)?;
        check_len(&self.capacity, i, "capacity")?;
        check_nonnegative(&self.capacity, "capacity", false)?;
        check_matrix(&self.assignment_cost, i, j, "assignment_cost")?;
        for (f, row) in self.assignment_cost.iter().enumerate() {
            check_nonnegative(row, &format!("assignment_cost[{f}]"), false)?;
        }
        if !(self.risk_level > 0.0 && self.risk_level < 1.0) {
            return Err(invalid(
                "risk_level",
                format!("must lie in (0, 1) (got {})", self.risk_level),
            ));
        }
        check_scenarios(&self.scenarios, j, "one per client")?;
        let total: f64 = self.capacity.iter().sum();
        if total < self.peak_demand() {
            return Err(invalid(
                "capacity",
                format!(
                    "total capacity {total} cannot cover peak demand {}",
                    self.peak_demand()
                ),
            ));
        }
        Ok(())
    }
}

pub fn build_flcvar(inst: &FlCvarInstance) -> Result<Built, InstanceError> {
    inst.validate()?;
    let (ni, nj) = (inst.n_facilities, inst.n_clients);
    let assign = ni * nj;
    let z = assign;
    let m = assign + 2 + nj + ni;
    let rows = 1 + nj + ni;
    let n = ni + 1;
    let tau = ni;

    let mut w = vec![vec![0.0; m]; rows];
    for f in 0..ni {
        for c in 0..nj {
            let col = f * nj + c;
            w[0][col] = inst.assignment_cost[f][c];
            w[1 + c][col] = 1.0;
            w[1 + nj + f][col] = 1.0;
        }
    }
    w[0][z] = -1.0;
    w[0][z + 1] = 1.0;
    for c in 0..nj {
        w[1 + c][z + 2 + c] = -1.0;
    }
    for f in 0..ni {
        w[1 + nj + f][z + 2 + nj + f] = 1.0;
    }
    let mut q = vec![0.0; m];
    q[z] = 1.0 / (1.0 - inst.risk_level);

    let mut technology = vec![vec![0.0; n]; rows];
    technology[0][tau] = -1.0;
    for f in 0..ni {
        technology[1 + nj + f][f] = -inst.capacity[f];
    }
    let scenarios = inst
        .scenarios
        .iter()
        .enumerate()
        .map(|(s, sc)| {
            let mut rhs = vec![0.0; rows];
            rhs[1..=nj].copy_from_slice(&sc.demand);
            Scenario {
                probability: sc.probability,
                technology: technology.clone(),
                rhs,
                label: format!("s{s}"),
            }
        })
        .collect();

    let mut cost = inst.opening_cost.clone();
    cost.push(1.0);
    let mut upper = vec![1.0; ni];
    upper.push(inst.max_scenario_cost());
    let cover = Constraint::new(
        (0..ni).map(|f| (f, inst.capacity[f])).collect(),
        Relation::GreaterEq,
        inst.peak_demand(),
    );
    let problem = TwoStageProblem {
        first_stage_cost: cost,
        first_stage_rows: vec![cover],
        first_stage_lower: vec![0.0; n],
        first_stage_upper: upper,
        first_stage_binary: (0..ni).collect(),
        recourse_matrix: w,
        recourse_cost: q,
        recourse_lower: vec![0.0; m],
        recourse_upper: vec![f64::INFINITY; m],
        scenarios,
        theta_lb: 0.0,
    };
    Ok(Built {
        problem,
        extractor: DualKeyExtractor::rows(1..=nj),
    })
}

/// `CVaR_σ` of a discrete distribution: the probability-weighted mean of
/// its worst `1 − σ` tail, splitting the boundary atom.
pub fn tail_cvar(values: &[f64], probabilities: &[f64], sigma: f64) -> f64 {
    let mut atoms: Vec<(f64, f64)> = values
        .iter()
        .copied()
        .zip(probabilities.iter().copied())
        .collect();
    atoms.sort_by(|a, b| b.0.total_cmp(&a.0));
    let tail = 1.0 - sigma;
    let mut left = tail;
    let mut acc = 0.0;
    for (v, p) in atoms {
        if left <= 0.0 {
            break;
        }
        let take = p.min(left);
        acc += take * v;
        left -= take;
    }
    acc / tail
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FlCvarShape {
    pub n_facilities: usize,
    pub n_clients: usize,
    pub risk_level: f64,
}

impl Default for FlCvarShape {
    fn default() -> Self {
        Self {
            n_facilities: 4,
            n_clients: 6,
            risk_level: 0.9,
        }
    }
}

/// Seeded instance; scenario demands are uniform on `[0, d̄_j]`.
pub fn generate_flcvar(
    shape: FlCvarShape,
    n_scenarios: usize,
    seed: u64,
) -> Result<FlCvarInstance, InstanceError> {
    let (ni, nj) = (shape.n_facilities, shape.n_clients);
    if ni == 0 || nj == 0 {
        return Err(invalid("shape", "facilities and clients must be non-empty"));
    }
    if !(shape.risk_level > 0.0 && shape.risk_level < 1.0) {
        return Err(invalid("shape.risk_level", "must lie in (0, 1)"));
    }
    if n_scenarios == 0 {
        return Err(invalid("n_scenarios", "must be positive"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let nominal: Vec<f64> = (0..nj).map(|_| rng.random_range(5..=20) as f64).collect();
    let total: f64 = nominal.iter().sum();
    let opening_cost = (0..ni).map(|_| rng.random_range(40..=160) as f64).collect();
    let mut capacity: Vec<f64> = (0..ni)
        .map(|_| (total * rng.random_range(0.35..0.7_f64)).round())
        .collect();
    let assignment_cost = (0..ni)
        .map(|_| (0..nj).map(|_| rng.random_range(1..=10) as f64).collect())
        .collect();
    let p = uniform_probability(n_scenarios);
    let scenarios: Vec<DemandScenario> = (0..n_scenarios)
        .map(|_| DemandScenario {
            probability: p,
            demand: nominal.iter().map(|&d| rng.random_range(0.0..=d)).collect(),
        })
        .collect();
    let peak = scenarios
        .iter()
        .map(|s| s.demand.iter().sum::<f64>())
        .fold(0.0, f64::max);
    let have: f64 = capacity.iter().sum();
    if have < peak {
        let scale = peak / have;
        capacity.iter_mut().for_each(|k| *k = (*k * scale).ceil());
    }
    Ok(FlCvarInstance {
        n_facilities: ni,
        n_clients: nj,
        opening_cost,
        capacity,
        assignment_cost,
        risk_level: shape.risk_level,
        scenarios,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::report::{Method, SolverConfig};

    #[test]
    fn tail_average() {
        let v = [1.0, 5.0, 3.0, 10.0];
        let p = [0.25; 4];
        // Worst 10%: all of it sits on the value 10.
        assert!((tail_cvar(&v, &p, 0.9) - 10.0).abs() < 1e-12);
        // Worst 50%: 10 and 5.
        assert!((tail_cvar(&v, &p, 0.5) - 7.5).abs() < 1e-12);
        // Worst 40%: 10 with weight .25, 5 with weight .15.
        assert!((tail_cvar(&v, &p, 0.6) - (2.5 + 0.75) / 0.4).abs() < 1e-12);
    }

    #[test]
    fn deterministic_demand_has_cvar_equal_to_cost() {
        let inst = FlCvarInstance {
            n_facilities: 1,
            n_clients: 1,
            opening_cost: vec![5.0],
            capacity: vec![10.0],
            assignment_cost: vec![vec![3.0]],
            risk_level: 0.9,
            scenarios: vec![DemandScenario {
                probability: 1.0,
                demand: vec![4.0],
            }],
        };
        let b = build_flcvar(&inst).unwrap();
        let rep = crate::solve(
            Method::DeterministicEquivalent,
            &b.problem,
            &b.extractor,
            &SolverConfig::default(),
        )
        .unwrap();
        assert!((rep.objective - 17.0).abs() < 1e-9);
        assert!((rep.x[1] - 12.0).abs() < 1e-9);
    }

    #[test]
    fn covering_decisions_have_feasible_recourse() {
        let inst = generate_flcvar(FlCvarShape::default(), 10, 4).unwrap();
        let b = build_flcvar(&inst).unwrap();
        for mask in 0u32..16 {
            let mut x: Vec<f64> = (0..4).map(|f| f64::from((mask >> f) & 1)).collect();
            let cap: f64 = (0..4).map(|f| x[f] * inst.capacity[f]).sum();
            if cap < inst.peak_demand() {
                continue;
            }
            x.push(0.0);
            for sc in &b.problem.scenarios {
                assert!(b
                    .problem
                    .solve_recourse(&x, sc, None)
                    .unwrap()
                    .0
                    .is_feasible());
            }
        }
    }

    #[test]
    fn validation_names_negative_capacity() {
        let mut inst = generate_flcvar(FlCvarShape::default(), 3, 1).unwrap();
        inst.capacity[2] = -1.0;
        let err = inst.validate().unwrap_err().to_string();
        assert!(err.contains("capacity[2]"), "{err}");
    }

    #[test]
    fn extractor_length_is_client_count() {
        let b = build_flcvar(&generate_flcvar(FlCvarShape::default(), 2, 1).unwrap()).unwrap();
        assert_eq!(b.extractor.key_len(b.problem.num_recourse_rows()), 6);
    }
}
