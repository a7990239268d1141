//! Capacity planning on a bipartite source/sink network.
//!
//! Recourse columns: flows `y_ij` (index `i·|R| + j`), then one slack per
//! demand row, then one slack per capacity row. Recourse rows: demand rows
//! `Σ_i y_ij + s_j = d_j` for every sink, then capacity rows
//! `Σ_j y_ij + s_i = x_i` for every source.

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
pub struct CppInstance {
    pub n_sources: usize,
    pub n_sinks: usize,
    pub n_resources: usize,
    /// `c_i` per unit of capacity at source `i`.
    pub capacity_cost: Vec<f64>,
    /// `a_ik`, indexed `[source][resource]`.
    pub resource_usage: Vec<Vec<f64>>,
    /// `r_k`.
    pub resource_limit: Vec<f64>,
    /// `e_ij`, indexed `[source][sink]`; negative values are profits.
    pub arc_cost: Vec<Vec<f64>>,
    /// Demand per sink.
    pub scenarios: Vec<DemandScenario>,
}

impl CppInstance {
    pub fn validate(&self) -> Result<(), InstanceError> {
        let (l, r, k) = (self.n_sources, self.n_sinks, self.n_resources);
        if l == 0 || r == 0 {
            return Err(invalid("n_sources", "sources and sinks must be non-empty"));
        }
        check_len(&self.capacity_cost, l, "capacity_cost")?;
        if self.capacity_cost.iter().any(|v| !v.is_finite()) {
            return Err(invalid("capacity_cost", "entries must be finite"));
        }
        check_matrix(&self.resource_usage, l, k, "resource_usage")?;
        for (i, row) in self.resource_usage.iter().enumerate() {
            check_nonnegative(row, &format!("resource_usage[{i}]"), false)?;
        }
        check_len(&self.resource_limit, k, "resource_limit")?;
        check_nonnegative(&self.resource_limit, "resource_limit", true)?;
        check_matrix(&self.arc_cost, l, r, "arc_cost")?;
        check_scenarios(&self.scenarios, r, "one per sink")
    }
}

pub fn build_cpp(inst: &CppInstance) -> Result<Built, InstanceError> {
    inst.validate()?;
    let (l, r) = (inst.n_sources, inst.n_sinks);
    let flows = l * r;
    let m = flows + r + l;
    let rows = r + l;

    let mut w = vec![vec![0.0; m]; rows];
    for j in 0..r {
        for i in 0..l {
            w[j][i * r + j] = 1.0;
        }
        w[j][flows + j] = 1.0;
    }
    for i in 0..l {
        for j in 0..r {
            w[r + i][i * r + j] = 1.0;
        }
        w[r + i][flows + r + i] = 1.0;
    }
    let mut q = vec![0.0; m];
    for i in 0..l {
        for j in 0..r {
            q[i * r + j] = inst.arc_cost[i][j];
        }
    }
    let mut technology = vec![vec![0.0; l]; rows];
    for i in 0..l {
        technology[r + i][i] = -1.0;
    }
    let scenarios = inst
        .scenarios
        .iter()
        .enumerate()
        .map(|(s, sc)| {
            let mut rhs = sc.demand.clone();
            rhs.resize(rows, 0.0);
            Scenario {
                probability: sc.probability,
                technology: technology.clone(),
                rhs,
                label: format!("s{s}"),
            }
        })
        .collect();

    // Flows never exceed demand, so each sink earns at most max_d·|min e|.
    let theta_lb = (0..r)
        .map(|j| {
            let max_d = inst
                .scenarios
                .iter()
                .map(|s| s.demand[j])
                .fold(0.0, f64::max);
            let min_e = (0..l).map(|i| inst.arc_cost[i][j]).fold(0.0, f64::min);
            max_d * min_e
        })
        .sum();

    let first_stage_rows = (0..inst.n_resources)
        .map(|k| {
            let coeffs = (0..l).map(|i| (i, inst.resource_usage[i][k])).collect();
            Constraint::new(coeffs, Relation::LessEq, inst.resource_limit[k])
        })
        .collect();

    let problem = TwoStageProblem {
        first_stage_cost: inst.capacity_cost.clone(),
        first_stage_rows,
        first_stage_lower: vec![0.0; l],
        first_stage_upper: vec![f64::INFINITY; l],
        first_stage_binary: vec![],
        recourse_matrix: w,
        recourse_cost: q,
        recourse_lower: vec![0.0; m],
        recourse_upper: vec![f64::INFINITY; m],
        scenarios,
        theta_lb,
    };
    Ok(Built {
        problem,
        extractor: DualKeyExtractor::rows(0..r),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CppShape {
    pub n_sources: usize,
    pub n_sinks: usize,
    pub n_resources: usize,
}

impl Default for CppShape {
    fn default() -> Self {
        Self {
            n_sources: 5,
            n_sinks: 10,
            n_resources: 3,
        }
    }
}

/// Seeded instance. Demands are independent across sinks, each drawn
/// uniformly from `{0, b/2, b, 3b/2}` for a per-sink base `b`. About a third
/// of the arcs carry a cost and the rest a profit.
pub fn generate_cpp(
    shape: CppShape,
    n_scenarios: usize,
    seed: u64,
) -> Result<CppInstance, InstanceError> {
    if shape.n_sources == 0 || shape.n_sinks == 0 || shape.n_resources == 0 {
        return Err(invalid("shape", "all dimensions must be positive"));
    }
    if n_scenarios == 0 {
        return Err(invalid("n_scenarios", "must be positive"));
    }
    let (l, r, k) = (shape.n_sources, shape.n_sinks, shape.n_resources);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let capacity_cost: Vec<f64> = (0..l).map(|_| rng.random_range(1..=4) as f64).collect();
    let resource_usage: Vec<Vec<f64>> = (0..l)
        .map(|_| (0..k).map(|_| rng.random_range(1..=3) as f64).collect())
        .collect();
    let arc_cost: Vec<Vec<f64>> = (0..l)
        .map(|_| (0..r).map(|_| rng.random_range(-10..=4) as f64).collect())
        .collect();
    let base: Vec<f64> = (0..r)
        .map(|_| rng.random_range(2..=10) as f64 * 2.0)
        .collect();
    let total_base: f64 = base.iter().sum();
    // Resources cover roughly half of the mean total demand.
    let resource_limit = (0..k)
        .map(|kk| {
            let mean_usage = resource_usage.iter().map(|a| a[kk]).sum::<f64>() / l as f64;
            (0.5 * total_base * mean_usage).round().max(1.0)
        })
        .collect();
    let p = uniform_probability(n_scenarios);
    let scenarios = (0..n_scenarios)
        .map(|_| DemandScenario {
            probability: p,
            demand: base
                .iter()
                .map(|&b| b * 0.5 * rng.random_range(0..4) as f64)
                .collect(),
        })
        .collect();
    Ok(CppInstance {
        n_sources: l,
        n_sinks: r,
        n_resources: k,
        capacity_cost,
        resource_usage,
        resource_limit,
        arc_cost,
        scenarios,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::RecourseOutcome;
    use crate::report::{Method, SolverConfig};

    fn single_arc(e: f64, c: f64, d: f64) -> CppInstance {
        CppInstance {
            n_sources: 1,
            n_sinks: 1,
            n_resources: 1,
            capacity_cost: vec![c],
            resource_usage: vec![vec![1.0]],
            resource_limit: vec![100.0],
            arc_cost: vec![vec![e]],
            scenarios: vec![DemandScenario {
                probability: 1.0,
                demand: vec![d],
            }],
        }
    }

    #[test]
    fn single_arc_closed_form() {
        let b = build_cpp(&single_arc(-2.0, 1.0, 3.0)).unwrap();
        let rep = crate::solve(
            Method::DeterministicEquivalent,
            &b.problem,
            &b.extractor,
            &SolverConfig::default(),
        )
        .unwrap();
        assert!((rep.objective + 3.0).abs() < 1e-9);
        assert!((rep.x[0] - 3.0).abs() < 1e-9);
    }

    #[test]
    fn zero_demand_builds_nothing() {
        let mut inst = generate_cpp(CppShape::default(), 4, 1).unwrap();
        for s in &mut inst.scenarios {
            s.demand.iter_mut().for_each(|d| *d = 0.0);
        }
        let b = build_cpp(&inst).unwrap();
        let rep = crate::solve(
            Method::MultiCut,
            &b.problem,
            &b.extractor,
            &SolverConfig::default(),
        )
        .unwrap();
        assert!(rep.objective.abs() < 1e-9);
        assert!(rep.x.iter().all(|&v| v.abs() < 1e-9));
    }

    #[test]
    fn recourse_is_feasible_for_any_capacity() {
        let b = build_cpp(&generate_cpp(CppShape::default(), 6, 7).unwrap()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        for _ in 0..20 {
            let x: Vec<f64> = (0..5).map(|_| rng.random_range(0.0..30.0)).collect();
            for sc in &b.problem.scenarios {
                let (out, _) = b.problem.solve_recourse(&x, sc, None).unwrap();
                let RecourseOutcome::Optimal { value, .. } = out else {
                    panic!("CPP recourse must be feasible");
                };
                assert!(value >= b.problem.theta_lb - 1e-9);
            }
        }
    }

    #[test]
    fn extractor_reads_demand_rows() {
        let b = build_cpp(&generate_cpp(CppShape::default(), 2, 3).unwrap()).unwrap();
        assert_eq!(b.extractor.key_len(b.problem.num_recourse_rows()), 10);
    }

    #[test]
    fn generator_is_deterministic() {
        let a = generate_cpp(CppShape::default(), 10, 5).unwrap();
        let b = generate_cpp(CppShape::default(), 10, 5).unwrap();
        assert_eq!(
            serde_json::to_string(&a).unwrap(),
            serde_json::to_string(&b).unwrap()
        );
        let one = generate_cpp(CppShape::default(), 1, 5).unwrap();
        assert_eq!(one.scenarios[0].probability, 1.0);
    }

    #[test]
    fn validation_names_the_field() {
        let mut inst = single_arc(-1.0, 1.0, 1.0);
        inst.resource_limit = vec![0.0];
        let err = inst.validate().unwrap_err().to_string();
        assert!(err.contains("resource_limit"), "{err}");
        let mut inst = single_arc(-1.0, 1.0, 1.0);
        inst.scenarios[0].probability = 0.9;
        assert!(inst
            .validate()
            .unwrap_err()
            .to_string()
            .contains("probabilities must sum to 1"));
    }
}
