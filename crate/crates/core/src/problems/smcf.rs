//! Stochastic multicommodity network design with fractional capacities.
//!
//! Recourse columns: flows `y_ak` (index `a·|K| + k`), then one slack per
//! capacity row. Recourse rows: flow conservation `k·|V| + i` for every
//! commodity and node, then capacity rows `|K||V| + a` with
//! `Σ_k y_ak + s_a = u_a x_a`.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::model::{Scenario, TwoStageProblem};
use crate::partition::DualKeyExtractor;

use super::{
    check_len, check_scenarios, invalid, uniform_probability, Built, DemandScenario, InstanceError,
};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SmcfArc {
    pub from: usize,
    pub to: usize,
    /// Nominal capacity `u_ij`.
    pub capacity: f64,
    /// `f_ij` per unit fraction installed.
    pub install_cost: f64,
    /// `c_ijk` per commodity.
    pub routing_cost: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SmcfCommodity {
    pub origin: usize,
    pub destination: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SmcfInstance {
    pub n_nodes: usize,
    pub n_arcs: usize,
    pub n_commodities: usize,
    pub arcs: Vec<SmcfArc>,
    pub commodities: Vec<SmcfCommodity>,
    /// Demand per commodity.
    pub scenarios: Vec<DemandScenario>,
}

impl SmcfInstance {
    pub fn validate(&self) -> Result<(), InstanceError> {
        if self.n_nodes < 2 {
            return Err(invalid("n_nodes", "at least two nodes are required"));
        }
        check_len(&self.arcs, self.n_arcs, "arcs")?;
        check_len(&self.commodities, self.n_commodities, "commodities")?;
        for (a, arc) in self.arcs.iter().enumerate() {
            if arc.from >= self.n_nodes || arc.to >= self.n_nodes || arc.from == arc.to {
                return Err(invalid(
                    format!("arcs[{a}]"),
                    "endpoints must be distinct existing nodes",
                ));
            }
            if !(arc.capacity > 0.0) || !arc.capacity.is_finite() {
                return Err(invalid(
                    format!("arcs[{a}].capacity"),
                    format!("must be positive (got {})", arc.capacity),
                ));
            }
            if !(arc.install_cost > 0.0) || !arc.install_cost.is_finite() {
                return Err(invalid(
                    format!("arcs[{a}].install_cost"),
                    format!("must be positive (got {})", arc.install_cost),
                ));
            }
            check_len(
                &arc.routing_cost,
                self.n_commodities,
                &format!("arcs[{a}].routing_cost"),
            )?;
            if let Some(k) = arc
                .routing_cost
                .iter()
                .position(|&c| !(c > 0.0) || !c.is_finite())
            {
                return Err(invalid(
                    format!("arcs[{a}].routing_cost[{k}]"),
                    "must be positive",
                ));
            }
        }
        for (k, c) in self.commodities.iter().enumerate() {
            if c.origin >= self.n_nodes || c.destination >= self.n_nodes {
                return Err(invalid(format!("commodities[{k}]"), "unknown node"));
            }
            if c.origin == c.destination {
                return Err(invalid(
                    format!("commodities[{k}]"),
                    "origin equals destination",
                ));
            }
        }
        check_scenarios(&self.scenarios, self.n_commodities, "one per commodity")
    }
}

pub fn build_smcf(inst: &SmcfInstance) -> Result<Built, InstanceError> {
    inst.validate()?;
    let (v, e, kk) = (inst.n_nodes, inst.n_arcs, inst.n_commodities);
    let flows = e * kk;
    let m = flows + e;
    let flow_rows = kk * v;
    let rows = flow_rows + e;

    let mut w = vec![vec![0.0; m]; rows];
    let mut q = vec![0.0; m];
    let mut technology = vec![vec![0.0; e]; rows];
    for (a, arc) in inst.arcs.iter().enumerate() {
        for k in 0..kk {
            let col = a * kk + k;
            w[k * v + arc.from][col] = 1.0;
            w[k * v + arc.to][col] = -1.0;
            w[flow_rows + a][col] = 1.0;
            q[col] = arc.routing_cost[k];
        }
        w[flow_rows + a][flows + a] = 1.0;
        technology[flow_rows + a][a] = -arc.capacity;
    }
    let scenarios = inst
        .scenarios
        .iter()
        .enumerate()
        .map(|(s, sc)| {
            let mut rhs = vec![0.0; rows];
            for (k, c) in inst.commodities.iter().enumerate() {
                rhs[k * v + c.origin] += sc.demand[k];
                rhs[k * v + c.destination] -= sc.demand[k];
            }
            Scenario {
                probability: sc.probability,
                technology: technology.clone(),
                rhs,
                label: format!("s{s}"),
            }
        })
        .collect();
    let problem = TwoStageProblem {
        first_stage_cost: inst.arcs.iter().map(|a| a.install_cost).collect(),
        first_stage_rows: vec![],
        first_stage_lower: vec![0.0; e],
        first_stage_upper: vec![1.0; e],
        first_stage_binary: vec![],
        recourse_matrix: w,
        recourse_cost: q,
        recourse_lower: vec![0.0; m],
        recourse_upper: vec![f64::INFINITY; m],
        scenarios,
        theta_lb: 0.0,
    };
    let extractor = DualKeyExtractor::projection(
        inst.commodities
            .iter()
            .enumerate()
            .map(|(k, c)| vec![(k * v + c.origin, 1.0), (k * v + c.destination, -1.0)])
            .collect(),
    );
    Ok(Built { problem, extractor })
}

/// `(f, u)` scale levels for installation cost and nominal capacity.
pub const COST_CAPACITY_GRID: [(f64, f64); 5] =
    [(1.0, 1.0), (10.0, 1.0), (5.0, 2.0), (1.0, 8.0), (10.0, 8.0)];

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SmcfShape {
    pub n_nodes: usize,
    pub n_arcs: usize,
    pub n_commodities: usize,
    /// Index into [`COST_CAPACITY_GRID`].
    pub grid: usize,
}

impl Default for SmcfShape {
    fn default() -> Self {
        Self {
            n_nodes: 6,
            n_arcs: 15,
            n_commodities: 5,
            grid: 0,
        }
    }
}

/// Seeded instance on a random digraph that contains a Hamiltonian cycle,
/// so every commodity can be routed once all arcs are installed.
///
/// Demands use a Gaussian copula: equicorrelated standard normals are mapped
/// through the normal CDF and scaled to `[d̄/2, 3d̄/2]` per commodity. The
/// normal correlation is `2 sin(πρ/6)`, which gives uniform marginals a
/// Pearson correlation of exactly `ρ`.
pub fn generate_smcf(
    shape: SmcfShape,
    correlation: f64,
    n_scenarios: usize,
    seed: u64,
) -> Result<SmcfInstance, InstanceError> {
    let (v, e, kk) = (shape.n_nodes, shape.n_arcs, shape.n_commodities);
    if v < 2 || kk == 0 {
        return Err(invalid(
            "shape",
            "need at least two nodes and one commodity",
        ));
    }
    if e < v || e > v * (v - 1) {
        return Err(invalid(
            "shape.n_arcs",
            format!("must lie in [{v}, {}]", v * (v - 1)),
        ));
    }
    let (f_level, u_level) = *COST_CAPACITY_GRID
        .get(shape.grid)
        .ok_or_else(|| invalid("shape.grid", "must be below 5"))?;
    if !(0.0..1.0).contains(&correlation) {
        return Err(invalid("correlation", "must lie in [0, 1)"));
    }
    if n_scenarios == 0 {
        return Err(invalid("n_scenarios", "must be positive"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let mut order: Vec<usize> = (0..v).collect();
    order.shuffle(&mut rng);
    let mut pairs: Vec<(usize, usize)> = (0..v).map(|i| (order[i], order[(i + 1) % v])).collect();
    let mut rest: Vec<(usize, usize)> = (0..v)
        .flat_map(|i| (0..v).map(move |j| (i, j)))
        .filter(|&(i, j)| i != j && !pairs.contains(&(i, j)))
        .collect();
    rest.shuffle(&mut rng);
    pairs.extend(rest.into_iter().take(e - v));

    let commodities: Vec<SmcfCommodity> = (0..kk)
        .map(|_| {
            let origin = rng.random_range(0..v);
            let mut destination = rng.random_range(0..v - 1);
            if destination >= origin {
                destination += 1;
            }
            SmcfCommodity {
                origin,
                destination,
            }
        })
        .collect();
    let nominal: Vec<f64> = (0..kk).map(|_| rng.random_range(5..=20) as f64).collect();
    let peak: f64 = nominal.iter().map(|d| 1.5 * d).sum();

    let arcs = pairs
        .into_iter()
        .map(|(from, to)| SmcfArc {
            from,
            to,
            capacity: (u_level * peak * rng.random_range(0.5..1.0))
                .max(peak)
                .round(),
            install_cost: (f_level * rng.random_range(20.0..60.0_f64)).round(),
            routing_cost: (0..kk).map(|_| rng.random_range(1..=6) as f64).collect(),
        })
        .collect();

    let rho_z = 2.0 * (std::f64::consts::PI * correlation / 6.0).sin();
    let normal = Normal::standard();
    let p = uniform_probability(n_scenarios);
    let scenarios = (0..n_scenarios)
        .map(|_| {
            let common: f64 = rng.sample(StandardNormal);
            let demand = nominal
                .iter()
                .map(|&d| {
                    let own: f64 = rng.sample(StandardNormal);
                    let z = rho_z.sqrt() * common + (1.0 - rho_z).sqrt() * own;
                    let u = normal.cdf(z);
                    d * (0.5 + u)
                })
                .collect();
            DemandScenario {
                probability: p,
                demand,
            }
        })
        .collect();
    Ok(SmcfInstance {
        n_nodes: v,
        n_arcs: e,
        n_commodities: kk,
        arcs,
        commodities,
        scenarios,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::RecourseOutcome;
    use crate::partition::check_cell_conditions;

    fn two_node(c: f64, u: f64, demands: &[f64]) -> SmcfInstance {
        let p = 1.0 / demands.len() as f64;
        SmcfInstance {
            n_nodes: 2,
            n_arcs: 1,
            n_commodities: 1,
            arcs: vec![SmcfArc {
                from: 0,
                to: 1,
                capacity: u,
                install_cost: 1.0,
                routing_cost: vec![c],
            }],
            commodities: vec![SmcfCommodity {
                origin: 0,
                destination: 1,
            }],
            scenarios: demands
                .iter()
                .map(|&d| DemandScenario {
                    probability: p,
                    demand: vec![d],
                })
                .collect(),
        }
    }

    #[test]
    fn full_capacity_is_plain_routing() {
        let b = build_smcf(&two_node(3.0, 100.0, &[4.0])).unwrap();
        let (out, _) = b
            .problem
            .solve_recourse(&[1.0], &b.problem.scenarios[0], None)
            .unwrap();
        assert!((out.value().unwrap() - 12.0).abs() < 1e-9);
    }

    #[test]
    fn no_capacity_is_infeasible() {
        let inst = generate_smcf(SmcfShape::default(), 0.0, 5, 11).unwrap();
        let b = build_smcf(&inst).unwrap();
        let x = vec![0.0; inst.n_arcs];
        for sc in &b.problem.scenarios {
            let (out, _) = b.problem.solve_recourse(&x, sc, None).unwrap();
            assert!(!out.is_feasible());
        }
        let (out, _) = b
            .problem
            .solve_recourse(&vec![1.0; inst.n_arcs], &b.problem.scenarios[0], None)
            .unwrap();
        assert!(out.is_feasible());
    }

    #[test]
    fn equal_keys_satisfy_the_cell_condition() {
        let inst = generate_smcf(SmcfShape::default(), 0.4, 30, 2).unwrap();
        let b = build_smcf(&inst).unwrap();
        let x = vec![0.6; inst.n_arcs];
        let outs: Vec<_> = b
            .problem
            .scenarios
            .iter()
            .map(|sc| b.problem.solve_recourse(&x, sc, None).unwrap().0)
            .collect();
        let duals: Vec<Option<&[f64]>> = outs.iter().map(|o| o.dual()).collect();
        for s in 0..outs.len() {
            for t in s + 1..outs.len() {
                let (
                    RecourseOutcome::Optimal { dual: a, .. },
                    RecourseOutcome::Optimal { dual: c, .. },
                ) = (&outs[s], &outs[t])
                else {
                    continue;
                };
                if b.extractor.dual_key(a) == b.extractor.dual_key(c) {
                    assert!(check_cell_conditions(&b.problem, &[s, t], &duals, &x, 1e-8).unwrap());
                }
            }
        }
    }

    #[test]
    fn key_has_one_entry_per_commodity() {
        let b = build_smcf(&generate_smcf(SmcfShape::default(), 0.0, 2, 1).unwrap()).unwrap();
        assert_eq!(b.extractor.key_len(b.problem.num_recourse_rows()), 5);
    }

    fn pearson(a: &[f64], b: &[f64]) -> f64 {
        let n = a.len() as f64;
        let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
        let cov: f64 = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum();
        let va: f64 = a.iter().map(|x| (x - ma).powi(2)).sum();
        let vb: f64 = b.iter().map(|y| (y - mb).powi(2)).sum();
        cov / (va * vb).sqrt()
    }

    #[test]
    fn correlation_levels_are_matched() {
        for rho in [0.0, 0.4, 0.8] {
            let inst = generate_smcf(SmcfShape::default(), rho, 4000, 17).unwrap();
            let col =
                |k: usize| -> Vec<f64> { inst.scenarios.iter().map(|s| s.demand[k]).collect() };
            for k in 0..4 {
                let r = pearson(&col(k), &col(k + 1));
                assert!((r - rho).abs() < 0.1, "rho {rho}: got {r}");
            }
        }
    }

    #[test]
    fn generator_is_deterministic_and_valid() {
        let a = generate_smcf(SmcfShape::default(), 0.2, 20, 9).unwrap();
        let b = generate_smcf(SmcfShape::default(), 0.2, 20, 9).unwrap();
        assert_eq!(
            serde_json::to_string(&a).unwrap(),
            serde_json::to_string(&b).unwrap()
        );
        a.validate().unwrap();
    }
}
