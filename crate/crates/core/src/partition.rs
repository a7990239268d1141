//! Scenario partitions: disjoint cells covering every scenario, refined by
//! grouping scenarios whose second-stage duals agree.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{ScenarioData, TwoStageProblem};
use crate::scalar::Scalar;

#[derive(Clone, Debug, Error, PartialEq, Eq)]
pub enum PartitionError {
    #[error("expected {expected} keys, got {got}")]
    KeyCountMismatch { expected: usize, got: usize },
    #[error("partitions cover {0} and {1} scenarios")]
    SizeMismatch(usize, usize),
    #[error("cells do not form a partition of 0..{0}: {1}")]
    NotAPartition(usize, String),
    #[error("scenario {0} has no optimal dual")]
    MissingDual(usize),
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Partition {
    cells: Vec<Vec<usize>>,
    num_scenarios: usize,
    generation: usize,
}

/// Grouping key of one scenario: a projection of its optimal dual, or its
/// normalized Farkas ray when the recourse problem is infeasible.
#[derive(Clone, Debug, PartialEq)]
pub enum DualKey<T> {
    Dual(Vec<T>),
    Ray(Vec<T>),
}

impl<T: Scalar> DualKey<T> {
    fn close_to(&self, other: &Self, tol: T) -> bool {
        let (a, b) = match (self, other) {
            (DualKey::Dual(a), DualKey::Dual(b)) | (DualKey::Ray(a), DualKey::Ray(b)) => (a, b),
            _ => return false,
        };
        a.len() == b.len() && a.iter().zip(b).all(|(&u, &v)| (u - v).abs() <= tol)
    }

    pub fn is_ray(&self) -> bool {
        matches!(self, DualKey::Ray(_))
    }
}

/// Linear projection of a recourse dual onto the components that decide
/// whether two scenarios may share a cell. Without components the whole
/// dual vector is the key.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct DualKeyExtractor {
    pub components: Option<Vec<Vec<(usize, f64)>>>,
}

impl DualKeyExtractor {
    pub fn full() -> Self {
        Self { components: None }
    }

    /// Key component `k` is `Σ weight·λ[row]` over `components[k]`.
    pub fn projection(components: Vec<Vec<(usize, f64)>>) -> Self {
        Self {
            components: Some(components),
        }
    }

    /// Key component `k` is `λ[rows[k]]`.
    pub fn rows(rows: impl IntoIterator<Item = usize>) -> Self {
        Self::projection(rows.into_iter().map(|r| vec![(r, 1.0)]).collect())
    }

    pub fn key_len(&self, num_rows: usize) -> usize {
        self.components.as_ref().map_or(num_rows, Vec::len)
    }

    pub fn dual_key<T: Scalar>(&self, dual: &[T]) -> DualKey<T> {
        match &self.components {
            None => DualKey::Dual(dual.to_vec()),
            Some(comps) => DualKey::Dual(
                comps
                    .iter()
                    .map(|c| {
                        c.iter()
                            .fold(T::zero(), |acc, &(r, w)| acc + T::lit(w) * dual[r])
                    })
                    .collect(),
            ),
        }
    }

    /// Rays are compared in full after scaling to unit infinity-norm.
    pub fn ray_key<T: Scalar>(&self, ray: &[T]) -> DualKey<T> {
        let norm = crate::scalar::inf_norm(ray);
        if norm > T::zero() {
            DualKey::Ray(ray.iter().map(|&v| v / norm).collect())
        } else {
            DualKey::Ray(ray.to_vec())
        }
    }
}

impl Partition {
    /// One cell holding every scenario.
    pub fn whole(num_scenarios: usize) -> Self {
        Self {
            cells: vec![(0..num_scenarios).collect()],
            num_scenarios,
            generation: 0,
        }
    }

    pub fn singletons(num_scenarios: usize) -> Self {
        Self {
            cells: (0..num_scenarios).map(|s| vec![s]).collect(),
            num_scenarios,
            generation: 0,
        }
    }

    /// Checks that `cells` are disjoint, nonempty and cover `0..num_scenarios`.
    pub fn from_cells(
        cells: Vec<Vec<usize>>,
        num_scenarios: usize,
    ) -> Result<Self, PartitionError> {
        let mut seen = vec![false; num_scenarios];
        for cell in &cells {
            if cell.is_empty() {
                return Err(PartitionError::NotAPartition(
                    num_scenarios,
                    "empty cell".into(),
                ));
            }
            for &s in cell {
                if s >= num_scenarios {
                    return Err(PartitionError::NotAPartition(
                        num_scenarios,
                        format!("index {s} out of range"),
                    ));
                }
                if seen[s] {
                    return Err(PartitionError::NotAPartition(
                        num_scenarios,
                        format!("scenario {s} appears twice"),
                    ));
                }
                seen[s] = true;
            }
        }
        if let Some(s) = seen.iter().position(|v| !v) {
            return Err(PartitionError::NotAPartition(
                num_scenarios,
                format!("scenario {s} is not covered"),
            ));
        }
        Ok(Self {
            cells,
            num_scenarios,
            generation: 0,
        })
    }

    pub fn cells(&self) -> &[Vec<usize>] {
        &self.cells
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn num_scenarios(&self) -> usize {
        self.num_scenarios
    }

    pub fn generation(&self) -> usize {
        self.generation
    }

    /// Splits every cell by greedy leader clustering of the keys.
    pub fn refine<T: Scalar>(&self, keys: &[DualKey<T>], tol: T) -> Result<Self, PartitionError> {
        let all = vec![true; self.cells.len()];
        self.refine_selected(keys, tol, &all)
    }

    /// Like [`refine`](Self::refine) but only splits cells whose flag is set.
    /// The pieces of a split cell take its place, in order of their leaders.
    pub fn refine_selected<T: Scalar>(
        &self,
        keys: &[DualKey<T>],
        tol: T,
        selected: &[bool],
    ) -> Result<Self, PartitionError> {
        if keys.len() != self.num_scenarios {
            return Err(PartitionError::KeyCountMismatch {
                expected: self.num_scenarios,
                got: keys.len(),
            });
        }
        let mut cells = Vec::with_capacity(self.cells.len());
        for (c, cell) in self.cells.iter().enumerate() {
            if !selected.get(c).copied().unwrap_or(false) {
                cells.push(cell.clone());
                continue;
            }
            let mut groups: Vec<Vec<usize>> = Vec::new();
            for &s in cell {
                match groups
                    .iter_mut()
                    .find(|g| keys[g[0]].close_to(&keys[s], tol))
                {
                    Some(g) => g.push(s),
                    None => groups.push(vec![s]),
                }
            }
            cells.extend(groups);
        }
        Ok(Self {
            cells,
            num_scenarios: self.num_scenarios,
            generation: self.generation + 1,
        })
    }

    /// Like [`refine_selected`](Self::refine_selected), except that a flagged
    /// cell whose keys all agree is split into singletons, so every flagged
    /// cell with two or more scenarios is guaranteed to split.
    pub fn refine_strict<T: Scalar>(
        &self,
        keys: &[DualKey<T>],
        tol: T,
        selected: &[bool],
    ) -> Result<Self, PartitionError> {
        let refined = self.refine_selected(keys, tol, selected)?;
        let mut cells = Vec::with_capacity(refined.cells.len());
        let mut it = refined.cells.into_iter();
        for (c, cell) in self.cells.iter().enumerate() {
            if !selected.get(c).copied().unwrap_or(false) {
                cells.push(it.next().expect("unselected cell kept"));
                continue;
            }
            let mut covered = 0;
            let mut pieces = Vec::new();
            while covered < cell.len() {
                let piece = it.next().expect("pieces cover the cell");
                covered += piece.len();
                pieces.push(piece);
            }
            if pieces.len() == 1 && cell.len() > 1 {
                cells.extend(cell.iter().map(|&s| vec![s]));
            } else {
                cells.extend(pieces);
            }
        }
        Ok(Self {
            cells,
            num_scenarios: self.num_scenarios,
            generation: self.generation + 1,
        })
    }

    /// Index of the cell holding each scenario.
    pub fn cell_of(&self) -> Vec<usize> {
        let mut owner = vec![0; self.num_scenarios];
        for (c, cell) in self.cells.iter().enumerate() {
            for &s in cell {
                owner[s] = c;
            }
        }
        owner
    }
}

/// True when every cell of `finer` lies inside one cell of `coarser`.
pub fn is_refinement(coarser: &Partition, finer: &Partition) -> Result<bool, PartitionError> {
    if coarser.num_scenarios != finer.num_scenarios {
        return Err(PartitionError::SizeMismatch(
            coarser.num_scenarios,
            finer.num_scenarios,
        ));
    }
    let owner = coarser.cell_of();
    Ok(finer
        .cells
        .iter()
        .all(|cell| cell.iter().all(|&s| owner[s] == owner[cell[0]])))
}

/// Checks the two aggregation identities for a cell at `x`:
/// `(Σpˢ)·Σpˢ(vˢ)ᵀλˢ = (Σpˢvˢ)ᵀ(Σpˢλˢ)` for `vˢ = hˢ` and `vˢ = Tˢx`.
/// `duals[s]` must be set for every scenario of the cell.
pub fn check_cell_conditions<T: Scalar>(
    problem: &TwoStageProblem<T>,
    cell: &[usize],
    duals: &[Option<&[T]>],
    x: &[T],
    tol: T,
) -> Result<bool, PartitionError> {
    if cell.len() <= 1 {
        if let Some(&s) = cell.first() {
            duals
                .get(s)
                .copied()
                .flatten()
                .ok_or(PartitionError::MissingDual(s))?;
        }
        return Ok(true);
    }
    let p = problem.num_recourse_rows();
    let mut prob = T::zero();
    let mut sum_h_lambda = T::zero();
    let mut sum_tx_lambda = T::zero();
    let mut mean_h = vec![T::zero(); p];
    let mut mean_tx = vec![T::zero(); p];
    let mut mean_lambda = vec![T::zero(); p];
    for &s in cell {
        let lambda = duals
            .get(s)
            .copied()
            .flatten()
            .ok_or(PartitionError::MissingDual(s))?;
        let sc = &problem.scenarios[s];
        let w = sc.probability;
        prob += w;
        for i in 0..p {
            let tx = crate::scalar::dot(&sc.technology()[i], x);
            sum_h_lambda += w * sc.rhs[i] * lambda[i];
            sum_tx_lambda += w * tx * lambda[i];
            mean_h[i] += w * sc.rhs[i];
            mean_tx[i] += w * tx;
            mean_lambda[i] += w * lambda[i];
        }
    }
    let holds = |lhs: T, rhs: T| (lhs - rhs).abs() <= tol * (T::one() + lhs.abs() + rhs.abs());
    let ok_h = holds(
        prob * sum_h_lambda,
        crate::scalar::dot(&mean_h, &mean_lambda),
    );
    let ok_t = holds(
        prob * sum_tx_lambda,
        crate::scalar::dot(&mean_tx, &mean_lambda),
    );
    Ok(ok_h && ok_t)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Scenario;
    use proptest::prelude::*;

    fn key(v: &[f64]) -> DualKey<f64> {
        DualKey::Dual(v.to_vec())
    }

    #[test]
    fn identical_keys_keep_partition() {
        let p = Partition::whole(4);
        let keys = vec![key(&[1.0]); 4];
        let r = p.refine(&keys, 1e-6).unwrap();
        assert_eq!(r.cells(), p.cells());
        assert_eq!(r.generation(), 1);
    }

    #[test]
    fn distinct_keys_give_singletons() {
        let p = Partition::whole(3);
        let keys = vec![key(&[0.0]), key(&[1.0]), key(&[2.0])];
        assert_eq!(
            p.refine(&keys, 1e-6).unwrap().cells(),
            Partition::singletons(3).cells()
        );
    }

    #[test]
    fn leader_clustering_by_hand() {
        let p = Partition::whole(3);
        let keys = vec![key(&[0.0]), key(&[0.0]), key(&[1.0])];
        assert_eq!(
            p.refine(&keys, 1e-6).unwrap().cells(),
            &[vec![0, 1], vec![2]]
        );
        assert_eq!(
            p.refine(&keys[..2], 1e-6),
            Err(PartitionError::KeyCountMismatch {
                expected: 3,
                got: 2
            })
        );
    }

    #[test]
    fn strict_refinement_always_splits_selected_cells() {
        let p = Partition::from_cells(vec![vec![0, 1, 2], vec![3, 4]], 5).unwrap();
        let keys = vec![key(&[0.0]); 5];
        let r = p.refine_strict(&keys, 1e-6, &[true, false]).unwrap();
        assert_eq!(r.cells(), &[vec![0], vec![1], vec![2], vec![3, 4]]);
        assert_eq!(r.generation(), 1);
        let keys = vec![
            key(&[0.0]),
            key(&[1.0]),
            key(&[0.0]),
            key(&[0.0]),
            key(&[0.0]),
        ];
        let r = p.refine_strict(&keys, 1e-6, &[true, true]).unwrap();
        assert_eq!(r.cells(), &[vec![0, 2], vec![1], vec![3], vec![4]]);
    }

    #[test]
    fn rays_never_merge_with_duals() {
        let p = Partition::whole(2);
        let keys = vec![key(&[1.0]), DualKey::Ray(vec![1.0])];
        assert_eq!(p.refine(&keys, 1e-6).unwrap().len(), 2);
    }

    #[test]
    fn refinement_predicate() {
        let s = Partition::singletons(3);
        let w = Partition::whole(3);
        assert!(is_refinement(&s, &s).unwrap());
        assert!(is_refinement(&w, &s).unwrap());
        assert!(!is_refinement(&s, &w).unwrap());
        let p1 = Partition::from_cells(vec![vec![0, 1], vec![2]], 3).unwrap();
        let p2 = Partition::from_cells(vec![vec![0, 2], vec![1]], 3).unwrap();
        assert!(!is_refinement(&p1, &p2).unwrap());
        assert!(is_refinement(&w, &Partition::whole(4)).is_err());
    }

    #[test]
    fn from_cells_rejects_overlaps_and_gaps() {
        assert!(Partition::from_cells(vec![vec![0, 1], vec![1]], 2).is_err());
        assert!(Partition::from_cells(vec![vec![0]], 2).is_err());
        assert!(Partition::from_cells(vec![vec![0], vec![]], 1).is_err());
    }

    fn scalar_problem(h: &[f64], p: &[f64]) -> TwoStageProblem<f64> {
        TwoStageProblem {
            first_stage_cost: vec![0.0],
            first_stage_rows: vec![],
            first_stage_lower: vec![0.0],
            first_stage_upper: vec![1.0],
            first_stage_binary: vec![],
            recourse_matrix: vec![vec![1.0]],
            recourse_cost: vec![1.0],
            recourse_lower: vec![0.0],
            recourse_upper: vec![f64::INFINITY],
            scenarios: h
                .iter()
                .zip(p)
                .map(|(&h, &p)| Scenario {
                    probability: p,
                    technology: vec![vec![1.0]],
                    rhs: vec![h],
                    label: String::new(),
                })
                .collect(),
            theta_lb: 0.0,
        }
    }

    #[test]
    fn counterexample_cell_fails() {
        let pr = scalar_problem(&[1.0, 0.0], &[0.5, 0.5]);
        let l0 = [0.0];
        let l1 = [1.0];
        let duals = vec![Some(&l0[..]), Some(&l1[..])];
        assert!(!check_cell_conditions(&pr, &[0, 1], &duals, &[0.0], 1e-6).unwrap());
        assert!(check_cell_conditions(&pr, &[0], &duals, &[0.0], 1e-6).unwrap());
        let missing = vec![Some(&l0[..]), None];
        assert_eq!(
            check_cell_conditions(&pr, &[0, 1], &missing, &[0.0], 1e-6),
            Err(PartitionError::MissingDual(1))
        );
    }

    proptest! {
        #[test]
        fn refine_output_refines_input(keys in prop::collection::vec(0u8..4, 1..20), cut in 0usize..20) {
            let n = keys.len();
            let split = cut % n;
            let cells = if split == 0 { vec![(0..n).collect()] } else { vec![(0..split).collect(), (split..n).collect()] };
            let p = Partition::from_cells(cells, n).unwrap();
            let keys: Vec<_> = keys.iter().map(|&k| key(&[f64::from(k)])).collect();
            let r = p.refine(&keys, 1e-6).unwrap();
            prop_assert!(is_refinement(&p, &r).unwrap());
            prop_assert!(Partition::from_cells(r.cells().to_vec(), n).is_ok());
            let again = r.refine(&keys, 1e-6).unwrap();
            prop_assert_eq!(again.cells(), r.cells());
        }

        #[test]
        fn constant_duals_always_pass(h in prop::collection::vec(-10.0f64..10.0, 2..8), lam in -5.0f64..5.0, x in 0.0f64..1.0) {
            let p = vec![1.0 / h.len() as f64; h.len()];
            let pr = scalar_problem(&h, &p);
            let l = [lam];
            let duals = vec![Some(&l[..]); h.len()];
            let cell: Vec<usize> = (0..h.len()).collect();
            prop_assert!(check_cell_conditions(&pr, &cell, &duals, &[x], 1e-6).unwrap());
            let mut rev = cell.clone();
            rev.reverse();
            prop_assert!(check_cell_conditions(&pr, &rev, &duals, &[x], 1e-6).unwrap());
        }
    }
}
