//! Bounded-variable primal revised simplex.
//!
//! Every row `i` receives a slack `s_i` so that `aᵢx + s_i = b_i`; the slack
//! bounds encode the relation. Phase 1 minimizes the sum of bound
//! violations of the basic variables, and its final multipliers are the
//! Farkas ray when that sum stays positive.

use log::trace;

use super::lu::LuFactor;
use super::{
    BasisHint, FarkasCertificate, LinearProgram, LpError, LpOutcome, OptimalSolution, Relation,
    UnboundedRay,
};
use crate::scalar::{inf_norm, LpTolerances, Scalar};

const NONE: usize = usize::MAX;

/// Tuning knobs of the simplex kernel.
#[derive(Clone, Debug, PartialEq)]
pub struct SimplexOptions<T> {
    pub tolerances: LpTolerances<T>,
    /// Pivot budget; `None` means `50·(n + m) + 10_000`.
    pub max_iterations: Option<usize>,
    /// Eta updates allowed before the basis is refactorized.
    pub refactor_interval: usize,
}

struct Engine<'a, T> {
    n: usize,
    m: usize,
    lp: &'a LinearProgram<T>,
    col_start: Vec<usize>,
    col_row: Vec<usize>,
    col_val: Vec<T>,
    lower: Vec<T>,
    upper: Vec<T>,
    cost: Vec<T>,
    val: Vec<T>,
    head: Vec<usize>,
    pos_of: Vec<usize>,
    lu: Option<LuFactor<T>>,
    tol: LpTolerances<T>,
    refactor_interval: usize,
}

enum Phase {
    One,
    Two,
}

impl<'a, T: Scalar> Engine<'a, T> {
    fn new(lp: &'a LinearProgram<T>, options: &SimplexOptions<T>) -> Self {
        let n = lp.num_vars();
        let m = lp.num_rows();
        let mut counts = vec![0usize; n + 1];
        for row in &lp.rows {
            for &(j, _) in &row.coeffs {
                counts[j + 1] += 1;
            }
        }
        for j in 0..n {
            counts[j + 1] += counts[j];
        }
        let col_start = counts.clone();
        let nnz = col_start[n];
        let mut fill = counts;
        let mut col_row = vec![0; nnz];
        let mut col_val = vec![T::zero(); nnz];
        for (i, row) in lp.rows.iter().enumerate() {
            for &(j, v) in &row.coeffs {
                let k = fill[j];
                col_row[k] = i;
                col_val[k] = v;
                fill[j] += 1;
            }
        }
        let mut lower = lp.lower.clone();
        let mut upper = lp.upper.clone();
        let mut cost = lp.cost.clone();
        for row in &lp.rows {
            let (l, u) = match row.relation {
                Relation::LessEq => (T::zero(), T::infinity()),
                Relation::GreaterEq => (T::neg_infinity(), T::zero()),
                Relation::Eq => (T::zero(), T::zero()),
            };
            lower.push(l);
            upper.push(u);
            cost.push(T::zero());
        }
        Self {
            n,
            m,
            lp,
            col_start,
            col_row,
            col_val,
            lower,
            upper,
            cost,
            val: vec![T::zero(); n + m],
            head: Vec::new(),
            pos_of: vec![NONE; n + m],
            lu: None,
            tol: options.tolerances,
            refactor_interval: options.refactor_interval.max(1),
        }
    }

    fn column(&self, j: usize, out: &mut Vec<(usize, T)>) {
        out.clear();
        if j < self.n {
            for k in self.col_start[j]..self.col_start[j + 1] {
                out.push((self.col_row[k], self.col_val[k]));
            }
        } else {
            out.push((j - self.n, T::one()));
        }
    }

    fn dot_column(&self, j: usize, y: &[T]) -> T {
        if j < self.n {
            let mut s = T::zero();
            for k in self.col_start[j]..self.col_start[j + 1] {
                s += self.col_val[k] * y[self.col_row[k]];
            }
            s
        } else {
            y[j - self.n]
        }
    }

    fn resting_value(&self, j: usize, prefer_upper: bool) -> T {
        let (l, u) = (self.lower[j], self.upper[j]);
        if prefer_upper && u.is_finite() {
            u
        } else if l.is_finite() {
            l
        } else if u.is_finite() {
            u
        } else {
            T::zero()
        }
    }

    fn nearest_bound(&self, j: usize, v: T) -> T {
        let (l, u) = (self.lower[j], self.upper[j]);
        match (l.is_finite(), u.is_finite()) {
            (true, true) => {
                if (v - l).abs() <= (u - v).abs() {
                    l
                } else {
                    u
                }
            }
            (true, false) => l,
            (false, true) => u,
            (false, false) => T::zero(),
        }
    }

    fn set_cold_basis(&mut self) {
        self.head = (self.n..self.n + self.m).collect();
        self.pos_of = vec![NONE; self.n + self.m];
        for (pos, &j) in self.head.iter().enumerate() {
            self.pos_of[j] = pos;
        }
        for j in 0..self.n {
            self.val[j] = self.resting_value(j, false);
        }
    }

    /// Installs the basis described by `hint`, returning `false` when it
    /// does not fit this program.
    fn set_hint_basis(&mut self, hint: &BasisHint) -> bool {
        let (n, m) = (self.n, self.m);
        if hint.num_vars != n || hint.basic.len() > m {
            return false;
        }
        let old_rows = hint.basic.len();
        let mut head = Vec::with_capacity(m);
        let mut pos_of = vec![NONE; n + m];
        for &j in &hint.basic {
            if j >= n + old_rows || pos_of[j] != NONE {
                return false;
            }
            pos_of[j] = head.len();
            head.push(j);
        }
        for i in old_rows..m {
            pos_of[n + i] = head.len();
            head.push(n + i);
        }
        let mut at_upper = vec![false; n + m];
        for &j in &hint.at_upper {
            if j < n + m {
                at_upper[j] = true;
            }
        }
        for j in 0..n + m {
            if pos_of[j] == NONE {
                self.val[j] = self.resting_value(j, at_upper[j]);
            }
        }
        self.head = head;
        self.pos_of = pos_of;
        true
    }

    fn refactor(&mut self) {
        let mut lu_cols: Vec<Vec<(usize, T)>> = Vec::with_capacity(self.m);
        let mut buf = Vec::new();
        for &j in &self.head {
            self.column(j, &mut buf);
            lu_cols.push(buf.clone());
        }
        let (lu, replacements) = LuFactor::factorize(
            self.m,
            |pos, out: &mut Vec<(usize, T)>| {
                out.clear();
                out.extend_from_slice(&lu_cols[pos]);
            },
            self.tol.pivot,
        );
        for (pos, r) in replacements {
            let kicked = self.head[pos];
            let slack = self.n + r;
            trace!("basis repair: variable {kicked} replaced by slack of row {r}");
            self.pos_of[kicked] = NONE;
            self.val[kicked] = self.nearest_bound(kicked, self.val[kicked]);
            self.head[pos] = slack;
            self.pos_of[slack] = pos;
        }
        self.lu = Some(lu);
        self.recompute_basics();
    }

    fn recompute_basics(&mut self) {
        let mut rhs: Vec<T> = self.lp.rows.iter().map(|r| r.rhs).collect();
        for j in 0..self.n {
            if self.pos_of[j] != NONE {
                continue;
            }
            let v = self.val[j];
            if v.is_zero() {
                continue;
            }
            for k in self.col_start[j]..self.col_start[j + 1] {
                rhs[self.col_row[k]] -= self.col_val[k] * v;
            }
        }
        for i in 0..self.m {
            let j = self.n + i;
            if self.pos_of[j] == NONE {
                rhs[i] -= self.val[j];
            }
        }
        self.lu.as_mut().expect("factorized").ftran(&mut rhs);
        for (pos, &j) in self.head.iter().enumerate() {
            self.val[j] = rhs[pos];
        }
    }

    fn basis_hint(&self) -> BasisHint {
        let at_upper = (0..self.n + self.m)
            .filter(|&j| {
                self.pos_of[j] == NONE
                    && self.upper[j].is_finite()
                    && self.val[j] == self.upper[j]
                    && self.lower[j] != self.upper[j]
            })
            .collect();
        BasisHint {
            num_vars: self.n,
            basic: self.head.clone(),
            at_upper,
        }
    }

    fn run(&mut self, max_iterations: usize) -> Result<LpOutcome<T>, LpError> {
        let (n, m) = (self.n, self.m);
        let tol = self.tol;
        let relax = T::lit(1e-9).min(tol.feasibility);
        let mut y = vec![T::zero(); m];
        let mut alpha = vec![T::zero(); m];
        let mut d = vec![T::zero(); n + m];
        let mut rejected = vec![false; n + m];
        let mut any_rejected = false;
        let mut fresh = true;
        let mut degenerate_run = 0usize;
        let progress = T::lit(1e-9);
        let mut record = T::infinity();
        let mut record_phase_one = true;
        let bland_after = 3 * (n + m);
        let mut buf = Vec::new();
        let mut iterations = 0usize;
        let mut nan_refactors = 0usize;

        loop {
            if self
                .lu
                .as_ref()
                .is_some_and(|lu| lu.num_updates() >= self.refactor_interval)
            {
                self.refactor();
                fresh = true;
            }

            if self.head.iter().any(|&j| !self.val[j].is_finite()) {
                nan_refactors += 1;
                if nan_refactors > 3 {
                    return Err(LpError::NumericalFailure(
                        "non-finite basic values after refactorization".into(),
                    ));
                }
                self.refactor();
                fresh = true;
                continue;
            }

            // Phase costs on basic positions.
            let mut phase = Phase::Two;
            for (pos, &j) in self.head.iter().enumerate() {
                let v = self.val[j];
                y[pos] = if v > self.upper[j] + tol.feasibility {
                    phase = Phase::One;
                    T::one()
                } else if v < self.lower[j] - tol.feasibility {
                    phase = Phase::One;
                    -T::one()
                } else {
                    T::zero()
                };
            }
            let phase_one = matches!(phase, Phase::One);

            // Stalling is judged by the phase objective rather than step
            // length: drift and bound snapping let tiny steps go up and down
            // forever without any real progress.
            let level = if phase_one {
                self.head.iter().fold(T::zero(), |acc, &j| {
                    acc + (self.val[j] - self.upper[j]).max(T::zero())
                        + (self.lower[j] - self.val[j]).max(T::zero())
                })
            } else {
                (0..n).fold(T::zero(), |acc, j| acc + self.cost[j] * self.val[j])
            };
            if phase_one != record_phase_one {
                record_phase_one = phase_one;
                record = T::infinity();
            }
            if level < record - progress * (T::one() + record.abs().min(T::max_value())) {
                record = level;
                degenerate_run = 0;
            } else if iterations > 0 {
                degenerate_run += 1;
            }
            if !phase_one {
                for (pos, &j) in self.head.iter().enumerate() {
                    y[pos] = self.cost[j];
                }
            }
            self.lu.as_mut().expect("factorized").btran(&mut y);

            // Pricing.
            let bland = degenerate_run > bland_after;
            let mut entering = NONE;
            let mut best = T::zero();
            for j in 0..n + m {
                if self.pos_of[j] != NONE || rejected[j] {
                    continue;
                }
                let cj = if phase_one { T::zero() } else { self.cost[j] };
                let dj = cj - self.dot_column(j, &y);
                d[j] = dj;
                let v = self.val[j];
                let attractive = (dj < -tol.optimality && v < self.upper[j])
                    || (dj > tol.optimality && v > self.lower[j]);
                if !attractive {
                    continue;
                }
                if bland {
                    entering = j;
                    break;
                }
                if dj.abs() > best {
                    best = dj.abs();
                    entering = j;
                }
            }

            if entering == NONE {
                if !fresh || any_rejected {
                    self.refactor();
                    fresh = true;
                    if any_rejected {
                        rejected.iter_mut().for_each(|r| *r = false);
                        any_rejected = false;
                    }
                    continue;
                }
                if phase_one {
                    let mut ray = y.clone();
                    let norm = inf_norm(&ray);
                    if norm > T::zero() {
                        ray.iter_mut().for_each(|v| *v /= norm);
                    }
                    return Ok(LpOutcome::Infeasible(FarkasCertificate {
                        ray,
                        basis: self.basis_hint(),
                    }));
                }
                return Ok(LpOutcome::Optimal(self.optimal(&y)));
            }

            iterations += 1;
            if iterations > max_iterations {
                return Err(LpError::NumericalFailure(format!(
                    "iteration limit {max_iterations} reached"
                )));
            }

            let q = entering;
            let dir = if d[q] < T::zero() {
                T::one()
            } else {
                -T::one()
            };
            alpha.iter_mut().for_each(|a| *a = T::zero());
            self.column(q, &mut buf);
            for &(r, v) in &buf {
                alpha[r] = v;
            }
            self.lu.as_mut().expect("factorized").ftran(&mut alpha);

            // Ratio test. `dist` is the exact distance to the blocking bound
            // and `rate` the speed at which it is consumed.
            let mut cands: Vec<(usize, T, T, T)> = Vec::new();
            let mut theta_max = T::infinity();
            for (pos, &a) in alpha.iter().enumerate() {
                if a.abs() <= tol.pivot {
                    continue;
                }
                let j = self.head[pos];
                let v = self.val[j];
                let change = -dir * a;
                let (l, u) = (self.lower[j], self.upper[j]);
                let target = if change < T::zero() {
                    if phase_one && v > u + tol.feasibility {
                        u
                    } else if phase_one && v < l - tol.feasibility {
                        continue;
                    } else {
                        l
                    }
                } else if phase_one && v < l - tol.feasibility {
                    l
                } else if phase_one && v > u + tol.feasibility {
                    continue;
                } else {
                    u
                };
                if !target.is_finite() {
                    continue;
                }
                let rate = change.abs();
                let dist = if change < T::zero() {
                    v - target
                } else {
                    target - v
                };
                let relaxed = (dist + relax) / rate;
                if relaxed < theta_max {
                    theta_max = relaxed;
                }
                cands.push((pos, target, dist, rate));
            }

            let range = self.upper[q] - self.lower[q];
            let mut leave: Option<(usize, T)> = None;
            let mut step;
            if bland {
                let mut best_ratio = T::infinity();
                let mut best_var = NONE;
                for &(pos, target, dist, rate) in &cands {
                    let ratio = (dist / rate).max(T::zero());
                    let j = self.head[pos];
                    if ratio < best_ratio || (ratio == best_ratio && j < best_var) {
                        best_ratio = ratio;
                        best_var = j;
                        leave = Some((pos, target));
                    }
                }
                step = best_ratio;
            } else {
                let mut best_alpha = T::zero();
                step = T::infinity();
                for &(pos, target, dist, rate) in &cands {
                    let ratio = dist / rate;
                    if ratio <= theta_max && alpha[pos].abs() > best_alpha {
                        best_alpha = alpha[pos].abs();
                        step = ratio.max(T::zero());
                        leave = Some((pos, target));
                    }
                }
            }

            if range.is_finite() && (leave.is_none() || range <= step) {
                leave = None;
                step = range;
            } else if leave.is_none() {
                if phase_one {
                    rejected[q] = true;
                    any_rejected = true;
                    continue;
                }
                return Ok(LpOutcome::Unbounded(self.unbounded(q, dir, &alpha)));
            }

            if !step.is_zero() {
                for (pos, &a) in alpha.iter().enumerate() {
                    if !a.is_zero() {
                        let j = self.head[pos];
                        self.val[j] -= dir * a * step;
                    }
                }
            }
            match leave {
                None => {
                    self.val[q] = if dir > T::zero() {
                        self.upper[q]
                    } else {
                        self.lower[q]
                    };
                }
                Some((pos, target)) => {
                    let out = self.head[pos];
                    self.val[q] += dir * step;
                    self.val[out] = target;
                    self.pos_of[out] = NONE;
                    self.pos_of[q] = pos;
                    self.head[pos] = q;
                    let pivot_small = alpha[pos].abs() < T::lit(1e-7);
                    self.lu
                        .as_mut()
                        .expect("factorized")
                        .update(pos, &alpha, T::lit(1e-14));
                    if pivot_small {
                        self.refactor();
                    }
                }
            }
            if any_rejected {
                rejected.iter_mut().for_each(|r| *r = false);
                any_rejected = false;
            }
            fresh = false;
        }
    }

    fn optimal(&self, y: &[T]) -> OptimalSolution<T> {
        let primal: Vec<T> = self.val[..self.n].to_vec();
        let reduced_costs = (0..self.n)
            .map(|j| self.cost[j] - self.dot_column(j, y))
            .collect();
        OptimalSolution {
            objective: self.lp.objective(&primal),
            primal,
            dual: y.to_vec(),
            reduced_costs,
            basis: self.basis_hint(),
        }
    }

    fn unbounded(&self, q: usize, dir: T, alpha: &[T]) -> UnboundedRay<T> {
        let mut ray = vec![T::zero(); self.n];
        if q < self.n {
            ray[q] = dir;
        }
        for (pos, &a) in alpha.iter().enumerate() {
            let j = self.head[pos];
            if j < self.n {
                ray[j] = -dir * a;
            }
        }
        let norm = inf_norm(&ray);
        if norm > T::zero() {
            ray.iter_mut().for_each(|v| *v /= norm);
        }
        UnboundedRay {
            ray,
            origin: self.val[..self.n].to_vec(),
            basis: self.basis_hint(),
        }
    }
}

pub(crate) fn run<T: Scalar>(
    lp: &LinearProgram<T>,
    hint: Option<&BasisHint>,
    options: &SimplexOptions<T>,
) -> Result<LpOutcome<T>, LpError> {
    let mut engine = Engine::new(lp, options);
    let warm = hint.is_some_and(|h| engine.set_hint_basis(h));
    if !warm {
        engine.set_cold_basis();
    }
    engine.refactor();
    let budget = options
        .max_iterations
        .unwrap_or(50 * (engine.n + engine.m) + 10_000);
    engine.run(budget)
}
