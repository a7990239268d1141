//! Sparse left-looking LU factorization of the simplex basis with
//! product-form (eta) updates between refactorizations.

use crate::scalar::Scalar;

const UNSET: usize = usize::MAX;

struct Eta<T> {
    pos: usize,
    pivot: T,
    others: Vec<(usize, T)>,
}

/// Factorization of the basis matrix whose columns are indexed by basis
/// position. Step `k` pivots on row `prow[k]` for basis position `pcol[k]`.
pub(crate) struct LuFactor<T> {
    m: usize,
    prow: Vec<usize>,
    pcol: Vec<usize>,
    row_step: Vec<usize>,
    l_start: Vec<usize>,
    l_idx: Vec<usize>,
    l_val: Vec<T>,
    u_start: Vec<usize>,
    u_idx: Vec<usize>,
    u_val: Vec<T>,
    u_diag: Vec<T>,
    etas: Vec<Eta<T>>,
    work: Vec<T>,
}

/// Basis positions whose columns were dependent, each paired with the row
/// whose unit (slack) column replaced it.
pub(crate) type Replacements = Vec<(usize, usize)>;

impl<T: Scalar> LuFactor<T> {
    pub fn num_updates(&self) -> usize {
        self.etas.len()
    }

    /// Factorizes the `m × m` basis given column accessor `column(pos)`.
    pub fn factorize<F>(m: usize, column: F, pivot_tol: T) -> (Self, Replacements)
    where
        F: Fn(usize, &mut Vec<(usize, T)>),
    {
        let mut cols: Vec<Vec<(usize, T)>> = Vec::with_capacity(m);
        let mut row_count = vec![0usize; m];
        for pos in 0..m {
            let mut c = Vec::new();
            column(pos, &mut c);
            for &(r, _) in &c {
                row_count[r] += 1;
            }
            cols.push(c);
        }
        let mut order: Vec<usize> = (0..m).collect();
        order.sort_by_key(|&p| (cols[p].len(), p));

        let mut f = LuFactor {
            m,
            prow: Vec::with_capacity(m),
            pcol: Vec::with_capacity(m),
            row_step: vec![UNSET; m],
            l_start: vec![0],
            l_idx: Vec::new(),
            l_val: Vec::new(),
            u_start: vec![0],
            u_idx: Vec::new(),
            u_val: Vec::new(),
            u_diag: Vec::with_capacity(m),
            etas: Vec::new(),
            work: vec![T::zero(); m],
        };

        let mut w = vec![T::zero(); m];
        let mut mark = vec![0u32; m];
        let mut visited = vec![0u32; m];
        let mut stamp = 0u32;
        let mut pattern: Vec<usize> = Vec::new();
        let mut postorder: Vec<usize> = Vec::new();
        let mut stack: Vec<(usize, usize)> = Vec::new();
        let mut deficient: Vec<usize> = Vec::new();
        let threshold = T::lit(0.1);

        for &pos in &order {
            stamp += 1;
            pattern.clear();
            postorder.clear();
            for &(r, v) in &cols[pos] {
                w[r] = v;
                if mark[r] != stamp {
                    mark[r] = stamp;
                    pattern.push(r);
                }
            }
            // Symbolic: rows reachable through L from pivoted rows, in
            // topological order.
            for &(r0, _) in &cols[pos] {
                if f.row_step[r0] == UNSET || visited[r0] == stamp {
                    continue;
                }
                visited[r0] = stamp;
                stack.push((r0, 0));
                while let Some(top) = stack.last_mut() {
                    let (r, idx) = *top;
                    let step = f.row_step[r];
                    let (s, e) = (f.l_start[step], f.l_start[step + 1]);
                    if s + idx < e {
                        top.1 += 1;
                        let child = f.l_idx[s + idx];
                        if f.row_step[child] != UNSET && visited[child] != stamp {
                            visited[child] = stamp;
                            stack.push((child, 0));
                        }
                    } else {
                        stack.pop();
                        postorder.push(r);
                    }
                }
            }
            for &r in postorder.iter().rev() {
                let step = f.row_step[r];
                let v = w[r];
                if v.is_zero() {
                    continue;
                }
                for k in f.l_start[step]..f.l_start[step + 1] {
                    let i = f.l_idx[k];
                    w[i] -= f.l_val[k] * v;
                    if mark[i] != stamp {
                        mark[i] = stamp;
                        pattern.push(i);
                    }
                }
            }
            let mut max_abs = T::zero();
            for &r in &pattern {
                if f.row_step[r] == UNSET {
                    max_abs = max_abs.max(w[r].abs());
                }
            }
            if max_abs <= pivot_tol {
                for &r in &pattern {
                    w[r] = T::zero();
                }
                deficient.push(pos);
                continue;
            }
            let mut pivot_row = UNSET;
            for &r in &pattern {
                if f.row_step[r] != UNSET || w[r].abs() < threshold * max_abs {
                    continue;
                }
                if pivot_row == UNSET || (row_count[r], r) < (row_count[pivot_row], pivot_row) {
                    pivot_row = r;
                }
            }
            let piv = w[pivot_row];
            let step = f.prow.len();
            for &r in &pattern {
                let v = w[r];
                w[r] = T::zero();
                if v.is_zero() || r == pivot_row {
                    continue;
                }
                let rs = f.row_step[r];
                if rs != UNSET {
                    f.u_idx.push(rs);
                    f.u_val.push(v);
                } else {
                    f.l_idx.push(r);
                    f.l_val.push(v / piv);
                }
            }
            f.u_start.push(f.u_idx.len());
            f.l_start.push(f.l_idx.len());
            f.u_diag.push(piv);
            f.prow.push(pivot_row);
            f.pcol.push(pos);
            f.row_step[pivot_row] = step;
        }

        // Pair dependent positions with unpivoted rows (unit columns).
        let mut replacements = Vec::new();
        if !deficient.is_empty() {
            let free_rows: Vec<usize> = (0..m).filter(|&r| f.row_step[r] == UNSET).collect();
            for (&pos, &r) in deficient.iter().zip(&free_rows) {
                let step = f.prow.len();
                f.u_start.push(f.u_idx.len());
                f.l_start.push(f.l_idx.len());
                f.u_diag.push(T::one());
                f.prow.push(r);
                f.pcol.push(pos);
                f.row_step[r] = step;
                replacements.push((pos, r));
            }
        }
        (f, replacements)
    }

    /// Solves `B z = a` in place: `rhs` is indexed by row on entry and by
    /// basis position on exit.
    pub fn ftran(&mut self, rhs: &mut [T]) {
        let m = self.m;
        for k in 0..m {
            let v = rhs[self.prow[k]];
            if v.is_zero() {
                continue;
            }
            for t in self.l_start[k]..self.l_start[k + 1] {
                rhs[self.l_idx[t]] -= self.l_val[t] * v;
            }
        }
        // Step-ordered values.
        let y = &mut self.work;
        for k in 0..m {
            y[k] = rhs[self.prow[k]];
        }
        for k in (0..m).rev() {
            let zk = y[k] / self.u_diag[k];
            y[k] = zk;
            if zk.is_zero() {
                continue;
            }
            for t in self.u_start[k]..self.u_start[k + 1] {
                y[self.u_idx[t]] -= self.u_val[t] * zk;
            }
        }
        for k in 0..m {
            rhs[self.pcol[k]] = y[k];
        }
        for eta in &self.etas {
            let zr = rhs[eta.pos] / eta.pivot;
            rhs[eta.pos] = zr;
            if zr.is_zero() {
                continue;
            }
            for &(i, a) in &eta.others {
                rhs[i] -= a * zr;
            }
        }
    }

    /// Solves `Bᵀ y = c` in place: `rhs` is indexed by basis position on
    /// entry and by row on exit.
    pub fn btran(&mut self, rhs: &mut [T]) {
        let m = self.m;
        for eta in self.etas.iter().rev() {
            let mut s = rhs[eta.pos];
            for &(i, a) in &eta.others {
                s -= rhs[i] * a;
            }
            rhs[eta.pos] = s / eta.pivot;
        }
        let w = &mut self.work;
        for k in 0..m {
            let mut s = rhs[self.pcol[k]];
            for t in self.u_start[k]..self.u_start[k + 1] {
                s -= self.u_val[t] * w[self.u_idx[t]];
            }
            w[k] = s / self.u_diag[k];
        }
        for k in (0..m).rev() {
            let mut s = w[k];
            for t in self.l_start[k]..self.l_start[k + 1] {
                s -= self.l_val[t] * rhs[self.l_idx[t]];
            }
            rhs[self.prow[k]] = s;
        }
    }

    /// Records that the column at basis position `pos` was replaced by a
    /// column whose ftran image is `alpha`.
    pub fn update(&mut self, pos: usize, alpha: &[T], drop_tol: T) {
        let others = alpha
            .iter()
            .enumerate()
            .filter(|&(i, a)| i != pos && a.abs() > drop_tol)
            .map(|(i, &a)| (i, a))
            .collect();
        self.etas.push(Eta {
            pos,
            pivot: alpha[pos],
            others,
        });
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dense_cols(a: &[Vec<f64>]) -> impl Fn(usize, &mut Vec<(usize, f64)>) + '_ {
        move |pos, out| {
            out.clear();
            for (r, row) in a.iter().enumerate() {
                if row[pos] != 0.0 {
                    out.push((r, row[pos]));
                }
            }
        }
    }

    fn matvec(a: &[Vec<f64>], x: &[f64]) -> Vec<f64> {
        a.iter()
            .map(|row| row.iter().zip(x).map(|(p, q)| p * q).sum())
            .collect()
    }

    #[test]
    fn ftran_and_btran_invert_basis() {
        let a = vec![
            vec![2.0, 0.0, 1.0, 0.0],
            vec![1.0, 3.0, 0.0, 0.0],
            vec![0.0, 1.0, 4.0, 1.0],
            vec![0.0, 0.0, 1.0, 5.0],
        ];
        let (mut f, rep) = LuFactor::factorize(4, dense_cols(&a), 1e-12);
        assert!(rep.is_empty());
        let b = vec![1.0, -2.0, 0.5, 3.0];
        let mut z = b.clone();
        f.ftran(&mut z);
        let back = matvec(&a, &z);
        for (u, v) in back.iter().zip(&b) {
            assert!((u - v).abs() < 1e-12);
        }
        let mut y = b.clone();
        f.btran(&mut y);
        // Aᵀ y = b
        for j in 0..4 {
            let s: f64 = (0..4).map(|i| a[i][j] * y[i]).sum();
            assert!((s - b[j]).abs() < 1e-12);
        }
    }

    #[test]
    fn eta_update_tracks_column_replacement() {
        let mut a = vec![
            vec![1.0, 2.0, 0.0],
            vec![0.0, 1.0, 0.0],
            vec![3.0, 0.0, 1.0],
        ];
        let (mut f, _) = LuFactor::factorize(3, dense_cols(&a), 1e-12);
        let newcol = [1.0, 1.0, 1.0];
        let mut alpha = newcol.to_vec();
        f.ftran(&mut alpha);
        f.update(1, &alpha, 0.0);
        for (r, v) in newcol.iter().enumerate() {
            a[r][1] = *v;
        }
        let b = vec![0.3, -1.0, 2.0];
        let mut z = b.clone();
        f.ftran(&mut z);
        let back = matvec(&a, &z);
        for (u, v) in back.iter().zip(&b) {
            assert!((u - v).abs() < 1e-12);
        }
        let mut y = b.clone();
        f.btran(&mut y);
        for j in 0..3 {
            let s: f64 = (0..3).map(|i| a[i][j] * y[i]).sum();
            assert!((s - b[j]).abs() < 1e-12);
        }
    }

    #[test]
    fn dependent_columns_are_reported() {
        let a = vec![
            vec![1.0, 2.0, 0.0],
            vec![1.0, 2.0, 0.0],
            vec![0.0, 0.0, 1.0],
        ];
        let (_, rep) = LuFactor::factorize(3, dense_cols(&a), 1e-12);
        assert_eq!(rep.len(), 1);
    }
}
