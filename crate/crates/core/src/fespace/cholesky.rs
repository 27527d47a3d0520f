//! Sparse Cholesky factorization with a geometric nested-dissection
//! ordering.
//!
//! The factor `L` is stored by rows; the symbolic structure (elimination
//! tree and row patterns) is computed once per sparsity pattern and reused
//! when only the numeric values change, which is what the active-set and
//! stress-split iterations need.

use super::sparse::Csr;
use crate::error::{Error, Result};
use crate::float;
use crate::geom::Vec2;
use alloc::vec;
use alloc::vec::Vec;

/// Fill-reducing ordering by recursive coordinate bisection. `coords` gives
/// a location per unknown; unknowns sharing a matrix entry are graph
/// neighbors. Returns `perm` with `perm[new] = old`.
pub fn nested_dissection(pattern: &Csr, coords: &[Vec2]) -> Vec<u32> {
    assert_eq!(pattern.n, coords.len());
    let mut order: Vec<u32> = Vec::with_capacity(pattern.n);
    let mut side: Vec<u8> = vec![0; pattern.n]; // scratch: 1 = in B
    let all: Vec<u32> = (0..pattern.n as u32).collect();
    nd_recurse(pattern, coords, all, &mut side, &mut order);
    debug_assert_eq!(order.len(), pattern.n);
    order
}

fn nd_recurse(pattern: &Csr, coords: &[Vec2], mut set: Vec<u32>, side: &mut [u8], order: &mut Vec<u32>) {
    const LEAF: usize = 48;
    if set.len() <= LEAF {
        set.sort_unstable();
        order.extend_from_slice(&set);
        return;
    }
    // split along the wider bounding-box axis
    let (mut xmin, mut xmax, mut ymin, mut ymax) = (f64::MAX, f64::MIN, f64::MAX, f64::MIN);
    for &v in &set {
        let p = coords[v as usize];
        xmin = xmin.min(p.x);
        xmax = xmax.max(p.x);
        ymin = ymin.min(p.y);
        ymax = ymax.max(p.y);
    }
    let use_x = (xmax - xmin) >= (ymax - ymin);
    set.sort_unstable_by(|&a, &b| {
        let (pa, pb) = (coords[a as usize], coords[b as usize]);
        let (ka, kb) = if use_x { (pa.x, pb.x) } else { (pa.y, pb.y) };
        ka.partial_cmp(&kb).unwrap().then(a.cmp(&b))
    });
    let half = set.len() / 2;
    let (a_half, b_half) = set.split_at(half);
    for &v in b_half {
        side[v as usize] = 1;
    }
    let mut a_keep: Vec<u32> = Vec::with_capacity(a_half.len());
    let mut sep: Vec<u32> = Vec::new();
    for &v in a_half {
        let (cols, _) = pattern.row(v as usize);
        if cols.iter().any(|&c| side[c as usize] == 1) {
            sep.push(v);
        } else {
            a_keep.push(v);
        }
    }
    let b: Vec<u32> = b_half.to_vec();
    for &v in &b {
        side[v as usize] = 0;
    }
    nd_recurse(pattern, coords, a_keep, side, order);
    nd_recurse(pattern, coords, b, side, order);
    sep.sort_unstable();
    order.extend_from_slice(&sep);
}

/// Sparse `L L^T` factorization. Create once per pattern with [`SparseCholesky::new`],
/// re-run [`SparseCholesky::refactor`] when values change.
pub struct SparseCholesky {
    n: usize,
    /// perm[new] = old
    perm: Vec<u32>,
    /// upper triangle of the permuted matrix, by columns (CSC): entries
    /// `row <= col`, rows ascending per column; maps into original values.
    up_ptr: Vec<usize>,
    up_row: Vec<u32>,
    up_src: Vec<usize>,
    /// factor rows: pattern (strictly lower), ascending
    lp: Vec<usize>,
    li: Vec<u32>,
    lx: Vec<f64>,
    diag: Vec<f64>,
    factored: bool,
}

impl SparseCholesky {
    /// Symbolic analysis. `coords` enables the fill-reducing ordering; the
    /// natural order is used otherwise.
    pub fn new(matrix: &Csr, coords: Option<&[Vec2]>) -> SparseCholesky {
        let n = matrix.n;
        let perm = match coords {
            Some(c) => nested_dissection(matrix, c),
            None => (0..n as u32).collect(),
        };
        let mut iperm = vec![0u32; n];
        for (new, &old) in perm.iter().enumerate() {
            iperm[old as usize] = new as u32;
        }
        // permuted upper triangle in CSC: column j holds rows i <= j
        let mut col_counts = vec![0usize; n];
        for r_old in 0..n {
            let (cols, _) = matrix.row(r_old);
            let i_new = iperm[r_old] as usize;
            for &c_old in cols {
                let j_new = iperm[c_old as usize] as usize;
                if i_new <= j_new {
                    col_counts[j_new] += 1;
                }
            }
        }
        let mut up_ptr = vec![0usize; n + 1];
        for j in 0..n {
            up_ptr[j + 1] = up_ptr[j] + col_counts[j];
        }
        let nnz_up = up_ptr[n];
        let mut up_row = vec![0u32; nnz_up];
        let mut up_src = vec![0usize; nnz_up];
        let mut fill = up_ptr.clone();
        for r_old in 0..n {
            let (cols, _) = matrix.row(r_old);
            let base = matrix.indptr[r_old];
            let i_new = iperm[r_old] as usize;
            for (k, &c_old) in cols.iter().enumerate() {
                let j_new = iperm[c_old as usize] as usize;
                if i_new <= j_new {
                    let slot = fill[j_new];
                    up_row[slot] = i_new as u32;
                    up_src[slot] = base + k;
                    fill[j_new] += 1;
                }
            }
        }
        // sort rows within each column (insertion order is arbitrary)
        for j in 0..n {
            let lo = up_ptr[j];
            let hi = up_ptr[j + 1];
            let mut pairs: Vec<(u32, usize)> =
                up_row[lo..hi].iter().copied().zip(up_src[lo..hi].iter().copied()).collect();
            pairs.sort_unstable_by_key(|p| p.0);
            for (k, (r, s)) in pairs.into_iter().enumerate() {
                up_row[lo + k] = r;
                up_src[lo + k] = s;
            }
        }
        // elimination tree and row patterns (ereach)
        let mut parent = vec![-1i64; n];
        let mut ancestor = vec![-1i64; n];
        for k in 0..n {
            for idx in up_ptr[k]..up_ptr[k + 1] {
                let mut i = up_row[idx] as i64;
                while i != -1 && (i as usize) < k {
                    let next = ancestor[i as usize];
                    ancestor[i as usize] = k as i64;
                    if next == -1 {
                        parent[i as usize] = k as i64;
                        break;
                    }
                    i = next;
                }
            }
        }
        // row patterns via ereach, two passes (count, fill)
        let mut mark = vec![usize::MAX; n];
        let mut lp = vec![0usize; n + 1];
        let mut scratch: Vec<u32> = Vec::new();
        for pass in 0..2 {
            let mut li: Vec<u32> = if pass == 1 {
                vec![0u32; lp[n]]
            } else {
                Vec::new()
            };
            for (k, m) in mark.iter_mut().enumerate() {
                *m = usize::MAX;
                let _ = k;
            }
            for k in 0..n {
                scratch.clear();
                mark[k] = k;
                for idx in up_ptr[k]..up_ptr[k + 1] {
                    let mut i = up_row[idx] as usize;
                    while mark[i] != k {
                        mark[i] = k;
                        scratch.push(i as u32);
                        i = parent[i] as usize;
                    }
                }
                scratch.sort_unstable();
                if pass == 0 {
                    lp[k + 1] = scratch.len();
                } else {
                    let lo = lp[k];
                    li[lo..lo + scratch.len()].copy_from_slice(&scratch);
                }
            }
            if pass == 0 {
                for k in 0..n {
                    lp[k + 1] += lp[k];
                }
            } else {
                let lx = vec![0.0; li.len()];
                return SparseCholesky {
                    n,
                    perm,
                    up_ptr,
                    up_row,
                    up_src,
                    lp,
                    li,
                    lx,
                    diag: vec![0.0; n],
                    factored: false,
                };
            }
        }
        unreachable!()
    }

    pub fn nnz_factor(&self) -> usize {
        self.li.len() + self.n
    }

    pub fn is_factored(&self) -> bool {
        self.factored
    }

    /// Numeric factorization from the values of `matrix`, which must have
    /// the pattern passed to [`SparseCholesky::new`].
    pub fn refactor(&mut self, matrix: &Csr) -> Result<()> {
        let n = self.n;
        let mut w = vec![0.0f64; n];
        // row start positions for the partial rows of L built so far
        for k in 0..n {
            // scatter column k of the permuted upper triangle (= row k of
            // the lower part) into the workspace
            let mut akk = 0.0;
            for idx in self.up_ptr[k]..self.up_ptr[k + 1] {
                let i = self.up_row[idx] as usize;
                let v = matrix.values[self.up_src[idx]];
                if i == k {
                    akk = v;
                } else {
                    w[i] = v;
                }
            }
            let (lo, hi) = (self.lp[k], self.lp[k + 1]);
            let mut sum_sq = 0.0;
            for idx in lo..hi {
                let j = self.li[idx] as usize;
                // y_j = (w_j - sum_{i<j} L[j,i] y_i) / L[j,j]
                let mut y = w[j];
                let (jlo, jhi) = (self.lp[j], self.lp[j + 1]);
                for jidx in jlo..jhi {
                    let i = self.li[jidx] as usize;
                    y -= self.lx[jidx] * w[i];
                }
                y /= self.diag[j];
                w[j] = y;
                sum_sq += y * y;
            }
            let pivot = akk - sum_sq;
            if !(pivot > 0.0) {
                // clean workspace before bailing
                for idx in lo..hi {
                    let j = self.li[idx] as usize;
                    self.lx[idx] = w[j];
                    w[j] = 0.0;
                }
                return Err(Error::NotPositiveDefinite { pivot_index: self.perm[k] as usize });
            }
            self.diag[k] = float::sqrt(pivot);
            for idx in lo..hi {
                let j = self.li[idx] as usize;
                self.lx[idx] = w[j];
                w[j] = 0.0;
            }
        }
        self.factored = true;
        Ok(())
    }

    /// Solves `A x = b` with the current factorization.
    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        assert!(self.factored, "solve before refactor");
        let n = self.n;
        let mut y = vec![0.0; n];
        for k in 0..n {
            let mut acc = b[self.perm[k] as usize];
            for idx in self.lp[k]..self.lp[k + 1] {
                acc -= self.lx[idx] * y[self.li[idx] as usize];
            }
            y[k] = acc / self.diag[k];
        }
        for k in (0..n).rev() {
            let xk = y[k] / self.diag[k];
            y[k] = xk;
            for idx in self.lp[k]..self.lp[k + 1] {
                y[self.li[idx] as usize] -= self.lx[idx] * xk;
            }
        }
        let mut x = vec![0.0; n];
        for k in 0..n {
            x[self.perm[k] as usize] = y[k];
        }
        x
    }

    /// Solve with iterative refinement. Refinement aims well below the
    /// acceptance threshold `tol`; the call fails only when even the
    /// refined residual exceeds `tol`.
    pub fn solve_refined(&self, matrix: &Csr, b: &[f64], tol: f64) -> Result<(Vec<f64>, f64)> {
        let aim = tol.min(1e-13);
        let mut x = self.solve(b);
        let mut rel = relative_residual(matrix, &x, b);
        for _ in 0..3 {
            if rel <= aim {
                break;
            }
            let mut r = vec![0.0; self.n];
            matrix.matvec(&x, &mut r);
            for i in 0..self.n {
                r[i] = b[i] - r[i];
            }
            let dx = self.solve(&r);
            for i in 0..self.n {
                x[i] += dx[i];
            }
            let new_rel = relative_residual(matrix, &x, b);
            if new_rel >= rel {
                rel = new_rel;
                break;
            }
            rel = new_rel;
        }
        if rel <= tol {
            Ok((x, rel))
        } else {
            Err(Error::SolveFailed { residual: rel })
        }
    }
}

pub fn relative_residual(matrix: &Csr, x: &[f64], b: &[f64]) -> f64 {
    let (r, bn) = matrix.residual_norms(x, b);
    if bn > 0.0 {
        r / bn
    } else {
        r
    }
}

impl SparseCholesky {
    /// Preconditioned conjugate gradients on `matrix` with this (possibly
    /// stale) factorization as the preconditioner. Returns the solution and
    /// relative residual on success; `None` when the iteration stalls (the
    /// caller should refactor).
    pub fn solve_precond_cg(
        &self,
        matrix: &Csr,
        b: &[f64],
        x0: Option<&[f64]>,
        tol: f64,
        max_iter: usize,
    ) -> Option<(Vec<f64>, f64)> {
        if !self.factored {
            return None;
        }
        let n = matrix.n;
        let bnorm = float::sqrt(b.iter().map(|v| v * v).sum::<f64>());
        if bnorm == 0.0 {
            return Some((vec![0.0; n], 0.0));
        }
        let mut x = match x0 {
            Some(w) => w.to_vec(),
            None => vec![0.0; n],
        };
        let mut r = vec![0.0; n];
        matrix.matvec(&x, &mut r);
        for i in 0..n {
            r[i] = b[i] - r[i];
        }
        let mut z = self.solve(&r);
        let mut p = z.clone();
        let mut rz: f64 = r.iter().zip(&z).map(|(a, b)| a * b).sum();
        let mut ap = vec![0.0; n];
        for _ in 0..max_iter {
            let rnorm = float::sqrt(r.iter().map(|v| v * v).sum::<f64>());
            if rnorm <= tol * bnorm {
                return Some((x, rnorm / bnorm));
            }
            matrix.matvec(&p, &mut ap);
            let pap: f64 = p.iter().zip(&ap).map(|(a, b)| a * b).sum();
            if !(pap > 0.0) {
                return None;
            }
            let alpha = rz / pap;
            for i in 0..n {
                x[i] += alpha * p[i];
                r[i] -= alpha * ap[i];
            }
            z = self.solve(&r);
            let rz_new: f64 = r.iter().zip(&z).map(|(a, b)| a * b).sum();
            let beta = rz_new / rz;
            rz = rz_new;
            for i in 0..n {
                p[i] = z[i] + beta * p[i];
            }
        }
        let rnorm = float::sqrt(r.iter().map(|v| v * v).sum::<f64>());
        if rnorm <= tol * bnorm {
            Some((x, rnorm / bnorm))
        } else {
            None
        }
    }
}
