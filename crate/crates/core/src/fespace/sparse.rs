//! Compressed sparse row matrices for the assembled systems.

use alloc::vec;
use alloc::vec::Vec;

/// Symmetric sparse matrix in CSR form, both triangles stored.
#[derive(Debug, Clone)]
pub struct Csr {
    pub n: usize,
    pub indptr: Vec<usize>,
    pub indices: Vec<u32>,
    pub values: Vec<f64>,
}

impl Csr {
    /// Builds from triplets, summing duplicates.
    pub fn from_triplets(n: usize, mut t: Vec<(u32, u32, f64)>) -> Csr {
        t.sort_unstable_by_key(|&(r, c, _)| (r, c));
        let mut counts = vec![0usize; n];
        let mut indices: Vec<u32> = Vec::with_capacity(t.len());
        let mut values: Vec<f64> = Vec::with_capacity(t.len());
        let mut last: Option<(u32, u32)> = None;
        for (r, c, v) in t {
            if last == Some((r, c)) {
                *values.last_mut().unwrap() += v;
            } else {
                indices.push(c);
                values.push(v);
                counts[r as usize] += 1;
                last = Some((r, c));
            }
        }
        let mut indptr = vec![0usize; n + 1];
        for r in 0..n {
            indptr[r + 1] = indptr[r] + counts[r];
        }
        Csr { n, indptr, indices, values }
    }

    pub fn nnz(&self) -> usize {
        self.indices.len()
    }

    pub fn row(&self, r: usize) -> (&[u32], &[f64]) {
        let (lo, hi) = (self.indptr[r], self.indptr[r + 1]);
        (&self.indices[lo..hi], &self.values[lo..hi])
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        let (cols, vals) = self.row(r);
        match cols.binary_search(&(c as u32)) {
            Ok(k) => vals[k],
            Err(_) => 0.0,
        }
    }

    pub fn matvec(&self, x: &[f64], y: &mut [f64]) {
        for r in 0..self.n {
            let (cols, vals) = self.row(r);
            let mut acc = 0.0;
            for (c, v) in cols.iter().zip(vals) {
                acc += v * x[*c as usize];
            }
            y[r] = acc;
        }
    }

    pub fn residual_norms(&self, x: &[f64], b: &[f64]) -> (f64, f64) {
        let mut r2 = 0.0;
        let mut b2 = 0.0;
        let mut ax = vec![0.0; self.n];
        self.matvec(x, &mut ax);
        for i in 0..self.n {
            let r = b[i] - ax[i];
            r2 += r * r;
            b2 += b[i] * b[i];
        }
        (crate::float::sqrt(r2), crate::float::sqrt(b2))
    }

    /// Largest relative asymmetry `|a_ij - a_ji| / scale`.
    pub fn asymmetry(&self) -> f64 {
        let scale = self.values.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-300);
        let mut worst = 0.0f64;
        for r in 0..self.n {
            let (cols, vals) = self.row(r);
            for (c, v) in cols.iter().zip(vals) {
                worst = worst.max((v - self.get(*c as usize, r)).abs());
            }
        }
        worst / scale
    }

    /// Dense representation, for small oracle comparisons.
    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut d = vec![vec![0.0; self.n]; self.n];
        for r in 0..self.n {
            let (cols, vals) = self.row(r);
            for (c, v) in cols.iter().zip(vals) {
                d[r][*c as usize] = *v;
            }
        }
        d
    }
}

/// Assembled linear system `A x = b`.
#[derive(Debug, Clone)]
pub struct SparseSystem {
    pub matrix: Csr,
    pub rhs: Vec<f64>,
}
