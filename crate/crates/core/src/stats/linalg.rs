//! Sparse design rows, weighted normal equations and their solvers.
//!
//! Fixed-effect designs are mostly one-hot, so rows are stored sparse and
//! `X'WX` is accumulated from each row's nonzeros. Below
//! [`DENSE_COLUMN_LIMIT`] columns the normal equations are solved by Cholesky;
//! above it, by Jacobi-preconditioned conjugate gradients that only touch `X`.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use super::StatsError;

pub const DENSE_COLUMN_LIMIT: usize = 2000;

/// Compressed sparse rows.
#[derive(Debug, Clone, Default)]
pub struct SparseRows {
    pub n_cols: usize,
    indptr: Vec<usize>,
    indices: Vec<u32>,
    values: Vec<f64>,
}

impl SparseRows {
    pub fn new(n_cols: usize) -> Self {
        SparseRows {
            n_cols,
            indptr: vec![0],
            indices: Vec::new(),
            values: Vec::new(),
        }
    }

    pub fn push_row(&mut self, entries: impl IntoIterator<Item = (usize, f64)>) {
        for (j, v) in entries {
            if v != 0.0 {
                self.indices.push(j as u32);
                self.values.push(v);
            }
        }
        self.indptr.push(self.indices.len());
    }

    pub fn n_rows(&self) -> usize {
        self.indptr.len() - 1
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let r = self.indptr[i]..self.indptr[i + 1];
        self.indices[r.clone()]
            .iter()
            .zip(&self.values[r])
            .map(|(&j, &v)| (j as usize, v))
    }

    /// Keeps the listed columns, renumbered in order.
    pub fn select_columns(&self, keep: &[usize]) -> SparseRows {
        let mut map = vec![usize::MAX; self.n_cols];
        for (new, &old) in keep.iter().enumerate() {
            map[old] = new;
        }
        let mut out = SparseRows::new(keep.len());
        for i in 0..self.n_rows() {
            out.push_row(self.row(i).filter(|(j, _)| map[*j] != usize::MAX).map(|(j, v)| (map[j], v)));
        }
        out
    }

    pub fn dot_row(&self, i: usize, beta: &[f64]) -> f64 {
        self.row(i).map(|(j, v)| v * beta[j]).sum()
    }

    pub fn mul_vec(&self, beta: &[f64]) -> Vec<f64> {
        (0..self.n_rows()).into_par_iter().map(|i| self.dot_row(i, beta)).collect()
    }

    /// `X' r`, reduced in fixed chunk order.
    pub fn t_mul_vec(&self, r: &[f64]) -> Vec<f64> {
        let p = self.n_cols;
        self.chunked_reduce(p, |rows, acc| {
            for i in rows {
                for (j, v) in self.row(i) {
                    acc[j] += v * r[i];
                }
            }
        })
    }

    /// Dense `X' diag(w) X`, reduced in fixed chunk order.
    pub fn weighted_gram(&self, w: &[f64]) -> DMatrix<f64> {
        let p = self.n_cols;
        let upper = self.chunked_reduce(p * p, |rows, acc| {
            let mut entries = Vec::new();
            for i in rows {
                entries.clear();
                entries.extend(self.row(i));
                for &(a, va) in &entries {
                    let wa = va * w[i];
                    for &(b, vb) in &entries {
                        if b >= a {
                            acc[a * p + b] += wa * vb;
                        }
                    }
                }
            }
        });
        DMatrix::from_fn(p, p, |a, b| {
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            upper[lo * p + hi]
        })
    }

    /// Accumulates `len`-sized partials over fixed row chunks, a bounded
    /// group of chunks at a time, and adds them in chunk order.
    fn chunked_reduce<F>(&self, len: usize, fill: F) -> Vec<f64>
    where
        F: Fn(std::ops::Range<usize>, &mut [f64]) + Sync,
    {
        let n = self.n_rows();
        let n_chunks = n.div_ceil(CHUNK);
        let group = (PARTIAL_BUDGET / len.max(1)).clamp(1, 64);
        let mut out = vec![0.0; len];
        let mut start = 0;
        while start < n_chunks {
            let end = (start + group).min(n_chunks);
            let partials: Vec<Vec<f64>> = (start..end)
                .into_par_iter()
                .map(|c| {
                    let mut acc = vec![0.0; len];
                    fill(c * CHUNK..((c + 1) * CHUNK).min(n), &mut acc);
                    acc
                })
                .collect();
            for part in partials {
                for (o, v) in out.iter_mut().zip(part) {
                    *o += v;
                }
            }
            start = end;
        }
        out
    }

    /// Column sums of squares times weights (diagonal of `X'WX`).
    pub fn weighted_diag(&self, w: &[f64]) -> Vec<f64> {
        self.chunked_reduce(self.n_cols, |rows, acc| {
            for i in rows {
                for (j, v) in self.row(i) {
                    acc[j] += v * v * w[i];
                }
            }
        })
    }
}

const CHUNK: usize = 8192;
/// Floats held in flight by one group of partial sums.
const PARTIAL_BUDGET: usize = 1 << 24;

/// Greedy in-order rank screen on a Gram matrix: column `j` is kept when its
/// Cholesky pivot, after projecting out the kept columns before it, exceeds
/// `tol` times its diagonal.
pub fn independent_columns(gram: &DMatrix<f64>, tol: f64) -> Vec<usize> {
    let p = gram.nrows();
    let mut kept: Vec<usize> = Vec::new();
    // Rows of L for the kept columns, in kept order.
    let mut l: Vec<Vec<f64>> = Vec::new();
    for j in 0..p {
        let diag = gram[(j, j)];
        if diag <= 0.0 {
            continue;
        }
        // Solve L * c = gram[kept, j].
        let mut c = Vec::with_capacity(kept.len());
        for (r, &k) in kept.iter().enumerate() {
            let mut s = gram[(k, j)];
            for t in 0..r {
                s -= l[r][t] * c[t];
            }
            c.push(s / l[r][r]);
        }
        let pivot = diag - c.iter().map(|x| x * x).sum::<f64>();
        if pivot > tol * diag {
            let mut row = c;
            row.push(pivot.sqrt());
            l.push(row);
            kept.push(j);
        }
    }
    kept
}

/// Solver for systems in a fixed (weighted) normal matrix.
pub enum NormalSolver<'a> {
    Dense(DMatrix<f64>),
    Iterative {
        x: &'a SparseRows,
        w: Vec<f64>,
        precond: Vec<f64>,
    },
}

impl<'a> NormalSolver<'a> {
    /// Factorizes `X' diag(w) X`. Dense path stores the inverse.
    pub fn new(x: &'a SparseRows, w: &[f64]) -> Result<Self, StatsError> {
        if x.n_cols < DENSE_COLUMN_LIMIT {
            let gram = x.weighted_gram(w);
            let chol = gram
                .cholesky()
                .ok_or_else(|| StatsError::Singular("weighted normal matrix not positive definite".into()))?;
            Ok(NormalSolver::Dense(chol.inverse()))
        } else {
            let precond = x
                .weighted_diag(w)
                .into_iter()
                .map(|d| if d > 0.0 { 1.0 / d } else { 1.0 })
                .collect();
            Ok(NormalSolver::Iterative {
                x,
                w: w.to_vec(),
                precond,
            })
        }
    }

    pub fn solve(&self, b: &[f64]) -> Result<Vec<f64>, StatsError> {
        match self {
            NormalSolver::Dense(inv) => Ok((inv * DVector::from_column_slice(b)).as_slice().to_vec()),
            NormalSolver::Iterative { x, w, precond } => conjugate_gradient(x, w, precond, b),
        }
    }

    /// Column `j` of the inverse normal matrix.
    pub fn inverse_column(&self, j: usize) -> Result<Vec<f64>, StatsError> {
        match self {
            NormalSolver::Dense(inv) => Ok(inv.column(j).as_slice().to_vec()),
            NormalSolver::Iterative { x, .. } => {
                let mut e = vec![0.0; x.n_cols];
                e[j] = 1.0;
                self.solve(&e)
            }
        }
    }

    pub fn is_dense(&self) -> bool {
        matches!(self, NormalSolver::Dense(_))
    }
}

fn conjugate_gradient(x: &SparseRows, w: &[f64], precond: &[f64], b: &[f64]) -> Result<Vec<f64>, StatsError> {
    let p = b.len();
    let apply = |v: &[f64]| -> Vec<f64> {
        let xv = x.mul_vec(v);
        let wxv: Vec<f64> = xv.iter().zip(w).map(|(a, b)| a * b).collect();
        x.t_mul_vec(&wxv)
    };
    let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
    let b_norm = dot(b, b).sqrt();
    let mut sol = vec![0.0; p];
    if b_norm == 0.0 {
        return Ok(sol);
    }
    let mut r = b.to_vec();
    let mut z: Vec<f64> = r.iter().zip(precond).map(|(a, m)| a * m).collect();
    let mut d = z.clone();
    let mut rz = dot(&r, &z);
    for _ in 0..(10 * p).max(1000) {
        let ad = apply(&d);
        let alpha = rz / dot(&d, &ad);
        for i in 0..p {
            sol[i] += alpha * d[i];
            r[i] -= alpha * ad[i];
        }
        if dot(&r, &r).sqrt() <= 1e-12 * b_norm {
            return Ok(sol);
        }
        z = r.iter().zip(precond).map(|(a, m)| a * m).collect();
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..p {
            d[i] = z[i] + beta * d[i];
        }
    }
    Err(StatsError::Singular("conjugate gradients did not converge".into()))
}
