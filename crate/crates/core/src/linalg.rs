//! Sparse storage, block discovery and the dense/sparse solvers shared by the
//! steady-state and spectrum code.

use std::collections::BTreeMap;

use dyn_stack::{MemBuffer, MemStack};
use faer::linalg::evd::hessenberg;
use faer::linalg::householder;
use faer::prelude::*;
use faer::sparse::{SparseColMat, Triplet};
use faer::{Conj, Mat, Par};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type C64 = Complex64;

pub const ZERO: C64 = C64 { re: 0.0, im: 0.0 };
pub const ONE: C64 = C64 { re: 1.0, im: 0.0 };
pub const I: C64 = C64 { re: 0.0, im: 1.0 };

/// Compressed sparse row matrix with sorted, duplicate-free column indices.
#[derive(Clone, Debug, PartialEq)]
pub struct CsrMatrix {
    nrows: usize,
    ncols: usize,
    indptr: Vec<usize>,
    indices: Vec<usize>,
    values: Vec<C64>,
}

impl CsrMatrix {
    pub fn zeros(nrows: usize, ncols: usize) -> Self {
        Self {
            nrows,
            ncols,
            indptr: vec![0; nrows + 1],
            indices: Vec::new(),
            values: Vec::new(),
        }
    }

    pub fn identity(n: usize) -> Self {
        Self::from_diagonal(&vec![ONE; n])
    }

    pub fn from_diagonal(diag: &[C64]) -> Self {
        let n = diag.len();
        let mut triplets = Vec::with_capacity(n);
        for (i, &v) in diag.iter().enumerate() {
            triplets.push((i, i, v));
        }
        Self::from_triplets(n, n, triplets)
    }

    /// Builds a matrix from `(row, col, value)` entries. Duplicates are summed
    /// and exact zeros dropped.
    pub fn from_triplets(nrows: usize, ncols: usize, mut triplets: Vec<(usize, usize, C64)>) -> Self {
        triplets.sort_unstable_by_key(|&(r, c, _)| (r, c));
        let mut indptr = vec![0usize; nrows + 1];
        let mut indices = Vec::with_capacity(triplets.len());
        let mut values: Vec<C64> = Vec::with_capacity(triplets.len());
        let mut last: Option<(usize, usize)> = None;
        for (r, c, v) in triplets {
            assert!(r < nrows && c < ncols, "triplet ({r}, {c}) out of bounds");
            if last == Some((r, c)) {
                *values.last_mut().unwrap() += v;
            } else {
                indices.push(c);
                values.push(v);
                indptr[r + 1] += 1;
                last = Some((r, c));
            }
        }
        for r in 0..nrows {
            indptr[r + 1] += indptr[r];
        }
        let mut m = Self {
            nrows,
            ncols,
            indptr,
            indices,
            values,
        };
        m.prune(0.0);
        m
    }

    pub fn from_dense(m: &Mat<C64>) -> Self {
        let mut triplets = Vec::new();
        for j in 0..m.ncols() {
            for i in 0..m.nrows() {
                let v = m[(i, j)];
                if v != ZERO {
                    triplets.push((i, j, v));
                }
            }
        }
        Self::from_triplets(m.nrows(), m.ncols(), triplets)
    }

    /// Drops entries with modulus `<= tol`.
    pub fn prune(&mut self, tol: f64) {
        let mut indptr = vec![0usize; self.nrows + 1];
        let mut indices = Vec::with_capacity(self.indices.len());
        let mut values = Vec::with_capacity(self.values.len());
        for r in 0..self.nrows {
            for k in self.indptr[r]..self.indptr[r + 1] {
                let v = self.values[k];
                if v.norm() > tol {
                    indices.push(self.indices[k]);
                    values.push(v);
                }
            }
            indptr[r + 1] = indices.len();
        }
        self.indptr = indptr;
        self.indices = indices;
        self.values = values;
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row(&self, r: usize) -> impl Iterator<Item = (usize, C64)> + '_ {
        let span = self.indptr[r]..self.indptr[r + 1];
        self.indices[span.clone()]
            .iter()
            .copied()
            .zip(self.values[span].iter().copied())
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, usize, C64)> + '_ {
        (0..self.nrows).flat_map(move |r| self.row(r).map(move |(c, v)| (r, c, v)))
    }

    pub fn get(&self, r: usize, c: usize) -> C64 {
        let span = self.indptr[r]..self.indptr[r + 1];
        match self.indices[span.clone()].binary_search(&c) {
            Ok(k) => self.values[span.start + k],
            Err(_) => ZERO,
        }
    }

    pub fn transpose(&self) -> Self {
        let t = self.iter().map(|(r, c, v)| (c, r, v)).collect();
        Self::from_triplets(self.ncols, self.nrows, t)
    }

    pub fn conj(&self) -> Self {
        let mut m = self.clone();
        for v in &mut m.values {
            *v = v.conj();
        }
        m
    }

    pub fn adjoint(&self) -> Self {
        self.transpose().conj()
    }

    pub fn scale(&self, s: C64) -> Self {
        let mut m = self.clone();
        for v in &mut m.values {
            *v *= s;
        }
        m.prune(0.0);
        m
    }

    /// `a * self + b * other`.
    pub fn axpby(&self, a: C64, other: &Self, b: C64) -> Self {
        assert_eq!((self.nrows, self.ncols), (other.nrows, other.ncols));
        let mut t: Vec<_> = self.iter().map(|(r, c, v)| (r, c, a * v)).collect();
        t.extend(other.iter().map(|(r, c, v)| (r, c, b * v)));
        Self::from_triplets(self.nrows, self.ncols, t)
    }

    pub fn add(&self, other: &Self) -> Self {
        self.axpby(ONE, other, ONE)
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.axpby(ONE, other, -ONE)
    }

    pub fn matmul(&self, other: &Self) -> Self {
        assert_eq!(self.ncols, other.nrows);
        let mut t = Vec::new();
        let mut acc: BTreeMap<usize, C64> = BTreeMap::new();
        for r in 0..self.nrows {
            acc.clear();
            for (k, a) in self.row(r) {
                for (c, b) in other.row(k) {
                    *acc.entry(c).or_insert(ZERO) += a * b;
                }
            }
            t.extend(acc.iter().map(|(&c, &v)| (r, c, v)));
        }
        Self::from_triplets(self.nrows, other.ncols, t)
    }

    /// Kronecker product `a ⊗ b`; `a` carries the slow index.
    pub fn kron(a: &Self, b: &Self) -> Self {
        let mut t = Vec::with_capacity(a.nnz() * b.nnz());
        for (ra, ca, va) in a.iter() {
            for (rb, cb, vb) in b.iter() {
                t.push((ra * b.nrows + rb, ca * b.ncols + cb, va * vb));
            }
        }
        Self::from_triplets(a.nrows * b.nrows, a.ncols * b.ncols, t)
    }

    pub fn matvec(&self, x: &[C64]) -> Vec<C64> {
        assert_eq!(x.len(), self.ncols);
        (0..self.nrows)
            .map(|r| self.row(r).map(|(c, v)| v * x[c]).sum())
            .collect()
    }

    pub fn to_dense(&self) -> Mat<C64> {
        let mut m = Mat::<C64>::zeros(self.nrows, self.ncols);
        for (r, c, v) in self.iter() {
            m[(r, c)] = v;
        }
        m
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.norm()))
    }

    /// Maximum absolute row sum.
    pub fn norm_inf(&self) -> f64 {
        (0..self.nrows)
            .map(|r| self.row(r).map(|(_, v)| v.norm()).sum::<f64>())
            .fold(0.0, f64::max)
    }

    pub fn trace(&self) -> C64 {
        (0..self.nrows.min(self.ncols)).map(|i| self.get(i, i)).sum()
    }

    /// Restriction to the rows and columns in `idx`, renumbered in order.
    pub fn restrict(&self, idx: &[usize]) -> Self {
        let mut pos = vec![usize::MAX; self.ncols];
        for (k, &i) in idx.iter().enumerate() {
            pos[i] = k;
        }
        let mut t = Vec::new();
        for (k, &r) in idx.iter().enumerate() {
            for (c, v) in self.row(r) {
                if pos[c] != usize::MAX {
                    t.push((k, pos[c], v));
                }
            }
        }
        Self::from_triplets(idx.len(), idx.len(), t)
    }

    pub fn restrict_dense(&self, idx: &[usize]) -> Mat<C64> {
        let mut pos = vec![usize::MAX; self.ncols];
        for (k, &i) in idx.iter().enumerate() {
            pos[i] = k;
        }
        let mut m = Mat::<C64>::zeros(idx.len(), idx.len());
        for (k, &r) in idx.iter().enumerate() {
            for (c, v) in self.row(r) {
                if pos[c] != usize::MAX {
                    m[(k, pos[c])] = v;
                }
            }
        }
        m
    }

    pub fn to_faer_csc(&self) -> Result<SparseColMat<usize, C64>> {
        let t: Vec<_> = self.iter().map(|(r, c, v)| Triplet::new(r, c, v)).collect();
        SparseColMat::try_new_from_triplets(self.nrows, self.ncols, &t)
            .map_err(|e| Error::Solver(format!("sparse assembly failed: {e:?}")))
    }
}

/// Connected components of the undirected sparsity graph of a square matrix.
/// Each component lists its indices in increasing order; components are sorted
/// by their smallest index.
pub fn components(m: &CsrMatrix) -> Vec<Vec<usize>> {
    assert_eq!(m.nrows(), m.ncols());
    let n = m.nrows();
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(p: &mut [usize], mut x: usize) -> usize {
        while p[x] != x {
            p[x] = p[p[x]];
            x = p[x];
        }
        x
    }
    for (r, c, _) in m.iter() {
        let (a, b) = (find(&mut parent, r), find(&mut parent, c));
        if a != b {
            let (lo, hi) = if a < b { (a, b) } else { (b, a) };
            parent[hi] = lo;
        }
    }
    let mut groups: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for i in 0..n {
        let root = find(&mut parent, i);
        groups.entry(root).or_default().push(i);
    }
    groups.into_values().collect()
}

pub fn vec_norm_inf(x: &[C64]) -> f64 {
    x.iter().fold(0.0, |m, v| m.max(v.norm()))
}

fn column(x: &[C64]) -> Mat<C64> {
    Mat::from_fn(x.len(), 1, |i, _| x[i])
}

/// Dense solve with partial pivoting.
pub fn dense_solve(a: &Mat<C64>, b: &[C64]) -> Vec<C64> {
    let lu = a.partial_piv_lu();
    let mut x = column(b);
    lu.solve_in_place(&mut x);
    (0..b.len()).map(|i| x[(i, 0)]).collect()
}

/// Sparse LU factorization kept for repeated solves.
pub struct SparseLu {
    lu: faer::sparse::linalg::solvers::Lu<usize, C64>,
    n: usize,
}

impl SparseLu {
    pub fn new(a: &CsrMatrix) -> Result<Self> {
        let csc = a.to_faer_csc()?;
        let lu = csc
            .sp_lu()
            .map_err(|e| Error::Solver(format!("sparse LU failed: {e:?}")))?;
        Ok(Self { lu, n: a.nrows() })
    }

    pub fn solve(&self, b: &[C64]) -> Vec<C64> {
        let mut x = column(b);
        self.lu.solve_in_place(&mut x);
        (0..self.n).map(|i| x[(i, 0)]).collect()
    }
}

/// Evaluates `l^T (z I - A)^{-1} b` for many `z` after a single unitary
/// reduction `A = Q H Q^H` to upper Hessenberg form. Each evaluation costs
/// O(n^2).
pub struct HessenbergResolvent {
    n: usize,
    /// Row-major copy of `H`, entries below the first subdiagonal dropped.
    h_rows: Vec<C64>,
    qb: Vec<C64>,
    ql: Vec<C64>,
}

impl HessenbergResolvent {
    pub fn new(a: &Mat<C64>, l: &[C64], b: &[C64]) -> Self {
        let n = a.nrows();
        assert_eq!(n, a.ncols());
        assert_eq!(n, l.len());
        assert_eq!(n, b.len());
        let mut qb = column(b);
        let mut ql = column(l);
        let mut h = a.clone();
        if n > 2 {
            let bs = faer::linalg::qr::no_pivoting::factor::recommended_block_size::<C64>(n - 1, n - 1);
            let mut house = Mat::<C64>::zeros(bs, n - 1);
            let par = Par::Seq;
            let req = hessenberg::hessenberg_in_place_scratch::<C64>(n, bs, par, Default::default())
                .or(householder::apply_block_householder_sequence_transpose_on_the_left_in_place_scratch::<C64>(n - 1, bs, 1));
            let mut buf = MemBuffer::new(req);
            let stack = MemStack::new(&mut buf);
            hessenberg::hessenberg_in_place(h.as_mut(), house.as_mut(), par, stack, Default::default());
            let v = h.as_ref().submatrix(1, 0, n - 1, n - 1);
            // qb <- Q^H b, ql <- Q^T l
            householder::apply_block_householder_sequence_transpose_on_the_left_in_place_with_conj(
                v,
                house.as_ref(),
                Conj::Yes,
                qb.as_mut().subrows_mut(1, n - 1),
                par,
                stack,
            );
            householder::apply_block_householder_sequence_transpose_on_the_left_in_place_with_conj(
                v,
                house.as_ref(),
                Conj::No,
                ql.as_mut().subrows_mut(1, n - 1),
                par,
                stack,
            );
        }
        let mut h_rows = vec![ZERO; n * n];
        for i in 0..n {
            for j in i.saturating_sub(1)..n {
                h_rows[i * n + j] = h[(i, j)];
            }
        }
        Self {
            n,
            h_rows,
            qb: (0..n).map(|i| qb[(i, 0)]).collect(),
            ql: (0..n).map(|i| ql[(i, 0)]).collect(),
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    /// `l^T (z I - A)^{-1} b`, using `work` (length n^2) as scratch.
    pub fn eval_with(&self, z: C64, work: &mut Vec<C64>) -> Result<C64> {
        let n = self.n;
        if n == 0 {
            return Ok(ZERO);
        }
        work.clear();
        work.extend(self.h_rows.iter().map(|&v| -v));
        for i in 0..n {
            work[i * n + i] += z;
        }
        let mut x = self.qb.clone();
        let scale = self.h_rows.iter().fold(z.norm(), |m, v| m.max(v.norm()));
        // Eliminate the subdiagonal, swapping adjacent rows when that gives
        // the larger pivot.
        for k in 0..n - 1 {
            let p = work[k * n + k];
            let s = work[(k + 1) * n + k];
            if s.norm() > p.norm() {
                for j in k..n {
                    work.swap(k * n + j, (k + 1) * n + j);
                }
                x.swap(k, k + 1);
            }
            let p = work[k * n + k];
            let s = work[(k + 1) * n + k];
            if s != ZERO {
                let f = s / p;
                let (upper, lower) = work.split_at_mut((k + 1) * n);
                let prow = &upper[k * n..(k + 1) * n];
                let nrow = &mut lower[..n];
                for j in k..n {
                    nrow[j] -= f * prow[j];
                }
                let xk = x[k];
                x[k + 1] -= f * xk;
            }
        }
        for k in (0..n).rev() {
            let mut acc = x[k];
            let row = &work[k * n..(k + 1) * n];
            for j in k + 1..n {
                acc -= row[j] * x[j];
            }
            let d = row[k];
            if d.norm() <= f64::EPSILON * scale {
                return Err(Error::Solver(format!("resolvent singular at z = {z}")));
            }
            x[k] = acc / d;
        }
        Ok(self.ql.iter().zip(&x).map(|(l, v)| l * v).sum())
    }

    pub fn eval(&self, z: C64) -> Result<C64> {
        let mut work = Vec::with_capacity(self.n * self.n);
        self.eval_with(z, &mut work)
    }
}
