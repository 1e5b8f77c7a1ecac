//! Sparse symmetric operators over mesh nodes and a banded Cholesky solver.
//!
//! With the row-major node numbering of [`crate::mesh::MeshTopology`] every
//! assembled operator has half-bandwidth `n_div + 2`, so a dense band
//! factorization is both exact and cheap at the mesh sizes used here.

use std::sync::Arc;

use crate::error::{Error, Result};

/// Compressed-row sparsity pattern with sorted column indices.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SparsityPattern {
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
}

impl SparsityPattern {
    /// Builds the pattern from per-row neighbour lists (diagonal included).
    pub fn from_rows(mut rows: Vec<Vec<usize>>) -> Self {
        let mut row_ptr = Vec::with_capacity(rows.len() + 1);
        let mut col_idx = Vec::new();
        row_ptr.push(0);
        for row in rows.iter_mut() {
            row.sort_unstable();
            row.dedup();
            col_idx.extend_from_slice(row);
            row_ptr.push(col_idx.len());
        }
        SparsityPattern { row_ptr, col_idx }
    }

    pub fn dim(&self) -> usize {
        self.row_ptr.len() - 1
    }

    pub fn nnz(&self) -> usize {
        self.col_idx.len()
    }

    pub fn row(&self, i: usize) -> &[usize] {
        &self.col_idx[self.row_ptr[i]..self.row_ptr[i + 1]]
    }

    /// Storage slot of entry `(i, j)`, if it is in the pattern.
    pub fn slot(&self, i: usize, j: usize) -> Option<usize> {
        self.row(i)
            .binary_search(&j)
            .ok()
            .map(|k| self.row_ptr[i] + k)
    }

    pub fn half_bandwidth(&self) -> usize {
        (0..self.dim())
            .flat_map(|i| self.row(i).iter().map(move |&j| i.abs_diff(j)))
            .max()
            .unwrap_or(0)
    }
}

/// Symmetric sparse matrix stored in full CSR form over a shared pattern.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseOperator {
    pattern: Arc<SparsityPattern>,
    values: Vec<f64>,
}

impl SparseOperator {
    pub fn zeros(pattern: Arc<SparsityPattern>) -> Self {
        let values = vec![0.0; pattern.nnz()];
        SparseOperator { pattern, values }
    }

    pub fn pattern(&self) -> &Arc<SparsityPattern> {
        &self.pattern
    }

    pub fn dim(&self) -> usize {
        self.pattern.dim()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub(crate) fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.pattern.slot(i, j).map_or(0.0, |k| self.values[k])
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.dim()];
        self.matvec_into(x, &mut y);
        y
    }

    pub fn matvec_into(&self, x: &[f64], y: &mut [f64]) {
        assert_eq!(x.len(), self.dim());
        assert_eq!(y.len(), self.dim());
        let p = &self.pattern;
        for (i, yi) in y.iter_mut().enumerate() {
            let range = p.row_ptr[i]..p.row_ptr[i + 1];
            *yi = p.col_idx[range.clone()]
                .iter()
                .zip(&self.values[range])
                .map(|(&j, v)| v * x[j])
                .sum();
        }
    }

    /// `x^T A x`.
    pub fn quad_form(&self, x: &[f64]) -> f64 {
        dot(x, &self.matvec(x))
    }

    /// `x^T A y`.
    pub fn bilinear(&self, x: &[f64], y: &[f64]) -> f64 {
        dot(x, &self.matvec(y))
    }

    /// `self + alpha * other`; both operands must share a pattern.
    pub fn add_scaled(&self, other: &SparseOperator, alpha: f64) -> SparseOperator {
        assert!(
            Arc::ptr_eq(&self.pattern, &other.pattern) || self.pattern == other.pattern,
            "operators must share a sparsity pattern"
        );
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| a + alpha * b)
            .collect();
        SparseOperator {
            pattern: self.pattern.clone(),
            values,
        }
    }

    pub fn scaled(&self, alpha: f64) -> SparseOperator {
        SparseOperator {
            pattern: self.pattern.clone(),
            values: self.values.iter().map(|v| alpha * v).collect(),
        }
    }

    /// Largest `|A_ij - A_ji|` over the pattern.
    pub fn asymmetry(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for i in 0..self.dim() {
            for &j in self.pattern.row(i) {
                worst = worst.max((self.get(i, j) - self.get(j, i)).abs());
            }
        }
        worst
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let n = self.dim();
        let mut dense = vec![vec![0.0; n]; n];
        for (i, row) in dense.iter_mut().enumerate() {
            for &j in self.pattern.row(i) {
                row[j] = self.get(i, j);
            }
        }
        dense
    }
}

/// Lower-triangular band factor `L` with `A = L L^T`.
#[derive(Debug, Clone)]
pub struct BandCholesky {
    n: usize,
    bw: usize,
    // Row i holds L[i][i - bw ..= i], left-padded for rows near the top.
    band: Vec<f64>,
}

impl BandCholesky {
    pub fn factor(a: &SparseOperator) -> Result<Self> {
        let n = a.dim();
        let bw = a.pattern().half_bandwidth();
        let w = bw + 1;
        let mut band = vec![0.0; n * w];
        for i in 0..n {
            for &j in a.pattern().row(i) {
                if j <= i {
                    band[i * w + (j + bw - i)] = a.get(i, j);
                }
            }
        }
        for i in 0..n {
            let lo_i = i.saturating_sub(bw);
            for j in lo_i..=i {
                let lo = lo_i.max(j.saturating_sub(bw));
                let mut s = band[i * w + (j + bw - i)];
                for k in lo..j {
                    s -= band[i * w + (k + bw - i)] * band[j * w + (k + bw - j)];
                }
                if i == j {
                    if s.is_nan() || s <= 0.0 {
                        return Err(Error::NotPositiveDefinite { row: i, pivot: s });
                    }
                    band[i * w + bw] = s.sqrt();
                } else {
                    band[i * w + (j + bw - i)] = s / band[j * w + bw];
                }
            }
        }
        Ok(BandCholesky { n, bw, band })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    #[allow(clippy::needless_range_loop)]
    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        assert_eq!(b.len(), self.n);
        let (n, bw, w) = (self.n, self.bw, self.bw + 1);
        let l = |i: usize, j: usize| self.band[i * w + (j + bw - i)];
        let mut x = b.to_vec();
        for i in 0..n {
            let mut s = x[i];
            for k in i.saturating_sub(bw)..i {
                s -= l(i, k) * x[k];
            }
            x[i] = s / l(i, i);
        }
        for i in (0..n).rev() {
            let mut s = x[i];
            for k in i + 1..(i + bw + 1).min(n) {
                s -= l(k, i) * x[k];
            }
            x[i] = s / l(i, i);
        }
        x
    }

    /// Solves `a x = b` and applies iterative refinement until the relative
    /// residual is at most `tol`.
    pub fn solve_refined(&self, a: &SparseOperator, b: &[f64], tol: f64) -> Result<Vec<f64>> {
        let b_norm = norm(b);
        if b_norm == 0.0 {
            return Ok(vec![0.0; self.n]);
        }
        let mut x = self.solve(b);
        let mut residual = f64::INFINITY;
        for _ in 0..4 {
            let ax = a.matvec(&x);
            let r: Vec<f64> = b.iter().zip(&ax).map(|(bi, ai)| bi - ai).collect();
            residual = norm(&r) / b_norm;
            if residual <= tol {
                return Ok(x);
            }
            let dx = self.solve(&r);
            x.iter_mut().zip(&dx).for_each(|(xi, d)| *xi += d);
        }
        Err(Error::LinearSolve { residual, tol })
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}
