//! Fixed-pattern compressed sparse row matrices.
//!
//! Power-flow Jacobians have a sparsity pattern fixed by the network topology;
//! only the values change between evaluations. The pattern is built once,
//! shared, and values are rewritten in place, which also makes "the pattern
//! never changes for a fixed case" a checkable property.

use nalgebra::{DMatrix, DVector};
use std::sync::Arc;

/// Sparsity structure of a matrix: row extents plus sorted column indices.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SparsePattern {
    nrows: usize,
    ncols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
}

impl SparsePattern {
    /// Build a pattern from per-row column lists. Duplicates are merged,
    /// columns are stored sorted.
    pub fn from_rows(ncols: usize, rows: &[Vec<usize>]) -> Self {
        let mut row_ptr = Vec::with_capacity(rows.len() + 1);
        let mut col_idx = Vec::new();
        row_ptr.push(0usize);
        for cols in rows {
            let mut sorted = cols.clone();
            sorted.sort_unstable();
            sorted.dedup();
            if let Some(&last) = sorted.last() {
                assert!(last < ncols, "column index {last} out of range ({ncols} columns)");
            }
            col_idx.extend_from_slice(&sorted);
            row_ptr.push(col_idx.len());
        }
        Self { nrows: rows.len(), ncols, row_ptr, col_idx }
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn nnz(&self) -> usize {
        self.col_idx.len()
    }

    /// Sorted column indices of row `r`.
    pub fn row_cols(&self, r: usize) -> &[usize] {
        &self.col_idx[self.row_ptr[r]..self.row_ptr[r + 1]]
    }

    fn slot(&self, r: usize, c: usize) -> Option<usize> {
        let base = self.row_ptr[r];
        self.row_cols(r).binary_search(&c).ok().map(|k| base + k)
    }
}

/// Real matrix over a shared [`SparsePattern`].
#[derive(Debug, Clone, PartialEq)]
pub struct SparseMatrix {
    pattern: Arc<SparsePattern>,
    values: Vec<f64>,
}

impl SparseMatrix {
    pub fn zeros(pattern: Arc<SparsePattern>) -> Self {
        let nnz = pattern.nnz();
        Self { pattern, values: vec![0.0; nnz] }
    }

    pub fn pattern(&self) -> &SparsePattern {
        &self.pattern
    }

    pub fn pattern_arc(&self) -> &Arc<SparsePattern> {
        &self.pattern
    }

    pub fn nrows(&self) -> usize {
        self.pattern.nrows
    }

    pub fn ncols(&self) -> usize {
        self.pattern.ncols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn reset(&mut self) {
        self.values.iter_mut().for_each(|v| *v = 0.0);
    }

    /// Largest absolute entry (0 for an empty pattern).
    pub fn amax(&self) -> f64 {
        self.values.iter().fold(0.0f64, |a, v| a.max(v.abs()))
    }

    /// Add `v` to entry (r, c). The slot must exist in the pattern.
    pub fn add(&mut self, r: usize, c: usize, v: f64) {
        let slot = self
            .pattern
            .slot(r, c)
            .unwrap_or_else(|| panic!("entry ({r}, {c}) not in sparsity pattern"));
        self.values[slot] += v;
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.pattern.slot(r, c).map_or(0.0, |s| self.values[s])
    }

    pub fn row_entries(&self, r: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let lo = self.pattern.row_ptr[r];
        let hi = self.pattern.row_ptr[r + 1];
        (lo..hi).map(move |s| (self.pattern.col_idx[s], self.values[s]))
    }

    /// y = A x
    pub fn mul_vec(&self, x: &DVector<f64>) -> DVector<f64> {
        assert_eq!(x.len(), self.ncols(), "vector length mismatch");
        let mut y = DVector::zeros(self.nrows());
        for r in 0..self.nrows() {
            let mut acc = 0.0;
            for (c, v) in self.row_entries(r) {
                acc += v * x[c];
            }
            y[r] = acc;
        }
        y
    }

    /// y = A^T x
    pub fn tr_mul_vec(&self, x: &DVector<f64>) -> DVector<f64> {
        assert_eq!(x.len(), self.nrows(), "vector length mismatch");
        let mut y = DVector::zeros(self.ncols());
        for r in 0..self.nrows() {
            let xr = x[r];
            if xr != 0.0 {
                for (c, v) in self.row_entries(r) {
                    y[c] += v * xr;
                }
            }
        }
        y
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.nrows(), self.ncols());
        for r in 0..self.nrows() {
            for (c, v) in self.row_entries(r) {
                m[(r, c)] = v;
            }
        }
        m
    }

    /// Dense symmetric product A^T A, accumulated row by row so the cost is
    /// sum of squared row populations rather than a full dense product.
    pub fn gram(&self) -> DMatrix<f64> {
        let n = self.ncols();
        let mut g = DMatrix::zeros(n, n);
        for r in 0..self.nrows() {
            let lo = self.pattern.row_ptr[r];
            let hi = self.pattern.row_ptr[r + 1];
            for s in lo..hi {
                let (ci, vi) = (self.pattern.col_idx[s], self.values[s]);
                for t in lo..hi {
                    let (cj, vj) = (self.pattern.col_idx[t], self.values[t]);
                    g[(ci, cj)] += vi * vj;
                }
            }
        }
        g
    }

    /// Dense symmetric product A A^T.
    pub fn gram_transpose(&self) -> DMatrix<f64> {
        let m = self.nrows();
        let mut g = DMatrix::zeros(m, m);
        // A A^T entry (i, j) = dot of rows i and j; exploit sorted columns.
        for i in 0..m {
            for j in i..m {
                let mut acc = 0.0;
                let mut it_i = self.row_entries(i).peekable();
                let mut it_j = self.row_entries(j).peekable();
                while let (Some(&(ci, vi)), Some(&(cj, vj))) = (it_i.peek(), it_j.peek()) {
                    match ci.cmp(&cj) {
                        std::cmp::Ordering::Less => {
                            it_i.next();
                        }
                        std::cmp::Ordering::Greater => {
                            it_j.next();
                        }
                        std::cmp::Ordering::Equal => {
                            acc += vi * vj;
                            it_i.next();
                            it_j.next();
                        }
                    }
                }
                g[(i, j)] = acc;
                g[(j, i)] = acc;
            }
        }
        g
    }
}
