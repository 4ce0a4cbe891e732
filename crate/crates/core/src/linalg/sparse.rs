//! Compressed sparse column matrices.
//!
//! Invariants of the storage, checked by construction and relied on
//! everywhere: `col_ptr` has length `ncols + 1` and is nondecreasing with
//! `col_ptr[0] == 0` and `col_ptr[ncols] == nnz`; within each column the row
//! indices are strictly ascending, so there are no duplicate entries.

use crate::error::{Error, Result};
use crate::linalg::dense::DenseMatrix;
use crate::linalg::scalar::Scalar;

/// Sparse matrix in compressed sparse column form.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseMatrix<S> {
    nrows: usize,
    ncols: usize,
    col_ptr: Vec<usize>,
    row_idx: Vec<usize>,
    values: Vec<S>,
}

impl<S: Scalar> SparseMatrix<S> {
    /// Builds a matrix from `(row, col, value)` triplets.
    ///
    /// Triplets may come in any order; entries hitting the same position are
    /// summed. Out-of-range indices are rejected.
    pub fn from_triplets(
        nrows: usize,
        ncols: usize,
        triplets: &[(usize, usize, S)],
    ) -> Result<Self> {
        for &(i, j, _) in triplets {
            if i >= nrows || j >= ncols {
                return Err(Error::InvalidInput(format!(
                    "triplet ({i}, {j}) outside a {nrows}x{ncols} matrix"
                )));
            }
        }
        // Counting sort by column, then order and merge each column by row.
        let mut counts = vec![0usize; ncols + 1];
        for &(_, j, _) in triplets {
            counts[j + 1] += 1;
        }
        for j in 0..ncols {
            counts[j + 1] += counts[j];
        }
        let mut slots: Vec<(usize, S)> = vec![(0, S::ZERO); triplets.len()];
        let mut next = counts.clone();
        for &(i, j, v) in triplets {
            slots[next[j]] = (i, v);
            next[j] += 1;
        }
        let mut col_ptr = vec![0usize; ncols + 1];
        let mut row_idx = Vec::with_capacity(triplets.len());
        let mut values = Vec::with_capacity(triplets.len());
        for j in 0..ncols {
            let seg = &mut slots[counts[j]..counts[j + 1]];
            seg.sort_by_key(|&(i, _)| i);
            let mut k = 0;
            while k < seg.len() {
                let row = seg[k].0;
                let mut sum = seg[k].1;
                k += 1;
                while k < seg.len() && seg[k].0 == row {
                    sum += seg[k].1;
                    k += 1;
                }
                row_idx.push(row);
                values.push(sum);
            }
            col_ptr[j + 1] = row_idx.len();
        }
        Ok(SparseMatrix {
            nrows,
            ncols,
            col_ptr,
            row_idx,
            values,
        })
    }

    /// Assembles from already compressed parts; the caller guarantees sorted
    /// row indices within each column.
    pub(crate) fn from_raw_parts(
        nrows: usize,
        ncols: usize,
        col_ptr: Vec<usize>,
        row_idx: Vec<usize>,
        values: Vec<S>,
    ) -> Self {
        let m = Self::from_raw_parts_unsorted(nrows, ncols, col_ptr, row_idx, values);
        debug_assert!((0..m.ncols).all(|j| m.col(j).0.windows(2).all(|w| w[0] < w[1])));
        m
    }

    /// Like [`SparseMatrix::from_raw_parts`] but rows within a column may
    /// still be out of order; pair with [`SparseMatrix::sort_columns`].
    pub(crate) fn from_raw_parts_unsorted(
        nrows: usize,
        ncols: usize,
        col_ptr: Vec<usize>,
        row_idx: Vec<usize>,
        values: Vec<S>,
    ) -> Self {
        debug_assert_eq!(col_ptr.len(), ncols + 1);
        debug_assert_eq!(*col_ptr.last().unwrap(), row_idx.len());
        debug_assert_eq!(row_idx.len(), values.len());
        debug_assert!(col_ptr.windows(2).all(|w| w[0] <= w[1]));
        debug_assert!(row_idx.iter().all(|&i| i < nrows));
        SparseMatrix {
            nrows,
            ncols,
            col_ptr,
            row_idx,
            values,
        }
    }

    /// Restores ascending row order within each column.
    pub(crate) fn sort_columns(&mut self) {
        for j in 0..self.ncols {
            let lo = self.col_ptr[j];
            let hi = self.col_ptr[j + 1];
            let mut pairs: Vec<(usize, S)> = self.row_idx[lo..hi]
                .iter()
                .copied()
                .zip(self.values[lo..hi].iter().copied())
                .collect();
            pairs.sort_by_key(|&(i, _)| i);
            for (p, (i, v)) in pairs.into_iter().enumerate() {
                self.row_idx[lo + p] = i;
                self.values[lo + p] = v;
            }
        }
    }

    /// Identity matrix of order `n`.
    pub fn identity(n: usize) -> Self {
        SparseMatrix {
            nrows: n,
            ncols: n,
            col_ptr: (0..=n).collect(),
            row_idx: (0..n).collect(),
            values: vec![S::ONE; n],
        }
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

    /// Entry accessor by binary search; meant for tests and small probes.
    pub fn get(&self, i: usize, j: usize) -> S {
        let lo = self.col_ptr[j];
        let hi = self.col_ptr[j + 1];
        match self.row_idx[lo..hi].binary_search(&i) {
            Ok(p) => self.values[lo + p],
            Err(_) => S::ZERO,
        }
    }

    /// Iterates all stored entries as `(row, col, value)`, column by column.
    pub fn iter(&self) -> impl Iterator<Item = (usize, usize, S)> + '_ {
        (0..self.ncols).flat_map(move |j| {
            (self.col_ptr[j]..self.col_ptr[j + 1])
                .map(move |p| (self.row_idx[p], j, self.values[p]))
        })
    }

    /// Row indices and values of column `j`.
    pub fn col(&self, j: usize) -> (&[usize], &[S]) {
        let lo = self.col_ptr[j];
        let hi = self.col_ptr[j + 1];
        (&self.row_idx[lo..hi], &self.values[lo..hi])
    }

    /// Largest entry modulus, zero for an empty matrix.
    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.modulus()))
    }

    /// Matrix-vector product `self * x`.
    pub fn mul_vec(&self, x: &[S]) -> Result<Vec<S>> {
        if x.len() != self.ncols {
            return Err(Error::shape(
                "sparse matvec",
                (self.nrows, self.ncols),
                (x.len(), 1),
            ));
        }
        let mut y = vec![S::ZERO; self.nrows];
        for j in 0..self.ncols {
            let xj = x[j];
            let (rows, vals) = self.col(j);
            for (&i, &v) in rows.iter().zip(vals) {
                y[i] += v * xj;
            }
        }
        Ok(y)
    }
}

impl SparseMatrix<f64> {
    /// Diagonal matrix from the given entries.
    pub fn from_diag(diag: &[f64]) -> Self {
        let n = diag.len();
        SparseMatrix {
            nrows: n,
            ncols: n,
            col_ptr: (0..=n).collect(),
            row_idx: (0..n).collect(),
            values: diag.to_vec(),
        }
    }

    /// Dense copy, for small oracles and diagnostics.
    pub fn to_dense(&self) -> DenseMatrix {
        let mut a = DenseMatrix::zeros(self.nrows, self.ncols);
        for (i, j, v) in self.iter() {
            a.set(i, j, v);
        }
        a
    }

    /// Sparse times dense, `self * w`.
    pub fn mul_dense(&self, w: &DenseMatrix) -> Result<DenseMatrix> {
        if self.ncols != w.nrows() {
            return Err(Error::shape(
                "sparse * dense",
                (self.nrows, self.ncols),
                (w.nrows(), w.ncols()),
            ));
        }
        let mut out = DenseMatrix::zeros(self.nrows, w.ncols());
        for jd in 0..w.ncols() {
            let wj = w.col(jd);
            let oj = out.col_mut(jd);
            for js in 0..self.ncols {
                let x = wj[js];
                if x == 0.0 {
                    continue;
                }
                let (rows, vals) = self.col(js);
                for (&i, &v) in rows.iter().zip(vals) {
                    oj[i] += v * x;
                }
            }
        }
        Ok(out)
    }

    /// Sparse times sparse, `self * rhs`.
    pub fn mul_sparse(&self, rhs: &SparseMatrix<f64>) -> Result<SparseMatrix<f64>> {
        if self.ncols != rhs.nrows {
            return Err(Error::shape(
                "sparse * sparse",
                (self.nrows, self.ncols),
                (rhs.nrows, rhs.ncols),
            ));
        }
        let mut work = vec![0.0f64; self.nrows];
        let mut mark = vec![usize::MAX; self.nrows];
        let mut pattern: Vec<usize> = Vec::new();
        let mut col_ptr = vec![0usize; rhs.ncols + 1];
        let mut row_idx = Vec::new();
        let mut values = Vec::new();
        for j in 0..rhs.ncols {
            pattern.clear();
            let (rrows, rvals) = rhs.col(j);
            for (&k, &x) in rrows.iter().zip(rvals) {
                let (srows, svals) = self.col(k);
                for (&i, &v) in srows.iter().zip(svals) {
                    if mark[i] != j {
                        mark[i] = j;
                        work[i] = 0.0;
                        pattern.push(i);
                    }
                    work[i] += v * x;
                }
            }
            pattern.sort_unstable();
            for &i in &pattern {
                row_idx.push(i);
                values.push(work[i]);
            }
            col_ptr[j + 1] = row_idx.len();
        }
        Ok(SparseMatrix {
            nrows: self.nrows,
            ncols: rhs.ncols,
            col_ptr,
            row_idx,
            values,
        })
    }
}

impl DenseMatrix {
    /// Dense times sparse, `self * a`.
    pub fn mul_sparse(&self, a: &SparseMatrix<f64>) -> Result<DenseMatrix> {
        if self.ncols() != a.nrows() {
            return Err(Error::shape(
                "dense * sparse",
                (self.nrows(), self.ncols()),
                (a.nrows(), a.ncols()),
            ));
        }
        let mut out = DenseMatrix::zeros(self.nrows(), a.ncols());
        for j in 0..a.ncols() {
            let (rows, vals) = a.col(j);
            for (&k, &v) in rows.iter().zip(vals) {
                let src = self.col(k);
                let dst = out.col_mut(j);
                for i in 0..src.len() {
                    dst[i] += v * src[i];
                }
            }
        }
        Ok(out)
    }

    /// Dense times sparse transpose, `self * a^T`, without forming `a^T`.
    pub fn mul_sparse_transpose(&self, a: &SparseMatrix<f64>) -> Result<DenseMatrix> {
        if self.ncols() != a.ncols() {
            return Err(Error::shape(
                "dense * sparse^T",
                (self.nrows(), self.ncols()),
                (a.ncols(), a.nrows()),
            ));
        }
        let mut out = DenseMatrix::zeros(self.nrows(), a.nrows());
        for j in 0..a.ncols() {
            let src = self.col(j).to_vec();
            let (rows, vals) = a.col(j);
            for (&i, &v) in rows.iter().zip(vals) {
                let dst = out.col_mut(i);
                for r in 0..src.len() {
                    dst[r] += v * src[r];
                }
            }
        }
        Ok(out)
    }
}
