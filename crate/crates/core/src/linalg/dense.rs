//! Column-major dense matrices.
//!
//! Dense storage shows up in two places only: the eigenvector basis of the
//! temporal preconditioner and the space-time coefficient arrays, where a
//! trial function is held as an (#spatial x #temporal) array of nodal values.
//! Everything here is therefore small and the kernels are plain loops.

use crate::error::{Error, Result};

/// Dense real matrix stored column by column.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseMatrix {
    nrows: usize,
    ncols: usize,
    data: Vec<f64>,
}

impl DenseMatrix {
    /// Zero matrix of the given shape.
    pub fn zeros(nrows: usize, ncols: usize) -> Self {
        DenseMatrix {
            nrows,
            ncols,
            data: vec![0.0; nrows * ncols],
        }
    }

    /// Identity matrix of order `n`.
    pub fn identity(n: usize) -> Self {
        let mut a = DenseMatrix::zeros(n, n);
        for i in 0..n {
            a.set(i, i, 1.0);
        }
        a
    }

    /// Builds a matrix from a row-major nested slice; handy in tests.
    pub fn from_rows(rows: &[&[f64]]) -> Self {
        let nrows = rows.len();
        let ncols = if nrows == 0 { 0 } else { rows[0].len() };
        let mut a = DenseMatrix::zeros(nrows, ncols);
        for (i, row) in rows.iter().enumerate() {
            assert_eq!(row.len(), ncols, "ragged rows");
            for (j, &v) in row.iter().enumerate() {
                a.set(i, j, v);
            }
        }
        a
    }

    /// Wraps an existing column-major buffer.
    pub fn from_column_major(nrows: usize, ncols: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), nrows * ncols, "buffer length mismatch");
        DenseMatrix { nrows, ncols, data }
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        debug_assert!(i < self.nrows && j < self.ncols);
        self.data[i + j * self.nrows]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        debug_assert!(i < self.nrows && j < self.ncols);
        self.data[i + j * self.nrows] = v;
    }

    #[inline]
    pub fn add_to(&mut self, i: usize, j: usize, v: f64) {
        debug_assert!(i < self.nrows && j < self.ncols);
        self.data[i + j * self.nrows] += v;
    }

    /// Column `j` as a slice.
    pub fn col(&self, j: usize) -> &[f64] {
        &self.data[j * self.nrows..(j + 1) * self.nrows]
    }

    pub fn col_mut(&mut self, j: usize) -> &mut [f64] {
        &mut self.data[j * self.nrows..(j + 1) * self.nrows]
    }

    /// Whole column-major buffer.
    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn transpose(&self) -> DenseMatrix {
        let mut t = DenseMatrix::zeros(self.ncols, self.nrows);
        for j in 0..self.ncols {
            for i in 0..self.nrows {
                t.set(j, i, self.get(i, j));
            }
        }
        t
    }

    /// Matrix product `self * rhs`.
    pub fn matmul(&self, rhs: &DenseMatrix) -> Result<DenseMatrix> {
        if self.ncols != rhs.nrows {
            return Err(Error::shape(
                "dense matmul",
                (self.nrows, self.ncols),
                (rhs.nrows, rhs.ncols),
            ));
        }
        let mut out = DenseMatrix::zeros(self.nrows, rhs.ncols);
        for j in 0..rhs.ncols {
            let bj = rhs.col(j);
            let oj = out.col_mut(j);
            for (k, &bkj) in bj.iter().enumerate() {
                if bkj == 0.0 {
                    continue;
                }
                let ak = self.col(k);
                for i in 0..ak.len() {
                    oj[i] += ak[i] * bkj;
                }
            }
        }
        Ok(out)
    }

    /// Matrix-vector product `self * x`.
    pub fn matvec(&self, x: &[f64]) -> Result<Vec<f64>> {
        if self.ncols != x.len() {
            return Err(Error::shape(
                "dense matvec",
                (self.nrows, self.ncols),
                (x.len(), 1),
            ));
        }
        let mut y = vec![0.0; self.nrows];
        for (k, &xk) in x.iter().enumerate() {
            if xk == 0.0 {
                continue;
            }
            for (i, &aik) in self.col(k).iter().enumerate() {
                y[i] += aik * xk;
            }
        }
        Ok(y)
    }

    /// Frobenius inner product with a matrix of the same shape.
    pub fn dot(&self, other: &DenseMatrix) -> f64 {
        debug_assert_eq!((self.nrows, self.ncols), (other.nrows, other.ncols));
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| a * b)
            .sum()
    }

    pub fn scale(&mut self, factor: f64) {
        for v in &mut self.data {
            *v *= factor;
        }
    }

    /// `self += factor * other`, shapes must agree.
    pub fn axpy(&mut self, factor: f64, other: &DenseMatrix) {
        debug_assert_eq!((self.nrows, self.ncols), (other.nrows, other.ncols));
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += factor * b;
        }
    }

    pub fn fill(&mut self, value: f64) {
        self.data.fill(value);
    }

    pub fn frob_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Replaces the matrix by its symmetric part `(A + A^T) / 2`.
    ///
    /// Operator applications reproduce a symmetric matrix only up to
    /// round-off; eigensolvers downstream expect exact symmetry.
    pub fn symmetrize(&mut self) {
        assert_eq!(self.nrows, self.ncols, "symmetrize needs a square matrix");
        for j in 0..self.ncols {
            for i in (j + 1)..self.nrows {
                let v = 0.5 * (self.get(i, j) + self.get(j, i));
                self.set(i, j, v);
                self.set(j, i, v);
            }
        }
    }
}
