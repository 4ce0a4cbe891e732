//! Sparse direct factorizations.
//!
//! Two classic algorithms cover everything the solver needs:
//!
//! * left-looking LU with partial pivoting (Gilbert-Peierls), generic over
//!   real and complex scalars, used for the shifted Helmholtz solves of the
//!   temporal preconditioner;
//! * up-looking Cholesky via the elimination tree, used for the symmetric
//!   positive definite spatial mass and stiffness matrices, doubling as the
//!   positive definiteness check demanded of them.
//!
//! Both compute the symbolic structure on the fly; at the problem sizes this
//! crate targets there is no need for fill-reducing orderings.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::linalg::dense::DenseMatrix;
use crate::linalg::scalar::Scalar;
use crate::linalg::sparse::SparseMatrix;

/// Relative pivot threshold below which a matrix counts as singular.
const SINGULARITY_TOL: f64 = 1e-14;

#[derive(Debug)]
enum Factors<S> {
    /// `P A = L U` with unit lower triangular `L`; `pinv[i]` is the permuted
    /// position of original row `i`.
    Lu {
        lower: SparseMatrix<S>,
        upper: SparseMatrix<S>,
        pinv: Vec<usize>,
    },
    /// `A = L L^T`; the diagonal entry leads each column of `L`.
    Cholesky { lower: SparseMatrix<S> },
}

/// Factorized square sparse matrix supporting repeated solves.
#[derive(Debug)]
pub struct Factorization<S> {
    n: usize,
    factors: Factors<S>,
}

impl<S: Scalar> Factorization<S> {
    /// Sparse LU with partial pivoting.
    ///
    /// Fails with [`Error::Singular`] when no acceptable pivot exists in some
    /// column, reporting that column.
    pub fn lu(a: &SparseMatrix<S>) -> Result<Self> {
        if a.nrows() != a.ncols() {
            return Err(Error::shape("lu", (a.nrows(), a.ncols()), (a.ncols(), a.nrows())));
        }
        let n = a.nrows();
        let pivot_floor = SINGULARITY_TOL * a.max_abs();

        let mut pinv = vec![usize::MAX; n];
        // L is built with original row indices and remapped at the end.
        let mut l_colptr = vec![0usize];
        let mut l_rows: Vec<usize> = Vec::new();
        let mut l_vals: Vec<S> = Vec::new();
        let mut u_colptr = vec![0usize];
        let mut u_rows: Vec<usize> = Vec::new();
        let mut u_vals: Vec<S> = Vec::new();

        let mut x = vec![S::ZERO; n];
        let mut stamp = vec![usize::MAX; n];
        let mut topo: Vec<usize> = Vec::new();
        let mut stack: Vec<(usize, usize)> = Vec::new();

        for k in 0..n {
            // Reachable set of A(:,k) in the graph of finished L columns,
            // collected in postorder by an iterative depth first search.
            topo.clear();
            let (arows, avals) = a.col(k);
            for &start in arows {
                if stamp[start] == k {
                    continue;
                }
                stamp[start] = k;
                stack.push((start, 0));
                while let Some(&mut (node, ref mut edge)) = stack.last_mut() {
                    let neighbors: &[usize] = if pinv[node] != usize::MAX {
                        let j = pinv[node];
                        &l_rows[l_colptr[j]..l_colptr[j + 1]]
                    } else {
                        &[]
                    };
                    if *edge < neighbors.len() {
                        let next = neighbors[*edge];
                        *edge += 1;
                        if stamp[next] != k {
                            stamp[next] = k;
                            stack.push((next, 0));
                        }
                    } else {
                        topo.push(node);
                        stack.pop();
                    }
                }
            }

            // Numeric sparse triangular solve x = L \ A(:,k).
            for (&i, &v) in arows.iter().zip(avals) {
                x[i] = v;
            }
            for &i in topo.iter().rev() {
                let j = pinv[i];
                if j == usize::MAX {
                    continue;
                }
                let xi = x[i];
                if xi == S::ZERO {
                    continue;
                }
                for p in l_colptr[j]..l_colptr[j + 1] {
                    x[l_rows[p]] -= l_vals[p] * xi;
                }
            }

            // Partial pivoting over rows not yet pivotal.
            let mut ipiv = usize::MAX;
            let mut pmag = -1.0;
            for &i in &topo {
                if pinv[i] == usize::MAX {
                    let m = x[i].modulus();
                    if m > pmag {
                        pmag = m;
                        ipiv = i;
                    }
                }
            }
            if ipiv == usize::MAX || pmag <= pivot_floor || !pmag.is_finite() {
                return Err(Error::Singular {
                    column: k,
                    pivot: pmag.max(0.0),
                });
            }
            let pivot = x[ipiv];
            pinv[ipiv] = k;

            let mut ucol: Vec<(usize, S)> = Vec::new();
            for &i in &topo {
                let v = x[i];
                x[i] = S::ZERO;
                if pinv[i] != usize::MAX && i != ipiv {
                    if pinv[i] < k {
                        ucol.push((pinv[i], v));
                    }
                } else if i != ipiv && v != S::ZERO {
                    l_rows.push(i);
                    l_vals.push(v / pivot);
                }
            }
            ucol.push((k, pivot));
            ucol.sort_by_key(|&(r, _)| r);
            for (r, v) in ucol {
                u_rows.push(r);
                u_vals.push(v);
            }
            l_colptr.push(l_rows.len());
            u_colptr.push(u_rows.len());
        }

        // Rows of L currently carry original indices; move to pivot order.
        for r in &mut l_rows {
            *r = pinv[*r];
        }
        let mut lower = SparseMatrix::from_raw_parts_unsorted(n, n, l_colptr, l_rows, l_vals);
        lower.sort_columns();
        let upper = SparseMatrix::from_raw_parts(n, n, u_colptr, u_rows, u_vals);
        Ok(Factorization {
            n,
            factors: Factors::Lu { lower, upper, pinv },
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Solves `A x = b` in place.
    pub fn solve_in_place(&self, b: &mut [S]) -> Result<()> {
        if b.len() != self.n {
            return Err(Error::shape("solve", (self.n, self.n), (b.len(), 1)));
        }
        match &self.factors {
            Factors::Lu { lower, upper, pinv } => {
                let mut y = vec![S::ZERO; self.n];
                for (i, &v) in b.iter().enumerate() {
                    y[pinv[i]] = v;
                }
                // L has a unit diagonal that is not stored.
                for j in 0..self.n {
                    let yj = y[j];
                    if yj == S::ZERO {
                        continue;
                    }
                    let (rows, vals) = lower.col(j);
                    for (&r, &v) in rows.iter().zip(vals) {
                        y[r] -= v * yj;
                    }
                }
                // The diagonal of U is the last entry of each column.
                for j in (0..self.n).rev() {
                    let (rows, vals) = upper.col(j);
                    let last = rows.len() - 1;
                    debug_assert_eq!(rows[last], j);
                    let xj = y[j] / vals[last];
                    y[j] = xj;
                    if xj == S::ZERO {
                        continue;
                    }
                    for p in 0..last {
                        y[rows[p]] -= vals[p] * xj;
                    }
                }
                b.copy_from_slice(&y);
            }
            Factors::Cholesky { lower } => {
                // Forward solve; the diagonal leads each column.
                for j in 0..self.n {
                    let (rows, vals) = lower.col(j);
                    debug_assert_eq!(rows[0], j);
                    let xj = b[j] / vals[0];
                    b[j] = xj;
                    if xj == S::ZERO {
                        continue;
                    }
                    for p in 1..rows.len() {
                        b[rows[p]] -= vals[p] * xj;
                    }
                }
                // Backward solve with the transpose, reading columns as rows.
                for j in (0..self.n).rev() {
                    let (rows, vals) = lower.col(j);
                    let mut s = b[j];
                    for p in 1..rows.len() {
                        s -= vals[p] * b[rows[p]];
                    }
                    b[j] = s / vals[0];
                }
            }
        }
        Ok(())
    }

    /// Solves `A x = b` into a fresh vector.
    pub fn solve(&self, b: &[S]) -> Result<Vec<S>> {
        let mut x = b.to_vec();
        self.solve_in_place(&mut x)?;
        Ok(x)
    }
}

impl Factorization<f64> {
    /// Sparse Cholesky of a symmetric positive definite matrix.
    ///
    /// Only the upper triangle of `a` is read; symmetry is assumed. A
    /// nonpositive pivot yields [`Error::NotPositiveDefinite`], which makes
    /// this factorization the positive definiteness test used at assembly.
    pub fn cholesky(a: &SparseMatrix<f64>) -> Result<Self> {
        if a.nrows() != a.ncols() {
            return Err(Error::shape(
                "cholesky",
                (a.nrows(), a.ncols()),
                (a.ncols(), a.nrows()),
            ));
        }
        let n = a.nrows();
        let parent = etree_upper(a);

        // Symbolic pass: column counts of L from the row patterns.
        let mut counts = vec![1usize; n]; // diagonal entries
        let mut stamp = vec![usize::MAX; n];
        let mut pattern: Vec<usize> = Vec::with_capacity(n);
        for k in 0..n {
            ereach_upper(a, k, &parent, &mut stamp, &mut pattern);
            for &j in &pattern {
                counts[j] += 1;
            }
        }
        let mut col_ptr = vec![0usize; n + 1];
        for j in 0..n {
            col_ptr[j + 1] = col_ptr[j] + counts[j];
        }
        let nnz = col_ptr[n];
        let mut rows = vec![0usize; nnz];
        let mut vals = vec![0.0f64; nnz];
        let mut cursor: Vec<usize> = col_ptr[..n].to_vec();

        // Numeric pass, up-looking: row k of L from finished columns.
        let mut x = vec![0.0f64; n];
        stamp.fill(usize::MAX);
        for k in 0..n {
            ereach_upper(a, k, &parent, &mut stamp, &mut pattern);
            let (arows, avals) = a.col(k);
            let mut d = 0.0;
            for (&i, &v) in arows.iter().zip(avals) {
                if i < k {
                    x[i] = v;
                } else if i == k {
                    d = v;
                }
            }
            for &j in &pattern {
                let lkj = x[j] / vals[col_ptr[j]];
                x[j] = 0.0;
                for p in col_ptr[j] + 1..cursor[j] {
                    x[rows[p]] -= vals[p] * lkj;
                }
                d -= lkj * lkj;
                rows[cursor[j]] = k;
                vals[cursor[j]] = lkj;
                cursor[j] += 1;
            }
            if !(d > 0.0) || !d.is_finite() {
                return Err(Error::NotPositiveDefinite {
                    column: k,
                    pivot: d,
                });
            }
            rows[cursor[k]] = k;
            vals[cursor[k]] = d.sqrt();
            cursor[k] += 1;
        }

        let lower = SparseMatrix::from_raw_parts(n, n, col_ptr, rows, vals);
        Ok(Factorization {
            n,
            factors: Factors::Cholesky { lower },
        })
    }

    /// Solves `A X = B` column by column, in parallel.
    pub fn solve_dense(&self, b: &DenseMatrix) -> Result<DenseMatrix> {
        if b.nrows() != self.n {
            return Err(Error::shape(
                "dense solve",
                (self.n, self.n),
                (b.nrows(), b.ncols()),
            ));
        }
        let mut out = b.clone();
        let n = self.n;
        out.data_mut()
            .par_chunks_mut(n)
            .try_for_each(|col| self.solve_in_place(col))?;
        Ok(out)
    }
}

/// Elimination tree of a symmetric matrix given by its upper triangle.
fn etree_upper(a: &SparseMatrix<f64>) -> Vec<usize> {
    let n = a.ncols();
    let mut parent = vec![usize::MAX; n];
    let mut ancestor = vec![usize::MAX; n];
    for k in 0..n {
        let (rows, _) = a.col(k);
        for &i in rows {
            if i >= k {
                continue;
            }
            let mut j = i;
            while j != usize::MAX && j < k {
                let next = ancestor[j];
                ancestor[j] = k;
                if next == usize::MAX {
                    parent[j] = k;
                }
                j = next;
            }
        }
    }
    parent
}

/// Nonzero pattern of row `k` of the Cholesky factor, topologically ordered.
///
/// Walks each entry of the upper triangle of column `k` up the elimination
/// tree until hitting an already visited node, exactly the ereach device of
/// sparse Cholesky.
fn ereach_upper(
    a: &SparseMatrix<f64>,
    k: usize,
    parent: &[usize],
    stamp: &mut [usize],
    pattern: &mut Vec<usize>,
) {
    pattern.clear();
    stamp[k] = k;
    let (rows, _) = a.col(k);
    let mut stack: Vec<usize> = Vec::new();
    for &entry in rows {
        if entry >= k {
            continue;
        }
        let mut i = entry;
        let mut path_len = 0;
        while i != usize::MAX && i < k && stamp[i] != k {
            stamp[i] = k;
            stack.push(i);
            path_len += 1;
            i = parent[i];
        }
        // Reverse the fresh path onto the output so ancestors come last.
        let start = stack.len() - path_len;
        pattern.extend(stack.drain(start..).rev());
    }
    // `pattern` now lists each column exactly once, descendants first within
    // each root path; reverse segments give a valid topological order.
    pattern.reverse();
}
