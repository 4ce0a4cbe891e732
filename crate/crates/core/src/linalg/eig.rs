//! Dense generalized symmetric eigensolver.
//!
//! Solves `A v = lambda M v` for symmetric `A` and symmetric positive
//! definite `M` by reducing to a standard problem with the Cholesky factor of
//! `M` and diagonalizing with cyclic Jacobi sweeps. Jacobi is slower than a
//! tridiagonalizing method but unconditionally robust, which matters more
//! here: the temporal matrices stay small and the result feeds a
//! preconditioner whose quality degrades silently with eigenbasis errors.

use crate::error::{Error, Result};
use crate::linalg::dense::DenseMatrix;

/// Relative off-diagonal mass at which Jacobi sweeps stop.
const JACOBI_TOL: f64 = 1e-15;
const MAX_SWEEPS: usize = 100;

/// Eigenpairs of the symmetric-definite pencil `(A, M)`.
///
/// Returns `(V, d)` with eigenvalues ascending, `V^T M V = I` and
/// `A V = M V diag(d)` up to round-off. Fails when `M` is not positive
/// definite or the Jacobi iteration stalls.
pub fn generalized_sym_eig(a: &DenseMatrix, m: &DenseMatrix) -> Result<(DenseMatrix, Vec<f64>)> {
    let n = a.nrows();
    if a.ncols() != n || m.nrows() != n || m.ncols() != n {
        return Err(Error::shape(
            "generalized eig",
            (a.nrows(), a.ncols()),
            (m.nrows(), m.ncols()),
        ));
    }
    let l = dense_cholesky(m)?;

    // C = L^{-1} A L^{-T}, computed with two triangular solves.
    let x = forward_solve_matrix(&l, a);
    let mut c = forward_solve_matrix(&l, &x.transpose());
    c.symmetrize();

    let (q, mut d) = jacobi_eig(&mut c)?;

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| d[i].total_cmp(&d[j]));
    d = order.iter().map(|&i| d[i]).collect();

    // V = L^{-T} Q with columns in eigenvalue order.
    let mut v = DenseMatrix::zeros(n, n);
    for (jout, &jin) in order.iter().enumerate() {
        let col = back_solve_transpose(&l, q.col(jin));
        v.col_mut(jout).copy_from_slice(&col);
    }
    Ok((v, d))
}

/// Dense lower Cholesky factor, failing on nonpositive pivots.
fn dense_cholesky(m: &DenseMatrix) -> Result<DenseMatrix> {
    let n = m.nrows();
    let mut l = DenseMatrix::zeros(n, n);
    for j in 0..n {
        let mut d = m.get(j, j);
        for k in 0..j {
            d -= l.get(j, k) * l.get(j, k);
        }
        if !(d > 0.0) || !d.is_finite() {
            return Err(Error::NotPositiveDefinite { column: j, pivot: d });
        }
        let ljj = d.sqrt();
        l.set(j, j, ljj);
        for i in j + 1..n {
            let mut s = m.get(i, j);
            for k in 0..j {
                s -= l.get(i, k) * l.get(j, k);
            }
            l.set(i, j, s / ljj);
        }
    }
    Ok(l)
}

/// Solves `L X = B` for lower triangular `L`, column by column.
fn forward_solve_matrix(l: &DenseMatrix, b: &DenseMatrix) -> DenseMatrix {
    let n = l.nrows();
    let mut x = b.clone();
    for j in 0..x.ncols() {
        let col = x.col_mut(j);
        for i in 0..n {
            let mut s = col[i];
            for k in 0..i {
                s -= l.get(i, k) * col[k];
            }
            col[i] = s / l.get(i, i);
        }
    }
    x
}

/// Solves `L^T x = b` for lower triangular `L`.
fn back_solve_transpose(l: &DenseMatrix, b: &[f64]) -> Vec<f64> {
    let n = l.nrows();
    let mut x = b.to_vec();
    for i in (0..n).rev() {
        let mut s = x[i];
        for k in i + 1..n {
            s -= l.get(k, i) * x[k];
        }
        x[i] = s / l.get(i, i);
    }
    x
}

/// Cyclic Jacobi diagonalization of a symmetric matrix, in place.
///
/// Returns the accumulated orthogonal transform and the eigenvalues in the
/// order they settle on the diagonal.
fn jacobi_eig(c: &mut DenseMatrix) -> Result<(DenseMatrix, Vec<f64>)> {
    let n = c.nrows();
    let mut q = DenseMatrix::identity(n);
    let scale = c.frob_norm();
    if scale == 0.0 {
        return Ok((q, vec![0.0; n]));
    }
    for _sweep in 0..MAX_SWEEPS {
        let mut off = 0.0;
        for j in 0..n {
            for i in 0..j {
                off += c.get(i, j) * c.get(i, j);
            }
        }
        if (2.0 * off).sqrt() <= JACOBI_TOL * scale {
            let d = (0..n).map(|i| c.get(i, i)).collect();
            return Ok((q, d));
        }
        for p in 0..n {
            for r in p + 1..n {
                let apq = c.get(p, r);
                if apq == 0.0 {
                    continue;
                }
                let tau = (c.get(r, r) - c.get(p, p)) / (2.0 * apq);
                // Smaller-magnitude root of t^2 + 2 tau t - 1 = 0.
                let t = if tau.abs() > 1e15 {
                    0.5 / tau
                } else {
                    tau.signum() / (tau.abs() + (1.0 + tau * tau).sqrt())
                };
                let co = 1.0 / (1.0 + t * t).sqrt();
                let si = t * co;

                let app = c.get(p, p);
                let arr = c.get(r, r);
                c.set(p, p, app - t * apq);
                c.set(r, r, arr + t * apq);
                c.set(p, r, 0.0);
                c.set(r, p, 0.0);
                for k in 0..n {
                    if k == p || k == r {
                        continue;
                    }
                    let akp = c.get(k, p);
                    let akr = c.get(k, r);
                    c.set(k, p, co * akp - si * akr);
                    c.set(p, k, co * akp - si * akr);
                    c.set(k, r, si * akp + co * akr);
                    c.set(r, k, si * akp + co * akr);
                }
                for k in 0..n {
                    let qkp = q.get(k, p);
                    let qkr = q.get(k, r);
                    q.set(k, p, co * qkp - si * qkr);
                    q.set(k, r, si * qkp + co * qkr);
                }
            }
        }
    }
    Err(Error::NumericalFailure {
        iteration: MAX_SWEEPS,
        message: "jacobi sweeps did not converge".into(),
    })
}
