//! Dense reference constructions for the acceptance checks.
//!
//! Everything here is independent of the crate's own kernels: Kronecker
//! products are formed explicitly, linear systems are solved by textbook
//! Gaussian elimination, and the space-time operator is assembled as one
//! large dense matrix. The matrix-free implementation and the iterative
//! solver are then held against these references.

use stheat::glsqr;
use stheat::linalg::DenseMatrix;
use stheat::spacetime::{SpaceTimeSystem, TestVector, TrialVector};

/// Small deterministic generator for test data (xorshift64*).
pub struct TestRng(u64);

impl TestRng {
    pub fn new(seed: u64) -> Self {
        TestRng(seed.max(1))
    }

    pub fn next_u64(&mut self) -> u64 {
        let mut x = self.0;
        x ^= x << 13;
        x ^= x >> 7;
        x ^= x << 17;
        self.0 = x;
        x.wrapping_mul(0x2545f4914f6cdd1d)
    }

    /// Uniform in `(-1, 1)`.
    pub fn next_signed(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 / (1u64 << 52) as f64 - 1.0
    }
}

/// Explicit Kronecker product of two dense matrices.
pub fn kron(a: &DenseMatrix, b: &DenseMatrix) -> DenseMatrix {
    let mut out = DenseMatrix::zeros(a.nrows() * b.nrows(), a.ncols() * b.ncols());
    for ja in 0..a.ncols() {
        for ia in 0..a.nrows() {
            let f = a.get(ia, ja);
            if f == 0.0 {
                continue;
            }
            for jb in 0..b.ncols() {
                for ib in 0..b.nrows() {
                    out.set(
                        ia * b.nrows() + ib,
                        ja * b.ncols() + jb,
                        f * b.get(ib, jb),
                    );
                }
            }
        }
    }
    out
}

/// Textbook Gaussian elimination with partial pivoting; panics on singular
/// input because oracle systems are constructed nonsingular.
pub fn gauss_solve(a: &DenseMatrix, b: &[f64]) -> Vec<f64> {
    let n = a.nrows();
    assert_eq!(a.ncols(), n);
    assert_eq!(b.len(), n);
    let mut m = vec![0.0f64; n * n];
    for j in 0..n {
        for i in 0..n {
            m[i * n + j] = a.get(i, j);
        }
    }
    let mut x = b.to_vec();
    for k in 0..n {
        let mut piv = k;
        for i in k + 1..n {
            if m[i * n + k].abs() > m[piv * n + k].abs() {
                piv = i;
            }
        }
        assert!(m[piv * n + k] != 0.0, "oracle matrix is singular");
        if piv != k {
            for j in 0..n {
                m.swap(k * n + j, piv * n + j);
            }
            x.swap(k, piv);
        }
        for i in k + 1..n {
            let f = m[i * n + k] / m[k * n + k];
            if f == 0.0 {
                continue;
            }
            for j in k..n {
                m[i * n + j] -= f * m[k * n + j];
            }
            x[i] -= f * x[k];
        }
    }
    for k in (0..n).rev() {
        let mut s = x[k];
        for j in k + 1..n {
            s -= m[k * n + j] * x[j];
        }
        x[k] = s / m[k * n + k];
    }
    x
}

/// Solves `A X = B` column by column with [`gauss_solve`].
pub fn gauss_solve_matrix(a: &DenseMatrix, b: &DenseMatrix) -> DenseMatrix {
    let mut out = DenseMatrix::zeros(b.nrows(), b.ncols());
    for j in 0..b.ncols() {
        let col = gauss_solve(a, b.col(j));
        out.col_mut(j).copy_from_slice(&col);
    }
    out
}

/// Dense images of the space-time operator and both weights.
pub struct DenseSystem {
    /// Full operator, interior row blocks then the initial block.
    pub b: DenseMatrix,
    /// Test weight, block diagonal.
    pub n: DenseMatrix,
    /// Trial weight.
    pub m: DenseMatrix,
}

/// Assembles the dense references for a system, Kronecker block by block.
pub fn dense_system(sys: &SpaceTimeSystem) -> DenseSystem {
    let mass = sys.spatial().mass.to_dense();
    let stiffness = sys.spatial().stiffness.to_dense();
    let coupling_mass = sys.temporal().coupling_mass.to_dense();
    let coupling_derivative = sys.temporal().coupling_derivative.to_dense();
    let trial_mass = sys.temporal().trial_mass.to_dense();
    let trial_stiffness = sys.temporal().trial_stiffness.to_dense();
    let test_mass = sys.temporal().test_mass.to_dense();

    let ns = sys.num_spatial();
    let nt = sys.num_trial();
    let nx = sys.num_test();

    // B = [C (x) M_x + Mc (x) A_x ; e_0^t (x) M_x]
    let mut top = kron(&coupling_derivative, &mass);
    top.axpy(1.0, &kron(&coupling_mass, &stiffness));
    let mut e0 = DenseMatrix::zeros(1, nt);
    e0.set(0, 0, 1.0);
    let bottom = kron(&e0, &mass);
    let mut b = DenseMatrix::zeros((nx + 1) * ns, nt * ns);
    for j in 0..nt * ns {
        for i in 0..nx * ns {
            b.set(i, j, top.get(i, j));
        }
        for i in 0..ns {
            b.set(nx * ns + i, j, bottom.get(i, j));
        }
    }

    // N = diag(Mt (x) A_x, M_x)
    let nk = kron(&test_mass, &stiffness);
    let mut n = DenseMatrix::zeros((nx + 1) * ns, (nx + 1) * ns);
    for j in 0..nx * ns {
        for i in 0..nx * ns {
            n.set(i, j, nk.get(i, j));
        }
    }
    for j in 0..ns {
        for i in 0..ns {
            n.set(nx * ns + i, nx * ns + j, mass.get(i, j));
        }
    }

    // M = Mt (x) A_x + At (x) (M_x A_x^{-1} M_x)
    let dual = mass
        .matmul(&gauss_solve_matrix(&stiffness, &mass))
        .unwrap();
    let mut m = kron(&trial_mass, &stiffness);
    m.axpy(1.0, &kron(&trial_stiffness, &dual));

    DenseSystem { b, n, m }
}

/// Column-major flattening of a trial vector, matching the Kronecker layout.
pub fn flatten_trial(w: &TrialVector) -> Vec<f64> {
    w.values.data().to_vec()
}

pub fn unflatten_trial(data: &[f64], ns: usize, nt: usize) -> TrialVector {
    let mut w = TrialVector::zeros(ns, nt);
    w.values.data_mut().copy_from_slice(data);
    w
}

/// Flattening of a test vector: interior columns then the initial block.
pub fn flatten_test(d: &TestVector) -> Vec<f64> {
    let mut out = d.interior.data().to_vec();
    out.extend_from_slice(&d.initial);
    out
}

pub fn unflatten_test(data: &[f64], ns: usize, nx: usize) -> TestVector {
    let mut d = TestVector::zeros(ns, nx);
    d.interior.data_mut().copy_from_slice(&data[..ns * nx]);
    d.initial.copy_from_slice(&data[ns * nx..]);
    d
}

pub fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

/// Random injective rectangular system with dense symmetric positive
/// definite weights, solvable both iteratively and by elimination.
pub struct WeightedProblem {
    pub b: DenseMatrix,
    pub n: DenseMatrix,
    pub m: DenseMatrix,
    pub rhs: Vec<f64>,
}

impl WeightedProblem {
    /// Diagonally shifted rectangular operator and weights `R^t R + dim I`.
    pub fn random(rng: &mut TestRng, rows: usize, cols: usize) -> Self {
        assert!(rows >= cols);
        let mut b = DenseMatrix::zeros(rows, cols);
        for j in 0..cols {
            for i in 0..rows {
                b.set(i, j, rng.next_signed());
            }
            b.add_to(j, j, 2.0);
        }
        let spd = |rng: &mut TestRng, dim: usize| {
            let mut r = DenseMatrix::zeros(dim, dim);
            for v in r.data_mut() {
                *v = rng.next_signed();
            }
            let mut s = r.transpose().matmul(&r).unwrap();
            for i in 0..dim {
                s.add_to(i, i, dim as f64);
            }
            s
        };
        let n = spd(rng, rows);
        let m = spd(rng, cols);
        let rhs = (0..rows).map(|_| rng.next_signed()).collect();
        WeightedProblem { b, n, m, rhs }
    }

    /// Dense minimizer of `||B u - b||_{N^{-1}}` via the normal equations.
    pub fn dense_minimizer(&self) -> Vec<f64> {
        let cols = self.b.ncols();
        let mut g = DenseMatrix::zeros(cols, cols);
        for j in 0..cols {
            let mut e = vec![0.0; cols];
            e[j] = 1.0;
            let bu = self.b.matvec(&e).unwrap();
            let nbu = gauss_solve(&self.n, &bu);
            let col = self.b.transpose().matvec(&nbu).unwrap();
            g.col_mut(j).copy_from_slice(&col);
        }
        let rhs = self.normal_rhs(&vec![0.0; cols]);
        gauss_solve(&g, &rhs)
    }

    /// `B^t N^{-1} b - B^t N^{-1} B u`, the normal equation residual.
    pub fn normal_rhs(&self, u: &[f64]) -> Vec<f64> {
        let mut r = self.rhs.clone();
        let bu = self.b.matvec(u).unwrap();
        for (a, b) in r.iter_mut().zip(&bu) {
            *a -= b;
        }
        let nr = gauss_solve(&self.n, &r);
        self.b.transpose().matvec(&nr).unwrap()
    }

    pub fn m_norm(&self, u: &[f64]) -> f64 {
        let mu = self.m.matvec(u).unwrap();
        mu.iter().zip(u).map(|(a, b)| a * b).sum::<f64>().max(0.0).sqrt()
    }

    /// `|| B^t N^{-1} (b - B u) ||_{M^{-1}}`, the true residual at `u`.
    pub fn true_residual(&self, u: &[f64]) -> f64 {
        let r = self.normal_rhs(u);
        let minv_r = gauss_solve(&self.m, &r);
        r.iter()
            .zip(&minv_r)
            .map(|(a, b)| a * b)
            .sum::<f64>()
            .max(0.0)
            .sqrt()
    }

    pub fn solve(&self, tol: f64, maxit: usize) -> (Vec<f64>, glsqr::SolveReport) {
        glsqr::solve(
            |u: &Vec<f64>| Ok(self.b.matvec(u).unwrap()),
            |v: &Vec<f64>| Ok(self.b.transpose().matvec(v).unwrap()),
            |u: &Vec<f64>| Ok(gauss_solve(&self.m, u)),
            |v: &Vec<f64>| Ok(gauss_solve(&self.n, v)),
            &self.rhs,
            tol,
            maxit,
        )
        .unwrap()
    }
}
