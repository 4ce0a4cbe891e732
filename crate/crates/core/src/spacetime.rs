//! Matrix-free space-time operator, weights and preconditioner.
//!
//! The discrete problem couples a spatial P1 space with `#S` free nodes and
//! a temporal trial space of `#T` hats through Kronecker products. No
//! Kronecker matrix is ever formed: with coefficients arranged as an
//! `#S x #T` array `w`, every operator application reduces to sparse-dense
//! products with the small spatial and temporal factors via
//! `(T (x) X) vec(w) = vec(X w T^t)`.
//!
//! * `B w` stacks one row block per test element, `M_x w C^t + A_x w M^t`
//!   restricted to that element, plus the initial-condition block
//!   `M_x w e_0`; a [`TestVector`] keeps the two parts separate.
//! * The test weight `N` is block diagonal: `A_x` scaled by the test element
//!   lengths on the interior blocks and `M_x` on the initial block, so
//!   `N^{-1}` costs one stiffness solve per test element.
//! * The trial weight `M = M^t (x) A_x + A^t (x) M_x A_x^{-1} M_x` is
//!   inverted through the generalized eigenbasis of the temporal pencil
//!   `(A^t, M^t)`: with `gamma = sqrt(lambda)` per eigenvector, each
//!   transformed column solves the complex system `(A_x + i gamma M_x) z = c`
//!   whose real part equals the wanted column. Factorizations are shared
//!   between eigenvalues equal within relative 1e-12.

use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::glsqr::{self, SolveReport, VectorOps};
use crate::linalg::{generalized_sym_eig, DenseMatrix, Factorization, SparseMatrix};
use crate::spatial::{assemble_load, SpatialFn, SpatialMesh, SpatialOperators};
use crate::temporal::{TemporalMesh, TemporalOperators};

/// Space-time field sampled at a time and a point.
pub type TimeSpatialFn<'a> =
    &'a (dyn Fn(f64, [f64; 2]) -> std::result::Result<f64, String> + Sync);

/// Relative gap under which temporal eigenvalues share a Helmholtz factor.
const GAMMA_DEDUP_TOL: f64 = 1e-12;

/// Relative imaginary residual tolerated in the Helmholtz health check.
const IMAG_RESIDUAL_TOL: f64 = 1e-8;

/// Trial-space coefficients, one column of spatial values per temporal hat.
#[derive(Debug, Clone)]
pub struct TrialVector {
    pub values: DenseMatrix,
}

impl TrialVector {
    pub fn zeros(num_spatial: usize, num_temporal: usize) -> Self {
        TrialVector {
            values: DenseMatrix::zeros(num_spatial, num_temporal),
        }
    }
}

/// Test-space data: one interior column per test element plus the
/// initial-condition block.
#[derive(Debug, Clone)]
pub struct TestVector {
    pub interior: DenseMatrix,
    pub initial: Vec<f64>,
}

impl TestVector {
    pub fn zeros(num_spatial: usize, num_test_elements: usize) -> Self {
        TestVector {
            interior: DenseMatrix::zeros(num_spatial, num_test_elements),
            initial: vec![0.0; num_spatial],
        }
    }
}

impl VectorOps for TrialVector {
    fn dot(&self, other: &Self) -> f64 {
        self.values.dot(&other.values)
    }

    fn scale(&mut self, factor: f64) {
        self.values.scale(factor);
    }

    fn axpy(&mut self, factor: f64, other: &Self) {
        self.values.axpy(factor, &other.values);
    }

    fn set_zero(&mut self) {
        self.values.fill(0.0);
    }
}

impl VectorOps for TestVector {
    fn dot(&self, other: &Self) -> f64 {
        self.interior.dot(&other.interior)
            + self
                .initial
                .iter()
                .zip(&other.initial)
                .map(|(a, b)| a * b)
                .sum::<f64>()
    }

    fn scale(&mut self, factor: f64) {
        self.interior.scale(factor);
        for v in &mut self.initial {
            *v *= factor;
        }
    }

    fn axpy(&mut self, factor: f64, other: &Self) {
        self.interior.axpy(factor, &other.interior);
        for (a, b) in self.initial.iter_mut().zip(&other.initial) {
            *a += factor * b;
        }
    }

    fn set_zero(&mut self) {
        self.interior.fill(0.0);
        self.initial.fill(0.0);
    }
}

/// Quadrature in time for the right-hand side columns.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QuadratureRule {
    /// Endpoint rule; makes the lowest-order method coincide nodally with
    /// Crank-Nicolson on matching meshes.
    Trapezoid,
    /// Interior two-point Gauss rule, exact to cubic integrands.
    TwoPointGauss,
}

impl QuadratureRule {
    /// Nodes and weights on `[a, b]`.
    pub fn nodes_weights(&self, a: f64, b: f64) -> Result<([f64; 2], [f64; 2])> {
        if !(b > a) {
            return Err(Error::InvalidInput(format!(
                "quadrature interval [{a}, {b}] is empty"
            )));
        }
        let half = 0.5 * (b - a);
        match self {
            QuadratureRule::Trapezoid => Ok(([a, b], [half, half])),
            QuadratureRule::TwoPointGauss => {
                let mid = 0.5 * (a + b);
                let off = half / 3.0f64.sqrt();
                Ok(([mid - off, mid + off], [half, half]))
            }
        }
    }
}

struct HelmholtzFactor {
    matrix: SparseMatrix<Complex64>,
    factor: Factorization<Complex64>,
}

struct Preconditioner {
    /// Generalized eigenbasis of the temporal pencil, `V^t M^t V = I`.
    basis: DenseMatrix,
    basis_t: DenseMatrix,
    /// `gamma = sqrt(max(lambda, 0))` per eigenvector, ascending.
    gammas: Vec<f64>,
    /// Factor index per eigenvector after deduplication.
    factor_of: Vec<usize>,
    factors: Vec<HelmholtzFactor>,
}

/// Assembled space-time problem bound to one spatial/temporal mesh pair.
pub struct SpaceTimeSystem {
    spatial: SpatialOperators,
    temporal: TemporalOperators,
    mass_factor: Factorization<f64>,
    stiffness_factor: Factorization<f64>,
    test_lengths: Vec<f64>,
    preconditioner: Option<Preconditioner>,
}

impl SpaceTimeSystem {
    /// Binds spatial and temporal operators, factorizing the spatial mass
    /// and stiffness matrices (which verifies they are positive definite).
    pub fn new(spatial: SpatialOperators, temporal: TemporalOperators) -> Result<Self> {
        let (mass_factor, stiffness_factor) = spatial.factorize()?;
        let test_lengths = temporal.test_mesh.element_lengths();
        Ok(SpaceTimeSystem {
            spatial,
            temporal,
            mass_factor,
            stiffness_factor,
            test_lengths,
            preconditioner: None,
        })
    }

    pub fn spatial(&self) -> &SpatialOperators {
        &self.spatial
    }

    pub fn temporal(&self) -> &TemporalOperators {
        &self.temporal
    }

    /// Number of free spatial nodes.
    pub fn num_spatial(&self) -> usize {
        self.spatial.num_free()
    }

    /// Number of temporal trial functions (hats).
    pub fn num_trial(&self) -> usize {
        self.temporal.trial_mesh.num_nodes()
    }

    /// Number of temporal test functions (indicators).
    pub fn num_test(&self) -> usize {
        self.temporal.test_mesh.num_elements()
    }

    pub fn trial_zeros(&self) -> TrialVector {
        TrialVector::zeros(self.num_spatial(), self.num_trial())
    }

    pub fn test_zeros(&self) -> TestVector {
        TestVector::zeros(self.num_spatial(), self.num_test())
    }

    fn check_trial(&self, w: &TrialVector, context: &'static str) -> Result<()> {
        if w.values.nrows() != self.num_spatial() || w.values.ncols() != self.num_trial() {
            return Err(Error::shape(
                context,
                (self.num_spatial(), self.num_trial()),
                (w.values.nrows(), w.values.ncols()),
            ));
        }
        Ok(())
    }

    fn check_test(&self, d: &TestVector, context: &'static str) -> Result<()> {
        if d.interior.nrows() != self.num_spatial()
            || d.interior.ncols() != self.num_test()
            || d.initial.len() != self.num_spatial()
        {
            return Err(Error::shape(
                context,
                (self.num_spatial(), self.num_test()),
                (d.interior.nrows(), d.interior.ncols()),
            ));
        }
        Ok(())
    }

    /// Applies the space-time operator `B`.
    pub fn apply_b(&self, w: &TrialVector) -> Result<TestVector> {
        self.check_trial(w, "apply_b")?;
        let mw = self.spatial.mass.mul_dense(&w.values)?;
        let aw = self.spatial.stiffness.mul_dense(&w.values)?;
        let mut interior = mw.mul_sparse_transpose(&self.temporal.coupling_derivative)?;
        let advection = aw.mul_sparse_transpose(&self.temporal.coupling_mass)?;
        interior.axpy(1.0, &advection);
        let initial = self.spatial.mass.mul_vec(w.values.col(0))?;
        Ok(TestVector { interior, initial })
    }

    /// Applies the adjoint `B^T`.
    pub fn apply_bt(&self, d: &TestVector) -> Result<TrialVector> {
        self.check_test(d, "apply_bt")?;
        let md = self.spatial.mass.mul_dense(&d.interior)?;
        let ad = self.spatial.stiffness.mul_dense(&d.interior)?;
        let mut values = md.mul_sparse(&self.temporal.coupling_derivative)?;
        let advection = ad.mul_sparse(&self.temporal.coupling_mass)?;
        values.axpy(1.0, &advection);
        let initial = self.spatial.mass.mul_vec(&d.initial)?;
        let col0 = values.col_mut(0);
        for (c, v) in col0.iter_mut().zip(&initial) {
            *c += v;
        }
        Ok(TrialVector { values })
    }

    /// Applies the inverse test weight `N^{-1}`.
    pub fn apply_ninv(&self, d: &TestVector) -> Result<TestVector> {
        self.check_test(d, "apply_ninv")?;
        let mut interior = self.stiffness_factor.solve_dense(&d.interior)?;
        for (k, &len) in self.test_lengths.iter().enumerate() {
            let col = interior.col_mut(k);
            let inv = 1.0 / len;
            for v in col {
                *v *= inv;
            }
        }
        let initial = self.mass_factor.solve(&d.initial)?;
        Ok(TestVector { interior, initial })
    }

    /// Builds the temporal eigenbasis and the shared Helmholtz
    /// factorizations of the trial weight.
    pub fn build_preconditioner(&mut self) -> Result<()> {
        let a_dense = self.temporal.trial_stiffness.to_dense();
        let m_dense = self.temporal.trial_mass.to_dense();
        let (basis, eigenvalues) = generalized_sym_eig(&a_dense, &m_dense)?;
        let gammas: Vec<f64> = eigenvalues.iter().map(|&d| d.max(0.0).sqrt()).collect();

        let gamma_scale = gammas.last().copied().unwrap_or(0.0);
        let tol = GAMMA_DEDUP_TOL * gamma_scale;
        let mut factors: Vec<HelmholtzFactor> = Vec::new();
        let mut factor_of = Vec::with_capacity(gammas.len());
        let mut current: Option<f64> = None;
        for &gamma in &gammas {
            let fresh = match current {
                Some(rep) => (gamma - rep).abs() > tol,
                None => true,
            };
            if fresh {
                factors.push(self.helmholtz_factor(gamma)?);
                current = Some(gamma);
            }
            factor_of.push(factors.len() - 1);
        }
        self.preconditioner = Some(Preconditioner {
            basis_t: basis.transpose(),
            basis,
            gammas,
            factor_of,
            factors,
        });
        Ok(())
    }

    fn helmholtz_factor(&self, gamma: f64) -> Result<HelmholtzFactor> {
        let mut triplets: Vec<(usize, usize, Complex64)> = Vec::with_capacity(
            self.spatial.stiffness.nnz() + self.spatial.mass.nnz(),
        );
        for (i, j, v) in self.spatial.stiffness.iter() {
            triplets.push((i, j, Complex64::new(v, 0.0)));
        }
        for (i, j, v) in self.spatial.mass.iter() {
            triplets.push((i, j, Complex64::new(0.0, gamma * v)));
        }
        let n = self.num_spatial();
        let matrix = SparseMatrix::from_triplets(n, n, &triplets)?;
        let factor = Factorization::lu(&matrix)?;
        Ok(HelmholtzFactor { matrix, factor })
    }

    /// Eigenvalue shifts of the built preconditioner, ascending.
    pub fn preconditioner_gammas(&self) -> Option<&[f64]> {
        self.preconditioner.as_ref().map(|p| p.gammas.as_slice())
    }

    /// Applies the inverse trial weight `M^{-1}` through the eigenbasis.
    ///
    /// Requires [`SpaceTimeSystem::build_preconditioner`]. Each transformed
    /// column is the real part of a complex Helmholtz solve; a health check
    /// rejects solves whose imaginary residual exceeds `1e-8` relative to
    /// the column, which would indicate a corrupted factorization.
    pub fn apply_minv(&self, w: &TrialVector) -> Result<TrialVector> {
        self.check_trial(w, "apply_minv")?;
        let p = self.preconditioner.as_ref().ok_or_else(|| {
            Error::InvalidInput("preconditioner has not been built".into())
        })?;
        let transformed = w.values.matmul(&p.basis)?;
        let ns = self.num_spatial();
        let mut solved = DenseMatrix::zeros(ns, self.num_trial());
        solved
            .data_mut()
            .par_chunks_mut(ns)
            .enumerate()
            .try_for_each(|(theta, dst)| -> Result<()> {
                let src = transformed.col(theta);
                let rhs: Vec<Complex64> =
                    src.iter().map(|&x| Complex64::new(x, 0.0)).collect();
                let helm = &p.factors[p.factor_of[theta]];
                let z = helm.factor.solve(&rhs)?;
                let az = helm.matrix.mul_vec(&z)?;
                let mut imag_sq = 0.0;
                let mut col_sq = 0.0;
                for i in 0..ns {
                    let r = az[i] - rhs[i];
                    imag_sq += r.im * r.im;
                    col_sq += src[i] * src[i];
                }
                if imag_sq.sqrt() > IMAG_RESIDUAL_TOL * col_sq.sqrt() {
                    return Err(Error::NumericalFailure {
                        iteration: theta,
                        message: format!(
                            "Helmholtz solve left an imaginary residual of {:.3e} on a column of norm {:.3e}",
                            imag_sq.sqrt(),
                            col_sq.sqrt()
                        ),
                    });
                }
                for i in 0..ns {
                    dst[i] = z[i].re;
                }
                Ok(())
            })?;
        let values = solved.matmul(&p.basis_t)?;
        Ok(TrialVector { values })
    }

    /// Applies the forward trial weight `M`; used for norms and diagnostics.
    pub fn apply_m(&self, w: &TrialVector) -> Result<TrialVector> {
        self.check_trial(w, "apply_m")?;
        let aw = self.spatial.stiffness.mul_dense(&w.values)?;
        let mut values = aw.mul_sparse_transpose(&self.temporal.trial_mass)?;
        let mw = self.spatial.mass.mul_dense(&w.values)?;
        let amw = self.stiffness_factor.solve_dense(&mw)?;
        let mamw = self.spatial.mass.mul_dense(&amw)?;
        let second = mamw.mul_sparse_transpose(&self.temporal.trial_stiffness)?;
        values.axpy(1.0, &second);
        Ok(TrialVector { values })
    }

    /// Norm induced by the trial weight `M`.
    pub fn m_norm(&self, w: &TrialVector) -> Result<f64> {
        let mw = self.apply_m(w)?;
        Ok(w.dot(&mw).max(0.0).sqrt())
    }

    /// Solves the weighted least squares problem for the given load.
    pub fn solve(
        &self,
        rhs: &TestVector,
        tol: f64,
        maxit: usize,
    ) -> Result<(TrialVector, SolveReport)> {
        if self.preconditioner.is_none() {
            return Err(Error::InvalidInput(
                "preconditioner has not been built".into(),
            ));
        }
        self.check_test(rhs, "solve")?;
        glsqr::solve(
            |u| self.apply_b(u),
            |v| self.apply_bt(v),
            |u| self.apply_minv(u),
            |v| self.apply_ninv(v),
            rhs,
            tol,
            maxit,
        )
    }

    /// Dense spectral diagnostics of the preconditioned system.
    ///
    /// `cond` is the extreme eigenvalue ratio of the pencil
    /// `(B^T N^{-1} B, M)`, assembled column by column through the
    /// matrix-free operators; `kappa_h` and `cfl_h` are the square roots of
    /// the extreme eigenvalues of the spatial surrogate pencil
    /// `A_x v = lambda (M_x A_x^{-1} M_x) v`, the latter scaled by the
    /// largest trial element. Problems larger than `cap` unknowns are
    /// refused rather than silently taking minutes.
    pub fn diagnostics(&self, cap: usize) -> Result<Diagnostics> {
        let ns = self.num_spatial();
        let nt = self.num_trial();
        let n = ns * nt;
        if n > cap {
            return Err(Error::DiagnosticsCapExceeded { size: n, cap });
        }

        let mut normal = DenseMatrix::zeros(n, n);
        let mut weight = DenseMatrix::zeros(n, n);
        let mut unit = self.trial_zeros();
        for j in 0..n {
            unit.values.data_mut()[j] = 1.0;
            let g = self.apply_bt(&self.apply_ninv(&self.apply_b(&unit)?)?)?;
            normal.col_mut(j).copy_from_slice(g.values.data());
            let m = self.apply_m(&unit)?;
            weight.col_mut(j).copy_from_slice(m.values.data());
            unit.values.data_mut()[j] = 0.0;
        }
        normal.symmetrize();
        weight.symmetrize();
        let (_, spectrum) = generalized_sym_eig(&normal, &weight)?;
        let lambda_min = spectrum[0];
        let lambda_max = spectrum[n - 1];
        if !(lambda_min > 0.0) {
            return Err(Error::NumericalFailure {
                iteration: 0,
                message: format!(
                    "preconditioned spectrum reaches down to {lambda_min:.3e}; the pencil is not positive"
                ),
            });
        }

        let a_dense = self.spatial.stiffness.to_dense();
        let mass_dense = self.spatial.mass.to_dense();
        let mut dual = self
            .spatial
            .mass
            .mul_dense(&self.stiffness_factor.solve_dense(&mass_dense)?)?;
        dual.symmetrize();
        let (_, surrogate) = generalized_sym_eig(&a_dense, &dual)?;
        let kappa_h = surrogate[0].max(0.0).sqrt();
        let cfl_h =
            self.temporal.trial_mesh.max_element_length() * surrogate[ns - 1].max(0.0).sqrt();

        Ok(Diagnostics {
            cond: lambda_max / lambda_min,
            kappa_h,
            cfl_h,
        })
    }
}

/// Spectral health indicators reported by [`SpaceTimeSystem::diagnostics`].
#[derive(Debug, Clone, Copy)]
pub struct Diagnostics {
    /// Condition number of the preconditioned normal equations.
    pub cond: f64,
    /// Discrete inf-sup surrogate, `sqrt(lambda_min)` of the spatial pencil.
    pub kappa_h: f64,
    /// Parabolic CFL surrogate, `max dt * sqrt(lambda_max)` of the pencil.
    pub cfl_h: f64,
}

/// Assembles the space-time load: interior columns quadrature the spatial
/// load of `f` and Neumann data `g` over each test element, the initial
/// block carries the initial datum `h`.
pub fn assemble_spacetime_load(
    mesh: &SpatialMesh,
    ops: &SpatialOperators,
    temporal: &TemporalOperators,
    f: TimeSpatialFn,
    g: TimeSpatialFn,
    h: SpatialFn,
    rule: QuadratureRule,
) -> Result<TestVector> {
    let ns = ops.num_free();
    let nodes = temporal.test_mesh.nodes();
    let num_elements = temporal.test_mesh.num_elements();
    let mut interior = DenseMatrix::zeros(ns, num_elements);
    interior
        .data_mut()
        .par_chunks_mut(ns)
        .enumerate()
        .try_for_each(|(k, dst)| -> Result<()> {
            let (points, weights) = rule.nodes_weights(nodes[k], nodes[k + 1])?;
            for (t, wt) in points.into_iter().zip(weights) {
                let f_at = |p: [f64; 2]| f(t, p);
                let g_at = |p: [f64; 2]| g(t, p);
                let column = assemble_load(mesh, ops, &f_at, &g_at)?;
                for (d, c) in dst.iter_mut().zip(&column) {
                    *d += wt * c;
                }
            }
            Ok(())
        })?;
    let initial = assemble_load(mesh, ops, h, &|_| Ok(0.0))?;
    Ok(TestVector { interior, initial })
}

/// Evaluates a trial vector at time `t` by hat interpolation.
pub fn interpolate_in_time(
    w: &TrialVector,
    mesh: &TemporalMesh,
    t: f64,
) -> Result<Vec<f64>> {
    let nodes = mesh.nodes();
    if w.values.ncols() != nodes.len() {
        return Err(Error::shape(
            "time interpolation",
            (w.values.nrows(), w.values.ncols()),
            (nodes.len(), 1),
        ));
    }
    if !(nodes[0]..=*nodes.last().unwrap()).contains(&t) {
        return Err(Error::InvalidInput(format!(
            "time {t} lies outside [{}, {}]",
            nodes[0],
            nodes.last().unwrap()
        )));
    }
    let k = nodes.partition_point(|&x| x <= t).saturating_sub(1);
    let k = k.min(nodes.len() - 2);
    let lambda = (t - nodes[k]) / (nodes[k + 1] - nodes[k]);
    let left = w.values.col(k);
    let right = w.values.col(k + 1);
    Ok(left
        .iter()
        .zip(right)
        .map(|(a, b)| (1.0 - lambda) * a + lambda * b)
        .collect())
}
