//! Crank-Nicolson reference integrator.
//!
//! Classic trapezoidal time stepping on the spatially discretized heat
//! equation. On a shared temporal mesh with the unrefined test space and
//! trapezoid load quadrature, the space-time least squares solution
//! coincides with this trajectory nodally, which makes the integrator the
//! equivalence oracle for the solver; it is also the baseline in timing
//! comparisons.

use crate::error::Result;
use crate::linalg::{DenseMatrix, Factorization, SparseMatrix};
use crate::spacetime::TimeSpatialFn;
use crate::spatial::{assemble_load, SpatialFn, SpatialMesh, SpatialOperators};
use crate::temporal::TemporalMesh;

/// Relative tolerance under which time steps share a factorization.
const STEP_DEDUP_TOL: f64 = 1e-12;

/// Runs Crank-Nicolson over the given temporal mesh.
///
/// Returns the free-node trajectory with one column per temporal node. The
/// initial column is the mass projection of `h`; each step solves
/// `(M + dt/2 A) u' = (M - dt/2 A) u + dt/2 (F_k + F_{k+1})` with the load
/// `F` assembled per node from `f` and the Neumann datum `g`. One
/// factorization is built per distinct step size.
pub fn solve(
    mesh: &SpatialMesh,
    ops: &SpatialOperators,
    temporal_mesh: &TemporalMesh,
    f: TimeSpatialFn,
    g: TimeSpatialFn,
    h: SpatialFn,
) -> Result<DenseMatrix> {
    let ns = ops.num_free();
    let nodes = temporal_mesh.nodes();
    let mass_factor = Factorization::cholesky(&ops.mass)?;

    let mut trajectory = DenseMatrix::zeros(ns, nodes.len());
    let initial_load = assemble_load(mesh, ops, h, &|_| Ok(0.0))?;
    let mut current = mass_factor.solve(&initial_load)?;
    trajectory.col_mut(0).copy_from_slice(&current);

    let load_at = |t: f64| -> Result<Vec<f64>> {
        let f_at = |p: [f64; 2]| f(t, p);
        let g_at = |p: [f64; 2]| g(t, p);
        assemble_load(mesh, ops, &f_at, &g_at)
    };
    let mut prev_load = load_at(nodes[0])?;

    let dedup_scale = temporal_mesh.max_element_length();
    let mut factors: Vec<(f64, Factorization<f64>)> = Vec::new();

    for (k, w) in nodes.windows(2).enumerate() {
        let dt = w[1] - w[0];
        let factor = match factors
            .iter()
            .position(|(rep, _)| (rep - dt).abs() <= STEP_DEDUP_TOL * dedup_scale)
        {
            Some(idx) => &factors[idx].1,
            None => {
                let mut triplets: Vec<(usize, usize, f64)> =
                    Vec::with_capacity(ops.mass.nnz() + ops.stiffness.nnz());
                for (i, j, v) in ops.mass.iter() {
                    triplets.push((i, j, v));
                }
                for (i, j, v) in ops.stiffness.iter() {
                    triplets.push((i, j, 0.5 * dt * v));
                }
                let matrix = SparseMatrix::from_triplets(ns, ns, &triplets)?;
                factors.push((dt, Factorization::cholesky(&matrix)?));
                &factors.last().unwrap().1
            }
        };

        let next_load = load_at(w[1])?;
        let mu = ops.mass.mul_vec(&current)?;
        let au = ops.stiffness.mul_vec(&current)?;
        let mut rhs = mu;
        for i in 0..ns {
            rhs[i] += -0.5 * dt * au[i] + 0.5 * dt * (prev_load[i] + next_load[i]);
        }
        current = factor.solve(&rhs)?;
        trajectory.col_mut(k + 1).copy_from_slice(&current);
        prev_load = next_load;
    }
    Ok(trajectory)
}
