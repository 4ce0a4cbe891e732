//! Space-time Petrov-Galerkin solver for the heat equation.
//!
//! The crate discretizes the model heat equation simultaneously in space and
//! time: trial functions are continuous piecewise linear in time with P1
//! finite elements in space, test functions are piecewise constant in time
//! on a refined temporal mesh, augmented by an initial-condition block. The
//! resulting rectangular Kronecker-structured system is solved in the least
//! squares sense through generalized Gauss normal equations with a
//! generalized LSQR iteration; a temporal eigenbasis preconditioner keeps
//! the iteration count essentially independent of the mesh.
//!
//! The pieces compose bottom up:
//!
//! * [`linalg`]: sparse storage, LU/Cholesky factorizations and a dense
//!   generalized eigensolver, all self-contained;
//! * [`temporal`] and [`spatial`]: meshes and FEM matrices of the two
//!   factors;
//! * [`spacetime`]: the matrix-free operator, weights, preconditioner, load
//!   assembly and spectral diagnostics;
//! * [`glsqr`]: the iterative least squares solver;
//! * [`cn`]: a Crank-Nicolson reference integrator, nodally equivalent to
//!   the lowest-order space-time setup on matching meshes.

pub mod cn;
pub mod error;
pub mod glsqr;
pub mod linalg;
pub mod spacetime;
pub mod spatial;
pub mod temporal;

pub use error::{Error, Result};
