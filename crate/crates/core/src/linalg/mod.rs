//! Hand-rolled linear algebra kernels sized for the space-time solver.
//!
//! The solver never forms the space-time operator, so all that is needed
//! here is sparse storage with a few product kernels, two direct
//! factorizations for the small spatial and temporal building blocks, and a
//! dense generalized eigensolver for the temporal preconditioner basis.

mod dense;
mod eig;
mod factor;
mod scalar;
mod sparse;

pub use dense::DenseMatrix;
pub use eig::generalized_sym_eig;
pub use factor::Factorization;
pub use scalar::Scalar;
pub use sparse::SparseMatrix;
