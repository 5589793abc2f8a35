//! First-order conic solver for linear programs over products of the zero
//! cone, the nonnegative orthant and PSD cones.
//!
//! Problems are posed in the standard form described on [`ConicProblem`]
//! and solved with an operator-splitting (ADMM) iteration: a cached
//! factorization of the affine subproblem alternates with a Euclidean
//! projection onto the cone.

mod cone;
mod error;
mod linsys;
mod problem;
mod solver;
mod sparse;

pub use cone::{smat, svec, svec_index, svec_len, svec_order, Cone};
pub use error::SolverError;
pub use problem::ConicProblem;
pub use solver::{solve, LinearSolverKind, Settings, Solution, Status};
pub use sparse::CscMatrix;
