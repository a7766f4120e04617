//! Sparse matrices and reusable direct factorizations.

mod lu;
mod sparse;

pub use lu::{factorize, Factorization, Factorizer};
pub use sparse::{dot, norm2, Pattern, SparseMatrix};
