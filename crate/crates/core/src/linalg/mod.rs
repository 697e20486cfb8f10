//! Linear algebra kernels shared by the operator and group modules.

pub mod dense;
pub mod lanczos;
pub mod sparse;

pub use dense::{expm, hermitian_eigen, matmul, matvec, spectral_norm, CMatrix};
pub use sparse::CsrMatrix;
