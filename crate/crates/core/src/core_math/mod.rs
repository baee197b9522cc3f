//! Kernel evaluation, mean functions and positive-definite linear algebra shared
//! by every Gaussian process layer.

pub mod kernel;
pub mod linalg;

pub use kernel::{kernel_matrix, linear_mean, KernelParams, LinearMeanParams, DEFAULT_NUGGET};
pub use linalg::{chol_solve, cholesky, dot, CholFactor, Matrix};
