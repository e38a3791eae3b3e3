//! Sparse and dense linear algebra kernels.

mod cholesky;
mod csr;
mod eig;

pub use cholesky::{spd_factorize, Factorization};
pub use csr::{dot, norm2, norm_inf, SparseMatrix, TripletBuilder};
pub use eig::{dense_eig, generalized_eig_smallest, EigOptions, EigenPairs, DENSE_LIMIT};

/// Dense matrices are nalgebra's column-major `DMatrix`.
pub type DenseMatrix = nalgebra::DMatrix<f64>;
