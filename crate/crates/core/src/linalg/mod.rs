//! Dense numerical kernels: symmetric and generalized eigendecomposition
//! (cyclic Jacobi) and Lloyd's k-means with farthest-point seeding.

mod eigen;
mod kmeans;
mod matrix;

pub use eigen::{
    generalized_eig, symmetric_eig, symmetric_eig_with, EigenResult, DEFAULT_MAX_SWEEPS,
};
pub use kmeans::{kmeans, kmeans_from_start, KMeansResult};
pub use matrix::{squared_distance, DenseMatrix};

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LinalgError {
    #[error("matrix must have at least one row and one column")]
    EmptyMatrix,
    #[error("dimension mismatch: expected {expected:?}, found {found}")]
    DimensionMismatch {
        expected: (usize, usize),
        found: usize,
    },
    #[error("non-finite entry at ({row}, {col})")]
    NonFinite { row: usize, col: usize },
    #[error("matrix is not square ({rows}x{cols})")]
    NotSquare { rows: usize, cols: usize },
    #[error("matrix is not symmetric")]
    NonSymmetric,
    #[error("Jacobi iteration did not converge within {sweeps} sweeps")]
    NoConvergence { sweeps: usize },
    #[error("degree matrix has off-diagonal entries")]
    NotDiagonal,
    #[error("negative degree at row {index}")]
    NegativeDegree { index: usize },
    #[error("all degrees are zero")]
    SingularDegree,
    #[error("row {index} has zero degree but nonzero Laplacian entries")]
    ZeroDegreeCoupling { index: usize },
    #[error("k = {k} exceeds the number of points ({n})")]
    KTooLarge { k: usize, n: usize },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}
