//! Grouping classes into hyper-classes: per-class indicator vectors, a
//! connected KNN similarity graph, the unnormalized Laplacian, a spectral
//! embedding from the generalized eigenproblem `L x = λ D x`, eigengap model
//! selection and k-means on the row-normalized embedding.

mod graph;
mod indicator;
mod spectral;

pub use graph::{knn_graph, knn_similarity, laplacian, min_connected_k, SimilarityGraph};
pub use indicator::{compute_indicator_vectors, IndicatorMatrix, LabeledProbs, SIMPLEX_TOL};
pub use spectral::{
    adjusted_rand_index, assign_clusters, choose_k_eigengap, spectral_clustering, spectral_embed,
    ClusterAssignment, SpectralOptions, SpectralOutcome, ZERO_ROW_TOL,
};

pub(crate) use indicator::check_simplex;

use thiserror::Error;

use crate::linalg::LinalgError;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ClusterError {
    #[error("class {class} has no samples")]
    MissingClass { class: usize },
    #[error("probability vector {index} is invalid: {reason}")]
    BadProbability { index: usize, reason: String },
    #[error("label {label} out of range for {num_classes} classes")]
    LabelOutOfRange { label: usize, num_classes: usize },
    #[error("spectral embedding row {row} has zero norm; retry with a larger KNN k")]
    ZeroRow { row: usize },
    #[error("cluster {cluster} is empty")]
    EmptyCluster { cluster: usize },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}
