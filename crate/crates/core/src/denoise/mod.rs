//! Point-cloud cleanup: statistical outlier removal followed by
//! moving-least-squares projection smoothing.

mod mls;
mod sor;

pub use crate::cloud::crop_box;
pub use mls::{
    fit_mls_polynomial, median_spacing, mls_smooth, mls_smooth_indexed, monomial_count, monomials,
    LocalSurface, MlsConfig, MlsOutput,
};
pub use sor::{mean_knn_distances, sor_filter, SorOutput};

#[derive(Debug, thiserror::Error)]
pub enum DenoiseError {
    #[error("cloud has {points} points, need at least {required}")]
    TooFewPoints { points: usize, required: usize },
    #[error("{found} neighbors, need at least {required}")]
    InsufficientNeighbors { found: usize, required: usize },
    #[error("neighborhood is degenerate")]
    DegenerateNeighborhood,
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}
