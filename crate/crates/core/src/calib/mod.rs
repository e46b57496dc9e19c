//! Target-free LiDAR→camera extrinsic refinement by minimizing the normalized
//! information distance between LiDAR and image intensities.

mod histogram;
mod nelder_mead;
mod refine;

pub use histogram::{
    bin_of, build_histograms, entropy, lidar_bins, mutual_information, nid, JointHistogram,
    DEFAULT_BINS,
};
pub use nelder_mead::{nelder_mead_minimize, NelderMeadConfig, NelderMeadResult};
pub use refine::{mean_nid, refine_extrinsic, CalibConfig, CalibFrame, CalibResult};

#[derive(Debug, thiserror::Error)]
pub enum CalibError {
    #[error("point cloud has no intensity channel")]
    MissingIntensity,
    #[error("no points project into the image")]
    NoVisiblePoints,
    #[error("histogram is empty")]
    EmptyHistogram,
    #[error("joint histogram has zero entropy")]
    DegenerateJoint,
    #[error("objective is not finite at the starting point")]
    NonFiniteObjective,
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}
