//! Mask refinement scaffolding: prompt sampling from the skeleton of a base
//! segmentation, crop batching, a pluggable refiner and a quality gate.

mod edt;
mod pipeline;
mod prompts;
mod quality;
mod refiner;
mod skeleton;
mod topology;

pub use edt::{euclidean_distance_transform, DistanceGrid};
pub use pipeline::{plan_prompts, refine_mask, CropOutcome, MaskParams, RefinedMask};
pub use prompts::{build_prompt_set, cluster_prompts, make_crop_batches, sample_prompts, PromptSet};
pub use quality::{assess_quality, QualityThresholds, QualityVerdict};
pub use refiner::{
    decode_request, encode_request, refiner_by_name, CropRequest, DilateRefiner, ExternalRefiner,
    FloodRefiner, HoleRefiner, IdentityRefiner, Refiner, RefinerError,
};
pub use skeleton::{extract_skeleton, is_simple, skeleton_with_edt};
pub use topology::{count_holes, label_components};

#[derive(Debug, thiserror::Error)]
pub enum MaskError {
    #[error("skeleton is empty")]
    EmptySkeleton,
    #[error("no prompt clusters")]
    NoClusters,
    #[error("mask is {got:?}, expected {expected:?}")]
    DimensionMismatch { expected: (u32, u32), got: (u32, u32) },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}
