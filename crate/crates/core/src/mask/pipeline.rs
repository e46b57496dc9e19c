use rayon::prelude::*;

use super::edt::euclidean_distance_transform;
use super::prompts::{build_prompt_set, cluster_prompts, sample_prompts, PromptSet};
use super::quality::{assess_quality, QualityThresholds, QualityVerdict};
use super::refiner::{CropRequest, Refiner};
use super::skeleton::skeleton_with_edt;
use super::MaskError;
use crate::raster::{BinaryMask, PixelRect, RasterImage};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MaskParams {
    pub k: usize,
    pub min_dist: f64,
    pub eps: f64,
    pub min_pts: usize,
    pub dilation: u32,
    pub quality: QualityThresholds,
}

impl Default for MaskParams {
    fn default() -> Self {
        Self {
            k: 20,
            min_dist: 15.0,
            eps: 25.0,
            min_pts: 3,
            dilation: 32,
            quality: QualityThresholds::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum CropOutcome {
    Accepted(QualityVerdict),
    Rejected(QualityVerdict),
    Failed(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct RefinedMask {
    pub mask: BinaryMask,
    pub prompts: PromptSet,
    pub crops: Vec<(PixelRect, CropOutcome)>,
}

/// Prompts and crops derived from a base mask.
pub fn plan_prompts(base: &BinaryMask, params: &MaskParams) -> Result<PromptSet, MaskError> {
    let edt = euclidean_distance_transform(base);
    let skeleton = skeleton_with_edt(base, &edt);
    let points = sample_prompts(&skeleton, &edt, params.k, params.min_dist)?;
    let labels = cluster_prompts(&points, params.eps, params.min_pts);
    build_prompt_set(&points, &labels, params.dilation, base.dims())
}

/// Refines `base` crop by crop. Each crop's refiner output must pass the
/// quality gate against the base crop to be OR-merged; rejected or failed
/// crops leave the base untouched, so the result always contains `base`.
pub fn refine_mask(
    image: &RasterImage,
    base: &BinaryMask,
    refiner: &dyn Refiner,
    params: &MaskParams,
) -> Result<RefinedMask, MaskError> {
    if image.dims() != base.dims() {
        return Err(MaskError::DimensionMismatch {
            expected: image.dims(),
            got: base.dims(),
        });
    }
    let prompts = plan_prompts(base, params)?;
    let results: Vec<(PixelRect, Result<(BinaryMask, QualityVerdict), String>)> = prompts
        .crop_rects
        .par_iter()
        .enumerate()
        .map(|(c, &rect)| {
            let local: Vec<(u32, u32)> = prompts
                .cluster_points(c)
                .into_iter()
                .map(|(u, v)| (u - rect.u0, v - rect.v0))
                .collect();
            let img_crop = image.crop(&rect);
            let base_crop = base.crop(&rect);
            let req = CropRequest {
                image: &img_crop,
                base: &base_crop,
                prompts: &local,
                rect,
            };
            let outcome = refiner
                .refine(&req)
                .map_err(|e| e.to_string())
                .and_then(|refined| {
                    assess_quality(&base_crop, &refined, &params.quality)
                        .map(|v| (refined, v))
                        .map_err(|e| e.to_string())
                });
            (rect, outcome)
        })
        .collect();

    let mut mask = base.clone();
    let mut crops = Vec::with_capacity(results.len());
    for (rect, outcome) in results {
        match outcome {
            Ok((refined, verdict)) if verdict.accepted => {
                mask.or_assign(&refined, (rect.u0, rect.v0));
                crops.push((rect, CropOutcome::Accepted(verdict)));
            }
            Ok((_, verdict)) => {
                log::debug!("crop {rect:?} rejected: {verdict:?}");
                crops.push((rect, CropOutcome::Rejected(verdict)));
            }
            Err(e) => {
                log::warn!("refiner {} failed on crop {rect:?}: {e}", refiner.name());
                crops.push((rect, CropOutcome::Failed(e)));
            }
        }
    }
    Ok(RefinedMask {
        mask,
        prompts,
        crops,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mask::refiner::{DilateRefiner, FloodRefiner, IdentityRefiner};

    fn scene() -> (RasterImage, BinaryMask) {
        let base = BinaryMask::from_fn(200, 120, |x, y| {
            let center = 60.0 + 20.0 * (x as f64 / 40.0).sin();
            x > 10 && x < 190 && (y as f64 - center).abs() <= 1.0
        });
        (RasterImage::filled(200, 120, 1, 128), base)
    }

    #[test]
    fn identity_is_fixed_point() {
        let (img, base) = scene();
        let r = refine_mask(&img, &base, &IdentityRefiner, &MaskParams::default()).unwrap();
        assert_eq!(r.mask, base);
        assert!(!r.crops.is_empty());
        assert!(r.crops.iter().all(|(_, o)| matches!(o, CropOutcome::Accepted(_))));
    }

    #[test]
    fn flood_is_rejected_everywhere() {
        let (img, base) = scene();
        let r = refine_mask(&img, &base, &FloodRefiner, &MaskParams::default()).unwrap();
        assert_eq!(r.mask, base);
        assert!(r.crops.iter().all(|(_, o)| matches!(o, CropOutcome::Rejected(_))));
    }

    #[test]
    fn dilate_grows_but_contains_base() {
        let (img, base) = scene();
        let r = refine_mask(&img, &base, &DilateRefiner { radius: 1 }, &MaskParams::default()).unwrap();
        assert!(r.mask.count() > base.count());
        assert!(base.foreground().all(|(x, y)| r.mask.get(x, y)));
    }

    #[test]
    fn empty_base_and_mismatch() {
        let img = RasterImage::filled(20, 20, 1, 0);
        assert!(matches!(
            refine_mask(&img, &BinaryMask::new(20, 20), &IdentityRefiner, &MaskParams::default()),
            Err(MaskError::EmptySkeleton)
        ));
        assert!(refine_mask(&img, &BinaryMask::new(10, 20), &IdentityRefiner, &MaskParams::default()).is_err());
    }
}
