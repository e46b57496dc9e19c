//! Segmentation and point-cloud quality metrics.

use nalgebra::{Matrix3, SymmetricEigen};
use rayon::prelude::*;

use crate::cloud::PointCloud;
use crate::geometry::Point3;
use crate::raster::BinaryMask;
use crate::spatial::NeighborIndex;

/// Neighborhood radius used for density and roughness, meters.
pub const DEFAULT_METRIC_RADIUS: f64 = 0.01;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum MetricsError {
    #[error("mask dimensions differ: {pred:?} vs {gt:?}")]
    DimensionMismatch { pred: (u32, u32), gt: (u32, u32) },
}

/// Two-class confusion matrix; index 0 is background, 1 is crack.
/// `counts[i][j]` is the number of pixels with ground truth `i` predicted as `j`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct ConfusionCounts {
    pub counts: [[u64; 2]; 2],
}

impl ConfusionCounts {
    pub fn from_masks(pred: &BinaryMask, gt: &BinaryMask) -> Result<Self, MetricsError> {
        if pred.dims() != gt.dims() {
            return Err(MetricsError::DimensionMismatch {
                pred: pred.dims(),
                gt: gt.dims(),
            });
        }
        let mut c = ConfusionCounts::default();
        for (&p, &g) in pred.bits().iter().zip(gt.bits()) {
            c.counts[g as usize][p as usize] += 1;
        }
        Ok(c)
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    /// Intersection over union for one class; 1 when the class is absent
    /// from both prediction and ground truth.
    pub fn iou(&self, class: usize) -> f64 {
        let tp = self.counts[class][class];
        let gt_total: u64 = self.counts[class].iter().sum();
        let pred_total: u64 = self.counts.iter().map(|row| row[class]).sum();
        let union = gt_total + pred_total - tp;
        if union == 0 {
            1.0
        } else {
            tp as f64 / union as f64
        }
    }

    pub fn miou(&self) -> f64 {
        (self.iou(0) + self.iou(1)) / 2.0
    }
}

/// Mean over background and crack of the per-class IoU.
pub fn miou(pred: &BinaryMask, gt: &BinaryMask) -> Result<f64, MetricsError> {
    Ok(ConfusionCounts::from_masks(pred, gt)?.miou())
}

/// Mean and population standard deviation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeanStd {
    pub mean: f64,
    pub std_dev: f64,
}

impl MeanStd {
    pub fn of(values: &[f64]) -> Self {
        if values.is_empty() {
            return MeanStd {
                mean: f64::NAN,
                std_dev: f64::NAN,
            };
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        MeanStd {
            mean,
            std_dev: var.sqrt(),
        }
    }
}

/// Neighbors within `radius` of each point, not counting the point itself.
pub fn point_surface_density(cloud: &PointCloud, radius: f64) -> MeanStd {
    let index = NeighborIndex::new(cloud.points.clone());
    point_surface_density_indexed(&index, radius)
}

pub fn point_surface_density_indexed(index: &NeighborIndex, radius: f64) -> MeanStd {
    let counts: Vec<f64> = index
        .points()
        .par_iter()
        .map(|p| index.count_within_radius(p, radius).saturating_sub(1) as f64)
        .collect();
    MeanStd::of(&counts)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Roughness {
    pub stats: MeanStd,
    /// Points with fewer than three neighbors in the radius.
    pub skipped: usize,
}

fn plane_distance(p: &Point3, neighbors: &[Point3]) -> f64 {
    let n = neighbors.len() as f64;
    let centroid = neighbors.iter().fold(Point3::origin().coords, |a, q| a + q.coords) / n;
    let mut cov = Matrix3::zeros();
    for q in neighbors {
        let d = q.coords - centroid;
        cov += d * d.transpose();
    }
    let eig = SymmetricEigen::new(cov);
    let k = eig.eigenvalues.imin();
    let normal = eig.eigenvectors.column(k).into_owned();
    (p.coords - centroid).dot(&normal).abs()
}

/// Distance from each point to the least-squares plane of its neighbors
/// within `radius` (the point itself excluded from the fit).
pub fn surface_roughness(cloud: &PointCloud, radius: f64) -> Roughness {
    let index = NeighborIndex::new(cloud.points.clone());
    surface_roughness_indexed(&index, radius)
}

pub fn surface_roughness_indexed(index: &NeighborIndex, radius: f64) -> Roughness {
    let pts = index.points();
    let per_point: Vec<Option<f64>> = (0..pts.len())
        .into_par_iter()
        .map(|i| {
            let nb: Vec<Point3> = index
                .within_radius(&pts[i], radius)
                .into_iter()
                .filter(|n| n.index != i)
                .map(|n| pts[n.index])
                .collect();
            (nb.len() >= 3).then(|| plane_distance(&pts[i], &nb))
        })
        .collect();
    let scored: Vec<f64> = per_point.iter().flatten().copied().collect();
    Roughness {
        stats: MeanStd::of(&scored),
        skipped: per_point.len() - scored.len(),
    }
}
