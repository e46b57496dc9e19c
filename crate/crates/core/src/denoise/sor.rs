use rayon::prelude::*;

use super::DenoiseError;
use crate::cloud::PointCloud;
use crate::spatial::NeighborIndex;

#[derive(Debug, Clone, PartialEq)]
pub struct SorOutput {
    pub kept: PointCloud,
    /// Indices of removed points, ascending.
    pub removed: Vec<usize>,
    /// Mean and sample standard deviation of the per-point mean neighbor
    /// distance, and the resulting cut-off.
    pub mean: f64,
    pub std_dev: f64,
    pub threshold: f64,
}

/// Mean distance from each point to its `k` nearest neighbors (itself
/// excluded).
pub fn mean_knn_distances(index: &NeighborIndex, k: usize) -> Vec<f64> {
    (0..index.len())
        .into_par_iter()
        .map(|i| {
            let nn = index.knn_of_member(i, k);
            nn.iter().map(|n| n.distance).sum::<f64>() / nn.len().max(1) as f64
        })
        .collect()
}

/// Statistical outlier removal: drops points whose mean distance to their
/// `k` nearest neighbors exceeds `μ + n_sigma·σ` over the whole cloud.
pub fn sor_filter(cloud: &PointCloud, k: usize, n_sigma: f64) -> Result<SorOutput, DenoiseError> {
    if k == 0 || cloud.len() <= k {
        return Err(DenoiseError::TooFewPoints {
            points: cloud.len(),
            required: k + 1,
        });
    }
    let index = NeighborIndex::new(cloud.points.clone());
    let r = mean_knn_distances(&index, k);
    let n = r.len() as f64;
    let mean = r.iter().sum::<f64>() / n;
    let var = r.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
    let std_dev = var.sqrt();
    let threshold = mean + n_sigma * std_dev;
    // relative slack so identical distances never fail on summation rounding
    let cut = threshold + threshold.abs() * 1e-12;
    let (kept_idx, removed): (Vec<usize>, Vec<usize>) = (0..r.len()).partition(|&i| r[i] <= cut);
    log::debug!(
        "SOR k={k} n={n_sigma}: mean {mean:.6} sd {std_dev:.6}, removed {} of {}",
        removed.len(),
        r.len()
    );
    Ok(SorOutput {
        kept: cloud.select(&kept_idx),
        removed,
        mean,
        std_dev,
        threshold,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{Point3, RigidPose};
    use nalgebra::Vector3;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    fn grid(n: usize, spacing: f64) -> Vec<Point3> {
        (0..n * n)
            .map(|i| Point3::new((i % n) as f64 * spacing, (i / n) as f64 * spacing, 0.0))
            .collect()
    }

    #[test]
    fn gross_outlier_removed() {
        // one point 100 grid spacings above a 30×30 grid
        let mut pts = grid(30, 0.01);
        pts.insert(417, Point3::new(0.15, 0.15, 1.0));
        let out = sor_filter(&PointCloud::from_points(pts), 60, 1.0).unwrap();
        assert_eq!(out.removed, vec![417]);
        assert_eq!(out.kept.len(), 900);
    }

    #[test]
    fn symmetric_clusters_keep_everything() {
        let a = [Point3::new(0.0, 0.0, 0.0), Point3::new(0.1, 0.0, 0.0)];
        let pts: Vec<Point3> = a
            .iter()
            .chain(a.iter().map(|p| p + Vector3::new(5.0, 0.0, 0.0)).collect::<Vec<_>>().iter())
            .copied()
            .collect();
        let out = sor_filter(&PointCloud::from_points(pts), 1, 1.0).unwrap();
        assert!(out.removed.is_empty());
        assert_eq!(out.kept.len(), 4);
    }

    #[test]
    fn too_few_points() {
        let c = PointCloud::from_points(grid(3, 1.0));
        assert!(matches!(sor_filter(&c, 60, 1.0), Err(DenoiseError::TooFewPoints { .. })));
    }

    #[test]
    fn subset_and_rigid_invariance() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let noise = Normal::new(0.0, 0.002).unwrap();
        let pts: Vec<Point3> = grid(60, 0.01)
            .into_iter()
            .map(|p| p + Vector3::new(0.0, 0.0, noise.sample(&mut rng)))
            .collect();
        let mut cloud = PointCloud::from_points(pts);
        cloud.label = Some((0..cloud.len()).map(|i| (i % 2) as u8).collect());
        let out = sor_filter(&cloud, 20, 1.0).unwrap();
        assert_eq!(out.kept.len() + out.removed.len(), cloud.len());
        assert_eq!(out.kept.label.as_ref().unwrap().len(), out.kept.len());
        let pose = RigidPose::from_rotation_vector(Vector3::new(0.4, 1.0, -0.3), Vector3::new(3.0, -2.0, 1.0));
        let moved = sor_filter(&cloud.transformed(&pose), 20, 1.0).unwrap();
        assert_eq!(moved.removed, out.removed);
    }
}
