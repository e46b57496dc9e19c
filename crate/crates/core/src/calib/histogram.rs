use crate::camera::CameraModel;
use crate::geometry::{Point3, RigidPose};
use crate::raster::RasterImage;

use super::CalibError;

/// Default number of bins per axis.
pub const DEFAULT_BINS: usize = 32;

/// Joint LiDAR-intensity / image-intensity histogram with its marginals.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct JointHistogram {
    bins: usize,
    counts: Vec<u64>,
    marginal_lidar: Vec<u64>,
    marginal_image: Vec<u64>,
    total: u64,
}

impl JointHistogram {
    pub fn new(bins: usize) -> Self {
        assert!(bins >= 1, "histogram needs at least one bin");
        Self {
            bins,
            counts: vec![0; bins * bins],
            marginal_lidar: vec![0; bins],
            marginal_image: vec![0; bins],
            total: 0,
        }
    }

    /// Builds a histogram from a row-major `bins × bins` count matrix (rows
    /// are LiDAR bins).
    pub fn from_counts(bins: usize, counts: &[u64]) -> Self {
        assert_eq!(counts.len(), bins * bins);
        let mut h = Self::new(bins);
        for l in 0..bins {
            for i in 0..bins {
                h.add_n(l, i, counts[l * bins + i]);
            }
        }
        h
    }

    pub fn add(&mut self, lidar_bin: usize, image_bin: usize) {
        self.add_n(lidar_bin, image_bin, 1);
    }

    fn add_n(&mut self, lidar_bin: usize, image_bin: usize, n: u64) {
        self.counts[lidar_bin * self.bins + image_bin] += n;
        self.marginal_lidar[lidar_bin] += n;
        self.marginal_image[image_bin] += n;
        self.total += n;
    }

    pub fn bins(&self) -> usize {
        self.bins
    }

    pub fn count(&self, lidar_bin: usize, image_bin: usize) -> u64 {
        self.counts[lidar_bin * self.bins + image_bin]
    }

    pub fn joint(&self) -> &[u64] {
        &self.counts
    }

    pub fn marginal_lidar(&self) -> &[u64] {
        &self.marginal_lidar
    }

    pub fn marginal_image(&self) -> &[u64] {
        &self.marginal_image
    }

    pub fn total(&self) -> u64 {
        self.total
    }
}

/// Bin of a value in `[0, 1]`; values outside are clamped.
pub fn bin_of(value: f64, bins: usize) -> usize {
    let b = (value.clamp(0.0, 1.0) * bins as f64) as usize;
    b.min(bins - 1)
}

/// LiDAR intensities divided by the largest recorded value and binned.
pub fn lidar_bins(intensity: &[f32], bins: usize) -> Vec<u16> {
    let max = intensity.iter().copied().fold(0.0f32, f32::max);
    intensity
        .iter()
        .map(|&v| {
            let n = if max > 0.0 { v as f64 / max as f64 } else { 0.0 };
            bin_of(n, bins) as u16
        })
        .collect()
}

/// Histogram over points already expressed in the LiDAR frame, with their
/// intensities pre-binned. Image intensities are sampled bilinearly; points
/// behind the camera or outside the image are skipped.
pub(crate) fn accumulate(
    points: &[Point3],
    lidar_bin: &[u16],
    image: &RasterImage,
    cam: &CameraModel,
    extrinsic: &RigidPose,
    bins: usize,
) -> Result<JointHistogram, CalibError> {
    let mut hist = JointHistogram::new(bins);
    for (p, &lb) in points.iter().zip(lidar_bin) {
        let pc = extrinsic.transform_point(p);
        let Ok((u, v)) = cam.project(&pc) else {
            continue;
        };
        let Some(g) = image.sample_gray_bilinear(u, v) else {
            continue;
        };
        hist.add(lb as usize, bin_of(g / 255.0, bins));
    }
    if hist.total == 0 {
        return Err(CalibError::NoVisiblePoints);
    }
    Ok(hist)
}

/// Projects every LiDAR-frame point with intensity into the image and
/// counts `(bin(L_j), bin(I(x_j)))` pairs.
pub fn build_histograms(
    cloud: &crate::cloud::PointCloud,
    image: &RasterImage,
    cam: &CameraModel,
    extrinsic: &RigidPose,
    bins: usize,
) -> Result<JointHistogram, CalibError> {
    let intensity = cloud.intensity.as_ref().ok_or(CalibError::MissingIntensity)?;
    let lb = lidar_bins(intensity, bins);
    accumulate(&cloud.points, &lb, image, cam, extrinsic, bins)
}

/// Shannon entropy (nats) of a count vector; empty bins contribute 0.
pub fn entropy(counts: &[u64]) -> Result<f64, CalibError> {
    let total: u64 = counts.iter().sum();
    if total == 0 {
        return Err(CalibError::EmptyHistogram);
    }
    let n = total as f64;
    Ok(counts
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / n;
            -p * p.ln()
        })
        .sum())
}

/// Normalized information distance `(H(L,I) − MI) / H(L,I)`, clamped to
/// `[0, 1]`.
pub fn nid(hist: &JointHistogram) -> Result<f64, CalibError> {
    let h_joint = entropy(hist.joint())?;
    if h_joint <= 0.0 {
        return Err(CalibError::DegenerateJoint);
    }
    let mi = mutual_information(hist)?;
    Ok(((h_joint - mi) / h_joint).clamp(0.0, 1.0))
}

/// `H(L) + H(I) − H(L,I)`.
pub fn mutual_information(hist: &JointHistogram) -> Result<f64, CalibError> {
    Ok(entropy(hist.marginal_lidar())? + entropy(hist.marginal_image())? - entropy(hist.joint())?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cloud::PointCloud;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::LN_2;

    #[test]
    fn entropy_basics() {
        assert_eq!(entropy(&[0, 7, 0]).unwrap(), 0.0);
        assert!((entropy(&[3, 3]).unwrap() - LN_2).abs() < 1e-15);
        assert!(matches!(entropy(&[0, 0]), Err(CalibError::EmptyHistogram)));
    }

    #[test]
    fn entropy_matches_direct_summation() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..50 {
            let counts: Vec<u64> = (0..32).map(|_| rng.random_range(0..1000)).collect();
            let total: f64 = counts.iter().sum::<u64>() as f64;
            // independent form: ln N − (1/N) Σ c ln c
            let direct = total.ln()
                - counts
                    .iter()
                    .filter(|&&c| c > 0)
                    .map(|&c| c as f64 * (c as f64).ln())
                    .sum::<f64>()
                    / total;
            assert!((entropy(&counts).unwrap() - direct).abs() < 1e-12);
        }
    }

    #[test]
    fn nid_extremes() {
        let diag = JointHistogram::from_counts(3, &[4, 0, 0, 0, 5, 0, 0, 0, 6]);
        assert!(nid(&diag).unwrap().abs() < 1e-12);
        let indep = JointHistogram::from_counts(2, &[1, 1, 1, 1]);
        assert!((nid(&indep).unwrap() - 1.0).abs() < 1e-12);
        let single = JointHistogram::from_counts(2, &[5, 0, 0, 0]);
        assert!(matches!(nid(&single), Err(CalibError::DegenerateJoint)));
    }

    #[test]
    fn nid_hand_computed_two_by_two() {
        let h = JointHistogram::from_counts(2, &[2, 1, 1, 2]);
        let h_joint = (2.0 / 3.0) * 3f64.ln() + (1.0 / 3.0) * 6f64.ln();
        let mi = 2.0 * LN_2 - h_joint;
        let expected = (h_joint - mi) / h_joint;
        assert!((nid(&h).unwrap() - expected).abs() < 1e-14);
        assert!((expected - 0.957_43).abs() < 1e-4);
    }

    #[test]
    fn single_point_zero_intensities() {
        let cam = CameraModel::new(100.0, 100.0, 5.0, 5.0, 10, 10).unwrap();
        let mut cloud = PointCloud::from_points(vec![Point3::new(0.0, 0.0, 1.0)]);
        cloud.intensity = Some(vec![0.0]);
        let img = RasterImage::filled(10, 10, 1, 0);
        let h = build_histograms(&cloud, &img, &cam, &RigidPose::identity(), 32).unwrap();
        assert_eq!(h.total(), 1);
        assert_eq!(h.count(0, 0), 1);
    }

    #[test]
    fn all_points_behind_camera() {
        let cam = CameraModel::new(100.0, 100.0, 5.0, 5.0, 10, 10).unwrap();
        let mut cloud = PointCloud::from_points(vec![Point3::new(0.0, 0.0, -1.0); 5]);
        cloud.intensity = Some(vec![1.0; 5]);
        let img = RasterImage::filled(10, 10, 1, 0);
        assert!(matches!(
            build_histograms(&cloud, &img, &cam, &RigidPose::identity(), 32),
            Err(CalibError::NoVisiblePoints)
        ));
    }

    #[test]
    fn totals_match_brute_force_projection_count() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let cam = CameraModel::new(300.0, 300.0, 160.0, 120.0, 320, 240).unwrap();
        let img = RasterImage::new(320, 240, 1, (0..320 * 240).map(|i| (i % 251) as u8).collect())
            .unwrap();
        for _ in 0..20 {
            let pts: Vec<Point3> = (0..2000)
                .map(|_| {
                    Point3::new(
                        rng.random_range(-3.0..3.0),
                        rng.random_range(-3.0..3.0),
                        rng.random_range(-1.0..4.0),
                    )
                })
                .collect();
            let mut cloud = PointCloud::from_points(pts.clone());
            cloud.intensity = Some((0..2000).map(|_| rng.random_range(0.0..255.0)).collect());
            let pose = RigidPose::from_rotation_vector(
                nalgebra::Vector3::new(rng.random_range(-0.2..0.2), 0.1, 0.0),
                nalgebra::Vector3::new(0.1, 0.0, 0.2),
            );
            let expected = pts
                .iter()
                .filter(|p| {
                    let q = pose.rotation * p.coords + pose.translation;
                    if q.z <= 0.0 {
                        return false;
                    }
                    let u = 300.0 * q.x / q.z + 160.0;
                    let v = 300.0 * q.y / q.z + 120.0;
                    (0.0..=319.0).contains(&u) && (0.0..=239.0).contains(&v)
                })
                .count() as u64;
            let h = build_histograms(&cloud, &img, &cam, &pose, 32).unwrap();
            assert_eq!(h.total(), expected);
        }
    }

    proptest! {
        #[test]
        fn marginals_and_bounds(counts in proptest::collection::vec(0u64..50, 16)) {
            prop_assume!(counts.iter().sum::<u64>() > 0);
            let h = JointHistogram::from_counts(4, &counts);
            for l in 0..4 {
                prop_assert_eq!((0..4).map(|i| h.count(l, i)).sum::<u64>(), h.marginal_lidar()[l]);
                prop_assert_eq!((0..4).map(|i| h.count(i, l)).sum::<u64>(), h.marginal_image()[l]);
            }
            prop_assert_eq!(h.total(), counts.iter().sum::<u64>());
            prop_assert!(mutual_information(&h).unwrap() >= -1e-12);
            if let Ok(v) = nid(&h) {
                prop_assert!((0.0..=1.0).contains(&v));
            }
        }
    }
}
