use nalgebra::Vector3;
use rayon::prelude::*;

use crate::camera::CameraModel;
use crate::cloud::PointCloud;
use crate::geometry::{Point3, RigidPose};
use crate::raster::RasterImage;

use super::histogram::{accumulate, lidar_bins, nid, DEFAULT_BINS};
use super::nelder_mead::{nelder_mead_minimize, NelderMeadConfig};
use super::CalibError;

/// One image together with the LiDAR pose in the world frame at its
/// capture time.
#[derive(Debug, Clone)]
pub struct CalibFrame {
    pub image: RasterImage,
    pub lidar_pose: RigidPose,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CalibConfig {
    pub bins: usize,
    /// Initial simplex step: rotation-vector radians then meters.
    pub initial_step: [f64; 6],
    pub max_iters: usize,
    pub simplex_tolerance: f64,
    /// Extra optimizer passes started from the previous optimum with the
    /// step halved.
    pub restarts: usize,
}

impl Default for CalibConfig {
    fn default() -> Self {
        let r = 1.0f64.to_radians();
        Self {
            bins: DEFAULT_BINS,
            initial_step: [r, r, r, 0.01, 0.01, 0.01],
            max_iters: 600,
            simplex_tolerance: 1e-6,
            restarts: 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CalibResult {
    pub extrinsic: RigidPose,
    pub initial_nid: f64,
    pub final_nid: f64,
    pub iterations: usize,
    pub evaluations: usize,
}

struct Prepared {
    frames: Vec<(Vec<Point3>, RasterImage)>,
    bins: Vec<u16>,
    nbins: usize,
}

impl Prepared {
    fn new(cloud: &PointCloud, frames: &[CalibFrame], nbins: usize) -> Result<Self, CalibError> {
        let intensity = cloud.intensity.as_ref().ok_or(CalibError::MissingIntensity)?;
        if nbins < 2 {
            return Err(CalibError::InvalidConfig("need at least two bins".into()));
        }
        let frames = frames
            .iter()
            .map(|f| {
                let world_to_lidar = f.lidar_pose.inverse();
                let pts = cloud
                    .points
                    .iter()
                    .map(|p| world_to_lidar.transform_point(p))
                    .collect();
                (pts, f.image.to_gray())
            })
            .collect();
        Ok(Self {
            frames,
            bins: lidar_bins(intensity, nbins),
            nbins,
        })
    }

    /// Mean NID over frames; a frame that sees nothing or has a degenerate
    /// joint histogram scores 1. Also returns how many frames saw points.
    fn mean(&self, cam: &CameraModel, extrinsic: &RigidPose) -> (f64, usize) {
        let scores: Vec<Option<f64>> = self
            .frames
            .par_iter()
            .map(|(pts, img)| match accumulate(pts, &self.bins, img, cam, extrinsic, self.nbins) {
                Ok(h) => Some(nid(&h).unwrap_or(1.0)),
                Err(_) => None,
            })
            .collect();
        let visible = scores.iter().filter(|s| s.is_some()).count();
        let total: f64 = scores.iter().map(|s| s.unwrap_or(1.0)).sum();
        (total / self.frames.len().max(1) as f64, visible)
    }
}

fn perturbed(initial: &RigidPose, x: &[f64]) -> RigidPose {
    let delta = RigidPose::from_rotation_vector(
        Vector3::new(x[0], x[1], x[2]),
        Vector3::new(x[3], x[4], x[5]),
    );
    delta.compose(initial)
}

/// Mean NID of `extrinsic` over all frames.
pub fn mean_nid(
    cloud: &PointCloud,
    frames: &[CalibFrame],
    cam: &CameraModel,
    extrinsic: &RigidPose,
    bins: usize,
) -> Result<f64, CalibError> {
    let prep = Prepared::new(cloud, frames, bins)?;
    let (v, visible) = prep.mean(cam, extrinsic);
    if visible == 0 {
        return Err(CalibError::NoVisiblePoints);
    }
    Ok(v)
}

/// Refines a LiDAR→camera extrinsic by minimizing the mean NID over
/// `frames`. The search runs over a rotation-vector/translation perturbation
/// composed onto `initial`, so the result never scores worse than `initial`.
pub fn refine_extrinsic(
    cloud: &PointCloud,
    frames: &[CalibFrame],
    cam: &CameraModel,
    initial: &RigidPose,
    cfg: &CalibConfig,
) -> Result<CalibResult, CalibError> {
    if frames.is_empty() {
        return Err(CalibError::InvalidConfig("no calibration frames".into()));
    }
    let prep = Prepared::new(cloud, frames, cfg.bins)?;
    let (initial_nid, visible) = prep.mean(cam, initial);
    if visible == 0 {
        return Err(CalibError::NoVisiblePoints);
    }
    let objective = |x: &[f64]| prep.mean(cam, &perturbed(initial, x)).0;

    let mut x = vec![0.0; 6];
    let mut f = initial_nid;
    let mut step = cfg.initial_step.to_vec();
    let mut iterations = 0;
    let mut evaluations = 0;
    for pass in 0..=cfg.restarts {
        let nm = NelderMeadConfig {
            initial_step: step.clone(),
            max_iters: cfg.max_iters,
            simplex_tolerance: cfg.simplex_tolerance,
        };
        let r = nelder_mead_minimize(objective, &x, &nm)?;
        iterations += r.iterations;
        evaluations += r.evaluations;
        log::debug!("calibration pass {pass}: NID {:.6} -> {:.6}", f, r.f);
        if r.f <= f {
            x = r.x;
            f = r.f;
        }
        step.iter_mut().for_each(|s| *s *= 0.5);
    }
    Ok(CalibResult {
        extrinsic: perturbed(initial, &x),
        initial_nid,
        final_nid: f,
        iterations,
        evaluations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn plane_cloud() -> PointCloud {
        let mut pts = Vec::new();
        let mut inten = Vec::new();
        for i in 0..60 {
            for j in 0..60 {
                pts.push(Point3::new(i as f64 * 0.02 - 0.6, j as f64 * 0.02 - 0.6, 2.0));
                inten.push(((i * 7 + j * 3) % 11) as f32);
            }
        }
        let mut c = PointCloud::from_points(pts);
        c.intensity = Some(inten);
        c
    }

    fn cam() -> CameraModel {
        CameraModel::new(200.0, 200.0, 80.0, 60.0, 160, 120).unwrap()
    }

    #[test]
    fn textureless_image_keeps_initial_estimate() {
        let frames = vec![CalibFrame {
            image: RasterImage::filled(160, 120, 1, 90),
            lidar_pose: RigidPose::identity(),
        }];
        let initial = RigidPose::from_rotation_vector(Vector3::new(0.0, 0.01, 0.0), Vector3::zeros());
        let cfg = CalibConfig {
            max_iters: 50,
            ..CalibConfig::default()
        };
        let r = refine_extrinsic(&plane_cloud(), &frames, &cam(), &initial, &cfg).unwrap();
        assert_eq!(r.initial_nid, 1.0);
        assert!(r.extrinsic.rotation_angle_to(&initial) <= cfg.initial_step[0] + 1e-12);
        assert!(r.extrinsic.translation_distance_to(&initial) <= cfg.initial_step[3] + 1e-12);
    }

    #[test]
    fn invisible_start_is_an_error() {
        let frames = vec![CalibFrame {
            image: RasterImage::filled(160, 120, 1, 90),
            lidar_pose: RigidPose::identity(),
        }];
        let behind = RigidPose::from_rotation_vector(Vector3::new(0.0, std::f64::consts::PI, 0.0), Vector3::zeros());
        assert!(matches!(
            refine_extrinsic(&plane_cloud(), &frames, &cam(), &behind, &CalibConfig::default()),
            Err(CalibError::NoVisiblePoints)
        ));
        let mut bare = plane_cloud();
        bare.intensity = None;
        assert!(matches!(
            mean_nid(&bare, &frames, &cam(), &RigidPose::identity(), 32),
            Err(CalibError::MissingIntensity)
        ));
    }
}
