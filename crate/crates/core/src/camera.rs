//! Undistorted pinhole camera.

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::geometry::{GeometryError, Point3, RigidPose};

/// Pinhole intrinsics in pixels. Pixel `(i, j)` has its center at the
/// continuous coordinate `(i, j)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraModel {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: u32,
    pub height: u32,
}

impl CameraModel {
    pub fn new(
        fx: f64,
        fy: f64,
        cx: f64,
        cy: f64,
        width: u32,
        height: u32,
    ) -> Result<Self, GeometryError> {
        let cam = Self {
            fx,
            fy,
            cx,
            cy,
            width,
            height,
        };
        cam.validate()?;
        Ok(cam)
    }

    pub fn validate(&self) -> Result<(), GeometryError> {
        if !(self.fx > 0.0 && self.fy > 0.0) {
            return Err(GeometryError::InvalidCamera(format!(
                "focal lengths must be positive (fx={}, fy={})",
                self.fx, self.fy
            )));
        }
        if !(0.0..self.width as f64).contains(&self.cx)
            || !(0.0..self.height as f64).contains(&self.cy)
        {
            return Err(GeometryError::InvalidCamera(format!(
                "principal point ({}, {}) outside {}x{} image",
                self.cx, self.cy, self.width, self.height
            )));
        }
        Ok(())
    }

    /// `u = fx·x/z + cx`, `v = fy·y/z + cy`.
    pub fn project(&self, p_cam: &Point3) -> Result<(f64, f64), GeometryError> {
        if !(p_cam.z > 0.0) {
            return Err(GeometryError::BehindCamera { z: p_cam.z });
        }
        Ok((
            self.fx * p_cam.x / p_cam.z + self.cx,
            self.fy * p_cam.y / p_cam.z + self.cy,
        ))
    }

    /// Ray direction (camera frame, z = 1) through a pixel coordinate.
    pub fn back_project(&self, u: f64, v: f64) -> Vector3<f64> {
        Vector3::new((u - self.cx) / self.fx, (v - self.cy) / self.fy, 1.0)
    }

    /// True when the nearest pixel to `(u, v)` lies inside the image.
    pub fn contains(&self, u: f64, v: f64) -> bool {
        nearest_pixel(u, v, self.width, self.height).is_some()
    }
}

/// Round-half-up pixel lookup; `None` outside the image.
pub fn nearest_pixel(u: f64, v: f64, width: u32, height: u32) -> Option<(u32, u32)> {
    let iu = (u + 0.5).floor();
    let iv = (v + 0.5).floor();
    if iu >= 0.0 && iv >= 0.0 && iu < width as f64 && iv < height as f64 {
        Some((iu as u32, iv as u32))
    } else {
        None
    }
}

pub fn project(cam: &CameraModel, p_cam: &Point3) -> Result<(f64, f64), GeometryError> {
    cam.project(p_cam)
}

/// Transforms a LiDAR-frame point with the LiDAR→camera extrinsic, then
/// projects it.
pub fn project_lidar_point(
    cam: &CameraModel,
    extrinsic: &RigidPose,
    p_lidar: &Point3,
) -> Result<(f64, f64), GeometryError> {
    cam.project(&extrinsic.transform_point(p_lidar))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn cam() -> CameraModel {
        CameraModel::new(1000.0, 1000.0, 500.0, 500.0, 1000, 1000).unwrap()
    }

    #[test]
    fn principal_point_and_hand_arithmetic() {
        let c = cam();
        assert_eq!(c.project(&Point3::new(0.0, 0.0, 2.0)).unwrap(), (500.0, 500.0));
        assert_eq!(c.project(&Point3::new(0.1, 0.0, 1.0)).unwrap(), (600.0, 500.0));
    }

    #[test]
    fn behind_camera_is_an_error() {
        let c = cam();
        assert!(matches!(
            c.project(&Point3::new(0.0, 0.0, 0.0)),
            Err(GeometryError::BehindCamera { .. })
        ));
        assert!(c.project(&Point3::new(1.0, 0.0, -1.0)).is_err());
    }

    #[test]
    fn invalid_intrinsics_rejected() {
        assert!(CameraModel::new(0.0, 1.0, 1.0, 1.0, 4, 4).is_err());
        assert!(CameraModel::new(1.0, 1.0, 4.0, 1.0, 4, 4).is_err());
    }

    #[test]
    fn lidar_projection_matches_two_step() {
        let c = cam();
        assert_eq!(
            project_lidar_point(&c, &RigidPose::identity(), &Point3::new(0.2, -0.1, 3.0)).unwrap(),
            c.project(&Point3::new(0.2, -0.1, 3.0)).unwrap()
        );
        let shift = RigidPose::new(Default::default(), Vector3::new(0.0, 0.0, 1.0));
        assert_eq!(
            project_lidar_point(&c, &shift, &Point3::new(0.0, 0.0, 1.0)).unwrap(),
            (500.0, 500.0)
        );
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..1000 {
            let pose = RigidPose::from_rotation_vector(
                Vector3::new(
                    rng.random_range(-0.3..0.3),
                    rng.random_range(-0.3..0.3),
                    rng.random_range(-0.3..0.3),
                ),
                Vector3::new(rng.random_range(-1.0..1.0), 0.0, 2.0),
            );
            let p = Point3::new(
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
                rng.random_range(0.0..3.0),
            );
            let direct = project_lidar_point(&c, &pose, &p);
            let two_step = c.project(&pose.transform_point(&p));
            assert_eq!(direct, two_step);
        }
    }

    #[test]
    fn back_projection_inverts_projection() {
        let c = cam();
        let p = Point3::new(0.3, -0.2, 2.5);
        let (u, v) = c.project(&p).unwrap();
        let ray = c.back_project(u, v) * p.z;
        assert!((ray - p.coords).norm() < 1e-12);
    }

    #[test]
    fn nearest_pixel_rounds_half_up() {
        assert_eq!(nearest_pixel(0.5, 1.49, 4, 4), Some((1, 1)));
        assert_eq!(nearest_pixel(-0.5, 0.0, 4, 4), Some((0, 0)));
        assert_eq!(nearest_pixel(-0.51, 0.0, 4, 4), None);
        assert_eq!(nearest_pixel(3.5, 0.0, 4, 4), None);
    }
}
