//! Rigid-body poses, point transforms and pose interpolation.
//!
//! Poses are stored as a unit quaternion plus a translation. A pose maps
//! points from its source frame into its target frame: `p' = R·p + t`.

use nalgebra::{Quaternion, UnitQuaternion, Vector3, Vector4};
use thiserror::Error;

/// A 3D point in meters.
pub type Point3 = nalgebra::Point3<f64>;

/// Below this geodesic angle slerp degrades to a normalized lerp.
pub const SLERP_SMALL_ANGLE: f64 = 1e-8;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("point is behind the camera (z = {z})")]
    BehindCamera { z: f64 },
    #[error("timestamp {t} outside trajectory span [{start}, {end}]")]
    OutOfRange { t: f64, start: f64, end: f64 },
    #[error("trajectory pose {index} has no timestamp")]
    MissingTimestamp { index: usize },
    #[error("interpolation parameter {0} outside [0, 1]")]
    InvalidParameter(f64),
    #[error("invalid camera model: {0}")]
    InvalidCamera(String),
    #[error("degenerate quaternion (norm {0})")]
    DegenerateQuaternion(f64),
}

/// An element of SE(3) with an optional timestamp in seconds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RigidPose {
    pub rotation: UnitQuaternion<f64>,
    pub translation: Vector3<f64>,
    pub timestamp: Option<f64>,
}

impl Default for RigidPose {
    fn default() -> Self {
        Self::identity()
    }
}

impl RigidPose {
    pub fn identity() -> Self {
        Self {
            rotation: UnitQuaternion::identity(),
            translation: Vector3::zeros(),
            timestamp: None,
        }
    }

    pub fn new(rotation: UnitQuaternion<f64>, translation: Vector3<f64>) -> Self {
        Self {
            rotation,
            translation,
            timestamp: None,
        }
    }

    /// Builds a pose from raw quaternion coefficients, normalizing them.
    pub fn from_wxyz(
        w: f64,
        x: f64,
        y: f64,
        z: f64,
        translation: Vector3<f64>,
    ) -> Result<Self, GeometryError> {
        let q = Quaternion::new(w, x, y, z);
        let norm = q.norm();
        if !norm.is_finite() || norm < 1e-12 {
            return Err(GeometryError::DegenerateQuaternion(norm));
        }
        Ok(Self::new(UnitQuaternion::new_normalize(q), translation))
    }

    /// Rotation given as an axis-angle vector (radians), then translation.
    pub fn from_rotation_vector(rotvec: Vector3<f64>, translation: Vector3<f64>) -> Self {
        Self::new(UnitQuaternion::from_scaled_axis(rotvec), translation)
    }

    pub fn with_timestamp(mut self, t: f64) -> Self {
        self.timestamp = Some(t);
        self
    }

    pub fn inverse(&self) -> Self {
        let rot = self.rotation.inverse();
        Self {
            rotation: rot,
            translation: -(rot * self.translation),
            timestamp: self.timestamp,
        }
    }

    /// `self ∘ other`: applies `other` first, then `self`.
    pub fn compose(&self, other: &RigidPose) -> Self {
        Self {
            rotation: self.rotation * other.rotation,
            translation: self.rotation * other.translation + self.translation,
            timestamp: self.timestamp,
        }
    }

    pub fn transform_point(&self, p: &Point3) -> Point3 {
        Point3::from(self.rotation * p.coords + self.translation)
    }

    pub fn transform_vector(&self, v: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * v
    }

    /// Position of the frame origin expressed in the target frame.
    pub fn origin(&self) -> Point3 {
        Point3::from(self.translation)
    }

    /// Geodesic angle between the two rotations, in radians.
    pub fn rotation_angle_to(&self, other: &RigidPose) -> f64 {
        self.rotation.angle_to(&other.rotation)
    }

    pub fn translation_distance_to(&self, other: &RigidPose) -> f64 {
        (self.translation - other.translation).norm()
    }
}

/// Applies `pose` to `p`: `R·p + t`.
pub fn transform_point(pose: &RigidPose, p: &Point3) -> Point3 {
    pose.transform_point(p)
}

fn quat_vec(q: &UnitQuaternion<f64>) -> Vector4<f64> {
    let q = q.quaternion();
    Vector4::new(q.w, q.i, q.j, q.k)
}

fn vec_quat(v: Vector4<f64>) -> UnitQuaternion<f64> {
    UnitQuaternion::new_normalize(Quaternion::new(v[0], v[1], v[2], v[3]))
}

/// Spherical interpolation of the rotation and linear interpolation of the
/// translation. The quaternion of `p1` is sign-aligned with `p0` so the
/// shortest arc is taken.
pub fn slerp_pose(p0: &RigidPose, p1: &RigidPose, t: f64) -> Result<RigidPose, GeometryError> {
    if !(0.0..=1.0).contains(&t) {
        return Err(GeometryError::InvalidParameter(t));
    }
    if t == 0.0 {
        return Ok(*p0);
    }
    if t == 1.0 {
        return Ok(*p1);
    }
    let q0 = quat_vec(&p0.rotation);
    let mut q1 = quat_vec(&p1.rotation);
    let mut cos_omega = q0.dot(&q1);
    if cos_omega < 0.0 {
        q1 = -q1;
        cos_omega = -cos_omega;
    }
    let omega = cos_omega.min(1.0).acos();
    let q = if omega < SLERP_SMALL_ANGLE {
        q0 * (1.0 - t) + q1 * t
    } else {
        let sin_omega = omega.sin();
        q0 * (((1.0 - t) * omega).sin() / sin_omega) + q1 * ((t * omega).sin() / sin_omega)
    };
    let translation = p0.translation * (1.0 - t) + p1.translation * t;
    let timestamp = match (p0.timestamp, p1.timestamp) {
        (Some(a), Some(b)) => Some(a + (b - a) * t),
        _ => None,
    };
    Ok(RigidPose {
        rotation: vec_quat(q),
        translation,
        timestamp,
    })
}

/// Pose at time `t_cam` on a time-sorted pose sequence.
pub fn interpolate_camera_pose(
    trajectory: &[RigidPose],
    t_cam: f64,
) -> Result<RigidPose, GeometryError> {
    let stamp = |i: usize| {
        trajectory[i]
            .timestamp
            .ok_or(GeometryError::MissingTimestamp { index: i })
    };
    if trajectory.is_empty() {
        return Err(GeometryError::OutOfRange {
            t: t_cam,
            start: f64::NAN,
            end: f64::NAN,
        });
    }
    let start = stamp(0)?;
    let end = stamp(trajectory.len() - 1)?;
    if !(start..=end).contains(&t_cam) {
        return Err(GeometryError::OutOfRange {
            t: t_cam,
            start,
            end,
        });
    }
    // first index whose timestamp is >= t_cam
    let mut lo = 0usize;
    let mut hi = trajectory.len() - 1;
    while lo < hi {
        let mid = (lo + hi) / 2;
        if stamp(mid)? < t_cam {
            lo = mid + 1;
        } else {
            hi = mid;
        }
    }
    let t1 = stamp(lo)?;
    if t1 == t_cam || lo == 0 {
        return Ok(trajectory[lo]);
    }
    let t0 = stamp(lo - 1)?;
    let s = ((t_cam - t0) / (t1 - t0)).clamp(0.0, 1.0);
    let mut pose = slerp_pose(&trajectory[lo - 1], &trajectory[lo], s)?;
    pose.timestamp = Some(t_cam);
    Ok(pose)
}

/// A time-sorted sequence of poses with strictly increasing timestamps.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Trajectory {
    entries: Vec<RigidPose>,
}

impl Trajectory {
    /// Fails with the offending index if timestamps are missing or not
    /// strictly increasing.
    pub fn new(entries: Vec<RigidPose>) -> Result<Self, TrajectoryOrderError> {
        for (i, p) in entries.iter().enumerate() {
            let t = p.timestamp.ok_or(TrajectoryOrderError { index: i })?;
            if i > 0 && entries[i - 1].timestamp.is_some_and(|prev| t <= prev) {
                return Err(TrajectoryOrderError { index: i });
            }
        }
        Ok(Self { entries })
    }

    pub fn entries(&self) -> &[RigidPose] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn interpolate(&self, t: f64) -> Result<RigidPose, GeometryError> {
        interpolate_camera_pose(&self.entries, t)
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
#[error("timestamp at entry {index} is missing or not strictly increasing")]
pub struct TrajectoryOrderError {
    pub index: usize,
}
