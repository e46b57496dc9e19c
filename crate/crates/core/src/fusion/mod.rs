//! Multi-frame fusion of image color and crack labels onto a point cloud.

pub mod hull;

use std::cmp::Ordering;

use nalgebra::Vector3;
use rayon::prelude::*;

use crate::camera::{nearest_pixel, CameraModel};
use crate::cloud::PointCloud;
use crate::geometry::{Point3, RigidPose};
use crate::raster::{BinaryMask, RasterImage};

pub use hull::{convex_hull_vertices, HullError};

/// Points closer than this to the camera center have no viewing direction.
const MIN_CAMERA_DISTANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum FusionError {
    #[error("point {index} coincides with the camera center")]
    DegeneratePoint { index: usize },
    #[error("need at least 4 points for visibility, got {0}")]
    TooFewPoints(usize),
    #[error("visibility hull failed: {0}")]
    Hull(#[from] HullError),
    #[error("invalid fusion config: {0}")]
    InvalidConfig(String),
    #[error("frame {frame_id}: image {got:?} does not match camera {expected:?}")]
    FrameSize {
        frame_id: u32,
        expected: (u32, u32),
        got: (u32, u32),
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct FusionConfig {
    pub lambda_orientation: f64,
    pub lambda_distance: f64,
    pub ideal_distance: f64,
    pub sigma: f64,
    pub top_n: usize,
    pub hpr_radius_scale: f64,
    /// Run visibility only on points that project into the frame. Points
    /// outside the viewing frustum cannot occlude points inside it, and
    /// the hull gets much smaller.
    pub cull_to_frustum: bool,
}

impl Default for FusionConfig {
    fn default() -> Self {
        Self {
            lambda_orientation: 0.5,
            lambda_distance: 0.5,
            ideal_distance: 2.0,
            sigma: 0.5,
            top_n: 4,
            hpr_radius_scale: 1000.0,
            cull_to_frustum: true,
        }
    }
}

impl FusionConfig {
    pub fn validate(&self) -> Result<(), FusionError> {
        let bad = |m: &str| Err(FusionError::InvalidConfig(m.into()));
        if !(self.lambda_orientation + self.lambda_distance > 0.0) {
            return bad("lambda weights must sum to a positive value");
        }
        if !(self.sigma > 0.0) {
            return bad("sigma must be positive");
        }
        if self.top_n == 0 {
            return bad("top_n must be at least 1");
        }
        if !(self.hpr_radius_scale > 1.0) || !self.ideal_distance.is_finite() {
            return bad("hpr_radius_scale must exceed 1 and ideal_distance must be finite");
        }
        Ok(())
    }
}

/// One image with its optional crack mask and camera→world pose.
#[derive(Debug, Clone)]
pub struct FusionFrame {
    pub frame_id: u32,
    pub image: RasterImage,
    pub mask: Option<BinaryMask>,
    pub cam_to_world: RigidPose,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ViewObservation {
    pub frame_id: u32,
    pub pixel: (u32, u32),
    pub color: [u8; 3],
    pub label: u8,
    pub score_orientation: f64,
    pub score_distance: f64,
    pub weight: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FusedPoint {
    pub color: Option<[u8; 3]>,
    pub label: u8,
    pub support: usize,
}

/// Hidden-point removal. `points` are relative to the camera center.
/// Returns ascending indices of the points whose spherically inverted image
/// is a vertex of the hull of the inverted set plus the origin.
pub fn hpr_visible(points: &[Point3], radius_scale: f64) -> Result<Vec<usize>, FusionError> {
    if points.len() < 4 {
        return Err(FusionError::TooFewPoints(points.len()));
    }
    let norms: Vec<f64> = points.iter().map(|p| p.coords.norm()).collect();
    if let Some(index) = norms.iter().position(|&n| !(n > MIN_CAMERA_DISTANCE)) {
        return Err(FusionError::DegeneratePoint { index });
    }
    let radius = radius_scale * norms.iter().copied().fold(0.0, f64::max);
    let mut inverted: Vec<Vector3<f64>> = points
        .iter()
        .zip(&norms)
        .map(|(p, &n)| p.coords * (2.0 * radius / n - 1.0))
        .collect();
    inverted.push(Vector3::zeros());
    let origin = points.len();
    Ok(convex_hull_vertices(&inverted)?
        .into_iter()
        .filter(|&i| i != origin)
        .collect())
}

/// Cosine between the camera→point direction and the optical axis.
pub fn score_orientation(point: &Point3, cam_to_world: &RigidPose) -> Result<f64, FusionError> {
    let d = point - cam_to_world.origin();
    let n = d.norm();
    if !(n > MIN_CAMERA_DISTANCE) {
        return Err(FusionError::DegeneratePoint { index: 0 });
    }
    let axis = cam_to_world.transform_vector(&Vector3::z());
    Ok((axis.dot(&d) / n).clamp(-1.0, 1.0))
}

/// Gaussian penalty on the deviation from the ideal viewing distance.
pub fn score_distance(point: &Point3, camera_position: &Point3, ideal_distance: f64, sigma: f64) -> f64 {
    let d = (point - camera_position).norm() - ideal_distance;
    (-d * d / (2.0 * sigma * sigma)).exp()
}

fn frame_observations(
    cloud: &PointCloud,
    frame: &FusionFrame,
    cam: &CameraModel,
    cfg: &FusionConfig,
) -> Result<Vec<(usize, ViewObservation)>, FusionError> {
    if frame.image.dims() != (cam.width, cam.height) {
        return Err(FusionError::FrameSize {
            frame_id: frame.frame_id,
            expected: (cam.width, cam.height),
            got: frame.image.dims(),
        });
    }
    if let Some(m) = &frame.mask {
        if m.dims() != (cam.width, cam.height) {
            return Err(FusionError::FrameSize {
                frame_id: frame.frame_id,
                expected: (cam.width, cam.height),
                got: m.dims(),
            });
        }
    }
    let world_to_cam = frame.cam_to_world.inverse();
    let mut candidates = Vec::new();
    let mut rel = Vec::new();
    for (i, p) in cloud.points.iter().enumerate() {
        let pc = world_to_cam.transform_point(p);
        if !(pc.coords.norm() > MIN_CAMERA_DISTANCE) {
            continue;
        }
        if cfg.cull_to_frustum {
            let inside = cam
                .project(&pc)
                .map(|(u, v)| cam.contains(u, v))
                .unwrap_or(false);
            if !inside {
                continue;
            }
        }
        candidates.push(i);
        rel.push(pc);
    }
    // Too few or coplanar-with-camera points leave the hull undefined; with
    // nothing to occlude them they are all treated as visible.
    let visible = match hpr_visible(&rel, cfg.hpr_radius_scale) {
        Ok(v) => v,
        Err(FusionError::TooFewPoints(_)) | Err(FusionError::Hull(_)) => {
            log::debug!("frame {}: visibility undefined, keeping {} points", frame.frame_id, rel.len());
            (0..rel.len()).collect()
        }
        Err(e) => return Err(e),
    };
    let cam_pos = frame.cam_to_world.origin();
    let mut out = Vec::with_capacity(visible.len());
    for k in visible {
        let pc = &rel[k];
        let Ok((u, v)) = cam.project(pc) else { continue };
        let Some(pixel) = nearest_pixel(u, v, cam.width, cam.height) else {
            continue;
        };
        let p = &cloud.points[candidates[k]];
        let so = pc.z / pc.coords.norm();
        let sd = score_distance(p, &cam_pos, cfg.ideal_distance, cfg.sigma);
        out.push((
            candidates[k],
            ViewObservation {
                frame_id: frame.frame_id,
                pixel,
                color: frame.image.rgb(pixel.0, pixel.1),
                label: frame.mask.as_ref().is_some_and(|m| m.get(pixel.0, pixel.1)) as u8,
                score_orientation: so,
                score_distance: sd,
                weight: cfg.lambda_orientation * so + cfg.lambda_distance * sd,
            },
        ));
    }
    Ok(out)
}

/// Per-point observation lists, each ordered by frame position in `frames`.
pub fn accumulate_observations(
    cloud: &PointCloud,
    frames: &[FusionFrame],
    cam: &CameraModel,
    cfg: &FusionConfig,
) -> Result<Vec<Vec<ViewObservation>>, FusionError> {
    cfg.validate()?;
    let per_frame: Vec<Vec<(usize, ViewObservation)>> = frames
        .par_iter()
        .map(|f| frame_observations(cloud, f, cam, cfg))
        .collect::<Result<_, _>>()?;
    let mut lists = vec![Vec::new(); cloud.len()];
    for obs in per_frame {
        for (i, o) in obs {
            lists[i].push(o);
        }
    }
    Ok(lists)
}

fn by_weight_then_frame(a: &ViewObservation, b: &ViewObservation) -> Ordering {
    b.weight
        .total_cmp(&a.weight)
        .then(a.frame_id.cmp(&b.frame_id))
        .then(a.pixel.cmp(&b.pixel))
        .then(a.color.cmp(&b.color))
        .then(a.label.cmp(&b.label))
}

/// Weighted average of the `top_n` best observations. Negative weights are
/// clamped to zero; if nothing positive remains the kept observations are
/// averaged uniformly.
pub fn fuse_point(observations: &[ViewObservation], cfg: &FusionConfig) -> FusedPoint {
    if observations.is_empty() {
        return FusedPoint {
            color: None,
            label: 0,
            support: 0,
        };
    }
    let mut obs = observations.to_vec();
    obs.sort_by(by_weight_then_frame);
    obs.truncate(cfg.top_n.max(1));
    let mut w: Vec<f64> = obs.iter().map(|o| o.weight.max(0.0)).collect();
    let mut total: f64 = w.iter().sum();
    if !(total > 0.0) || !total.is_finite() {
        w = vec![1.0; obs.len()];
        total = obs.len() as f64;
    }
    let mut color = [0u8; 3];
    for (c, slot) in color.iter_mut().enumerate() {
        let avg = obs.iter().zip(&w).map(|(o, &wi)| wi * o.color[c] as f64).sum::<f64>() / total;
        *slot = (avg + 0.5).floor().clamp(0.0, 255.0) as u8;
    }
    let vote = obs.iter().zip(&w).map(|(o, &wi)| wi * o.label as f64).sum::<f64>() / total;
    FusedPoint {
        color: Some(color),
        label: (vote >= 0.5) as u8,
        support: obs.len(),
    }
}

#[derive(Debug, Clone)]
pub struct FusedCloud {
    /// Input geometry with color and label attached. Unobserved points get
    /// color (0, 0, 0) and label 0.
    pub cloud: PointCloud,
    pub colored: Vec<bool>,
    pub support: Vec<usize>,
}

impl FusedCloud {
    pub fn colored_fraction(&self) -> f64 {
        if self.colored.is_empty() {
            return 0.0;
        }
        self.colored.iter().filter(|&&c| c).count() as f64 / self.colored.len() as f64
    }
}

pub fn fuse_cloud(
    cloud: &PointCloud,
    frames: &[FusionFrame],
    cam: &CameraModel,
    cfg: &FusionConfig,
) -> Result<FusedCloud, FusionError> {
    let lists = accumulate_observations(cloud, frames, cam, cfg)?;
    let fused: Vec<FusedPoint> = lists.par_iter().map(|l| fuse_point(l, cfg)).collect();
    let mut out = cloud.clone();
    out.color = Some(fused.iter().map(|f| f.color.unwrap_or([0, 0, 0])).collect());
    out.label = Some(fused.iter().map(|f| f.label).collect());
    Ok(FusedCloud {
        cloud: out,
        colored: fused.iter().map(|f| f.color.is_some()).collect(),
        support: fused.iter().map(|f| f.support).collect(),
    })
}
