//! Crack width measurement from a seed pixel: skeleton direction, sub-pixel
//! edge tracing, lifting of the edge pixels onto a local plane fitted to the
//! cloud, and the Euclidean distance between the lifted edges.

use nalgebra::{Matrix3, Vector2, Vector3};
use rayon::prelude::*;

use crate::camera::CameraModel;
use crate::cloud::PointCloud;
use crate::geometry::{Point3, RigidPose};
use crate::raster::BinaryMask;
use crate::spatial::NeighborIndex;

#[derive(Debug, thiserror::Error)]
pub enum MetrologyError {
    #[error("seed is not on or next to the skeleton")]
    SeedOffSkeleton,
    #[error("skeleton neighborhood has no gradient")]
    ZeroGradient,
    #[error("seed is outside the mask")]
    SeedOutsideMask,
    #[error("edge trace left the image before leaving the mask")]
    OpenBoundary,
    #[error("seed ray does not pass near the cloud")]
    RayMiss,
    #[error("plane neighborhood is degenerate")]
    DegenerateNeighborhood,
    #[error("plane is vertical in the sampling frame")]
    VerticalPlane,
    #[error("no plane sample projects in front of the camera")]
    NoProjectableSamples,
    #[error("no measurement pairs")]
    EmptyInput,
    #[error("reference widths must be positive")]
    NonPositiveReference,
    #[error("{stage}: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<MetrologyError>,
    },
}

impl MetrologyError {
    fn at(self, stage: &'static str) -> Self {
        MetrologyError::Stage {
            stage,
            source: Box::new(self),
        }
    }

    /// The underlying error with any stage tags removed.
    pub fn root(&self) -> &MetrologyError {
        match self {
            MetrologyError::Stage { source, .. } => source.root(),
            e => e,
        }
    }
}

/// Plane `a·x + b·y + c·z + d = 0` with unit normal `(a, b, c)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LocalPlane {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub d: f64,
    /// Root-mean-square point-to-plane distance of the fit, meters.
    pub rms: f64,
    pub support: usize,
}

impl LocalPlane {
    pub fn normal(&self) -> Vector3<f64> {
        Vector3::new(self.a, self.b, self.c)
    }

    pub fn signed_distance(&self, p: &Point3) -> f64 {
        self.normal().dot(&p.coords) + self.d
    }

    /// The same plane expressed in another frame.
    pub fn transformed(&self, pose: &RigidPose) -> LocalPlane {
        let n = pose.transform_vector(&self.normal());
        // a point on the plane maps to pose(p0)
        let p0 = Point3::from(-self.d * self.normal());
        let d = -n.dot(&pose.transform_point(&p0).coords);
        LocalPlane {
            a: n.x,
            b: n.y,
            c: n.z,
            d,
            ..*self
        }
    }

    /// Intersection with the ray `origin + t·dir`, if it is not parallel.
    pub fn intersect_ray(&self, origin: &Point3, dir: &Vector3<f64>) -> Option<Point3> {
        let denom = self.normal().dot(dir);
        if denom.abs() < 1e-15 {
            return None;
        }
        let t = -self.signed_distance(origin) / denom;
        Some(origin + t * dir)
    }
}

/// A measured crack cross-section.
#[derive(Debug, Clone, PartialEq)]
pub struct CrackMeasurement {
    pub crack_id: u32,
    pub frame_id: u32,
    pub seed: (u32, u32),
    /// Unit along-crack direction in the image.
    pub direction: Vector2<f64>,
    pub edge_left_2d: (f64, f64),
    pub edge_right_2d: (f64, f64),
    pub edge_left_3d: Point3,
    pub edge_right_3d: Point3,
    /// Meters.
    pub width: f64,
    /// Local surface plane in the cloud frame.
    pub plane: LocalPlane,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeasureParams {
    /// Side of the square neighborhood used for the direction estimate.
    pub window: u32,
    pub sigma: f64,
    pub plane_neighbors: usize,
    /// Largest accepted distance between the seed ray and the cloud, meters.
    pub ray_tolerance: f64,
    pub sample_step: f64,
    pub sample_radius: f64,
}

impl Default for MeasureParams {
    fn default() -> Self {
        Self {
            window: 15,
            sigma: 1.0,
            plane_neighbors: 60,
            ray_tolerance: 0.1,
            sample_step: 1e-4,
            sample_radius: 0.03,
        }
    }
}

fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    if !(sigma > 0.0) {
        return vec![1.0];
    }
    let r = (3.0 * sigma).ceil() as i64;
    let k: Vec<f64> = (-r..=r)
        .map(|i| (-(i * i) as f64 / (2.0 * sigma * sigma)).exp())
        .collect();
    let s: f64 = k.iter().sum();
    k.into_iter().map(|v| v / s).collect()
}

/// Along-crack direction at `seed`: the skeleton neighborhood is smoothed,
/// Sobel gradients are taken at pixels adjacent to the skeleton, and the
/// dominant gradient axis of their structure tensor (the across-crack
/// direction) is rotated by 90°. The sign is fixed so that `x > 0`, or
/// `y > 0` for a vertical direction.
///
/// The structure tensor is used instead of the plain gradient mean because
/// gradients on the two flanks of a ridge point in opposite directions and
/// cancel in a plain average.
pub fn skeleton_direction(
    skeleton: &BinaryMask,
    seed: (u32, u32),
    window: u32,
    sigma: f64,
) -> Result<Vector2<f64>, MetrologyError> {
    let (sx, sy) = (seed.0 as i64, seed.1 as i64);
    let near = (-2i64..=2).any(|dy| {
        (-2i64..=2).any(|dx| dx * dx + dy * dy <= 4 && skeleton.get_signed(sx + dx, sy + dy))
    });
    if !near {
        return Err(MetrologyError::SeedOffSkeleton);
    }
    let kernel = gaussian_kernel(sigma);
    let kr = (kernel.len() / 2) as i64;
    let half = (window.max(3) / 2) as i64;
    // pad so smoothing near the window edge sees the real skeleton
    let pad = half + kr + 1;
    let side = (2 * pad + 1) as usize;
    let raw: Vec<f64> = (0..side * side)
        .map(|i| {
            let x = sx - pad + (i % side) as i64;
            let y = sy - pad + (i / side) as i64;
            if skeleton.get_signed(x, y) {
                1.0
            } else {
                0.0
            }
        })
        .collect();
    let at = |buf: &[f64], x: i64, y: i64| -> f64 {
        if x < 0 || y < 0 || x >= side as i64 || y >= side as i64 {
            0.0
        } else {
            buf[y as usize * side + x as usize]
        }
    };
    let mut tmp = vec![0.0; side * side];
    for y in 0..side as i64 {
        for x in 0..side as i64 {
            tmp[y as usize * side + x as usize] = (-kr..=kr)
                .map(|k| kernel[(k + kr) as usize] * at(&raw, x + k, y))
                .sum();
        }
    }
    let mut smooth = vec![0.0; side * side];
    for y in 0..side as i64 {
        for x in 0..side as i64 {
            smooth[y as usize * side + x as usize] = (-kr..=kr)
                .map(|k| kernel[(k + kr) as usize] * at(&tmp, x, y + k))
                .sum();
        }
    }
    let mut tensor = Matrix3::<f64>::zeros();
    let mut used = 0usize;
    for wy in -half..=half {
        for wx in -half..=half {
            let (gx_img, gy_img) = (sx + wx, sy + wy);
            let adjacent = (-1..=1).any(|dy| (-1..=1).any(|dx| skeleton.get_signed(gx_img + dx, gy_img + dy)));
            if !adjacent {
                continue;
            }
            let (x, y) = (wx + pad, wy + pad);
            let s = |dx: i64, dy: i64| at(&smooth, x + dx, y + dy);
            let gx = (s(1, -1) + 2.0 * s(1, 0) + s(1, 1)) - (s(-1, -1) + 2.0 * s(-1, 0) + s(-1, 1));
            let gy = (s(-1, 1) + 2.0 * s(0, 1) + s(1, 1)) - (s(-1, -1) + 2.0 * s(0, -1) + s(1, -1));
            tensor[(0, 0)] += gx * gx;
            tensor[(0, 1)] += gx * gy;
            tensor[(1, 1)] += gy * gy;
            used += 1;
        }
    }
    let (jxx, jxy, jyy) = (tensor[(0, 0)], tensor[(0, 1)], tensor[(1, 1)]);
    if used == 0 || jxx + jyy < 1e-12 {
        return Err(MetrologyError::ZeroGradient);
    }
    // orientation of the dominant gradient axis
    let theta = 0.5 * (2.0 * jxy).atan2(jxx - jyy);
    let across = Vector2::new(theta.cos(), theta.sin());
    let mut along = Vector2::new(-across.y, across.x);
    if along.x < -1e-12 || (along.x.abs() <= 1e-12 && along.y < 0.0) {
        along = -along;
    }
    Ok(along.normalize())
}

const TRACE_STEP: f64 = 0.25;

/// Marches from `seed` along `±perp(direction)` in quarter-pixel steps with
/// bilinear occupancy and returns the last positions still inside the mask
/// (occupancy ≥ 0.5). Left is `+(−dy, dx)`.
pub fn trace_edges(
    mask: &BinaryMask,
    seed: (u32, u32),
    direction: &Vector2<f64>,
) -> Result<((f64, f64), (f64, f64)), MetrologyError> {
    if seed.0 >= mask.width() || seed.1 >= mask.height() || !mask.get(seed.0, seed.1) {
        return Err(MetrologyError::SeedOutsideMask);
    }
    let d = direction.normalize();
    let perp = Vector2::new(-d.y, d.x);
    let (w, h) = (mask.width() as f64, mask.height() as f64);
    let origin = Vector2::new(seed.0 as f64, seed.1 as f64);
    let march = |sign: f64| -> Result<(f64, f64), MetrologyError> {
        let mut last = origin;
        for step in 1.. {
            let p = origin + perp * (sign * step as f64 * TRACE_STEP);
            if p.x < 0.0 || p.y < 0.0 || p.x > w - 1.0 || p.y > h - 1.0 {
                return Err(MetrologyError::OpenBoundary);
            }
            if mask.sample_bilinear(p.x, p.y) < 0.5 {
                break;
            }
            last = p;
        }
        Ok((last.x, last.y))
    };
    Ok((march(1.0)?, march(-1.0)?))
}

/// Least-squares plane through `points` (smallest principal axis of their
/// covariance), oriented so that `c > 0` (then `b > 0`, then `a > 0`).
pub fn fit_plane_pca(points: &[Point3]) -> Result<LocalPlane, MetrologyError> {
    if points.len() < 3 {
        return Err(MetrologyError::DegenerateNeighborhood);
    }
    let n = points.len() as f64;
    let centroid = points.iter().fold(Vector3::zeros(), |acc, p| acc + p.coords) / n;
    let cov = points.iter().fold(Matrix3::zeros(), |acc, p| {
        let d = p.coords - centroid;
        acc + d * d.transpose()
    }) / n;
    let eig = cov.symmetric_eigen();
    let mut idx = [0usize, 1, 2];
    idx.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
    let scale = eig.eigenvalues[idx[2]];
    if !(scale > 0.0) || eig.eigenvalues[idx[1]] <= scale * 1e-10 {
        return Err(MetrologyError::DegenerateNeighborhood);
    }
    let mut normal: Vector3<f64> = eig.eigenvectors.column(idx[0]).into_owned().normalize();
    let key = if normal.z.abs() > 1e-12 {
        normal.z
    } else if normal.y.abs() > 1e-12 {
        normal.y
    } else {
        normal.x
    };
    if key < 0.0 {
        normal = -normal;
    }
    let d = -normal.dot(&centroid);
    let rms = (points
        .iter()
        .map(|p| (normal.dot(&p.coords) + d).powi(2))
        .sum::<f64>()
        / n)
        .sqrt();
    Ok(LocalPlane {
        a: normal.x,
        b: normal.y,
        c: normal.z,
        d,
        rms,
        support: points.len(),
    })
}

/// Index of the first surface point along the ray `origin + t·dir, t > 0`:
/// among points within `tolerance` of the ray, those within 2 mm of the
/// closest approach compete and the one nearest the origin wins.
pub fn ray_anchor(
    index: &NeighborIndex,
    origin: &Point3,
    dir: &Vector3<f64>,
    tolerance: f64,
) -> Result<usize, MetrologyError> {
    let dir = dir.normalize();
    let hits: Vec<(usize, f64, f64)> = index
        .points()
        .par_iter()
        .enumerate()
        .filter_map(|(i, p)| {
            let v = p - origin;
            let t = v.dot(&dir);
            if t <= 0.0 {
                return None;
            }
            let perp = (v - t * dir).norm();
            (perp < tolerance).then_some((i, perp, t))
        })
        .collect();
    let closest = hits
        .iter()
        .map(|h| h.1)
        .fold(f64::INFINITY, f64::min);
    hits.iter()
        .filter(|h| h.1 <= closest + 0.002)
        .min_by(|a, b| a.2.total_cmp(&b.2).then(a.0.cmp(&b.0)))
        .map(|h| h.0)
        .ok_or(MetrologyError::RayMiss)
}

/// Plane through the `k` cloud points nearest to where the ray meets the
/// cloud, in the cloud's frame.
pub fn fit_local_plane(
    index: &NeighborIndex,
    origin: &Point3,
    dir: &Vector3<f64>,
    k: usize,
) -> Result<LocalPlane, MetrologyError> {
    let anchor = ray_anchor(index, origin, dir, MeasureParams::default().ray_tolerance)?;
    let pts: Vec<Point3> = index
        .knn(&index.points()[anchor], k)
        .iter()
        .map(|n| index.points()[n.index])
        .collect();
    fit_plane_pca(&pts)
}

/// Grid of points on the plane with `x, y` spaced `step` apart over
/// `center ± radius` and `z = (−a·x − b·y − d)/c`.
pub fn sample_plane_points(
    plane: &LocalPlane,
    center: &Point3,
    radius: f64,
    step: f64,
) -> Result<PointCloud, MetrologyError> {
    if plane.c.abs() <= 1e-6 {
        return Err(MetrologyError::VerticalPlane);
    }
    if !(step > 0.0) || !(radius >= 0.0) {
        return Err(MetrologyError::DegenerateNeighborhood);
    }
    let n = (radius / step + 1e-9).floor() as i64;
    let mut pts = Vec::with_capacity(((2 * n + 1) * (2 * n + 1)) as usize);
    for j in -n..=n {
        for i in -n..=n {
            let x = center.x + i as f64 * step;
            let y = center.y + j as f64 * step;
            let z = (-plane.a * x - plane.b * y - plane.d) / plane.c;
            pts.push(Point3::new(x, y, z));
        }
    }
    Ok(PointCloud::from_points(pts))
}

/// Like [`sample_plane_points`], but when the plane is steep the grid is laid
/// out over the two axes orthogonal to the normal's dominant component.
pub fn sample_plane_points_any(
    plane: &LocalPlane,
    center: &Point3,
    radius: f64,
    step: f64,
) -> Result<PointCloud, MetrologyError> {
    let n = plane.normal();
    let dominant = (0..3)
        .max_by(|&i, &j| n[i].abs().total_cmp(&n[j].abs()))
        .expect("three axes");
    // cyclic axis permutation that moves the dominant axis to z
    let shift = (dominant + 1) % 3;
    let to_local = |v: &Vector3<f64>| Vector3::new(v[(shift) % 3], v[(shift + 1) % 3], v[(shift + 2) % 3]);
    let local_n = to_local(&n);
    let local_plane = LocalPlane {
        a: local_n.x,
        b: local_n.y,
        c: local_n.z,
        ..*plane
    };
    let local = sample_plane_points(&local_plane, &Point3::from(to_local(&center.coords)), radius, step)?;
    let points = local
        .points
        .iter()
        .map(|p| {
            let mut v = Vector3::zeros();
            v[shift % 3] = p.x;
            v[(shift + 1) % 3] = p.y;
            v[(shift + 2) % 3] = p.z;
            Point3::from(v)
        })
        .collect();
    Ok(PointCloud::from_points(points))
}

/// The sample whose projection is closest to `target` (ties to the lowest
/// index), with its pixel distance.
pub fn find_3d_edge(
    samples: &[Point3],
    target: (f64, f64),
    cam: &CameraModel,
    world_to_cam: &RigidPose,
) -> Result<(Point3, f64), MetrologyError> {
    samples
        .par_iter()
        .enumerate()
        .filter_map(|(i, p)| {
            let (u, v) = cam.project(&world_to_cam.transform_point(p)).ok()?;
            let e = ((u - target.0).powi(2) + (v - target.1).powi(2)).sqrt();
            Some((e, i))
        })
        .min_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)))
        .map(|(e, i)| (samples[i], e))
        .ok_or(MetrologyError::NoProjectableSamples)
}

/// Inputs shared by every measurement in one frame.
#[derive(Debug, Clone, Copy)]
pub struct MeasureContext<'a> {
    pub cloud: &'a NeighborIndex,
    pub mask: &'a BinaryMask,
    pub skeleton: &'a BinaryMask,
    pub cam: &'a CameraModel,
    pub world_to_cam: &'a RigidPose,
    pub frame_id: u32,
}

/// Measures the crack width through `seed`. The plane fit, sampling and edge
/// search run in the camera frame, so the result does not depend on the
/// choice of world frame.
pub fn measure_crack(
    ctx: &MeasureContext<'_>,
    crack_id: u32,
    seed: (u32, u32),
    params: &MeasureParams,
) -> Result<CrackMeasurement, MetrologyError> {
    let direction = skeleton_direction(ctx.skeleton, seed, params.window, params.sigma)
        .map_err(|e| e.at("direction"))?;
    let (left, right) = trace_edges(ctx.mask, seed, &direction).map_err(|e| e.at("edges"))?;

    let cam_to_world = ctx.world_to_cam.inverse();
    let ray_cam = ctx.cam.back_project(seed.0 as f64, seed.1 as f64);
    let anchor = ray_anchor(
        ctx.cloud,
        &cam_to_world.origin(),
        &cam_to_world.transform_vector(&ray_cam),
        params.ray_tolerance,
    )
    .map_err(|e| e.at("plane"))?;
    let neighborhood: Vec<Point3> = ctx
        .cloud
        .knn(&ctx.cloud.points()[anchor], params.plane_neighbors)
        .iter()
        .map(|n| ctx.world_to_cam.transform_point(&ctx.cloud.points()[n.index]))
        .collect();
    let plane_cam = fit_plane_pca(&neighborhood).map_err(|e| e.at("plane"))?;
    let center = plane_cam
        .intersect_ray(&Point3::origin(), &ray_cam)
        .ok_or(MetrologyError::RayMiss)
        .map_err(|e| e.at("plane"))?;
    let samples = sample_plane_points_any(&plane_cam, &center, params.sample_radius, params.sample_step)
        .map_err(|e| e.at("sampling"))?;
    let identity = RigidPose::identity();
    let (l_cam, _) = find_3d_edge(&samples.points, left, ctx.cam, &identity).map_err(|e| e.at("lift"))?;
    let (r_cam, _) = find_3d_edge(&samples.points, right, ctx.cam, &identity).map_err(|e| e.at("lift"))?;
    let edge_left_3d = cam_to_world.transform_point(&l_cam);
    let edge_right_3d = cam_to_world.transform_point(&r_cam);
    Ok(CrackMeasurement {
        crack_id,
        frame_id: ctx.frame_id,
        seed,
        direction,
        edge_left_2d: left,
        edge_right_2d: right,
        edge_left_3d,
        edge_right_3d,
        width: (edge_left_3d - edge_right_3d).norm(),
        plane: plane_cam.transformed(&cam_to_world),
    })
}

/// Skeleton pixel nearest to `near` within `max_radius` pixels; ties go to
/// the first in row-major order.
pub fn snap_to_skeleton(skeleton: &BinaryMask, near: (u32, u32), max_radius: u32) -> Option<(u32, u32)> {
    let r = max_radius as i64;
    let mut best: Option<((u32, u32), i64)> = None;
    for dy in -r..=r {
        for dx in -r..=r {
            let (x, y) = (near.0 as i64 + dx, near.1 as i64 + dy);
            let d2 = dx * dx + dy * dy;
            if d2 <= r * r && skeleton.get_signed(x, y) && best.is_none_or(|(_, b)| d2 < b) {
                best = Some(((x as u32, y as u32), d2));
            }
        }
    }
    best.map(|(p, _)| p)
}

/// Mean absolute error (mm) and mean relative error (%) of
/// `(calculated, reference)` pairs.
pub fn compute_error_stats(pairs: &[(f64, f64)]) -> Result<(f64, f64), MetrologyError> {
    if pairs.is_empty() {
        return Err(MetrologyError::EmptyInput);
    }
    if pairs.iter().any(|&(_, r)| !(r > 0.0)) {
        return Err(MetrologyError::NonPositiveReference);
    }
    let n = pairs.len() as f64;
    let mae = pairs.iter().map(|(c, r)| (c - r).abs()).sum::<f64>() / n;
    let mre = pairs.iter().map(|(c, r)| (c - r).abs() / r).sum::<f64>() / n * 100.0;
    Ok((mae, mre))
}

#[cfg(test)]
mod tests;
