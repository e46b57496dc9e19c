//! Deterministic synthetic scenes with exact ground truth.
//!
//! A scene is a set of analytic parts in the world frame. Cracks are
//! polyline bands drawn in a part face's chart, so band membership,
//! widths and labels are exact. Images are ray cast, so each pixel shows
//! the first surface along its center ray.

mod presets;
pub mod shapes;
pub mod texture;

use nalgebra::Vector3;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;

use crate::camera::{nearest_pixel, CameraModel};
use crate::cloud::PointCloud;
use crate::geometry::{Point3, RigidPose, Trajectory};
use crate::raster::{BinaryMask, RasterImage};

pub use presets::{calibration_scene, closed_scenes, cylinder_suite, look_at, plane_scene, slab_suite, suite_widths};
pub use shapes::{Shape, ShapeHit};
pub use texture::Texture;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SynthError {
    #[error("invalid scene: {0}")]
    InvalidSpec(String),
    #[error("pixel ({u}, {v}) in frame {frame} is not on a crack")]
    NotOnCrack { frame: usize, u: u32, v: u32 },
}

/// A shape placed in the world by `pose` (part→world).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Part {
    pub shape: Shape,
    pub pose: RigidPose,
}

/// A band around a polyline in the chart of one part face. Widths are
/// given per vertex and interpolated linearly along each segment.
#[derive(Debug, Clone, PartialEq)]
pub struct CrackSpec {
    pub part: usize,
    pub face: u8,
    pub centerline: Vec<(f64, f64)>,
    pub widths: Vec<f64>,
}

/// Closest centerline point to a chart position.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BandQuery {
    pub distance: f64,
    pub width: f64,
}

impl CrackSpec {
    pub fn straight(part: usize, face: u8, from: (f64, f64), to: (f64, f64), width: f64) -> Self {
        CrackSpec {
            part,
            face,
            centerline: vec![from, to],
            widths: vec![width, width],
        }
    }

    pub fn query(&self, a: f64, b: f64) -> BandQuery {
        let mut best = BandQuery {
            distance: f64::INFINITY,
            width: 0.0,
        };
        for k in 0..self.centerline.len().saturating_sub(1) {
            let (p, q) = (self.centerline[k], self.centerline[k + 1]);
            let (dx, dy) = (q.0 - p.0, q.1 - p.1);
            let len2 = dx * dx + dy * dy;
            let s = if len2 > 0.0 {
                (((a - p.0) * dx + (b - p.1) * dy) / len2).clamp(0.0, 1.0)
            } else {
                0.0
            };
            let (cx, cy) = (p.0 + s * dx, p.1 + s * dy);
            let d = ((a - cx).powi(2) + (b - cy).powi(2)).sqrt();
            if d < best.distance {
                best = BandQuery {
                    distance: d,
                    width: self.widths[k] + s * (self.widths[k + 1] - self.widths[k]),
                };
            }
        }
        best
    }

    pub fn contains(&self, a: f64, b: f64) -> bool {
        let q = self.query(a, b);
        q.distance <= q.width / 2.0
    }

    fn length(&self) -> f64 {
        self.centerline
            .windows(2)
            .map(|w| ((w[1].0 - w[0].0).powi(2) + (w[1].1 - w[0].1).powi(2)).sqrt())
            .sum()
    }

    /// Centerline chart point and width at `fraction` of the arc length.
    pub fn at_fraction(&self, fraction: f64) -> ((f64, f64), f64) {
        let mut remaining = fraction.clamp(0.0, 1.0) * self.length();
        for k in 0..self.centerline.len() - 1 {
            let (p, q) = (self.centerline[k], self.centerline[k + 1]);
            let seg = ((q.0 - p.0).powi(2) + (q.1 - p.1).powi(2)).sqrt();
            if remaining <= seg || k + 2 == self.centerline.len() {
                let s = if seg > 0.0 { (remaining / seg).min(1.0) } else { 0.0 };
                return (
                    (p.0 + s * (q.0 - p.0), p.1 + s * (q.1 - p.1)),
                    self.widths[k] + s * (self.widths[k + 1] - self.widths[k]),
                );
            }
            remaining -= seg;
        }
        (self.centerline[0], self.widths[0])
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CameraFrame {
    pub timestamp: f64,
    pub cam_to_world: RigidPose,
}

/// A measurement site: a point at `fraction` along crack `crack`, seen in
/// frame `frame`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SiteSpec {
    pub crack: usize,
    pub fraction: f64,
    pub frame: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SceneSpec {
    pub parts: Vec<Part>,
    pub cracks: Vec<CrackSpec>,
    pub texture: Texture,
    /// Cloud sampling spacing, meters.
    pub spacing: f64,
    /// Isotropic Gaussian noise on cloud points, meters.
    pub noise_sigma: f64,
    pub seed: u64,
    pub camera: CameraModel,
    /// LiDAR→camera transform.
    pub extrinsic: RigidPose,
    pub frames: Vec<CameraFrame>,
    pub sites: Vec<SiteSpec>,
}

impl SceneSpec {
    pub fn validate(&self) -> Result<(), SynthError> {
        let bad = |m: String| Err(SynthError::InvalidSpec(m));
        if self.parts.is_empty() {
            return bad("no parts".into());
        }
        for p in &self.parts {
            p.shape.validate().map_err(SynthError::InvalidSpec)?;
        }
        if !(self.spacing > 0.0) || !(self.noise_sigma >= 0.0) {
            return bad("spacing must be positive and noise non-negative".into());
        }
        self.camera
            .validate()
            .map_err(|e| SynthError::InvalidSpec(e.to_string()))?;
        for (i, c) in self.cracks.iter().enumerate() {
            if c.part >= self.parts.len() || c.face >= self.parts[c.part].shape.face_count() {
                return bad(format!("crack {i} references a missing part face"));
            }
            if c.centerline.len() < 2 || c.widths.len() != c.centerline.len() {
                return bad(format!("crack {i} needs ≥ 2 vertices with one width each"));
            }
            if c.widths.iter().any(|&w| !(w > 0.0)) {
                return bad(format!("crack {i} has a non-positive width"));
            }
        }
        if self.frames.windows(2).any(|w| !(w[1].timestamp > w[0].timestamp)) {
            return bad("frame timestamps must increase".into());
        }
        for (i, s) in self.sites.iter().enumerate() {
            if s.crack >= self.cracks.len() || s.frame >= self.frames.len() {
                return bad(format!("site {i} references a missing crack or frame"));
            }
        }
        Ok(())
    }

    /// World-frame surface point on `(part, face)` at chart `(a, b)`.
    pub fn surface_point(&self, part: usize, face: u8, a: f64, b: f64) -> Point3 {
        self.parts[part].pose.transform_point(&self.parts[part].shape.point(face, a, b))
    }

    pub fn surface_normal(&self, part: usize, face: u8, a: f64, b: f64) -> Vector3<f64> {
        self.parts[part].pose.transform_vector(&self.parts[part].shape.normal(face, a, b))
    }

    fn on_crack(&self, part: usize, face: u8, a: f64, b: f64) -> bool {
        self.cracks
            .iter()
            .any(|c| c.part == part && c.face == face && c.contains(a, b))
    }

    /// Rendered RGB at a surface point.
    pub fn color_at(&self, part: usize, face: u8, a: f64, b: f64) -> [u8; 3] {
        texture::tint(self.gray_at(part, face, a, b))
    }

    fn gray_at(&self, part: usize, face: u8, a: f64, b: f64) -> f64 {
        texture::shade(self.texture.value(part, face, a, b), self.on_crack(part, face, a, b))
    }

    /// First surface hit along a world ray: `(part, hit)` with `t` in units
    /// of `dir`.
    pub fn cast_ray(&self, origin: &Point3, dir: &Vector3<f64>) -> Option<(usize, ShapeHit)> {
        let mut best: Option<(usize, ShapeHit)> = None;
        for (k, part) in self.parts.iter().enumerate() {
            let inv = part.pose.inverse();
            let o = inv.transform_point(origin);
            let d = inv.transform_vector(dir);
            if let Some(h) = part.shape.intersect(&o, &d) {
                if best.is_none_or(|(_, b)| h.t < b.t) {
                    best = Some((k, h));
                }
            }
        }
        best
    }

    fn pixel_ray(&self, frame: usize, u: f64, v: f64) -> (Point3, Vector3<f64>) {
        let pose = &self.frames[frame].cam_to_world;
        (pose.origin(), pose.transform_vector(&self.camera.back_project(u, v)))
    }

    /// Distance from the camera center to the first surface through each
    /// pixel center, row-major; infinite where the ray misses.
    pub fn render_range(&self, frame: usize) -> Vec<f64> {
        let (w, h) = (self.camera.width, self.camera.height);
        (0..w * h)
            .into_par_iter()
            .map(|i| {
                let (o, d) = self.pixel_ray(frame, (i % w) as f64, (i / w) as f64);
                self.cast_ray(&o, &d)
                    .map_or(f64::INFINITY, |(_, hit)| hit.t * d.norm())
            })
            .collect()
    }

    fn render(&self, frame: usize) -> (RasterImage, BinaryMask) {
        let (w, h) = (self.camera.width, self.camera.height);
        let shaded: Vec<([u8; 3], bool)> = (0..w * h)
            .into_par_iter()
            .map(|i| {
                let (o, d) = self.pixel_ray(frame, (i % w) as f64, (i / w) as f64);
                match self.cast_ray(&o, &d) {
                    Some((part, hit)) => {
                        let (a, b) = hit.chart;
                        (self.color_at(part, hit.face, a, b), self.on_crack(part, hit.face, a, b))
                    }
                    None => ([0, 0, 0], false),
                }
            })
            .collect();
        let pixels = shaded.iter().flat_map(|(c, _)| *c).collect();
        let mut image = RasterImage::new(w, h, 3, pixels).expect("sized buffer");
        image.timestamp = Some(self.frames[frame].timestamp);
        let mask = BinaryMask::from_bits(w, h, shaded.iter().map(|&(_, m)| m).collect()).expect("sized mask");
        (image, mask)
    }
}

/// Ground-truth crack site as it appears in its frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TruthSite {
    pub crack_id: u32,
    pub frame_id: u32,
    pub pixel: (u32, u32),
    /// Meters.
    pub width: f64,
}

#[derive(Debug, Clone)]
pub struct GroundTruth {
    pub spec: SceneSpec,
    /// Per-point crack label of the noise-free sample.
    pub labels: Vec<u8>,
    /// Per-point rendered color of the noise-free sample.
    pub colors: Vec<[u8; 3]>,
    pub sites: Vec<TruthSite>,
}

impl GroundTruth {
    pub fn extrinsic(&self) -> RigidPose {
        self.spec.extrinsic
    }

    /// Width of the band under pixel `(u, v)` of `frame`, taken at the
    /// nearest centerline point.
    pub fn width_at(&self, frame: usize, u: u32, v: u32) -> Result<f64, SynthError> {
        let off = SynthError::NotOnCrack { frame, u, v };
        if frame >= self.spec.frames.len() {
            return Err(off);
        }
        let (o, d) = self.spec.pixel_ray(frame, u as f64, v as f64);
        let (part, hit) = self.spec.cast_ray(&o, &d).ok_or(off.clone())?;
        let (a, b) = hit.chart;
        self.spec
            .cracks
            .iter()
            .filter(|c| c.part == part && c.face == hit.face)
            .map(|c| c.query(a, b))
            .filter(|q| q.distance <= q.width / 2.0)
            .min_by(|x, y| (x.distance / x.width).total_cmp(&(y.distance / y.width)))
            .map(|q| q.width)
            .ok_or(off)
    }
}

#[derive(Debug, Clone)]
pub struct Scene {
    /// World-frame cloud with LiDAR intensity.
    pub cloud: PointCloud,
    /// LiDAR poses (LiDAR→world) at the image timestamps.
    pub trajectory: Trajectory,
    pub images: Vec<RasterImage>,
    pub masks: Vec<BinaryMask>,
    pub truth: GroundTruth,
}

impl Scene {
    /// Camera→world pose of frame `i`.
    pub fn camera_pose(&self, i: usize) -> RigidPose {
        self.truth.spec.frames[i].cam_to_world
    }
}

fn locate_site(spec: &SceneSpec, masks: &[BinaryMask], id: usize, site: &SiteSpec) -> Result<TruthSite, SynthError> {
    let crack = &spec.cracks[site.crack];
    let ((a, b), width) = crack.at_fraction(site.fraction);
    let p = spec.surface_point(crack.part, crack.face, a, b);
    let pc = spec.frames[site.frame].cam_to_world.inverse().transform_point(&p);
    let missing = || SynthError::InvalidSpec(format!("site {id} is not visible in frame {}", site.frame));
    let (u, v) = spec.camera.project(&pc).map_err(|_| missing())?;
    let (pu, pv) = nearest_pixel(u, v, spec.camera.width, spec.camera.height).ok_or_else(missing)?;
    let mask = &masks[site.frame];
    // nearest crack pixel in the 3×3 neighborhood
    let mut best: Option<((u32, u32), f64)> = None;
    for dv in -1i64..=1 {
        for du in -1i64..=1 {
            let (x, y) = (pu as i64 + du, pv as i64 + dv);
            if mask.get_signed(x, y) {
                let d = (x as f64 - u).powi(2) + (y as f64 - v).powi(2);
                if best.is_none_or(|(_, bd)| d < bd) {
                    best = Some(((x as u32, y as u32), d));
                }
            }
        }
    }
    let (pixel, _) = best.ok_or_else(missing)?;
    Ok(TruthSite {
        crack_id: site.crack as u32,
        frame_id: site.frame as u32,
        pixel,
        width,
    })
}

/// Samples, renders and labels a scene. Identical specs give identical
/// output.
pub fn generate_scene(spec: &SceneSpec) -> Result<Scene, SynthError> {
    spec.validate()?;
    let samples: Vec<(usize, u8, f64, f64)> = spec
        .parts
        .iter()
        .enumerate()
        .flat_map(|(k, part)| {
            part.shape
                .sample(spec.spacing)
                .into_iter()
                .map(move |(f, a, b)| (k, f, a, b))
        })
        .collect();

    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let noise = Normal::new(0.0, spec.noise_sigma.max(f64::MIN_POSITIVE)).expect("finite sigma");
    let mut points = Vec::with_capacity(samples.len());
    for &(k, f, a, b) in &samples {
        let p = spec.surface_point(k, f, a, b);
        points.push(if spec.noise_sigma > 0.0 {
            p + Vector3::new(noise.sample(&mut rng), noise.sample(&mut rng), noise.sample(&mut rng))
        } else {
            p
        });
    }
    let attrs: Vec<(f64, bool)> = samples
        .par_iter()
        .map(|&(k, f, a, b)| (spec.gray_at(k, f, a, b), spec.on_crack(k, f, a, b)))
        .collect();
    let mut cloud = PointCloud::from_points(points);
    cloud.intensity = Some(attrs.iter().map(|&(g, _)| g as f32).collect());

    let rendered: Vec<(RasterImage, BinaryMask)> = (0..spec.frames.len()).map(|i| spec.render(i)).collect();
    let (images, masks): (Vec<_>, Vec<_>) = rendered.into_iter().unzip();

    let poses: Vec<RigidPose> = spec
        .frames
        .iter()
        .map(|f| f.cam_to_world.compose(&spec.extrinsic).with_timestamp(f.timestamp))
        .collect();
    let trajectory = Trajectory::new(poses).map_err(|e| SynthError::InvalidSpec(e.to_string()))?;

    let sites = spec
        .sites
        .iter()
        .enumerate()
        .map(|(i, s)| locate_site(spec, &masks, i, s))
        .collect::<Result<Vec<_>, _>>()?;

    let truth = GroundTruth {
        spec: spec.clone(),
        labels: attrs.iter().map(|&(_, c)| c as u8).collect(),
        colors: attrs.iter().map(|&(g, _)| texture::tint(g)).collect(),
        sites,
    };
    Ok(Scene {
        cloud,
        trajectory,
        images,
        masks,
        truth,
    })
}

#[cfg(test)]
mod tests;
