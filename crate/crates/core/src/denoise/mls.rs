use nalgebra::{DMatrix, DVector, Matrix3, Vector3};
use rayon::prelude::*;

use super::DenoiseError;
use crate::cloud::PointCloud;
use crate::geometry::Point3;
use crate::spatial::NeighborIndex;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MlsConfig {
    /// Neighborhood radius and Gaussian weight scale, meters.
    pub search_radius: f64,
    /// Polynomial degree, 1 to 3.
    pub degree: usize,
}

impl MlsConfig {
    pub fn validate(&self) -> Result<(), DenoiseError> {
        if !(self.search_radius > 0.0) {
            return Err(DenoiseError::InvalidConfig("search radius must be positive".into()));
        }
        if !(1..=3).contains(&self.degree) {
            return Err(DenoiseError::InvalidConfig(format!(
                "polynomial degree {} not in 1..=3",
                self.degree
            )));
        }
        Ok(())
    }

    /// Degree 2 with a radius of five times the median nearest-neighbor
    /// spacing.
    pub fn for_cloud(index: &NeighborIndex) -> Self {
        Self {
            search_radius: 5.0 * median_spacing(index),
            degree: 2,
        }
    }
}

/// Median distance from each point to its nearest other point.
pub fn median_spacing(index: &NeighborIndex) -> f64 {
    let mut d: Vec<f64> = (0..index.len())
        .into_par_iter()
        .filter_map(|i| index.knn_of_member(i, 1).first().map(|n| n.distance))
        .collect();
    if d.is_empty() {
        return 0.0;
    }
    d.sort_by(f64::total_cmp);
    d[d.len() / 2]
}

/// Number of monomials of a bivariate polynomial of degree `m`.
pub fn monomial_count(m: usize) -> usize {
    (m + 1) * (m + 2) / 2
}

/// Monomials `x^i·y^j` ordered by total degree, then by descending power
/// of `x`: `1, x, y, x², xy, y², x³, …`.
pub fn monomials(m: usize) -> Vec<(u32, u32)> {
    let mut out = Vec::with_capacity(monomial_count(m));
    for total in 0..=m as u32 {
        for j in 0..=total {
            out.push((total - j, j));
        }
    }
    out
}

/// A local height field `h = p(x, y)` over a reference plane.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalSurface {
    pub origin: Point3,
    pub u: Vector3<f64>,
    pub v: Vector3<f64>,
    pub normal: Vector3<f64>,
    /// Coefficients in [`monomials`] order, in meters.
    pub coeffs: Vec<f64>,
    pub degree: usize,
}

impl LocalSurface {
    pub fn height(&self, x: f64, y: f64) -> f64 {
        monomials(self.degree)
            .iter()
            .zip(&self.coeffs)
            .map(|(&(i, j), c)| c * x.powi(i as i32) * y.powi(j as i32))
            .sum()
    }

    /// Moves `p` along the normal onto the surface above its footprint.
    pub fn project(&self, p: &Point3) -> Point3 {
        let d = p - self.origin;
        let (x, y) = (d.dot(&self.u), d.dot(&self.v));
        self.origin + self.u * x + self.v * y + self.normal * self.height(x, y)
    }

    /// Local coordinates `(x, y, h)` of a world point.
    pub fn local(&self, p: &Point3) -> (f64, f64, f64) {
        let d = p - self.origin;
        (d.dot(&self.u), d.dot(&self.v), d.dot(&self.normal))
    }
}

fn weight(distance: f64, radius: f64) -> f64 {
    let s = distance / radius;
    (-s * s).exp()
}

/// Weighted reference plane: weighted centroid and the smallest weighted
/// principal axis, oriented toward `+z` (then `+y`, `+x`). The in-plane
/// axes follow the world x axis projected into the plane.
fn reference_frame(
    points: &[Point3],
    weights: &[f64],
) -> Result<(Point3, Vector3<f64>, Vector3<f64>, Vector3<f64>), DenoiseError> {
    let wsum: f64 = weights.iter().sum();
    if !(wsum > 0.0) {
        return Err(DenoiseError::DegenerateNeighborhood);
    }
    let centroid = points
        .iter()
        .zip(weights)
        .fold(Vector3::zeros(), |acc, (p, w)| acc + p.coords * *w)
        / wsum;
    let cov = points.iter().zip(weights).fold(Matrix3::zeros(), |acc, (p, w)| {
        let d = p.coords - centroid;
        acc + d * d.transpose() * *w
    }) / wsum;
    let eig = cov.symmetric_eigen();
    let i_min = (0..3)
        .min_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]))
        .expect("three eigenvalues");
    let mut n: Vector3<f64> = eig.eigenvectors.column(i_min).into_owned().normalize();
    let key = [n.z, n.y, n.x].into_iter().find(|c| c.abs() > 1e-12).unwrap_or(1.0);
    if key < 0.0 {
        n = -n;
    }
    let mut u = Vector3::x() - n * n.x;
    if u.norm() < 1e-6 {
        u = Vector3::y() - n * n.y;
    }
    let u = u.normalize();
    let v = n.cross(&u);
    Ok((Point3::from(centroid), u, v, n))
}

/// Weighted least-squares polynomial surface around `center`. Weights are
/// `exp(−(‖x − center‖ / radius)²)`.
pub fn fit_mls_polynomial(
    center: &Point3,
    neighbors: &[Point3],
    cfg: &MlsConfig,
) -> Result<LocalSurface, DenoiseError> {
    cfg.validate()?;
    let terms = monomials(cfg.degree);
    if neighbors.len() < terms.len() {
        return Err(DenoiseError::InsufficientNeighbors {
            found: neighbors.len(),
            required: terms.len(),
        });
    }
    let weights: Vec<f64> = neighbors
        .iter()
        .map(|p| weight((p - center).norm(), cfg.search_radius))
        .collect();
    let (origin, u, v, normal) = reference_frame(neighbors, &weights)?;
    // solve in coordinates scaled by the radius for conditioning
    let r = cfg.search_radius;
    let mut a = DMatrix::<f64>::zeros(neighbors.len(), terms.len());
    let mut b = DVector::<f64>::zeros(neighbors.len());
    for (row, (p, w)) in neighbors.iter().zip(&weights).enumerate() {
        let d = p - origin;
        let (x, y, h) = (d.dot(&u) / r, d.dot(&v) / r, d.dot(&normal));
        let sw = w.sqrt();
        for (col, &(i, j)) in terms.iter().enumerate() {
            a[(row, col)] = sw * x.powi(i as i32) * y.powi(j as i32);
        }
        b[row] = sw * h;
    }
    let svd = a.svd(true, true);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    if !(smax > 0.0) || smin <= smax * 1e-10 {
        return Err(DenoiseError::DegenerateNeighborhood);
    }
    let scaled = svd
        .solve(&b, 0.0)
        .map_err(|_| DenoiseError::DegenerateNeighborhood)?;
    let coeffs = terms
        .iter()
        .zip(scaled.iter())
        .map(|(&(i, j), c)| c / r.powi((i + j) as i32))
        .collect();
    Ok(LocalSurface {
        origin,
        u,
        v,
        normal,
        coeffs,
        degree: cfg.degree,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct MlsOutput {
    pub cloud: PointCloud,
    /// Points whose fit failed and were passed through unchanged.
    pub fallbacks: usize,
    /// Mean distance each point moved, meters.
    pub mean_displacement: f64,
}

/// Projects every point onto the MLS surface fitted to its radius
/// neighborhood. Attributes are carried over unchanged.
pub fn mls_smooth(cloud: &PointCloud, cfg: &MlsConfig) -> Result<MlsOutput, DenoiseError> {
    cfg.validate()?;
    let index = NeighborIndex::new(cloud.points.clone());
    Ok(mls_smooth_indexed(cloud, &index, cfg))
}

pub fn mls_smooth_indexed(cloud: &PointCloud, index: &NeighborIndex, cfg: &MlsConfig) -> MlsOutput {
    let projected: Vec<Option<Point3>> = cloud
        .points
        .par_iter()
        .map(|p| {
            let nb: Vec<Point3> = index
                .within_radius(p, cfg.search_radius)
                .iter()
                .map(|n| index.points()[n.index])
                .collect();
            fit_mls_polynomial(p, &nb, cfg).ok().map(|s| s.project(p))
        })
        .collect();
    let fallbacks = projected.iter().filter(|p| p.is_none()).count();
    let points: Vec<Point3> = projected
        .iter()
        .zip(&cloud.points)
        .map(|(q, p)| q.unwrap_or(*p))
        .collect();
    let mean_displacement = if points.is_empty() {
        0.0
    } else {
        points.iter().zip(&cloud.points).map(|(a, b)| (a - b).norm()).sum::<f64>() / points.len() as f64
    };
    if fallbacks > 0 {
        log::info!("MLS: {fallbacks} of {} points passed through unchanged", points.len());
    }
    MlsOutput {
        cloud: PointCloud {
            points,
            ..cloud.clone()
        },
        fallbacks,
        mean_displacement,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::UnitQuaternion;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    fn disk_grid(step: f64, radius: f64, f: impl Fn(f64, f64) -> f64) -> Vec<Point3> {
        let n = (radius / step).round() as i64;
        let mut out = Vec::new();
        for j in -n..=n {
            for i in -n..=n {
                let (x, y) = (i as f64 * step, j as f64 * step);
                if x * x + y * y <= radius * radius {
                    out.push(Point3::new(x, y, f(x, y)));
                }
            }
        }
        out
    }

    #[test]
    fn monomial_order() {
        assert_eq!(monomials(2), vec![(0, 0), (1, 0), (0, 1), (2, 0), (1, 1), (0, 2)]);
        assert_eq!(monomials(3).len(), monomial_count(3));
    }

    #[test]
    fn plane_gives_zero_height() {
        let rot = UnitQuaternion::from_scaled_axis(Vector3::new(0.3, -0.2, 0.1));
        let pts: Vec<Point3> = disk_grid(0.01, 0.1, |_, _| 0.0)
            .into_iter()
            .map(|p| Point3::from(rot * p.coords + Vector3::new(1.0, 2.0, 3.0)))
            .collect();
        for degree in 1..=3 {
            let cfg = MlsConfig {
                search_radius: 0.05,
                degree,
            };
            let s = fit_mls_polynomial(&pts[40], &pts, &cfg).unwrap();
            assert!(s.coeffs.iter().all(|c| c.abs() < 1e-9), "{:?}", s.coeffs);
        }
    }

    #[test]
    fn paraboloid_coefficients() {
        let pts = disk_grid(0.01, 0.2, |x, y| x * x + y * y);
        let cfg = MlsConfig {
            search_radius: 0.1,
            degree: 2,
        };
        let s = fit_mls_polynomial(&Point3::origin(), &pts, &cfg).unwrap();
        assert!((s.normal - Vector3::z()).norm() < 1e-12);
        for (got, want) in s.coeffs[3..].iter().zip([1.0, 0.0, 1.0]) {
            assert!((got - want).abs() < 1e-8, "{:?}", s.coeffs);
        }
    }

    #[test]
    fn too_few_neighbors() {
        let pts = [Point3::origin(), Point3::new(0.01, 0.0, 0.0)];
        let cfg = MlsConfig {
            search_radius: 0.1,
            degree: 2,
        };
        assert!(matches!(
            fit_mls_polynomial(&pts[0], &pts, &cfg),
            Err(DenoiseError::InsufficientNeighbors { found: 2, required: 6 })
        ));
        let collinear: Vec<Point3> = (0..10).map(|i| Point3::new(i as f64 * 0.01, 0.0, 0.0)).collect();
        assert!(matches!(
            fit_mls_polynomial(&collinear[0], &collinear, &cfg),
            Err(DenoiseError::DegenerateNeighborhood)
        ));
    }

    #[test]
    fn noiseless_plane_is_fixed_point() {
        let pts = disk_grid(0.005, 0.1, |x, y| 0.3 * x - 0.1 * y + 1.0);
        let cloud = PointCloud::from_points(pts.clone());
        let out = mls_smooth(&cloud, &MlsConfig { search_radius: 0.02, degree: 2 }).unwrap();
        assert_eq!(out.fallbacks, 0);
        for (a, b) in out.cloud.points.iter().zip(&pts) {
            assert!((a - b).norm() < 1e-9);
        }
    }

    #[test]
    fn isolated_point_passes_through() {
        let mut pts = disk_grid(0.005, 0.05, |_, _| 0.0);
        pts.push(Point3::new(5.0, 5.0, 5.0));
        let out = mls_smooth(&PointCloud::from_points(pts.clone()), &MlsConfig { search_radius: 0.02, degree: 2 })
            .unwrap();
        assert_eq!(out.fallbacks, 1);
        assert_eq!(*out.cloud.points.last().unwrap(), *pts.last().unwrap());
    }

    fn rms_z(pts: &[Point3]) -> f64 {
        (pts.iter().map(|p| p.z * p.z).sum::<f64>() / pts.len() as f64).sqrt()
    }

    #[test]
    fn noisy_plane_residual_drops() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let noise = Normal::new(0.0, 0.002).unwrap();
        let pts: Vec<Point3> = disk_grid(0.005, 0.25, |_, _| 0.0)
            .into_iter()
            .map(|p| Point3::new(p.x, p.y, noise.sample(&mut rng)))
            .collect();
        let before = rms_z(&pts);
        let cfg = MlsConfig {
            search_radius: 0.02,
            degree: 2,
        };
        let out = mls_smooth(&PointCloud::from_points(pts), &cfg).unwrap();
        let after = rms_z(&out.cloud.points);
        assert!(after <= 0.4 * before, "{before} -> {after}");
    }

    #[test]
    fn nearly_idempotent_on_smooth_surface() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let pts: Vec<Point3> = disk_grid(0.005, 0.2, |x, y| 0.5 * (x * x - y * y))
            .into_iter()
            .map(|p| p + Vector3::new(0.0, 0.0, rng.random_range(-0.002..0.002)))
            .collect();
        let cfg = MlsConfig {
            search_radius: 0.03,
            degree: 2,
        };
        let first = mls_smooth(&PointCloud::from_points(pts), &cfg).unwrap();
        let second = mls_smooth(&first.cloud, &cfg).unwrap();
        assert!(
            second.mean_displacement < 0.1 * first.mean_displacement,
            "{} vs {}",
            second.mean_displacement,
            first.mean_displacement
        );
    }

    #[test]
    fn weighting_tracks_curvature_better_than_uniform_fit() {
        let pts = disk_grid(0.005, 0.1, |x, y| 0.02 * (30.0 * x).sin() + 0.01 * (20.0 * y).cos());
        let center = pts[pts.len() / 2 + 7];
        let weighted = MlsConfig {
            search_radius: 0.02,
            degree: 1,
        };
        // a huge radius makes all weights ≈ 1
        let uniform = MlsConfig {
            search_radius: 1e3,
            degree: 1,
        };
        let nb: Vec<Point3> = pts.iter().copied().filter(|p| (p - center).norm() <= 0.05).collect();
        let rw = fit_mls_polynomial(&center, &nb, &weighted).unwrap();
        let ru = fit_mls_polynomial(&center, &nb, &uniform).unwrap();
        let residual = |s: &LocalSurface| {
            let (x, y, h) = s.local(&center);
            (s.height(x, y) - h).abs()
        };
        assert!(residual(&rw) <= residual(&ru), "{} vs {}", residual(&rw), residual(&ru));
    }

    #[test]
    fn median_spacing_of_grid() {
        let index = NeighborIndex::new(disk_grid(0.004, 0.05, |_, _| 0.0));
        assert!((median_spacing(&index) - 0.004).abs() < 1e-12);
        assert!((MlsConfig::for_cloud(&index).search_radius - 0.02).abs() < 1e-12);
    }
}
