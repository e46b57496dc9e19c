//! Analytic surfaces with 2D charts in meters, used for sampling and ray casting.

use std::f64::consts::{PI, TAU};

use nalgebra::Vector3;

use crate::geometry::Point3;

/// A surface in its local frame. Every face has a chart `(a, b)` measured
/// in meters along the surface.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Shape {
    /// `z = 0`, centered, chart `(x, y)`.
    Plane { size_x: f64, size_y: f64 },
    /// Centered axis-aligned box. Faces: +z, −z, +x, −x, +y, −y. Charts are
    /// the two remaining coordinates in x, y, z order.
    Box { size: [f64; 3] },
    /// Axis along y; angle φ measured from +z toward +x, chart `(R·φ, y)`.
    /// `arc` is the angular extent centered on φ = 0.
    Cylinder { radius: f64, length: f64, arc: f64 },
    /// Chart `(R·longitude, R·latitude)`, longitude from +z toward +x.
    Sphere { radius: f64 },
}

/// First intersection of a ray with a shape, in the shape's frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ShapeHit {
    pub t: f64,
    pub face: u8,
    pub chart: (f64, f64),
}

const HIT_EPS: f64 = 1e-9;

/// Grid positions `−len/2 + i·spacing` that fit in `[−len/2, len/2]`.
fn grid(len: f64, spacing: f64) -> Vec<f64> {
    let n = (len / spacing + 1e-6).floor() as usize + 1;
    (0..n).map(|i| -len / 2.0 + i as f64 * spacing).collect()
}

fn interior(len: f64, spacing: f64) -> Vec<f64> {
    grid(len, spacing)
        .into_iter()
        .filter(|v| v.abs() < len / 2.0 - spacing * 1e-6)
        .collect()
}

impl Shape {
    pub fn validate(&self) -> Result<(), String> {
        let pos = |v: f64| v.is_finite() && v > 0.0;
        let ok = match *self {
            Shape::Plane { size_x, size_y } => pos(size_x) && pos(size_y),
            Shape::Box { size } => size.iter().all(|&s| pos(s)),
            Shape::Cylinder { radius, length, arc } => pos(radius) && pos(length) && pos(arc) && arc <= TAU,
            Shape::Sphere { radius } => pos(radius),
        };
        if ok {
            Ok(())
        } else {
            Err(format!("invalid shape dimensions: {self:?}"))
        }
    }

    pub fn face_count(&self) -> u8 {
        match self {
            Shape::Box { .. } => 6,
            _ => 1,
        }
    }

    fn full_circle(arc: f64) -> bool {
        arc >= TAU - 1e-9
    }

    pub fn point(&self, face: u8, a: f64, b: f64) -> Point3 {
        match *self {
            Shape::Plane { .. } => Point3::new(a, b, 0.0),
            Shape::Box { size } => {
                let [hx, hy, hz] = size.map(|s| s / 2.0);
                match face {
                    0 => Point3::new(a, b, hz),
                    1 => Point3::new(a, b, -hz),
                    2 => Point3::new(hx, a, b),
                    3 => Point3::new(-hx, a, b),
                    4 => Point3::new(a, hy, b),
                    _ => Point3::new(a, -hy, b),
                }
            }
            Shape::Cylinder { radius, .. } => {
                let phi = a / radius;
                Point3::new(radius * phi.sin(), b, radius * phi.cos())
            }
            Shape::Sphere { radius } => {
                let (lon, lat) = (a / radius, b / radius);
                Point3::new(radius * lat.cos() * lon.sin(), radius * lat.sin(), radius * lat.cos() * lon.cos())
            }
        }
    }

    pub fn normal(&self, face: u8, a: f64, b: f64) -> Vector3<f64> {
        match *self {
            Shape::Plane { .. } => Vector3::z(),
            Shape::Box { .. } => match face {
                0 => Vector3::z(),
                1 => -Vector3::z(),
                2 => Vector3::x(),
                3 => -Vector3::x(),
                4 => Vector3::y(),
                _ => -Vector3::y(),
            },
            Shape::Cylinder { .. } => {
                let p = self.point(face, a, b);
                Vector3::new(p.x, 0.0, p.z).normalize()
            }
            Shape::Sphere { .. } => self.point(face, a, b).coords.normalize(),
        }
    }

    /// Chart samples `(face, a, b)` at roughly `spacing` meters. Grids start
    /// at the lower chart corner; shared box edges are emitted once.
    pub fn sample(&self, spacing: f64) -> Vec<(u8, f64, f64)> {
        let mut out = Vec::new();
        let mut push_grid = |face: u8, xs: &[f64], ys: &[f64]| {
            for &b in ys {
                for &a in xs {
                    out.push((face, a, b));
                }
            }
        };
        match *self {
            Shape::Plane { size_x, size_y } => push_grid(0, &grid(size_x, spacing), &grid(size_y, spacing)),
            Shape::Box { size: [sx, sy, sz] } => {
                let (gx, gy) = (grid(sx, spacing), grid(sy, spacing));
                let (ix, iz) = (interior(sx, spacing), interior(sz, spacing));
                push_grid(0, &gx, &gy);
                push_grid(1, &gx, &gy);
                push_grid(2, &gy, &iz);
                push_grid(3, &gy, &iz);
                push_grid(4, &ix, &iz);
                push_grid(5, &ix, &iz);
            }
            Shape::Cylinder { radius, length, arc } => {
                let ys = grid(length, spacing);
                let ss: Vec<f64> = if Self::full_circle(arc) {
                    let n = (TAU * radius / spacing).round().max(3.0) as usize;
                    (0..n).map(|i| -PI * radius + i as f64 * TAU * radius / n as f64).collect()
                } else {
                    grid(radius * arc, spacing)
                };
                push_grid(0, &ss, &ys);
            }
            Shape::Sphere { radius } => {
                // Fibonacci lattice with one point per spacing² of area
                let n = (4.0 * PI * radius * radius / (spacing * spacing)).round().max(4.0) as usize;
                let golden = PI * (3.0 - 5f64.sqrt());
                for i in 0..n {
                    let y = 1.0 - 2.0 * (i as f64 + 0.5) / n as f64;
                    let lon = (golden * i as f64).rem_euclid(TAU) - PI;
                    out.push((0, radius * lon, radius * y.asin()));
                }
            }
        }
        out
    }

    /// Nearest intersection with `t > 0` of the ray `o + t·d`.
    pub fn intersect(&self, o: &Point3, d: &Vector3<f64>) -> Option<ShapeHit> {
        match *self {
            Shape::Plane { size_x, size_y } => {
                if d.z.abs() < 1e-300 {
                    return None;
                }
                let t = -o.z / d.z;
                let p = o + t * d;
                (t > HIT_EPS && p.x.abs() <= size_x / 2.0 && p.y.abs() <= size_y / 2.0).then_some(ShapeHit {
                    t,
                    face: 0,
                    chart: (p.x, p.y),
                })
            }
            Shape::Box { size } => {
                let h = size.map(|s| s / 2.0);
                let mut best: Option<ShapeHit> = None;
                for face in 0..6u8 {
                    let axis = [2, 2, 0, 0, 1, 1][face as usize];
                    let sign = if face % 2 == 0 { 1.0 } else { -1.0 };
                    if d[axis].abs() < 1e-300 {
                        continue;
                    }
                    let t = (sign * h[axis] - o[axis]) / d[axis];
                    if !(t > HIT_EPS) || best.is_some_and(|b| b.t <= t) {
                        continue;
                    }
                    let p = o + t * d;
                    let inside = (0..3).all(|k| k == axis || p[k].abs() <= h[k]);
                    if inside {
                        let chart = match axis {
                            2 => (p.x, p.y),
                            0 => (p.y, p.z),
                            _ => (p.x, p.z),
                        };
                        best = Some(ShapeHit { t, face, chart });
                    }
                }
                best
            }
            Shape::Cylinder { radius, length, arc } => {
                let qa = d.x * d.x + d.z * d.z;
                if qa < 1e-300 {
                    return None;
                }
                let qb = 2.0 * (o.x * d.x + o.z * d.z);
                let qc = o.x * o.x + o.z * o.z - radius * radius;
                let disc = qb * qb - 4.0 * qa * qc;
                if disc < 0.0 {
                    return None;
                }
                let s = disc.sqrt();
                // numerically stable pair of roots
                let q = -0.5 * (qb + qb.signum() * s);
                let (mut t0, mut t1) = (q / qa, if q != 0.0 { qc / q } else { -qb / (2.0 * qa) });
                if t0 > t1 {
                    std::mem::swap(&mut t0, &mut t1);
                }
                [t0, t1].into_iter().find_map(|t| {
                    if !(t > HIT_EPS) {
                        return None;
                    }
                    let p = o + t * d;
                    let phi = p.x.atan2(p.z);
                    let in_arc = Self::full_circle(arc) || phi.abs() <= arc / 2.0;
                    (p.y.abs() <= length / 2.0 && in_arc).then_some(ShapeHit {
                        t,
                        face: 0,
                        chart: (radius * phi, p.y),
                    })
                })
            }
            Shape::Sphere { radius } => {
                let qa = d.norm_squared();
                let qb = 2.0 * o.coords.dot(d);
                let qc = o.coords.norm_squared() - radius * radius;
                let disc = qb * qb - 4.0 * qa * qc;
                if disc < 0.0 {
                    return None;
                }
                let s = disc.sqrt();
                let t = [(-qb - s) / (2.0 * qa), (-qb + s) / (2.0 * qa)]
                    .into_iter()
                    .find(|&t| t > HIT_EPS)?;
                let p = o + t * d;
                let lon = p.x.atan2(p.z);
                let lat = (p.y / radius).clamp(-1.0, 1.0).asin();
                Some(ShapeHit {
                    t,
                    face: 0,
                    chart: (radius * lon, radius * lat),
                })
            }
        }
    }
}
