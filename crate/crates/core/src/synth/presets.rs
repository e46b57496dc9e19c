//! Ready-made scenes for tests, benchmarks and the `synth` command.

use std::f64::consts::PI;

use nalgebra::{Matrix3, Rotation3, UnitQuaternion, Vector3};

use super::{CameraFrame, CrackSpec, Part, SceneSpec, Shape, SiteSpec, Texture};
use crate::camera::CameraModel;
use crate::geometry::{Point3, RigidPose};

/// Camera→world pose of a camera at `eye` looking at `target`, with image
/// rows running against `up`.
pub fn look_at(eye: Point3, target: Point3, up: Vector3<f64>) -> RigidPose {
    let z = (target - eye).normalize();
    let y = (-up + up.dot(&z) * z).normalize();
    let x = y.cross(&z);
    let r = Rotation3::from_matrix_unchecked(Matrix3::from_columns(&[x, y, z]));
    RigidPose::new(UnitQuaternion::from_rotation_matrix(&r), eye.coords)
}

/// Fifteen band widths evenly spread over 0.2–1.7 mm, in meters.
pub fn suite_widths() -> Vec<f64> {
    (0..15).map(|k| 0.2e-3 + 1.5e-3 * k as f64 / 14.0).collect()
}

fn default_extrinsic() -> RigidPose {
    RigidPose::from_rotation_vector(Vector3::new(0.012, -0.02, 0.015), Vector3::new(0.05, -0.08, 0.03))
}

fn close_up_camera() -> CameraModel {
    CameraModel::new(6000.0, 6000.0, 239.5, 179.5, 480, 360).expect("valid intrinsics")
}

/// A 1580 × 300 mm slab with fifteen straight cracks, each viewed from
/// 0.4 m by its own close-up frame.
pub fn slab_suite(seed: u64, noise_sigma: f64) -> SceneSpec {
    let widths = suite_widths();
    let mut cracks = Vec::new();
    let mut frames = Vec::new();
    let mut sites = Vec::new();
    for (i, &w) in widths.iter().enumerate() {
        let x = -0.70 + 0.1 * i as f64;
        let theta = ((i % 5) as f64 - 2.0) * 6f64.to_radians();
        let (s, c) = theta.sin_cos();
        cracks.push(CrackSpec::straight(0, 0, (x - 0.06 * s, -0.06 * c), (x + 0.06 * s, 0.06 * c), w));
        let tilt = ((i % 3) as f64 - 1.0) * 8f64.to_radians();
        let eye = Point3::new(x + 0.4 * tilt.tan(), 0.0, 0.4);
        frames.push(CameraFrame {
            timestamp: 0.1 * i as f64,
            cam_to_world: look_at(eye, Point3::new(x, 0.0, 0.0), Vector3::y()),
        });
        sites.push(SiteSpec {
            crack: i,
            fraction: 0.5,
            frame: i,
        });
    }
    SceneSpec {
        parts: vec![Part {
            shape: Shape::Plane {
                size_x: 1.58,
                size_y: 0.30,
            },
            pose: RigidPose::identity(),
        }],
        cracks,
        texture: Texture::Noise { seed, scale: 0.02 },
        spacing: 0.001,
        noise_sigma,
        seed,
        camera: close_up_camera(),
        extrinsic: default_extrinsic(),
        frames,
        sites,
    }
}

/// Half of a 150 mm-radius cylinder with fifteen cracks, alternately along
/// the axis and around the circumference.
pub fn cylinder_suite(seed: u64, noise_sigma: f64) -> SceneSpec {
    let radius = 0.15;
    let shape = Shape::Cylinder {
        radius,
        length: 0.6,
        arc: PI,
    };
    let widths = suite_widths();
    let mut cracks = Vec::new();
    let mut frames = Vec::new();
    let mut sites = Vec::new();
    for (k, &w) in widths.iter().enumerate() {
        let s = -0.16 + 0.08 * (k % 5) as f64;
        let y = -0.2 + 0.2 * (k / 5) as f64;
        let crack = if k % 2 == 0 {
            CrackSpec::straight(0, 0, (s, y - 0.03), (s, y + 0.03), w)
        } else {
            CrackSpec::straight(0, 0, (s - 0.03, y), (s + 0.03, y), w)
        };
        cracks.push(crack);
        let p = shape.point(0, s, y);
        let n = shape.normal(0, s, y);
        frames.push(CameraFrame {
            timestamp: 0.1 * k as f64,
            cam_to_world: look_at(p + 0.4 * n, p, Vector3::y()),
        });
        sites.push(SiteSpec {
            crack: k,
            fraction: 0.5,
            frame: k,
        });
    }
    SceneSpec {
        parts: vec![Part {
            shape,
            pose: RigidPose::identity(),
        }],
        cracks,
        texture: Texture::Noise { seed, scale: 0.02 },
        spacing: 0.001,
        noise_sigma,
        seed,
        camera: close_up_camera(),
        extrinsic: default_extrinsic(),
        frames,
        sites,
    }
}

fn orbit_frames(target: Point3, distance: f64, elevation_deg: f64, count: usize, phase_deg: f64) -> Vec<CameraFrame> {
    let el = elevation_deg.to_radians();
    (0..count)
        .map(|k| {
            let az = (phase_deg + 360.0 * k as f64 / count as f64).to_radians();
            let eye = target + distance * Vector3::new(el.cos() * az.cos(), el.cos() * az.sin(), el.sin());
            CameraFrame {
                timestamp: k as f64,
                cam_to_world: look_at(eye, target, Vector3::z()),
            }
        })
        .collect()
}

/// A textured cube and ball on a ground plane, seen from four directions.
/// The depth edges and texture give the calibration objective structure.
pub fn calibration_scene(seed: u64) -> SceneSpec {
    SceneSpec {
        parts: vec![
            Part {
                shape: Shape::Plane {
                    size_x: 1.2,
                    size_y: 1.2,
                },
                pose: RigidPose::identity(),
            },
            Part {
                shape: Shape::Box { size: [0.3, 0.3, 0.3] },
                pose: RigidPose::from_rotation_vector(Vector3::new(0.0, 0.0, 0.4), Vector3::new(-0.05, 0.0, 0.15)),
            },
            Part {
                shape: Shape::Sphere { radius: 0.12 },
                pose: RigidPose::from_rotation_vector(Vector3::zeros(), Vector3::new(0.3, 0.28, 0.12)),
            },
        ],
        cracks: Vec::new(),
        texture: Texture::Noise { seed, scale: 0.05 },
        spacing: 0.004,
        noise_sigma: 0.0,
        seed,
        camera: CameraModel::new(280.0, 280.0, 159.5, 119.5, 320, 240).expect("valid intrinsics"),
        extrinsic: default_extrinsic(),
        frames: orbit_frames(Point3::new(0.0, 0.0, 0.12), 1.1, 40.0, 4, 45.0),
        sites: Vec::new(),
    }
}

/// Three closed scenes for visibility checks: a ball, a box, and a box
/// partly hidden behind a ball.
pub fn closed_scenes(seed: u64) -> Vec<(&'static str, SceneSpec)> {
    let camera = CameraModel::new(300.0, 300.0, 159.5, 119.5, 320, 240).expect("valid intrinsics");
    let scene = |parts: Vec<Part>, spacing: f64, phase: f64| SceneSpec {
        parts,
        cracks: Vec::new(),
        texture: Texture::Constant(0.5),
        spacing,
        noise_sigma: 0.0,
        seed,
        camera,
        extrinsic: RigidPose::identity(),
        frames: orbit_frames(Point3::origin(), 1.2, 30.0, 3, phase),
        sites: Vec::new(),
    };
    let at = |x: f64, y: f64, z: f64| RigidPose::from_rotation_vector(Vector3::zeros(), Vector3::new(x, y, z));
    vec![
        (
            "ball",
            scene(
                vec![Part {
                    shape: Shape::Sphere { radius: 0.3 },
                    pose: RigidPose::identity(),
                }],
                0.004,
                10.0,
            ),
        ),
        (
            "box",
            scene(
                vec![Part {
                    shape: Shape::Box { size: [0.4, 0.3, 0.25] },
                    pose: RigidPose::from_rotation_vector(Vector3::new(0.1, 0.2, 0.3), Vector3::zeros()),
                }],
                0.003,
                25.0,
            ),
        ),
        (
            "box-behind-ball",
            scene(
                vec![
                    Part {
                        shape: Shape::Box { size: [0.25, 0.25, 0.25] },
                        pose: RigidPose::identity(),
                    },
                    Part {
                        shape: Shape::Sphere { radius: 0.1 },
                        pose: at(0.25, 0.2, 0.3),
                    },
                ],
                0.003,
                40.0,
            ),
        ),
    ]
}

/// A textured 600 × 400 mm plate with one tapering crack, seen by five
/// overlapping frames from 0.8 m. Used for fusion checks and as the default
/// `synth` scene.
pub fn plane_scene(seed: u64, noise_sigma: f64) -> SceneSpec {
    let offsets = [(0.0, 0.0), (-0.12, -0.08), (0.12, -0.08), (-0.12, 0.08), (0.12, 0.08)];
    let frames = offsets
        .iter()
        .enumerate()
        .map(|(k, &(x, y))| CameraFrame {
            timestamp: 0.5 * k as f64,
            cam_to_world: look_at(Point3::new(x, y, 0.8), Point3::new(x, y, 0.0), Vector3::y()),
        })
        .collect();
    SceneSpec {
        parts: vec![Part {
            shape: Shape::Plane {
                size_x: 0.6,
                size_y: 0.4,
            },
            pose: RigidPose::identity(),
        }],
        cracks: vec![CrackSpec {
            part: 0,
            face: 0,
            centerline: vec![(-0.2, -0.12), (0.0, 0.02), (0.18, 0.1)],
            widths: vec![0.006, 0.004, 0.003],
        }],
        texture: Texture::Noise { seed, scale: 0.25 },
        spacing: 0.002,
        noise_sigma,
        seed,
        camera: CameraModel::new(1000.0, 1000.0, 319.5, 239.5, 640, 480).expect("valid intrinsics"),
        extrinsic: default_extrinsic(),
        frames,
        sites: vec![
            SiteSpec {
                crack: 0,
                fraction: 0.25,
                frame: 1,
            },
            SiteSpec {
                crack: 0,
                fraction: 0.5,
                frame: 0,
            },
            SiteSpec {
                crack: 0,
                fraction: 0.8,
                frame: 4,
            },
        ],
    }
}
