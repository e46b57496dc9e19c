use super::*;
use nalgebra::UnitQuaternion;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

fn line_skeleton(w: u32, h: u32, f: impl Fn(u32, u32) -> bool) -> BinaryMask {
    BinaryMask::from_fn(w, h, f)
}

#[test]
fn horizontal_direction() {
    let s = line_skeleton(60, 40, |_, y| y == 20);
    let d = skeleton_direction(&s, (30, 20), 15, 1.0).unwrap();
    assert!((d.x - 1.0).abs() < 1e-3 && d.y.abs() < 1e-3, "{d:?}");
}

#[test]
fn diagonal_direction() {
    let s = line_skeleton(60, 60, |x, y| x == y);
    let d = skeleton_direction(&s, (30, 30), 15, 1.0).unwrap();
    let h = std::f64::consts::FRAC_1_SQRT_2;
    assert!((d.x - h).abs() < 2e-2 && (d.y - h).abs() < 2e-2, "{d:?}");
    let s = line_skeleton(60, 60, |x, y| x + y == 59);
    let d = skeleton_direction(&s, (30, 29), 15, 1.0).unwrap();
    assert!((d.x - h).abs() < 2e-2 && (d.y + h).abs() < 2e-2, "{d:?}");
}

#[test]
fn rasterized_line_angles() {
    // Bresenham-style lines at assorted angles
    for deg in [10.0f64, 25.0, 60.0, 80.0, 120.0, 160.0] {
        let t = deg.to_radians();
        let (c, s) = (t.cos(), t.sin());
        let skel = BinaryMask::from_fn(101, 101, |x, y| {
            let (dx, dy) = (x as f64 - 50.0, y as f64 - 50.0);
            // distance to the line through the center
            let dist = (-s * dx + c * dy).abs();
            let on_line = if c.abs() >= s.abs() {
                (dy - dx * s / c).abs() < 0.5 + 1e-9
            } else {
                (dx - dy * c / s).abs() < 0.5 + 1e-9
            };
            on_line && dist < 2.0
        });
        let d = skeleton_direction(&skel, (50, 50), 21, 1.0).unwrap();
        let angle = d.y.atan2(d.x);
        let expected = if c < 0.0 { t - std::f64::consts::PI } else { t };
        // staircase rasterization biases off-axis lines by a few hundredths
        assert!((angle - expected).abs() < 5e-2, "{deg}: {angle} vs {expected}");
    }
}

#[test]
fn seed_off_skeleton() {
    let s = line_skeleton(60, 40, |_, y| y == 20);
    assert!(matches!(
        skeleton_direction(&s, (30, 30), 15, 1.0),
        Err(MetrologyError::SeedOffSkeleton)
    ));
    assert!(skeleton_direction(&s, (30, 22), 15, 1.0).is_ok());
    assert!(skeleton_direction(&BinaryMask::new(10, 10), (5, 5), 15, 1.0).is_err());
}

#[test]
fn band_edges() {
    let m = BinaryMask::from_fn(40, 30, |x, _| (18..23).contains(&x));
    let (l, r) = trace_edges(&m, (20, 15), &Vector2::new(0.0, 1.0)).unwrap();
    // left = (−dy, dx) = (−1, 0)
    assert!((l.0 - 17.5).abs() < 0.5 && (l.1 - 15.0).abs() < 1e-12, "{l:?}");
    assert!((r.0 - 22.5).abs() < 0.5, "{r:?}");
    assert!((r.0 - l.0 - 5.0).abs() < 1e-12);
}

#[test]
fn edge_errors() {
    let m = BinaryMask::from_fn(40, 30, |x, _| (18..23).contains(&x));
    assert!(matches!(
        trace_edges(&m, (5, 5), &Vector2::new(0.0, 1.0)),
        Err(MetrologyError::SeedOutsideMask)
    ));
    let touching = BinaryMask::from_fn(40, 30, |x, _| x < 10);
    assert!(matches!(
        trace_edges(&touching, (5, 5), &Vector2::new(0.0, 1.0)),
        Err(MetrologyError::OpenBoundary)
    ));
}

#[test]
fn exact_plane_fit() {
    let pts: Vec<Point3> = (0..100)
        .map(|i| Point3::new((i % 10) as f64 * 0.01, (i / 10) as f64 * 0.01, 1.0))
        .collect();
    let index = NeighborIndex::new(pts);
    let p = fit_local_plane(&index, &Point3::origin(), &Vector3::new(0.05, 0.05, 1.0), 60).unwrap();
    assert!((p.a).abs() < 1e-12 && p.b.abs() < 1e-12 && (p.c - 1.0).abs() < 1e-12);
    assert!((p.d + 1.0).abs() < 1e-12);
    assert!(p.rms < 1e-12);
    assert_eq!(p.support, 60);
}

#[test]
fn noisy_plane_normal_within_one_degree() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let noise = Normal::new(0.0, 0.001).unwrap();
    let truth = Vector3::new(0.2, -0.3, 1.0).normalize();
    let rot = UnitQuaternion::rotation_between(&Vector3::z(), &truth).unwrap();
    let pts: Vec<Point3> = (0..40_000)
        .map(|i| {
            let local = Vector3::new(
                (i % 200) as f64 * 0.01 - 1.0,
                (i / 200) as f64 * 0.01 - 1.0,
                noise.sample(&mut rng),
            );
            Point3::from(rot * local + Vector3::new(0.0, 0.0, 2.0))
        })
        .collect();
    let index = NeighborIndex::new(pts);
    let p = fit_local_plane(&index, &Point3::origin(), &Vector3::z(), 60).unwrap();
    let angle = p.normal().angle(&truth).min(p.normal().angle(&-truth));
    assert!(angle < 1f64.to_radians(), "{}", angle.to_degrees());
}

#[test]
fn ray_miss_and_degenerate() {
    let pts: Vec<Point3> = (0..100)
        .map(|i| Point3::new((i % 10) as f64 * 0.01, (i / 10) as f64 * 0.01, 1.0))
        .collect();
    let index = NeighborIndex::new(pts);
    assert!(matches!(
        fit_local_plane(&index, &Point3::origin(), &Vector3::new(0.0, 0.0, -1.0), 60),
        Err(MetrologyError::RayMiss)
    ));
    let line = NeighborIndex::new((0..20).map(|i| Point3::new(i as f64 * 0.01, 0.0, 1.0)).collect());
    assert!(matches!(
        fit_local_plane(&line, &Point3::origin(), &Vector3::z(), 60),
        Err(MetrologyError::DegenerateNeighborhood)
    ));
}

fn plane(a: f64, b: f64, c: f64, d: f64) -> LocalPlane {
    let n = (a * a + b * b + c * c).sqrt();
    LocalPlane {
        a: a / n,
        b: b / n,
        c: c / n,
        d: d / n,
        rms: 0.0,
        support: 0,
    }
}

#[test]
fn plane_sampling() {
    let s = sample_plane_points(&plane(0.0, 0.0, 1.0, 0.0), &Point3::origin(), 1.0, 1.0).unwrap();
    assert_eq!(s.len(), 9);
    assert!(s.points.iter().all(|p| p.z == 0.0));
    let p = plane(1.0, 1.0, 1.0, -3.0);
    let s = sample_plane_points(&p, &Point3::new(1.0, 1.0, 1.0), 0.5, 0.1).unwrap();
    assert_eq!(s.len(), 121);
    for q in &s.points {
        assert!((q.z - (3.0 - q.x - q.y)).abs() < 1e-12);
        assert!(p.signed_distance(q).abs() < 1e-12);
    }
    assert!(matches!(
        sample_plane_points(&plane(1.0, 0.0, 0.0, -1.0), &Point3::origin(), 1.0, 0.5),
        Err(MetrologyError::VerticalPlane)
    ));
}

#[test]
fn vertical_plane_sampled_in_rotated_frame() {
    for p in [plane(1.0, 0.0, 0.0, -2.0), plane(0.1, -1.0, 0.0, 0.5), plane(0.3, 0.2, 1.0, 0.1)] {
        let center = Point3::from(-p.d * p.normal());
        let s = sample_plane_points_any(&p, &center, 0.01, 0.001).unwrap();
        assert_eq!(s.len(), 441);
        assert!(s.points.iter().all(|q| p.signed_distance(q).abs() < 1e-12));
        assert!(s.points.iter().any(|q| (q - center).norm() < 1e-12));
    }
}

#[test]
fn edge_search_is_exact_argmin() {
    let cam = CameraModel::new(800.0, 800.0, 320.0, 240.0, 640, 480).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let pose = RigidPose::from_rotation_vector(Vector3::new(0.05, -0.02, 0.1), Vector3::new(0.1, 0.0, 0.3));
    let samples: Vec<Point3> = (0..2000)
        .map(|_| Point3::new(rng.random_range(-0.5..0.5), rng.random_range(-0.5..0.5), rng.random_range(0.5..3.0)))
        .collect();
    // exact hit
    let (u, v) = cam.project(&pose.transform_point(&samples[77])).unwrap();
    let (best, err) = find_3d_edge(&samples, (u, v), &cam, &pose).unwrap();
    assert_eq!(best, samples[77]);
    assert_eq!(err, 0.0);
    for _ in 0..20 {
        let target = (rng.random_range(0.0..640.0), rng.random_range(0.0..480.0));
        let (_, err) = find_3d_edge(&samples, target, &cam, &pose).unwrap();
        for p in &samples {
            if let Ok((u, v)) = cam.project(&pose.transform_point(p)) {
                let e = ((u - target.0).powi(2) + (v - target.1).powi(2)).sqrt();
                assert!(e >= err);
            }
        }
    }
    let behind: Vec<Point3> = samples.iter().map(|p| Point3::new(p.x, p.y, -p.z)).collect();
    assert!(matches!(
        find_3d_edge(&behind, (0.0, 0.0), &cam, &RigidPose::identity()),
        Err(MetrologyError::NoProjectableSamples)
    ));
}

#[test]
fn error_stats() {
    assert_eq!(compute_error_stats(&[(1.0, 1.0)]).unwrap(), (0.0, 0.0));
    let (mae, mre) = compute_error_stats(&[(0.66, 0.67)]).unwrap();
    assert!((mae - 0.01).abs() < 1e-12);
    assert!((mre - 1.49).abs() < 0.005);
    assert!(matches!(compute_error_stats(&[]), Err(MetrologyError::EmptyInput)));
    assert!(matches!(
        compute_error_stats(&[(1.0, 0.0)]),
        Err(MetrologyError::NonPositiveReference)
    ));
}

/// Flat slab at z = 0 facing a camera at height `h` with a straight crack
/// of `width` meters along the world y axis.
fn slab_measure(h: f64, width: f64, world: &RigidPose) -> CrackMeasurement {
    let pts: Vec<Point3> = (0..201 * 201)
        .map(|i| {
            let p = Point3::new((i % 201) as f64 * 0.001 - 0.1, (i / 201) as f64 * 0.001 - 0.1, 0.0);
            world.transform_point(&p)
        })
        .collect();
    let index = NeighborIndex::new(pts);
    let cam = CameraModel::new(4000.0, 4000.0, 160.0, 120.0, 320, 240).unwrap();
    // camera looks down −z from (0, 0, h): camera z = −world z
    let cam_to_slab = RigidPose::new(
        UnitQuaternion::from_axis_angle(&Vector3::x_axis(), std::f64::consts::PI),
        Vector3::new(0.0, 0.0, h),
    );
    let world_to_cam = world.compose(&cam_to_slab).inverse();
    // mask: pixels whose ray hits |x| <= width/2 on the slab
    let mask = BinaryMask::from_fn(320, 240, |u, _| {
        let x = (u as f64 - 160.0) / 4000.0 * h;
        // offset keeps the crack boundary off pixel centers
        (x - 3e-5).abs() <= width / 2.0
    });
    let skeleton = crate::mask::extract_skeleton(&mask);
    let seed = skeleton.foreground().find(|&(_, v)| v == 120).unwrap();
    let ctx = MeasureContext {
        cloud: &index,
        mask: &mask,
        skeleton: &skeleton,
        cam: &cam,
        world_to_cam: &world_to_cam,
        frame_id: 0,
    };
    measure_crack(&ctx, 1, seed, &MeasureParams::default()).unwrap()
}

#[test]
fn slab_width_and_view_invariance() {
    let m = slab_measure(0.4, 0.001, &RigidPose::identity());
    assert!((m.width - 0.001).abs() < 1e-4, "{}", m.width);
    assert!(((m.edge_left_3d - m.edge_right_3d).norm() - m.width).abs() == 0.0);
    for p in [m.edge_left_3d, m.edge_right_3d] {
        assert!(m.plane.signed_distance(&p).abs() < m.plane.rms + 1e-6);
    }
    let far = slab_measure(0.5, 0.001, &RigidPose::identity());
    assert!((far.width - m.width).abs() < 5e-5, "{} vs {}", far.width, m.width);
}

#[test]
fn width_invariant_under_rigid_motion() {
    let base = slab_measure(0.4, 0.0008, &RigidPose::identity());
    let g = RigidPose::from_rotation_vector(Vector3::new(0.3, -1.1, 0.7), Vector3::new(12.0, -3.0, 40.0));
    let moved = slab_measure(0.4, 0.0008, &g);
    assert!((moved.width - base.width).abs() < 1e-9, "{} vs {}", moved.width, base.width);
}

