use super::*;
use crate::camera::nearest_pixel;

fn down_camera(h: f64) -> CameraFrame {
    CameraFrame {
        timestamp: 0.0,
        cam_to_world: look_at(Point3::new(0.0, 0.0, h), Point3::origin(), Vector3::y()),
    }
}

fn band_spec(width: f64, taper_to: f64) -> SceneSpec {
    SceneSpec {
        parts: vec![Part {
            shape: Shape::Plane {
                size_x: 0.2,
                size_y: 0.2,
            },
            pose: RigidPose::identity(),
        }],
        cracks: vec![CrackSpec {
            part: 0,
            face: 0,
            centerline: vec![(0.0, -0.1), (0.0, 0.1)],
            widths: vec![width, taper_to],
        }],
        texture: Texture::Noise { seed: 1, scale: 0.02 },
        spacing: 0.002,
        noise_sigma: 0.0,
        seed: 3,
        camera: CameraModel::new(2000.0, 2000.0, 159.5, 119.5, 320, 240).unwrap(),
        extrinsic: RigidPose::identity(),
        frames: vec![down_camera(0.5)],
        sites: Vec::new(),
    }
}

#[test]
fn unit_plane_grid_count() {
    let spec = SceneSpec {
        parts: vec![Part {
            shape: Shape::Plane {
                size_x: 1.0,
                size_y: 1.0,
            },
            pose: RigidPose::identity(),
        }],
        cracks: Vec::new(),
        texture: Texture::Constant(0.5),
        spacing: 0.001,
        noise_sigma: 0.0,
        seed: 0,
        camera: CameraModel::new(100.0, 100.0, 50.0, 50.0, 100, 100).unwrap(),
        extrinsic: RigidPose::identity(),
        frames: Vec::new(),
        sites: Vec::new(),
    };
    let scene = generate_scene(&spec).unwrap();
    assert_eq!(scene.cloud.len(), 1_002_001);
    assert!(scene.cloud.points.iter().all(|p| p.z == 0.0));
}

#[test]
fn band_width_in_pixels_follows_pinhole_model() {
    let spec = band_spec(0.001, 0.001);
    let scene = generate_scene(&spec).unwrap();
    let mask = &scene.masks[0];
    let expected = spec.camera.fx * 0.001 / 0.5;
    for v in [20, 120, 200] {
        let n = (0..320).filter(|&u| mask.get(u, v)).count() as f64;
        assert!((n - expected).abs() <= 1.0, "row {v}: {n} vs {expected}");
    }
}

#[test]
fn same_seed_same_bytes() {
    let a = generate_scene(&plane_scene(4, 0.0005)).unwrap();
    let b = generate_scene(&plane_scene(4, 0.0005)).unwrap();
    assert_eq!(a.cloud, b.cloud);
    assert_eq!(a.images, b.images);
    assert_eq!(a.masks, b.masks);
    assert_eq!(a.truth.sites, b.truth.sites);
    let c = generate_scene(&plane_scene(5, 0.0005)).unwrap();
    assert_ne!(a.cloud.points, c.cloud.points);
}

#[test]
fn width_lookup() {
    let constant = generate_scene(&band_spec(0.002, 0.002)).unwrap();
    assert_eq!(constant.truth.width_at(0, 160, 30).unwrap(), 0.002);
    assert_eq!(constant.truth.width_at(0, 160, 200).unwrap(), 0.002);
    assert_eq!(
        constant.truth.width_at(0, 10, 10),
        Err(SynthError::NotOnCrack { frame: 0, u: 10, v: 10 })
    );

    // 4 mm at y = −0.1 tapering to 2 mm at y = 0.1; image rows run along −y
    let taper = generate_scene(&band_spec(0.004, 0.002)).unwrap();
    for v in [40u32, 120, 220] {
        let y = -(v as f64 - 119.5) / 2000.0 * 0.5;
        let expected = 0.004 + (y + 0.1) / 0.2 * (0.002 - 0.004);
        let got = taper.truth.width_at(0, 160, v).unwrap();
        assert!((got - expected).abs() < 1e-12, "{got} vs {expected}");
    }
}

#[test]
fn labels_project_into_mask() {
    let scene = generate_scene(&plane_scene(2, 0.0)).unwrap();
    let spec = &scene.truth.spec;
    let labeled: Vec<usize> = (0..scene.cloud.len()).filter(|&i| scene.truth.labels[i] == 1).collect();
    assert!(labeled.len() > 100);
    for frame in 0..spec.frames.len() {
        let to_cam = spec.frames[frame].cam_to_world.inverse();
        let mask = &scene.masks[frame];
        for &i in &labeled {
            let (u, v) = spec.camera.project(&to_cam.transform_point(&scene.cloud.points[i])).unwrap();
            let Some((x, y)) = nearest_pixel(u, v, spec.camera.width, spec.camera.height) else {
                continue;
            };
            // allow the one-pixel boundary band
            let near = (-1i64..=1).any(|dy| (-1i64..=1).any(|dx| mask.get_signed(x as i64 + dx, y as i64 + dy)));
            assert!(near, "point {i} frame {frame}");
        }
    }
}

#[test]
fn suite_sites_sit_on_their_cracks() {
    for spec in [slab_suite(1, 0.0), cylinder_suite(1, 0.0)] {
        let mut light = spec.clone();
        light.spacing = 0.01;
        let scene = generate_scene(&light).unwrap();
        assert_eq!(scene.truth.sites.len(), 15);
        for (k, site) in scene.truth.sites.iter().enumerate() {
            assert_eq!(site.width, suite_widths()[k]);
            let (u, v) = site.pixel;
            assert!(scene.masks[site.frame_id as usize].get(u, v));
            let w = scene.truth.width_at(site.frame_id as usize, u, v).unwrap();
            assert!((w - site.width).abs() < 1e-12);
        }
        let traj = &scene.trajectory;
        assert_eq!(traj.len(), 15);
        // camera pose = LiDAR pose composed with the inverse extrinsic
        let cam = traj.entries()[3].compose(&light.extrinsic.inverse());
        assert!((cam.translation - light.frames[3].cam_to_world.translation).norm() < 1e-12);
    }
}

#[test]
fn invalid_specs_are_rejected() {
    let mut s = band_spec(0.001, 0.001);
    s.cracks[0].widths[1] = 0.0;
    assert!(matches!(generate_scene(&s), Err(SynthError::InvalidSpec(_))));
    let mut s = band_spec(0.001, 0.001);
    s.frames.push(down_camera(0.4));
    assert!(matches!(generate_scene(&s), Err(SynthError::InvalidSpec(_))));
}
