//! End-to-end checks on a generated plane scene: file round trip, fusion
//! against the rendered ground truth, and mask refinement on true masks.

use crackmetry::fusion::{fuse_cloud, FusionConfig, FusionFrame};
use crackmetry::io::{load_point_cloud, save_point_cloud};
use crackmetry::mask::{refine_mask, IdentityRefiner, MaskParams};
use crackmetry::synth::{generate_scene, plane_scene, Scene};

fn frames(scene: &Scene) -> Vec<FusionFrame> {
    (0..scene.images.len())
        .map(|i| FusionFrame {
            frame_id: i as u32,
            image: scene.images[i].clone(),
            mask: Some(scene.masks[i].clone()),
            cam_to_world: scene.camera_pose(i),
        })
        .collect()
}

#[test]
fn fused_labels_and_colors_follow_truth() {
    let scene = generate_scene(&plane_scene(11, 0.0)).unwrap();
    let spec = &scene.truth.spec;
    let fused = fuse_cloud(&scene.cloud, &frames(&scene), &spec.camera, &FusionConfig::default()).unwrap();
    assert!(fused.colored_fraction() > 0.9, "colored {}", fused.colored_fraction());

    let labels = fused.cloud.label.as_ref().unwrap();
    let colors = fused.cloud.color.as_ref().unwrap();
    let (mut judged, mut label_ok, mut color_err) = (0usize, 0usize, 0.0);
    let mut crack_hits = 0usize;
    for i in (0..labels.len()).filter(|&i| fused.colored[i]) {
        judged += 1;
        label_ok += (labels[i] == scene.truth.labels[i]) as usize;
        crack_hits += (labels[i] == 1 && scene.truth.labels[i] == 1) as usize;
        let t = scene.truth.colors[i];
        color_err += (0..3).map(|c| (colors[i][c] as f64 - t[c] as f64).abs()).sum::<f64>() / 3.0;
    }
    let label_rate = label_ok as f64 / judged as f64;
    let mean_color_err = color_err / judged as f64;
    assert!(label_rate > 0.98, "label agreement {label_rate}");
    assert!(crack_hits > 0);
    assert!(mean_color_err < 12.0, "mean color error {mean_color_err}");
}

#[test]
fn scene_cloud_survives_ply_round_trip() {
    let scene = generate_scene(&plane_scene(2, 0.0005)).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("cloud.ply");
    save_point_cloud(&scene.cloud, &path).unwrap();
    let back = load_point_cloud(&path).unwrap().cloud;
    assert_eq!(back.len(), scene.cloud.len());
    for (a, b) in back.points.iter().zip(&scene.cloud.points) {
        assert!((a - b).norm() < 1e-9);
    }
    assert_eq!(back.intensity, scene.cloud.intensity);
}

#[test]
fn identity_refinement_keeps_true_masks() {
    let scene = generate_scene(&plane_scene(4, 0.0)).unwrap();
    for (image, mask) in scene.images.iter().zip(&scene.masks) {
        let out = refine_mask(image, mask, &IdentityRefiner, &MaskParams::default()).unwrap();
        assert_eq!(&out.mask, mask);
    }
}
