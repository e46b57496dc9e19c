//! File-level commands that do not need a pipeline config: scene synthesis,
//! single-mask refinement, cloud denoising, evaluation, and a mock external
//! refiner for exercising the child-process protocol.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use crackmetry::io::{encode_pgm, load_image, load_mask, load_mask_paired, load_point_cloud, save_mask, save_point_cloud};
use crackmetry::mask::{decode_request, refine_mask, refiner_by_name, MaskParams, RefinedMask};
use crackmetry::metrics::{miou, point_surface_density_indexed, surface_roughness_indexed};
use crackmetry::spatial::NeighborIndex;
use crackmetry::synth::{calibration_scene, cylinder_suite, generate_scene, plane_scene, slab_suite, SceneSpec};
use crackmetry::{BinaryMask, RigidPose};
use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::config::{MlsParams, SorParams};
use crate::pipeline::{denoise, Denoised};
use crate::report::MetricsReport;
use crate::scene::{write_scene, SceneWriteOptions};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Preset {
    /// Plate with one tapering crack and five overlapping frames.
    Plane,
    /// Flat slab with fifteen cracks of 0.2–1.7 mm, one frame each.
    Slab,
    /// Half cylinder of 150 mm radius with fifteen cracks.
    Cylinder,
    /// Textured objects for extrinsic calibration, with a perturbed
    /// starting extrinsic.
    Calibration,
}

/// Synthetic scene settings; also readable from a TOML file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthConfig {
    pub preset: Preset,
    #[serde(default = "default_seed")]
    pub seed: u64,
    /// Isotropic point noise, meters. Defaults to 0.5 mm, or none for the
    /// calibration preset.
    #[serde(default)]
    pub noise: Option<f64>,
    /// Cloud sample spacing override, meters.
    #[serde(default)]
    pub spacing: Option<f64>,
}

fn default_seed() -> u64 {
    7
}

impl SynthConfig {
    pub fn spec(&self) -> SceneSpec {
        let noise = self.noise.unwrap_or(match self.preset {
            Preset::Calibration => 0.0,
            _ => 0.0005,
        });
        let mut spec = match self.preset {
            Preset::Plane => plane_scene(self.seed, noise),
            Preset::Slab => slab_suite(self.seed, noise),
            Preset::Cylinder => cylinder_suite(self.seed, noise),
            Preset::Calibration => {
                let mut s = calibration_scene(self.seed);
                s.noise_sigma = noise;
                s
            }
        };
        if let Some(s) = self.spacing {
            spec.spacing = s;
        }
        spec
    }
}

/// 1° rotation and 1 cm translation, spread evenly over the three axes.
pub fn calibration_perturbation() -> RigidPose {
    let r = 1f64.to_radians() / 3f64.sqrt();
    let t = 0.01 / 3f64.sqrt();
    RigidPose::from_rotation_vector(Vector3::new(r, -r, r), Vector3::new(t, t, -t))
}

/// Generates a scene and writes it as a pipeline-ready directory.
pub fn synthesize(cfg: &SynthConfig, dir: &Path) -> Result<crackmetry::synth::Scene> {
    let spec = cfg.spec();
    let scene = generate_scene(&spec)?;
    let calibrate = cfg.preset == Preset::Calibration;
    let opts = SceneWriteOptions {
        initial_extrinsic: calibrate.then(|| calibration_perturbation().compose(&spec.extrinsic)),
        calibrate,
    };
    write_scene(&scene, dir, &opts)?;
    log::info!(
        "wrote {} points, {} frames, {} seeds to {}",
        scene.cloud.len(),
        scene.images.len(),
        scene.truth.sites.len(),
        dir.display()
    );
    Ok(scene)
}

pub fn refine_mask_file(image: &Path, mask: &Path, refiner: &str, params: &MaskParams, out: &Path) -> Result<RefinedMask> {
    let image = load_image(image)?;
    let base = load_mask_paired(mask, image.dims())?;
    let refiner = refiner_by_name(refiner)?;
    let refined = refine_mask(&image, &base, refiner.as_ref(), params)?;
    for (rect, outcome) in &refined.crops {
        log::info!("crop {}x{} at ({}, {}): {outcome:?}", rect.w, rect.h, rect.u0, rect.v0);
    }
    save_mask(&refined.mask, out)?;
    Ok(refined)
}

pub fn denoise_file(input: &Path, output: &Path, sor: &SorParams, mls: &MlsParams) -> Result<Denoised> {
    let cloud = load_point_cloud(input)?.cloud;
    let d = denoise(&cloud, sor, mls)?;
    if let Some(n) = d.sor_removed {
        log::info!("removed {n} points");
    }
    save_point_cloud(&d.cloud, output)?;
    Ok(d)
}

/// mIoU per `(prediction, ground truth)` pair and their mean, plus density
/// and roughness for each cloud.
pub fn evaluate(pairs: &[(PathBuf, PathBuf)], clouds: &[PathBuf], radius: f64) -> Result<MetricsReport> {
    let mut report = MetricsReport::default();
    let mut values = Vec::new();
    for (i, (pred, gt)) in pairs.iter().enumerate() {
        let p = load_mask(pred)?;
        let g = load_mask(gt)?;
        let v = miou(&p, &g).with_context(|| format!("{} vs {}", pred.display(), gt.display()))?;
        report.float(&format!("miou.pair_{i:03}"), v);
        values.push(v);
    }
    if !values.is_empty() {
        report.float("miou", values.iter().sum::<f64>() / values.len() as f64);
    }
    for (i, path) in clouds.iter().enumerate() {
        let cloud = load_point_cloud(path)?.cloud;
        let index = NeighborIndex::new(cloud.points);
        let density = point_surface_density_indexed(&index, radius);
        let rough = surface_roughness_indexed(&index, radius);
        let tag = format!("cloud_{i:03}");
        report.int(&format!("{tag}.points"), index.len());
        report.float(&format!("{tag}.density.mean"), density.mean);
        report.float(&format!("{tag}.density.std"), density.std_dev);
        report.float(&format!("{tag}.roughness.mean_mm"), rough.stats.mean * 1000.0);
        report.float(&format!("{tag}.roughness.std_mm"), rough.stats.std_dev * 1000.0);
    }
    Ok(report)
}

/// Pairs prediction and ground-truth paths. Two directories pair up by
/// file name.
pub fn pair_masks(pred: &Path, gt: &Path) -> Result<Vec<(PathBuf, PathBuf)>> {
    if pred.is_dir() != gt.is_dir() {
        bail!("--pred and --gt must both be files or both be directories");
    }
    if !pred.is_dir() {
        return Ok(vec![(pred.to_path_buf(), gt.to_path_buf())]);
    }
    let mut names: Vec<_> = std::fs::read_dir(pred)
        .with_context(|| pred.display().to_string())?
        .filter_map(|e| e.ok())
        .filter(|e| e.path().is_file())
        .map(|e| e.file_name())
        .collect();
    names.sort();
    let pairs: Vec<_> = names
        .into_iter()
        .filter(|n| gt.join(n).is_file())
        .map(|n| (pred.join(&n), gt.join(&n)))
        .collect();
    if pairs.is_empty() {
        bail!("no mask file names shared by {} and {}", pred.display(), gt.display());
    }
    Ok(pairs)
}

/// Answers one external-refiner request. Modes: `flood` (whole crop),
/// `empty`, and `disks:<r>` (a disk of radius `r` around every prompt).
pub fn mock_refine(mode: &str, request: &[u8]) -> Result<Vec<u8>> {
    let (image, prompts) = decode_request(request)?;
    let (w, h) = image.dims();
    let mask = match mode.split_once(':') {
        None if mode == "flood" => BinaryMask::from_fn(w, h, |_, _| true),
        None if mode == "empty" => BinaryMask::new(w, h),
        Some(("disks", r)) => {
            let r: i64 = r.parse().with_context(|| format!("bad radius in `{mode}`"))?;
            BinaryMask::from_fn(w, h, |x, y| {
                prompts.iter().any(|&(u, v)| {
                    let (dx, dy) = (x as i64 - u as i64, y as i64 - v as i64);
                    dx * dx + dy * dy <= r * r
                })
            })
        }
        _ => bail!("unknown mock refiner mode `{mode}`"),
    };
    Ok(encode_pgm(&mask.to_image()))
}
