//! Stage-sequential batch pipeline: calibrate, refine masks, denoise, fuse,
//! measure, evaluate. Every run writes a JSON manifest describing its
//! inputs, parameters and per-stage timings.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{anyhow, Context, Result};
use crackmetry::calib::{refine_extrinsic, CalibFrame, CalibResult};
use crackmetry::denoise::{mls_smooth_indexed, sor_filter};
use crackmetry::fusion::{fuse_cloud, FusedCloud, FusionFrame};
use crackmetry::io::{load_image, load_mask_paired, load_point_cloud, load_trajectory, save_mask, save_point_cloud, write_measurement_report};
use crackmetry::mask::{extract_skeleton, refine_mask, refiner_by_name, CropOutcome};
use crackmetry::metrics::{miou, point_surface_density_indexed, surface_roughness_indexed};
use crackmetry::metrology::{compute_error_stats, measure_crack, snap_to_skeleton, CrackMeasurement, MeasureContext};
use crackmetry::spatial::NeighborIndex;
use crackmetry::{BinaryMask, CameraModel, PointCloud, RasterImage, RigidPose, Trajectory};
use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Value};

use crate::config::{MlsParams, PipelineConfig, ResolvedInputs, SorParams};
use crate::report::MetricsReport;
use crate::scene::{load_extrinsic, load_reference, load_seeds, save_extrinsic, FrameEntry, FramesFile, Seed};
use crate::{CliError, Stage};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const FUSED_FILE: &str = "fused.ply";
pub const MEASUREMENTS_FILE: &str = "measurements.csv";
pub const METRICS_FILE: &str = "metrics.txt";
pub const EXTRINSIC_FILE: &str = "extrinsic.txt";

/// Which stages a run executes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Plan {
    pub calibrate: bool,
    pub refine_masks: bool,
    pub denoise: bool,
    pub fuse: bool,
    pub measure: bool,
    pub eval: bool,
}

impl Plan {
    /// Everything the config enables.
    pub fn from_config(cfg: &PipelineConfig) -> Self {
        Self {
            calibrate: cfg.calibration.enabled,
            refine_masks: cfg.masks.refine,
            denoise: cfg.sor.enabled || cfg.mls.enabled,
            fuse: true,
            measure: cfg.inputs.seeds.is_some(),
            eval: true,
        }
    }

    pub fn none() -> Self {
        Self {
            calibrate: false,
            refine_masks: false,
            denoise: false,
            fuse: false,
            measure: false,
            eval: false,
        }
    }
}

/// One image with its pose and masks, as the stages consume it.
#[derive(Debug, Clone)]
pub struct LoadedFrame {
    pub entry: FrameEntry,
    pub image: RasterImage,
    pub mask: Option<BinaryMask>,
    pub truth_mask: Option<BinaryMask>,
    /// LiDAR→world at the capture time.
    pub lidar_pose: RigidPose,
}

#[derive(Debug, Clone)]
pub struct LoadedInputs {
    pub cloud: PointCloud,
    pub trajectory: Trajectory,
    pub camera: CameraModel,
    pub frames: Vec<LoadedFrame>,
    /// LiDAR→camera.
    pub extrinsic: RigidPose,
    pub seeds: Vec<Seed>,
    pub reference: Option<BTreeMap<(u32, u32), f64>>,
}

impl LoadedInputs {
    /// Camera→world pose of every frame for a LiDAR→camera extrinsic.
    pub fn camera_poses(&self, extrinsic: &RigidPose) -> Vec<RigidPose> {
        let inv = extrinsic.inverse();
        self.frames.iter().map(|f| f.lidar_pose.compose(&inv)).collect()
    }
}

fn load_frames_file(path: &Path) -> Result<FramesFile, CliError> {
    FramesFile::load(path).map_err(|e| CliError::Config(format!("{e:#}")))
}

/// Loads every input named by a validated config.
pub fn load_inputs(inputs: &ResolvedInputs) -> Result<LoadedInputs> {
    let loaded = load_point_cloud(&inputs.cloud)?;
    let trajectory = load_trajectory(&inputs.trajectory)?;
    let frames_file = FramesFile::load(&inputs.frames)?;
    let camera = frames_file.camera.to_camera()?;
    let extrinsic = load_extrinsic(&inputs.extrinsic)?;
    let frames = frames_file
        .frames
        .par_iter()
        .map(|entry| -> Result<LoadedFrame> {
            let image = load_image(&entry.image)?;
            anyhow::ensure!(
                image.dims() == (camera.width, camera.height),
                "{}: image is {:?}, camera is {}x{}",
                entry.image.display(),
                image.dims(),
                camera.width,
                camera.height
            );
            let mask = entry.mask.as_ref().map(|p| load_mask_paired(p, image.dims())).transpose()?;
            let truth_mask = entry.truth_mask.as_ref().map(|p| load_mask_paired(p, image.dims())).transpose()?;
            let lidar_pose = trajectory
                .interpolate(entry.timestamp)
                .with_context(|| format!("frame {} at t = {}", entry.id, entry.timestamp))?;
            Ok(LoadedFrame {
                entry: entry.clone(),
                image,
                mask,
                truth_mask,
                lidar_pose,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let seeds = inputs.seeds.as_deref().map(load_seeds).transpose()?.unwrap_or_default();
    let reference = inputs.reference.as_deref().map(load_reference).transpose()?;
    Ok(LoadedInputs {
        cloud: loaded.cloud,
        trajectory,
        camera,
        frames,
        extrinsic,
        seeds,
        reference,
    })
}

pub fn calibrate(data: &LoadedInputs, cfg: &PipelineConfig) -> Result<CalibResult> {
    let frames: Vec<CalibFrame> = data
        .frames
        .iter()
        .map(|f| CalibFrame {
            image: f.image.clone(),
            lidar_pose: f.lidar_pose,
        })
        .collect();
    Ok(refine_extrinsic(&data.cloud, &frames, &data.camera, &data.extrinsic, &cfg.calibration.to_core())?)
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct MaskRefinement {
    pub accepted: usize,
    pub rejected: usize,
    pub failed: usize,
}

/// Refines every frame mask in place.
pub fn refine_masks(frames: &mut [LoadedFrame], cfg: &PipelineConfig) -> Result<MaskRefinement> {
    let refiner = refiner_by_name(&cfg.masks.refiner)?;
    let params = cfg.masks.to_core();
    let mut tally = MaskRefinement::default();
    for f in frames.iter_mut() {
        let Some(base) = &f.mask else { continue };
        let refined = refine_mask(&f.image, base, refiner.as_ref(), &params)
            .with_context(|| format!("frame {}", f.entry.id))?;
        for (_, outcome) in &refined.crops {
            match outcome {
                CropOutcome::Accepted(_) => tally.accepted += 1,
                CropOutcome::Rejected(v) => {
                    log::warn!(
                        "frame {}: crop rejected (holes {}, size ratio {:.2})",
                        f.entry.id,
                        v.hole_count,
                        v.size_ratio
                    );
                    tally.rejected += 1
                }
                CropOutcome::Failed(msg) => {
                    log::warn!("frame {}: refiner failed: {msg}", f.entry.id);
                    tally.failed += 1
                }
            }
        }
        f.mask = Some(refined.mask);
    }
    Ok(tally)
}

#[derive(Debug, Clone)]
pub struct Denoised {
    pub cloud: PointCloud,
    pub sor_removed: Option<usize>,
    pub mls_radius: Option<f64>,
    pub mls_fallbacks: usize,
    pub mean_displacement: f64,
}

pub fn denoise(cloud: &PointCloud, sor_params: &SorParams, mls_params: &MlsParams) -> Result<Denoised> {
    let mut out = Denoised {
        cloud: cloud.clone(),
        sor_removed: None,
        mls_radius: None,
        mls_fallbacks: 0,
        mean_displacement: 0.0,
    };
    if sor_params.enabled {
        let sor = sor_filter(cloud, sor_params.k, sor_params.n_sigma)?;
        log::info!(
            "SOR removed {} of {} points (threshold {:.6} m)",
            sor.removed.len(),
            cloud.len(),
            sor.threshold
        );
        out.sor_removed = Some(sor.removed.len());
        out.cloud = sor.kept;
    }
    if mls_params.enabled {
        let index = NeighborIndex::new(out.cloud.points.clone());
        let mls_cfg = mls_params.for_index(&index);
        mls_cfg.validate()?;
        let mls = mls_smooth_indexed(&out.cloud, &index, &mls_cfg);
        log::info!(
            "MLS radius {:.6} m moved points {:.6} m on average, {} fallbacks",
            mls_cfg.search_radius,
            mls.mean_displacement,
            mls.fallbacks
        );
        out.mls_radius = Some(mls_cfg.search_radius);
        out.mls_fallbacks = mls.fallbacks;
        out.mean_displacement = mls.mean_displacement;
        out.cloud = mls.cloud;
    }
    Ok(out)
}

pub fn fuse(cloud: &PointCloud, data: &LoadedInputs, cam_poses: &[RigidPose], cfg: &PipelineConfig) -> Result<FusedCloud> {
    let frames: Vec<FusionFrame> = data
        .frames
        .iter()
        .zip(cam_poses)
        .map(|(f, pose)| FusionFrame {
            frame_id: f.entry.id,
            image: f.image.clone(),
            mask: f.mask.clone(),
            cam_to_world: *pose,
        })
        .collect();
    Ok(fuse_cloud(cloud, &frames, &data.camera, &cfg.fusion.to_core())?)
}

#[derive(Debug, Clone, Default)]
pub struct Measured {
    pub measurements: Vec<CrackMeasurement>,
    pub skipped: Vec<(Seed, String)>,
    /// `(measured, reference)` widths in millimeters.
    pub pairs: Vec<(f64, f64)>,
}

/// Measures every seed. Seeds that cannot be measured are logged and
/// skipped rather than failing the stage.
pub fn measure(index: &NeighborIndex, data: &LoadedInputs, cam_poses: &[RigidPose], cfg: &PipelineConfig) -> Measured {
    let params = cfg.metrology.to_core();
    let by_id: BTreeMap<u32, usize> = data.frames.iter().enumerate().map(|(i, f)| (f.entry.id, i)).collect();
    let wanted: Vec<usize> = {
        let mut v: Vec<usize> = data.seeds.iter().filter_map(|s| by_id.get(&s.frame_id).copied()).collect();
        v.sort_unstable();
        v.dedup();
        v
    };
    let skeletons: BTreeMap<usize, BinaryMask> = wanted
        .par_iter()
        .filter_map(|&i| data.frames[i].mask.as_ref().map(|m| (i, extract_skeleton(m))))
        .collect();

    let results: Vec<Result<CrackMeasurement, String>> = data
        .seeds
        .par_iter()
        .map(|seed| {
            let &i = by_id.get(&seed.frame_id).ok_or("unknown frame")?;
            let frame = &data.frames[i];
            let mask = frame.mask.as_ref().ok_or("frame has no mask")?;
            let skeleton = &skeletons[&i];
            let snapped = snap_to_skeleton(skeleton, (seed.u, seed.v), cfg.metrology.snap_radius)
                .ok_or_else(|| format!("no skeleton pixel within {} px", cfg.metrology.snap_radius))?;
            let world_to_cam = cam_poses[i].inverse();
            let ctx = MeasureContext {
                cloud: index,
                mask,
                skeleton,
                cam: &data.camera,
                world_to_cam: &world_to_cam,
                frame_id: seed.frame_id,
            };
            measure_crack(&ctx, seed.crack_id, snapped, &params).map_err(|e| e.to_string())
        })
        .collect();

    let mut out = Measured::default();
    for (seed, r) in data.seeds.iter().zip(results) {
        match r {
            Ok(m) => {
                if let Some(w) = data.reference.as_ref().and_then(|r| r.get(&(seed.crack_id, seed.frame_id))) {
                    out.pairs.push((m.width * 1000.0, *w));
                }
                out.measurements.push(m);
            }
            Err(msg) => {
                log::warn!("crack {} frame {} seed ({}, {}): {msg}", seed.crack_id, seed.frame_id, seed.u, seed.v);
                out.skipped.push((*seed, msg));
            }
        }
    }
    out
}

fn add_width_metrics(report: &mut MetricsReport, m: &Measured) {
    report.int("width.measured", m.measurements.len());
    report.int("width.skipped", m.skipped.len());
    if let Ok((mae, mre)) = compute_error_stats(&m.pairs) {
        let max = m.pairs.iter().map(|(c, r)| (c - r).abs()).fold(0.0, f64::max);
        report.int("width.compared", m.pairs.len());
        report.float("width.mae_mm", mae);
        report.float("width.mre_percent", mre);
        report.float("width.max_abs_error_mm", max);
    }
}

fn add_cloud_metrics(report: &mut MetricsReport, tag: &str, index: &NeighborIndex, radius: f64) {
    let density = point_surface_density_indexed(index, radius);
    let rough = surface_roughness_indexed(index, radius);
    report.int(&format!("{tag}.points"), index.len());
    report.float(&format!("{tag}.density.mean"), density.mean);
    report.float(&format!("{tag}.density.std"), density.std_dev);
    report.float(&format!("{tag}.roughness.mean_mm"), rough.stats.mean * 1000.0);
    report.float(&format!("{tag}.roughness.std_mm"), rough.stats.std_dev * 1000.0);
}

#[derive(Debug, Clone, Serialize)]
pub struct StageRecord {
    pub stage: Stage,
    pub seconds: f64,
    pub ok: bool,
    pub summary: BTreeMap<String, Value>,
}

#[derive(Debug, Clone, Serialize)]
pub struct InputRecord {
    pub role: String,
    pub path: PathBuf,
    pub bytes: u64,
}

#[derive(Debug, Clone, Serialize)]
pub struct Manifest {
    pub tool: &'static str,
    pub version: &'static str,
    pub core_version: &'static str,
    pub config_file: PathBuf,
    pub threads: usize,
    pub plan: Plan,
    pub inputs: Vec<InputRecord>,
    pub config: PipelineConfig,
    pub stages: Vec<StageRecord>,
    pub outputs: Vec<PathBuf>,
    pub error: Option<String>,
}

impl Manifest {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("manifest serializes")
    }
}

/// Result of a completed run.
#[derive(Debug, Clone)]
pub struct RunSummary {
    pub output_dir: PathBuf,
    pub manifest: Manifest,
    pub metrics: MetricsReport,
}

struct Runner {
    manifest: Manifest,
    out_dir: PathBuf,
}

impl Runner {
    fn stage<T>(&mut self, stage: Stage, f: impl FnOnce(&mut BTreeMap<String, Value>) -> Result<T>) -> Result<T, CliError> {
        log::info!("stage {stage}: start");
        let start = Instant::now();
        let mut summary = BTreeMap::new();
        let result = f(&mut summary);
        let seconds = start.elapsed().as_secs_f64();
        self.manifest.stages.push(StageRecord {
            stage,
            seconds,
            ok: result.is_ok(),
            summary,
        });
        match result {
            Ok(v) => {
                log::info!("stage {stage}: done in {seconds:.2} s");
                Ok(v)
            }
            Err(e) => {
                let err = CliError::Stage {
                    stage,
                    message: format!("{e:#}"),
                };
                self.manifest.error = Some(err.to_string());
                self.write_manifest();
                Err(err)
            }
        }
    }

    fn output(&mut self, name: &str) -> PathBuf {
        self.manifest.outputs.push(PathBuf::from(name));
        self.out_dir.join(name)
    }

    fn write_manifest(&self) {
        let path = self.out_dir.join(MANIFEST_FILE);
        if let Err(e) = std::fs::write(&path, self.manifest.to_json()) {
            log::error!("{}: {e}", path.display());
        }
    }
}

/// Validates the config, then runs the stages in `plan`. `output_dir`
/// overrides the configured output directory.
pub fn run(config_path: &Path, output_dir: Option<&Path>, plan: Option<Plan>) -> Result<RunSummary, CliError> {
    let (cfg, base) = PipelineConfig::load(config_path)?;
    let inputs = cfg.validate(&base)?;
    let frames_file = load_frames_file(&inputs.frames)?;
    for p in frames_file.referenced_paths() {
        if !p.is_file() {
            return Err(CliError::Config(format!("frame file {} does not exist", p.display())));
        }
    }
    let plan = plan.unwrap_or_else(|| Plan::from_config(&cfg));
    if plan.measure && inputs.seeds.is_none() {
        return Err(CliError::Config("measuring needs inputs.seeds".into()));
    }
    let out_dir = output_dir.map(Path::to_path_buf).unwrap_or_else(|| cfg.resolved_output(&base));
    std::fs::create_dir_all(&out_dir)
        .map_err(|e| CliError::Config(format!("output directory {}: {e}", out_dir.display())))?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.threads)
        .build()
        .map_err(|e| CliError::Config(format!("thread pool: {e}")))?;
    let input_records = inputs
        .entries()
        .into_iter()
        .map(|(role, path)| InputRecord {
            role: role.to_owned(),
            path: path.to_path_buf(),
            bytes: std::fs::metadata(path).map(|m| m.len()).unwrap_or(0),
        })
        .collect();
    let mut runner = Runner {
        manifest: Manifest {
            tool: "crackmetry",
            version: env!("CARGO_PKG_VERSION"),
            core_version: crackmetry::VERSION,
            config_file: config_path.to_path_buf(),
            threads: pool.current_num_threads(),
            plan,
            inputs: input_records,
            config: cfg.clone(),
            stages: Vec::new(),
            outputs: Vec::new(),
            error: None,
        },
        out_dir: out_dir.clone(),
    };
    let metrics = pool.install(|| execute(&mut runner, &cfg, &inputs, &plan))?;
    runner.write_manifest();
    Ok(RunSummary {
        output_dir: out_dir,
        manifest: runner.manifest,
        metrics,
    })
}

fn execute(r: &mut Runner, cfg: &PipelineConfig, inputs: &ResolvedInputs, plan: &Plan) -> Result<MetricsReport, CliError> {
    let mut report = MetricsReport::default();
    let mut data = r.stage(Stage::Load, |s| {
        let data = load_inputs(inputs)?;
        s.insert("points".into(), json!(data.cloud.len()));
        s.insert("frames".into(), json!(data.frames.len()));
        s.insert("seeds".into(), json!(data.seeds.len()));
        Ok(data)
    })?;

    let mut extrinsic = data.extrinsic;
    if plan.calibrate {
        let result = r.stage(Stage::Calibrate, |s| {
            let res = calibrate(&data, cfg)?;
            s.insert("initial_nid".into(), json!(res.initial_nid));
            s.insert("final_nid".into(), json!(res.final_nid));
            s.insert("iterations".into(), json!(res.iterations));
            s.insert("evaluations".into(), json!(res.evaluations));
            Ok(res)
        })?;
        log::info!("mean NID {:.6} -> {:.6}", result.initial_nid, result.final_nid);
        report.float("calibration.initial_nid", result.initial_nid);
        report.float("calibration.final_nid", result.final_nid);
        extrinsic = result.extrinsic;
        let path = r.output(EXTRINSIC_FILE);
        r.stage(Stage::Write, |_| save_extrinsic(&extrinsic, &path))?;
    }
    let cam_poses = data.camera_poses(&extrinsic);

    if plan.refine_masks {
        let tally = r.stage(Stage::RefineMasks, |s| {
            let t = refine_masks(&mut data.frames, cfg)?;
            s.insert("accepted".into(), json!(t.accepted));
            s.insert("rejected".into(), json!(t.rejected));
            s.insert("failed".into(), json!(t.failed));
            Ok(t)
        })?;
        report.int("masks.crops_accepted", tally.accepted);
        report.int("masks.crops_rejected", tally.rejected);
        report.int("masks.crops_failed", tally.failed);
        std::fs::create_dir_all(r.out_dir.join("masks")).map_err(|e| CliError::Stage {
            stage: Stage::Write,
            message: e.to_string(),
        })?;
        let paths: Vec<(PathBuf, usize)> = (0..data.frames.len())
            .filter(|&i| data.frames[i].mask.is_some())
            .map(|i| (r.output(&format!("masks/frame_{:03}.pgm", data.frames[i].entry.id)), i))
            .collect();
        r.stage(Stage::Write, |_| {
            for (path, i) in &paths {
                save_mask(data.frames[*i].mask.as_ref().expect("filtered"), path)?;
            }
            Ok(())
        })?;
    }

    let processed = if plan.denoise {
        let d = r.stage(Stage::Denoise, |s| {
            let d = denoise(&data.cloud, &cfg.sor, &cfg.mls)?;
            s.insert("kept".into(), json!(d.cloud.len()));
            s.insert("sor_removed".into(), json!(d.sor_removed));
            s.insert("mls_radius".into(), json!(d.mls_radius));
            s.insert("mls_fallbacks".into(), json!(d.mls_fallbacks));
            Ok(d)
        })?;
        if let Some(n) = d.sor_removed {
            report.int("sor.removed", n);
        }
        if d.mls_radius.is_some() {
            report.float("mls.mean_displacement_mm", d.mean_displacement * 1000.0);
        }
        d.cloud
    } else {
        data.cloud.clone()
    };

    if plan.fuse {
        let fused = r.stage(Stage::Fuse, |s| {
            let f = fuse(&processed, &data, &cam_poses, cfg)?;
            s.insert("colored_fraction".into(), json!(f.colored_fraction()));
            Ok(f)
        })?;
        let crack_points = fused.cloud.label.as_ref().map_or(0, |l| l.iter().filter(|&&v| v == 1).count());
        report.float("fusion.colored_fraction", fused.colored_fraction());
        report.int("fusion.crack_points", crack_points);
        let path = r.output(FUSED_FILE);
        r.stage(Stage::Write, |_| Ok(save_point_cloud(&fused.cloud, &path)?))?;
    }

    let processed_index = NeighborIndex::new(processed.points.clone());
    if plan.measure {
        let measured = r.stage(Stage::Measure, |s| {
            let m = measure(&processed_index, &data, &cam_poses, cfg);
            s.insert("measured".into(), json!(m.measurements.len()));
            s.insert("skipped".into(), json!(m.skipped.len()));
            Ok(m)
        })?;
        add_width_metrics(&mut report, &measured);
        let path = r.output(MEASUREMENTS_FILE);
        r.stage(Stage::Write, |_| Ok(write_measurement_report(&measured.measurements, &path)?))?;
    }

    if plan.eval {
        r.stage(Stage::Eval, |_| {
            let mut ious = Vec::new();
            for f in &data.frames {
                if let (Some(pred), Some(gt)) = (&f.mask, &f.truth_mask) {
                    let v = miou(pred, gt)?;
                    report.float(&format!("miou.frame_{:03}", f.entry.id), v);
                    ious.push(v);
                }
            }
            if !ious.is_empty() {
                report.float("miou.mean", ious.iter().sum::<f64>() / ious.len() as f64);
            }
            let raw_index = NeighborIndex::new(data.cloud.points.clone());
            add_cloud_metrics(&mut report, "raw", &raw_index, cfg.eval.radius);
            if plan.denoise {
                add_cloud_metrics(&mut report, "processed", &processed_index, cfg.eval.radius);
            }
            Ok(())
        })?;
    }

    if !report.is_empty() {
        let path = r.output(METRICS_FILE);
        let text = report.to_text();
        r.stage(Stage::Write, |_| {
            std::fs::write(&path, text).map_err(|e| anyhow!("{}: {e}", path.display()))
        })?;
    }
    Ok(report)
}
