//! Pipeline configuration: one TOML file holding input paths, every stage's
//! parameters and the output directory. Relative paths resolve against the
//! directory containing the config file.

use std::path::{Path, PathBuf};

use crackmetry::calib::CalibConfig;
use crackmetry::denoise::MlsConfig;
use crackmetry::fusion::FusionConfig;
use crackmetry::mask::{MaskParams, QualityThresholds};
use crackmetry::metrology::MeasureParams;
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub output_dir: PathBuf,
    /// Worker threads; 0 uses every available core.
    #[serde(default)]
    pub threads: usize,
    pub inputs: Inputs,
    #[serde(default)]
    pub calibration: CalibrationParams,
    #[serde(default)]
    pub masks: MaskStageParams,
    #[serde(default)]
    pub sor: SorParams,
    #[serde(default)]
    pub mls: MlsParams,
    #[serde(default)]
    pub fusion: FusionParams,
    #[serde(default)]
    pub metrology: MetrologyParams,
    #[serde(default)]
    pub eval: EvalParams,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Inputs {
    /// World-frame LiDAR cloud, PLY or PCD.
    pub cloud: PathBuf,
    /// LiDAR→world poses, `timestamp tx ty tz qw qx qy qz` per line.
    pub trajectory: PathBuf,
    /// Camera intrinsics and the image/mask list (see [`crate::scene::FramesFile`]).
    pub frames: PathBuf,
    /// LiDAR→camera pose, a single trajectory-format line.
    pub extrinsic: PathBuf,
    /// `crack_id u v frame_id` lines; without it nothing is measured.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seeds: Option<PathBuf>,
    /// `crack_id frame_id width_mm` lines used for width error statistics.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CalibrationParams {
    pub enabled: bool,
    pub bins: usize,
    pub rotation_step_deg: f64,
    pub translation_step: f64,
    pub max_iters: usize,
    pub tolerance: f64,
    pub restarts: usize,
}

impl Default for CalibrationParams {
    fn default() -> Self {
        let d = CalibConfig::default();
        Self {
            enabled: false,
            bins: d.bins,
            rotation_step_deg: d.initial_step[0].to_degrees(),
            translation_step: d.initial_step[3],
            max_iters: d.max_iters,
            tolerance: d.simplex_tolerance,
            restarts: d.restarts,
        }
    }
}

impl CalibrationParams {
    pub fn to_core(&self) -> CalibConfig {
        let r = self.rotation_step_deg.to_radians();
        let t = self.translation_step;
        CalibConfig {
            bins: self.bins,
            initial_step: [r, r, r, t, t, t],
            max_iters: self.max_iters,
            simplex_tolerance: self.tolerance,
            restarts: self.restarts,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MaskStageParams {
    pub refine: bool,
    /// Refiner name as accepted by `refiner_by_name`.
    pub refiner: String,
    pub k: usize,
    pub min_dist: f64,
    pub eps: f64,
    pub min_pts: usize,
    pub dilation: u32,
    pub max_size_ratio: f64,
    pub max_holes: usize,
}

impl Default for MaskStageParams {
    fn default() -> Self {
        let d = MaskParams::default();
        Self {
            refine: false,
            refiner: "identity".into(),
            k: d.k,
            min_dist: d.min_dist,
            eps: d.eps,
            min_pts: d.min_pts,
            dilation: d.dilation,
            max_size_ratio: d.quality.max_size_ratio,
            max_holes: d.quality.max_holes,
        }
    }
}

impl MaskStageParams {
    pub fn to_core(&self) -> MaskParams {
        MaskParams {
            k: self.k,
            min_dist: self.min_dist,
            eps: self.eps,
            min_pts: self.min_pts,
            dilation: self.dilation,
            quality: QualityThresholds {
                max_size_ratio: self.max_size_ratio,
                max_holes: self.max_holes,
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SorParams {
    pub enabled: bool,
    pub k: usize,
    pub n_sigma: f64,
}

impl Default for SorParams {
    fn default() -> Self {
        Self {
            enabled: true,
            k: 60,
            n_sigma: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MlsParams {
    pub enabled: bool,
    /// Meters; 0 picks five times the median point spacing.
    pub search_radius: f64,
    pub degree: usize,
}

impl MlsParams {
    /// Core settings for a given cloud, filling in the automatic radius.
    pub fn for_index(&self, index: &crackmetry::spatial::NeighborIndex) -> MlsConfig {
        let search_radius = if self.search_radius > 0.0 {
            self.search_radius
        } else {
            MlsConfig::for_cloud(index).search_radius
        };
        MlsConfig {
            search_radius,
            degree: self.degree,
        }
    }
}

impl Default for MlsParams {
    fn default() -> Self {
        Self {
            enabled: true,
            search_radius: 0.0,
            degree: 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FusionParams {
    pub lambda_orientation: f64,
    pub lambda_distance: f64,
    pub ideal_distance: f64,
    pub sigma: f64,
    pub top_n: usize,
    pub hpr_radius_scale: f64,
    pub cull_to_frustum: bool,
}

impl Default for FusionParams {
    fn default() -> Self {
        let d = FusionConfig::default();
        Self {
            lambda_orientation: d.lambda_orientation,
            lambda_distance: d.lambda_distance,
            ideal_distance: d.ideal_distance,
            sigma: d.sigma,
            top_n: d.top_n,
            hpr_radius_scale: d.hpr_radius_scale,
            cull_to_frustum: d.cull_to_frustum,
        }
    }
}

impl FusionParams {
    pub fn to_core(&self) -> FusionConfig {
        FusionConfig {
            lambda_orientation: self.lambda_orientation,
            lambda_distance: self.lambda_distance,
            ideal_distance: self.ideal_distance,
            sigma: self.sigma,
            top_n: self.top_n,
            hpr_radius_scale: self.hpr_radius_scale,
            cull_to_frustum: self.cull_to_frustum,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MetrologyParams {
    pub window: u32,
    pub sigma: f64,
    pub plane_neighbors: usize,
    pub ray_tolerance: f64,
    pub sample_step: f64,
    pub sample_radius: f64,
    /// Seeds farther than this from the skeleton (pixels) are skipped.
    pub snap_radius: u32,
}

impl Default for MetrologyParams {
    fn default() -> Self {
        let d = MeasureParams::default();
        Self {
            window: d.window,
            sigma: d.sigma,
            plane_neighbors: d.plane_neighbors,
            ray_tolerance: d.ray_tolerance,
            sample_step: d.sample_step,
            sample_radius: d.sample_radius,
            snap_radius: 2,
        }
    }
}

impl MetrologyParams {
    pub fn to_core(&self) -> MeasureParams {
        MeasureParams {
            window: self.window,
            sigma: self.sigma,
            plane_neighbors: self.plane_neighbors,
            ray_tolerance: self.ray_tolerance,
            sample_step: self.sample_step,
            sample_radius: self.sample_radius,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalParams {
    /// Neighborhood radius for density and roughness, meters.
    pub radius: f64,
}

impl Default for EvalParams {
    fn default() -> Self {
        Self {
            radius: crackmetry::metrics::DEFAULT_METRIC_RADIUS,
        }
    }
}

/// Input paths after resolution against the config directory.
#[derive(Debug, Clone, PartialEq)]
pub struct ResolvedInputs {
    pub cloud: PathBuf,
    pub trajectory: PathBuf,
    pub frames: PathBuf,
    pub extrinsic: PathBuf,
    pub seeds: Option<PathBuf>,
    pub reference: Option<PathBuf>,
}

impl ResolvedInputs {
    /// `(role, path)` for every configured input.
    pub fn entries(&self) -> Vec<(&'static str, &Path)> {
        let mut out = vec![
            ("cloud", self.cloud.as_path()),
            ("trajectory", self.trajectory.as_path()),
            ("frames", self.frames.as_path()),
            ("extrinsic", self.extrinsic.as_path()),
        ];
        if let Some(p) = &self.seeds {
            out.push(("seeds", p));
        }
        if let Some(p) = &self.reference {
            out.push(("reference", p));
        }
        out
    }
}

fn resolve(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

impl PipelineConfig {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))
    }

    /// Reads a config file and returns it with the directory its relative
    /// paths resolve against.
    pub fn load(path: &Path) -> Result<(Self, PathBuf), CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        let cfg = Self::parse(&text)?;
        let base = path
            .parent()
            .map(Path::to_path_buf)
            .unwrap_or_default();
        Ok((cfg, base))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn resolved_inputs(&self, base: &Path) -> ResolvedInputs {
        let i = &self.inputs;
        ResolvedInputs {
            cloud: resolve(base, &i.cloud),
            trajectory: resolve(base, &i.trajectory),
            frames: resolve(base, &i.frames),
            extrinsic: resolve(base, &i.extrinsic),
            seeds: i.seeds.as_deref().map(|p| resolve(base, p)),
            reference: i.reference.as_deref().map(|p| resolve(base, p)),
        }
    }

    pub fn resolved_output(&self, base: &Path) -> PathBuf {
        resolve(base, &self.output_dir)
    }

    /// Checks that every input exists and every parameter is in range.
    pub fn validate(&self, base: &Path) -> Result<ResolvedInputs, CliError> {
        let inputs = self.resolved_inputs(base);
        for (role, path) in inputs.entries() {
            if !path.is_file() {
                return Err(CliError::Config(format!(
                    "{role} file {} does not exist",
                    path.display()
                )));
            }
        }
        self.validate_parameters()?;
        Ok(inputs)
    }

    fn validate_parameters(&self) -> Result<(), CliError> {
        let bad = |m: String| Err(CliError::Config(m));
        let c = &self.calibration;
        if c.enabled && (c.bins < 2 || !(c.rotation_step_deg > 0.0) || !(c.translation_step > 0.0)) {
            return bad("calibration needs bins >= 2 and positive steps".into());
        }
        if self.masks.refine {
            crackmetry::mask::refiner_by_name(&self.masks.refiner)
                .map_err(|e| CliError::Config(format!("masks.refiner: {e}")))?;
        }
        if self.sor.enabled && (self.sor.k == 0 || !(self.sor.n_sigma >= 0.0)) {
            return bad("sor needs k >= 1 and n_sigma >= 0".into());
        }
        if self.mls.enabled {
            if !(self.mls.search_radius >= 0.0) {
                return bad("mls.search_radius must be >= 0".into());
            }
            if !(1..=3).contains(&self.mls.degree) {
                return bad(format!("mls.degree {} not in 1..=3", self.mls.degree));
            }
        }
        self.fusion
            .to_core()
            .validate()
            .map_err(|e| CliError::Config(format!("fusion: {e}")))?;
        let m = &self.metrology;
        if m.window < 3 || !(m.sample_step > 0.0) || !(m.sample_radius > m.sample_step) || m.plane_neighbors < 3 {
            return bad("metrology needs window >= 3, plane_neighbors >= 3 and 0 < sample_step < sample_radius".into());
        }
        if !(self.eval.radius > 0.0) {
            return bad("eval.radius must be positive".into());
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
output_dir = "out"
[inputs]
cloud = "cloud.ply"
trajectory = "trajectory.txt"
frames = "frames.toml"
extrinsic = "extrinsic.txt"
"#;

    #[test]
    fn defaults_fill_missing_blocks() {
        let cfg = PipelineConfig::parse(MINIMAL).unwrap();
        assert_eq!(cfg.sor.k, 60);
        assert_eq!(cfg.sor.n_sigma, 1.0);
        assert!(!cfg.calibration.enabled);
        assert_eq!(cfg.calibration.to_core(), CalibConfig::default());
        assert_eq!(cfg.fusion.to_core(), FusionConfig::default());
        assert_eq!(cfg.metrology.to_core(), MeasureParams::default());
        assert_eq!(cfg.masks.to_core(), MaskParams::default());
    }

    #[test]
    fn echo_round_trips() {
        let cfg = PipelineConfig::parse(MINIMAL).unwrap();
        assert_eq!(PipelineConfig::parse(&cfg.to_toml()).unwrap(), cfg);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let text = format!("{MINIMAL}\n[sor]\nkk = 3\n");
        assert!(matches!(PipelineConfig::parse(&text), Err(CliError::Config(_))));
    }

    #[test]
    fn relative_paths_resolve_against_config_dir() {
        let cfg = PipelineConfig::parse(MINIMAL).unwrap();
        let r = cfg.resolved_inputs(Path::new("/data/scene"));
        assert_eq!(r.cloud, Path::new("/data/scene/cloud.ply"));
        assert_eq!(cfg.resolved_output(Path::new("/data/scene")), Path::new("/data/scene/out"));
    }

    #[test]
    fn out_of_range_parameters_fail_validation() {
        let mut cfg = PipelineConfig::parse(MINIMAL).unwrap();
        cfg.mls.degree = 4;
        assert!(cfg.validate_parameters().is_err());
        let mut cfg = PipelineConfig::parse(MINIMAL).unwrap();
        cfg.fusion.top_n = 0;
        assert!(cfg.validate_parameters().is_err());
        let mut cfg = PipelineConfig::parse(MINIMAL).unwrap();
        cfg.masks.refine = true;
        cfg.masks.refiner = "sam".into();
        assert!(cfg.validate_parameters().is_err());
    }
}
