//! Scene directory files besides clouds, trajectories and rasters: the
//! frames list, the extrinsic, seeds and reference widths. Also writes a
//! complete directory for a synthetic scene.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{bail, ensure, Context, Result};
use crackmetry::io::{format_pose_line, load_trajectory, save_image, save_mask, save_point_cloud, save_trajectory};
use crackmetry::synth::Scene;
use crackmetry::{CameraModel, RigidPose};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Intrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: u32,
    pub height: u32,
}

impl Intrinsics {
    pub fn to_camera(&self) -> Result<CameraModel> {
        Ok(CameraModel::new(self.fx, self.fy, self.cx, self.cy, self.width, self.height)?)
    }

    pub fn from_camera(c: &CameraModel) -> Self {
        Self {
            fx: c.fx,
            fy: c.fy,
            cx: c.cx,
            cy: c.cy,
            width: c.width,
            height: c.height,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FrameEntry {
    pub id: u32,
    /// Capture time, matched against the trajectory.
    pub timestamp: f64,
    pub image: PathBuf,
    /// Crack mask from the detector.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mask: Option<PathBuf>,
    /// Annotated mask for segmentation scoring.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub truth_mask: Option<PathBuf>,
}

/// `frames.toml`: a `[camera]` table and one `[[frame]]` table per image.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FramesFile {
    pub camera: Intrinsics,
    #[serde(rename = "frame", default)]
    pub frames: Vec<FrameEntry>,
}

impl FramesFile {
    /// Parses the file and resolves frame paths against its directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| path.display().to_string())?;
        let mut file: FramesFile = toml::from_str(&text).with_context(|| path.display().to_string())?;
        let base = path.parent().unwrap_or(Path::new(""));
        let join = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        let mut ids = std::collections::BTreeSet::new();
        for f in &mut file.frames {
            ensure!(ids.insert(f.id), "{}: duplicate frame id {}", path.display(), f.id);
            join(&mut f.image);
            f.mask.as_mut().map(join);
            f.truth_mask.as_mut().map(join);
        }
        Ok(file)
    }

    /// Every file the frames reference.
    pub fn referenced_paths(&self) -> Vec<&Path> {
        self.frames
            .iter()
            .flat_map(|f| [Some(f.image.as_path()), f.mask.as_deref(), f.truth_mask.as_deref()])
            .flatten()
            .collect()
    }
}

/// Reads a LiDAR→camera pose stored as one trajectory line.
pub fn load_extrinsic(path: &Path) -> Result<RigidPose> {
    let traj = load_trajectory(path)?;
    ensure!(traj.len() == 1, "{}: expected one pose, found {}", path.display(), traj.len());
    let mut pose = traj.entries()[0];
    pose.timestamp = None;
    Ok(pose)
}

pub fn save_extrinsic(pose: &RigidPose, path: &Path) -> Result<()> {
    let text = format!("# LiDAR to camera: 0 tx ty tz qw qx qy qz\n{}\n", format_pose_line(pose));
    std::fs::write(path, text).with_context(|| path.display().to_string())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Seed {
    pub crack_id: u32,
    pub u: u32,
    pub v: u32,
    pub frame_id: u32,
}

fn data_lines(text: &str) -> impl Iterator<Item = (usize, Vec<&str>)> {
    text.lines().enumerate().filter_map(|(i, l)| {
        let l = l.trim();
        (!l.is_empty() && !l.starts_with('#')).then(|| (i + 1, l.split_whitespace().collect()))
    })
}

/// Parses `crack_id u v frame_id` lines.
pub fn parse_seeds(text: &str) -> Result<Vec<Seed>> {
    data_lines(text)
        .map(|(line, f)| {
            ensure!(f.len() == 4, "line {line}: expected `crack_id u v frame_id`");
            let n = |s: &str| s.parse::<u32>().with_context(|| format!("line {line}: bad integer `{s}`"));
            Ok(Seed {
                crack_id: n(f[0])?,
                u: n(f[1])?,
                v: n(f[2])?,
                frame_id: n(f[3])?,
            })
        })
        .collect()
}

pub fn format_seeds(seeds: &[Seed]) -> String {
    let mut out = String::from("# crack_id u v frame_id\n");
    for s in seeds {
        let _ = writeln!(out, "{} {} {} {}", s.crack_id, s.u, s.v, s.frame_id);
    }
    out
}

/// Parses `crack_id frame_id width_mm` lines into a map keyed by
/// `(crack_id, frame_id)`.
pub fn parse_reference(text: &str) -> Result<BTreeMap<(u32, u32), f64>> {
    let mut out = BTreeMap::new();
    for (line, f) in data_lines(text) {
        ensure!(f.len() == 3, "line {line}: expected `crack_id frame_id width_mm`");
        let id: u32 = f[0].parse().with_context(|| format!("line {line}: bad crack id"))?;
        let frame: u32 = f[1].parse().with_context(|| format!("line {line}: bad frame id"))?;
        let w: f64 = f[2].parse().with_context(|| format!("line {line}: bad width"))?;
        if !(w > 0.0 && w.is_finite()) {
            bail!("line {line}: width must be positive");
        }
        out.insert((id, frame), w);
    }
    Ok(out)
}

fn read(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).with_context(|| path.display().to_string())
}

pub fn load_seeds(path: &Path) -> Result<Vec<Seed>> {
    parse_seeds(&read(path)?).with_context(|| path.display().to_string())
}

pub fn load_reference(path: &Path) -> Result<BTreeMap<(u32, u32), f64>> {
    parse_reference(&read(path)?).with_context(|| path.display().to_string())
}

/// Options for [`write_scene`].
#[derive(Debug, Clone, PartialEq)]
pub struct SceneWriteOptions {
    /// Extrinsic written as the pipeline's starting estimate; `None` writes
    /// the true one.
    pub initial_extrinsic: Option<RigidPose>,
    pub calibrate: bool,
}

/// Writes a synthetic scene as a pipeline-ready directory:
///
/// ```text
/// cloud.ply  trajectory.txt  extrinsic.txt  frames.toml  seeds.txt
/// reference.txt  pipeline.toml  images/  masks/  truth/
/// ```
///
/// `truth/` holds the exact extrinsic and the annotated masks.
pub fn write_scene(scene: &Scene, dir: &Path, opts: &SceneWriteOptions) -> Result<()> {
    let spec = &scene.truth.spec;
    for sub in ["images", "masks", "truth/masks"] {
        std::fs::create_dir_all(dir.join(sub)).with_context(|| dir.join(sub).display().to_string())?;
    }
    save_point_cloud(&scene.cloud, dir.join("cloud.ply"))?;
    save_trajectory(scene.trajectory.entries(), dir.join("trajectory.txt"))?;
    save_extrinsic(&opts.initial_extrinsic.unwrap_or(spec.extrinsic), &dir.join("extrinsic.txt"))?;
    save_extrinsic(&spec.extrinsic, &dir.join("truth/extrinsic.txt"))?;

    let mut frames = Vec::with_capacity(spec.frames.len());
    for (i, frame) in spec.frames.iter().enumerate() {
        let image = PathBuf::from(format!("images/frame_{i:03}.ppm"));
        let mask = PathBuf::from(format!("masks/frame_{i:03}.pgm"));
        let truth = PathBuf::from(format!("truth/masks/frame_{i:03}.pgm"));
        save_image(&scene.images[i], dir.join(&image))?;
        save_mask(&scene.masks[i], dir.join(&mask))?;
        save_mask(&scene.masks[i], dir.join(&truth))?;
        frames.push(FrameEntry {
            id: i as u32,
            timestamp: frame.timestamp,
            image,
            mask: Some(mask),
            truth_mask: Some(truth),
        });
    }
    let frames_file = FramesFile {
        camera: Intrinsics::from_camera(&spec.camera),
        frames,
    };
    let toml_text = toml::to_string(&frames_file)?;
    std::fs::write(dir.join("frames.toml"), toml_text)?;

    let seeds: Vec<Seed> = scene
        .truth
        .sites
        .iter()
        .map(|s| Seed {
            crack_id: s.crack_id,
            u: s.pixel.0,
            v: s.pixel.1,
            frame_id: s.frame_id,
        })
        .collect();
    std::fs::write(dir.join("seeds.txt"), format_seeds(&seeds))?;
    let mut reference = String::from("# crack_id frame_id width_mm\n");
    for s in &scene.truth.sites {
        let _ = writeln!(reference, "{} {} {:.6}", s.crack_id, s.frame_id, s.width * 1000.0);
    }
    std::fs::write(dir.join("reference.txt"), reference)?;

    let mut cfg = crate::config::PipelineConfig {
        output_dir: "run".into(),
        threads: 0,
        inputs: crate::config::Inputs {
            cloud: "cloud.ply".into(),
            trajectory: "trajectory.txt".into(),
            frames: "frames.toml".into(),
            extrinsic: "extrinsic.txt".into(),
            seeds: (!seeds.is_empty()).then(|| "seeds.txt".into()),
            reference: (!seeds.is_empty()).then(|| "reference.txt".into()),
        },
        calibration: Default::default(),
        masks: Default::default(),
        sor: Default::default(),
        mls: Default::default(),
        fusion: Default::default(),
        metrology: Default::default(),
        eval: Default::default(),
    };
    cfg.calibration.enabled = opts.calibrate;
    std::fs::write(dir.join("pipeline.toml"), cfg.to_toml())?;
    Ok(())
}
