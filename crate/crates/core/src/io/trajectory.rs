use std::path::Path;

use nalgebra::Vector3;

use super::{FormatError, Location};
use crate::geometry::{RigidPose, Trajectory};

/// Quaternions whose norm deviates from 1 by more than this are reported.
const NORM_WARN_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryWarning {
    pub line: usize,
    pub message: String,
}

/// Parses `timestamp tx ty tz qw qx qy qz` lines. Blank lines and lines
/// starting with `#` are ignored; quaternions are normalized.
pub fn parse_trajectory(text: &str) -> Result<(Trajectory, Vec<TrajectoryWarning>), FormatError> {
    let mut entries: Vec<RigidPose> = Vec::new();
    let mut warnings = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let loc = Location::Line(line_no);
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let vals: Vec<f64> = line
            .split_whitespace()
            .map(|t| {
                t.parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| FormatError::parse(loc, format!("invalid number `{t}`")))
            })
            .collect::<Result<_, _>>()?;
        if vals.len() != 8 {
            return Err(FormatError::parse(
                loc,
                format!("expected 8 values, found {}", vals.len()),
            ));
        }
        let norm = (vals[4] * vals[4] + vals[5] * vals[5] + vals[6] * vals[6] + vals[7] * vals[7])
            .sqrt();
        if (norm - 1.0).abs() > NORM_WARN_TOLERANCE {
            warnings.push(TrajectoryWarning {
                line: line_no,
                message: format!("quaternion norm {norm} normalized to 1"),
            });
        }
        let pose = RigidPose::from_wxyz(
            vals[4],
            vals[5],
            vals[6],
            vals[7],
            Vector3::new(vals[1], vals[2], vals[3]),
        )
        .map_err(|e| FormatError::parse(loc, e.to_string()))?
        .with_timestamp(vals[0]);
        if let Some(prev) = entries.last().and_then(|p| p.timestamp) {
            if vals[0] <= prev {
                return Err(FormatError::NonMonotonicTimestamps { line: line_no });
            }
        }
        entries.push(pose);
    }
    let traj = Trajectory::new(entries).map_err(|e| FormatError::NonMonotonicTimestamps {
        line: e.index + 1,
    })?;
    Ok((traj, warnings))
}

pub fn load_trajectory(path: impl AsRef<Path>) -> Result<Trajectory, FormatError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| FormatError::io(path, e))?;
    let (traj, warnings) = parse_trajectory(&text)?;
    for w in warnings {
        log::warn!("{}:{}: {}", path.display(), w.line, w.message);
    }
    Ok(traj)
}

/// One trajectory line; a missing timestamp is written as 0.
pub fn format_pose_line(pose: &RigidPose) -> String {
    let q = pose.rotation.quaternion();
    let t = pose.translation;
    format!(
        "{} {} {} {} {} {} {} {}",
        pose.timestamp.unwrap_or(0.0),
        t.x,
        t.y,
        t.z,
        q.w,
        q.i,
        q.j,
        q.k
    )
}

pub fn save_trajectory(poses: &[RigidPose], path: impl AsRef<Path>) -> Result<(), FormatError> {
    let path = path.as_ref();
    let mut text = String::from("# timestamp tx ty tz qw qx qy qz\n");
    for p in poses {
        text.push_str(&format_pose_line(p));
        text.push('\n');
    }
    std::fs::write(path, text).map_err(|e| FormatError::io(path, e))
}
