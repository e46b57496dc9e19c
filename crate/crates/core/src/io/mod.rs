//! On-disk formats: point clouds (PLY, PCD), trajectories, images and
//! masks (PNM, PNG), and measurement reports.

mod image;
mod pcd;
mod ply;
mod report;
mod trajectory;

use std::fmt;
use std::path::{Path, PathBuf};

use thiserror::Error;

pub use self::image::{
    decode_pnm, encode_pgm, encode_ppm, load_image, load_mask, load_mask_paired, save_image,
    save_mask,
};
pub use self::pcd::{parse_pcd, write_pcd};
pub use self::ply::{parse_ply, write_ply, PlyEncoding};
pub use self::report::{format_measurement_report, write_measurement_report, REPORT_HEADER};
pub use self::trajectory::{
    format_pose_line, load_trajectory, parse_trajectory, save_trajectory, TrajectoryWarning,
};

use crate::cloud::PointCloud;

/// Where in a file a parse error occurred.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Location {
    Line(usize),
    Byte(usize),
}

impl fmt::Display for Location {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Location::Line(l) => write!(f, "line {l}"),
            Location::Byte(b) => write!(f, "byte {b}"),
        }
    }
}

#[derive(Debug, Error)]
pub enum FormatError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("parse error at {location}: {message}")]
    Parse { location: Location, message: String },
    #[error("unsupported format: {0}")]
    UnsupportedFormat(String),
    #[error("timestamps not strictly increasing at line {line}")]
    NonMonotonicTimestamps { line: usize },
    #[error("dimension mismatch: mask is {mask:?}, image is {image:?}")]
    DimensionMismatch { mask: (u32, u32), image: (u32, u32) },
}

impl FormatError {
    pub(crate) fn parse(location: Location, message: impl Into<String>) -> Self {
        FormatError::Parse {
            location,
            message: message.into(),
        }
    }

    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        FormatError::Io {
            path: path.to_path_buf(),
            source,
        }
    }
}

/// A loaded cloud plus the number of points dropped for non-finite
/// coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct LoadedCloud {
    pub cloud: PointCloud,
    pub dropped: usize,
}

/// Loads a PLY (ASCII or binary little-endian) or ASCII PCD file, sniffing
/// the format from its first bytes.
pub fn load_point_cloud(path: impl AsRef<Path>) -> Result<LoadedCloud, FormatError> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| FormatError::io(path, e))?;
    let loaded = parse_point_cloud(&bytes)?;
    if loaded.dropped > 0 {
        log::warn!(
            "{}: dropped {} points with non-finite coordinates",
            path.display(),
            loaded.dropped
        );
    }
    Ok(loaded)
}

pub fn parse_point_cloud(bytes: &[u8]) -> Result<LoadedCloud, FormatError> {
    if bytes.starts_with(b"ply") {
        parse_ply(bytes)
    } else if looks_like_pcd(bytes) {
        parse_pcd(bytes)
    } else {
        Err(FormatError::UnsupportedFormat(
            "expected a PLY or PCD point cloud".into(),
        ))
    }
}

fn looks_like_pcd(bytes: &[u8]) -> bool {
    let head = &bytes[..bytes.len().min(256)];
    let text = String::from_utf8_lossy(head);
    text.lines()
        .map(str::trim)
        .find(|l| !l.is_empty() && !l.starts_with('#'))
        .is_some_and(|l| l.starts_with("VERSION") || l.starts_with("FIELDS"))
}

/// Writes a cloud; `.pcd` paths get ASCII PCD, everything else binary PLY.
pub fn save_point_cloud(cloud: &PointCloud, path: impl AsRef<Path>) -> Result<(), FormatError> {
    let path = path.as_ref();
    let bytes = match path.extension().and_then(|e| e.to_str()) {
        Some(ext) if ext.eq_ignore_ascii_case("pcd") => write_pcd(cloud).into_bytes(),
        _ => write_ply(cloud, PlyEncoding::BinaryLittleEndian),
    };
    std::fs::write(path, bytes).map_err(|e| FormatError::io(path, e))
}
