use std::fmt::Write as _;
use std::path::Path;

use super::FormatError;
use crate::metrology::CrackMeasurement;

pub const REPORT_HEADER: &str =
    "crack_id,u,v,frame_id,left_x,left_y,left_z,right_x,right_y,right_z,width_mm";

/// Comma-separated report: one header line, one row per measurement.
/// Edge coordinates are meters (6 decimals), widths millimeters (3 decimals).
pub fn format_measurement_report(measurements: &[CrackMeasurement]) -> String {
    let mut out = String::from(REPORT_HEADER);
    out.push('\n');
    for m in measurements {
        let l = m.edge_left_3d;
        let r = m.edge_right_3d;
        let _ = writeln!(
            out,
            "{},{},{},{},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{:.3}",
            m.crack_id,
            m.seed.0,
            m.seed.1,
            m.frame_id,
            l.x,
            l.y,
            l.z,
            r.x,
            r.y,
            r.z,
            m.width * 1000.0
        );
    }
    out
}

pub fn write_measurement_report(
    measurements: &[CrackMeasurement],
    path: impl AsRef<Path>,
) -> Result<(), FormatError> {
    let path = path.as_ref();
    std::fs::write(path, format_measurement_report(measurements))
        .map_err(|e| FormatError::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Point3;
    use crate::metrology::{CrackMeasurement, LocalPlane};
    use nalgebra::Vector2;

    fn sample(width: f64, id: u32) -> CrackMeasurement {
        CrackMeasurement {
            crack_id: id,
            frame_id: 3,
            seed: (10, 20),
            direction: Vector2::new(1.0, 0.0),
            edge_left_2d: (10.0, 18.0),
            edge_right_2d: (10.0, 22.0),
            edge_left_3d: Point3::new(0.0, 0.0, 1.0),
            edge_right_3d: Point3::new(width, 0.0, 1.0),
            width,
            plane: LocalPlane {
                a: 0.0,
                b: 0.0,
                c: 1.0,
                d: -1.0,
                rms: 0.0,
                support: 60,
            },
        }
    }

    #[test]
    fn empty_report_is_header_only() {
        assert_eq!(format_measurement_report(&[]), format!("{REPORT_HEADER}\n"));
    }

    #[test]
    fn width_in_millimeters() {
        let text = format_measurement_report(&[sample(0.00066, 7)]);
        let row = text.lines().nth(1).unwrap();
        let width_mm: f64 = row.rsplit(',').next().unwrap().parse().unwrap();
        assert_eq!(width_mm, 0.66);
        assert!(row.starts_with("7,10,20,3,"));
    }

    #[test]
    fn fifteen_rows_sixteen_lines() {
        let ms: Vec<_> = (0..15).map(|i| sample(0.001, i)).collect();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("r.csv");
        write_measurement_report(&ms, &p).unwrap();
        assert_eq!(std::fs::read_to_string(&p).unwrap().lines().count(), 16);
    }
}
