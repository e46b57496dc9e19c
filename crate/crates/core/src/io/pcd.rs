use std::fmt::Write as _;

use super::{FormatError, LoadedCloud, Location};
use crate::cloud::PointCloud;
use crate::geometry::Point3;

/// Parses an ASCII PCD (v0.7-style header). Binary data sections are
/// rejected as unsupported.
pub fn parse_pcd(bytes: &[u8]) -> Result<LoadedCloud, FormatError> {
    let text = std::str::from_utf8(bytes)
        .map_err(|e| FormatError::parse(Location::Byte(e.valid_up_to()), "invalid UTF-8"))?;
    let mut fields: Vec<String> = Vec::new();
    let mut counts: Vec<usize> = Vec::new();
    let mut declared_points: Option<usize> = None;
    let mut lines = text.lines().enumerate();
    let mut data_seen = false;
    for (i, raw) in lines.by_ref() {
        let loc = Location::Line(i + 1);
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut tok = line.split_whitespace();
        let kw = tok.next().unwrap_or_default();
        match kw {
            "VERSION" | "SIZE" | "TYPE" | "WIDTH" | "HEIGHT" | "VIEWPOINT" => {}
            "FIELDS" => fields = tok.map(str::to_string).collect(),
            "COUNT" => {
                counts = tok
                    .map(|t| t.parse::<usize>())
                    .collect::<Result<_, _>>()
                    .map_err(|_| FormatError::parse(loc, "invalid COUNT"))?
            }
            "POINTS" => {
                declared_points = Some(
                    tok.next()
                        .and_then(|t| t.parse().ok())
                        .ok_or_else(|| FormatError::parse(loc, "invalid POINTS"))?,
                )
            }
            "DATA" => {
                match tok.next() {
                    Some("ascii") => {}
                    Some(other) => {
                        return Err(FormatError::UnsupportedFormat(format!("PCD DATA {other}")))
                    }
                    None => return Err(FormatError::parse(loc, "DATA without a kind")),
                }
                data_seen = true;
                break;
            }
            other => return Err(FormatError::parse(loc, format!("unknown header keyword `{other}`"))),
        }
    }
    if !data_seen {
        return Err(FormatError::parse(Location::Line(1), "missing DATA line"));
    }
    if counts.is_empty() {
        counts = vec![1; fields.len()];
    }
    if counts.len() != fields.len() || counts.iter().any(|&c| c == 0) {
        return Err(FormatError::parse(Location::Line(1), "FIELDS and COUNT disagree"));
    }
    // column offset of each field within a row
    let mut offsets = Vec::with_capacity(fields.len());
    let mut width = 0usize;
    for &c in &counts {
        offsets.push(width);
        width += c;
    }
    let col = |name: &str| fields.iter().position(|f| f == name).map(|i| offsets[i]);
    let (Some(cx), Some(cy), Some(cz)) = (col("x"), col("y"), col("z")) else {
        return Err(FormatError::parse(Location::Line(1), "FIELDS lacks x, y or z"));
    };
    let ci = col("intensity");
    let crgb = col("rgb").or_else(|| col("rgba"));
    let clabel = col("label");

    let mut cloud = PointCloud {
        intensity: ci.map(|_| Vec::new()),
        color: crgb.map(|_| Vec::new()),
        label: clabel.map(|_| Vec::new()),
        ..Default::default()
    };
    let mut dropped = 0;
    let mut rows = 0usize;
    for (i, raw) in lines {
        let loc = Location::Line(i + 1);
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        let toks: Vec<&str> = line.split_whitespace().collect();
        if toks.len() != width {
            return Err(FormatError::parse(
                loc,
                format!("expected {width} values, found {}", toks.len()),
            ));
        }
        let num = |c: usize| -> Result<f64, FormatError> {
            toks[c]
                .parse::<f64>()
                .map_err(|_| FormatError::parse(loc, format!("invalid number `{}`", toks[c])))
        };
        rows += 1;
        let (x, y, z) = (num(cx)?, num(cy)?, num(cz)?);
        if !(x.is_finite() && y.is_finite() && z.is_finite()) {
            dropped += 1;
            continue;
        }
        cloud.points.push(Point3::new(x, y, z));
        if let (Some(v), Some(c)) = (cloud.intensity.as_mut(), ci) {
            v.push(num(c)? as f32);
        }
        if let (Some(v), Some(c)) = (cloud.color.as_mut(), crgb) {
            v.push(unpack_rgb(toks[c]).ok_or_else(|| FormatError::parse(loc, "invalid rgb"))?);
        }
        if let (Some(v), Some(c)) = (cloud.label.as_mut(), clabel) {
            v.push(num(c)?.clamp(0.0, 255.0) as u8);
        }
    }
    if let Some(n) = declared_points {
        if n != rows {
            return Err(FormatError::parse(
                Location::Line(text.lines().count()),
                format!("POINTS declares {n} rows, found {rows}"),
            ));
        }
    }
    Ok(LoadedCloud { cloud, dropped })
}

/// PCL packs RGB into the bit pattern of a float (or writes it as an
/// unsigned integer).
fn unpack_rgb(tok: &str) -> Option<[u8; 3]> {
    let bits = if let Ok(u) = tok.parse::<u32>() {
        u
    } else {
        tok.parse::<f32>().ok()?.to_bits()
    };
    Some([(bits >> 16) as u8, (bits >> 8) as u8, bits as u8])
}

pub fn write_pcd(cloud: &PointCloud) -> String {
    let mut fields = vec!["x", "y", "z"];
    let mut sizes = vec!["8", "8", "8"];
    let mut types = vec!["F", "F", "F"];
    if cloud.intensity.is_some() {
        fields.push("intensity");
        sizes.push("4");
        types.push("F");
    }
    if cloud.color.is_some() {
        fields.push("rgb");
        sizes.push("4");
        types.push("U");
    }
    if cloud.label.is_some() {
        fields.push("label");
        sizes.push("1");
        types.push("U");
    }
    let n = cloud.len();
    let mut out = String::new();
    let _ = writeln!(out, "# .PCD v0.7 - Point Cloud Data file format");
    let _ = writeln!(out, "VERSION 0.7");
    let _ = writeln!(out, "FIELDS {}", fields.join(" "));
    let _ = writeln!(out, "SIZE {}", sizes.join(" "));
    let _ = writeln!(out, "TYPE {}", types.join(" "));
    let _ = writeln!(out, "COUNT {}", vec!["1"; fields.len()].join(" "));
    let _ = writeln!(out, "WIDTH {n}\nHEIGHT 1\nVIEWPOINT 0 0 0 1 0 0 0\nPOINTS {n}\nDATA ascii");
    for (i, p) in cloud.points.iter().enumerate() {
        let _ = write!(out, "{} {} {}", p.x, p.y, p.z);
        if let Some(v) = &cloud.intensity {
            let _ = write!(out, " {}", v[i]);
        }
        if let Some(v) = &cloud.color {
            let packed = (v[i][0] as u32) << 16 | (v[i][1] as u32) << 8 | v[i][2] as u32;
            let _ = write!(out, " {packed}");
        }
        if let Some(v) = &cloud.label {
            let _ = write!(out, " {}", v[i]);
        }
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    const SAMPLE: &str = "# .PCD v0.7\nVERSION 0.7\nFIELDS x y z intensity\nSIZE 4 4 4 4\nTYPE F F F F\nCOUNT 1 1 1 1\nWIDTH 3\nHEIGHT 1\nVIEWPOINT 0 0 0 1 0 0 0\nPOINTS 3\nDATA ascii\n0 0 0 10\n1 2 3 20\nnan nan nan 0\n";

    #[test]
    fn parses_ascii_with_nan() {
        let l = parse_pcd(SAMPLE.as_bytes()).unwrap();
        assert_eq!(l.dropped, 1);
        assert_eq!(l.cloud.points[1], Point3::new(1.0, 2.0, 3.0));
        assert_eq!(l.cloud.intensity, Some(vec![10.0, 20.0]));
    }

    #[test]
    fn packed_float_rgb() {
        let bits: u32 = (10 << 16) | (20 << 8) | 30;
        let f = f32::from_bits(bits);
        assert_eq!(unpack_rgb(&format!("{f:e}")), Some([10, 20, 30]));
        assert_eq!(unpack_rgb(&bits.to_string()), Some([10, 20, 30]));
    }

    #[test]
    fn round_trip() {
        let cloud = PointCloud {
            points: vec![Point3::new(0.1, -2.5, 1e-7), Point3::new(3.0, 4.0, 5.0)],
            intensity: Some(vec![0.25, 1.0]),
            color: Some(vec![[1, 2, 3], [250, 0, 128]]),
            label: Some(vec![0, 1]),
        };
        let back = parse_pcd(write_pcd(&cloud).as_bytes()).unwrap();
        assert_eq!(back.cloud, cloud);
    }

    #[test]
    fn binary_data_unsupported() {
        let text = "VERSION 0.7\nFIELDS x y z\nDATA binary\n";
        assert!(matches!(
            parse_pcd(text.as_bytes()),
            Err(FormatError::UnsupportedFormat(_))
        ));
    }

    #[test]
    fn short_row_is_parse_error() {
        let text = "FIELDS x y z\nPOINTS 1\nDATA ascii\n1 2\n";
        assert!(matches!(
            parse_pcd(text.as_bytes()),
            Err(FormatError::Parse { location: Location::Line(4), .. })
        ));
    }
}
