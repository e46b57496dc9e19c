use std::fmt::Write as _;

use super::{FormatError, LoadedCloud, Location};
use crate::cloud::PointCloud;
use crate::geometry::Point3;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlyEncoding {
    Ascii,
    BinaryLittleEndian,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Scalar {
    I8,
    U8,
    I16,
    U16,
    I32,
    U32,
    F32,
    F64,
}

impl Scalar {
    fn parse(name: &str) -> Option<Self> {
        Some(match name {
            "char" | "int8" => Scalar::I8,
            "uchar" | "uint8" => Scalar::U8,
            "short" | "int16" => Scalar::I16,
            "ushort" | "uint16" => Scalar::U16,
            "int" | "int32" => Scalar::I32,
            "uint" | "uint32" => Scalar::U32,
            "float" | "float32" => Scalar::F32,
            "double" | "float64" => Scalar::F64,
            _ => return None,
        })
    }

    fn size(self) -> usize {
        match self {
            Scalar::I8 | Scalar::U8 => 1,
            Scalar::I16 | Scalar::U16 => 2,
            Scalar::I32 | Scalar::U32 | Scalar::F32 => 4,
            Scalar::F64 => 8,
        }
    }

    fn read_le(self, b: &[u8]) -> f64 {
        match self {
            Scalar::I8 => b[0] as i8 as f64,
            Scalar::U8 => b[0] as f64,
            Scalar::I16 => i16::from_le_bytes([b[0], b[1]]) as f64,
            Scalar::U16 => u16::from_le_bytes([b[0], b[1]]) as f64,
            Scalar::I32 => i32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64,
            Scalar::U32 => u32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64,
            Scalar::F32 => f32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64,
            Scalar::F64 => f64::from_le_bytes([b[0], b[1], b[2], b[3], b[4], b[5], b[6], b[7]]),
        }
    }
}

#[derive(Debug, Clone)]
enum Property {
    Scalar { name: String, ty: Scalar },
    List { count: Scalar, item: Scalar },
}

#[derive(Debug, Clone)]
struct Element {
    name: String,
    count: usize,
    props: Vec<Property>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Format {
    Ascii,
    BinaryLe,
}

/// Column indices of the vertex properties we understand.
#[derive(Debug, Default)]
struct VertexLayout {
    xyz: [usize; 3],
    intensity: Option<usize>,
    rgb: Option<[usize; 3]>,
    label: Option<usize>,
}

impl VertexLayout {
    fn resolve(props: &[Property]) -> Result<Self, String> {
        let find = |names: &[&str]| {
            props.iter().position(|p| {
                matches!(p, Property::Scalar { name, .. } if names.contains(&name.as_str()))
            })
        };
        let x = find(&["x"]).ok_or("vertex element lacks `x`")?;
        let y = find(&["y"]).ok_or("vertex element lacks `y`")?;
        let z = find(&["z"]).ok_or("vertex element lacks `z`")?;
        let rgb = match (
            find(&["red", "diffuse_red", "r"]),
            find(&["green", "diffuse_green", "g"]),
            find(&["blue", "diffuse_blue", "b"]),
        ) {
            (Some(r), Some(g), Some(b)) => Some([r, g, b]),
            _ => None,
        };
        Ok(Self {
            xyz: [x, y, z],
            intensity: find(&["intensity", "scalar_intensity", "scalar_Intensity"]),
            rgb,
            label: find(&["label", "scalar_label"]),
        })
    }
}

struct Header {
    format: Format,
    elements: Vec<Element>,
    body_offset: usize,
    body_line: usize,
}

fn parse_header(bytes: &[u8]) -> Result<Header, FormatError> {
    let mut pos = 0usize;
    let mut line_no = 0usize;
    let mut format = None;
    let mut elements: Vec<Element> = Vec::new();
    loop {
        let rest = &bytes[pos..];
        let Some(nl) = rest.iter().position(|&b| b == b'\n') else {
            return Err(FormatError::parse(
                Location::Line(line_no + 1),
                "header not terminated by end_header",
            ));
        };
        line_no += 1;
        let loc = Location::Line(line_no);
        let line = std::str::from_utf8(&rest[..nl])
            .map_err(|_| FormatError::parse(loc, "header is not valid UTF-8"))?
            .trim_end_matches('\r')
            .trim();
        pos += nl + 1;
        let mut tok = line.split_whitespace();
        let Some(kw) = tok.next() else { continue };
        match (line_no, kw) {
            (1, "ply") => {}
            (1, _) => return Err(FormatError::parse(loc, "missing `ply` magic")),
            (_, "comment") | (_, "obj_info") => {}
            (_, "format") => {
                format = Some(match tok.next() {
                    Some("ascii") => Format::Ascii,
                    Some("binary_little_endian") => Format::BinaryLe,
                    Some(other) => {
                        return Err(FormatError::UnsupportedFormat(format!("PLY format `{other}`")))
                    }
                    None => return Err(FormatError::parse(loc, "format line lacks a type")),
                });
            }
            (_, "element") => {
                let name = tok
                    .next()
                    .ok_or_else(|| FormatError::parse(loc, "element without a name"))?;
                let count = tok
                    .next()
                    .and_then(|c| c.parse::<usize>().ok())
                    .ok_or_else(|| FormatError::parse(loc, "element without a valid count"))?;
                elements.push(Element {
                    name: name.to_string(),
                    count,
                    props: Vec::new(),
                });
            }
            (_, "property") => {
                let el = elements
                    .last_mut()
                    .ok_or_else(|| FormatError::parse(loc, "property before any element"))?;
                let t = tok
                    .next()
                    .ok_or_else(|| FormatError::parse(loc, "property without a type"))?;
                let prop = if t == "list" {
                    let count = tok.next().and_then(Scalar::parse);
                    let item = tok.next().and_then(Scalar::parse);
                    match (count, item, tok.next()) {
                        (Some(count), Some(item), Some(_)) => Property::List { count, item },
                        _ => return Err(FormatError::parse(loc, "malformed list property")),
                    }
                } else {
                    let ty = Scalar::parse(t)
                        .ok_or_else(|| FormatError::parse(loc, format!("unknown type `{t}`")))?;
                    let name = tok
                        .next()
                        .ok_or_else(|| FormatError::parse(loc, "property without a name"))?;
                    Property::Scalar {
                        name: name.to_string(),
                        ty,
                    }
                };
                el.props.push(prop);
            }
            (_, "end_header") => break,
            (_, other) => {
                return Err(FormatError::parse(loc, format!("unknown header keyword `{other}`")))
            }
        }
    }
    let format = format.ok_or_else(|| {
        FormatError::parse(Location::Line(line_no), "header lacks a format line")
    })?;
    Ok(Header {
        format,
        elements,
        body_offset: pos,
        body_line: line_no,
    })
}

/// Parses an ASCII or binary little-endian PLY file. Non-finite vertices
/// are dropped and counted.
pub fn parse_ply(bytes: &[u8]) -> Result<LoadedCloud, FormatError> {
    let header = parse_header(bytes)?;
    let vertex_idx = header
        .elements
        .iter()
        .position(|e| e.name == "vertex")
        .ok_or_else(|| FormatError::parse(Location::Line(header.body_line), "no vertex element"))?;
    let layout = VertexLayout::resolve(&header.elements[vertex_idx].props)
        .map_err(|m| FormatError::parse(Location::Line(header.body_line), m))?;
    let body = &bytes[header.body_offset..];
    let mut rows: Vec<Vec<f64>> = Vec::new();
    match header.format {
        Format::Ascii => read_ascii(body, &header, vertex_idx, &mut rows)?,
        Format::BinaryLe => read_binary(body, &header, vertex_idx, &mut rows)?,
    }
    Ok(assemble(rows, &layout))
}

fn read_ascii(
    body: &[u8],
    header: &Header,
    vertex_idx: usize,
    rows: &mut Vec<Vec<f64>>,
) -> Result<(), FormatError> {
    let text = std::str::from_utf8(body).map_err(|e| {
        FormatError::parse(Location::Byte(header.body_offset + e.valid_up_to()), "invalid UTF-8")
    })?;
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (header.body_line + i + 1, l))
        .filter(|(_, l)| !l.trim().is_empty());
    for (ei, el) in header.elements.iter().enumerate() {
        for _ in 0..el.count {
            let (line_no, line) = lines.next().ok_or_else(|| {
                FormatError::parse(
                    Location::Line(header.body_line + 1),
                    format!("unexpected end of data in element `{}`", el.name),
                )
            })?;
            let loc = Location::Line(line_no);
            let mut tok = line.split_whitespace();
            let mut next = || -> Result<f64, FormatError> {
                let t = tok
                    .next()
                    .ok_or_else(|| FormatError::parse(loc, "too few values"))?;
                t.parse::<f64>()
                    .map_err(|_| FormatError::parse(loc, format!("invalid number `{t}`")))
            };
            let mut row = Vec::with_capacity(el.props.len());
            for p in &el.props {
                match p {
                    Property::Scalar { .. } => row.push(next()?),
                    Property::List { .. } => {
                        let n = next()?;
                        if !(n >= 0.0 && n.fract() == 0.0 && n < 1e9) {
                            return Err(FormatError::parse(loc, "invalid list length"));
                        }
                        for _ in 0..n as usize {
                            next()?;
                        }
                        row.push(f64::NAN);
                    }
                }
            }
            if ei == vertex_idx {
                rows.push(row);
            }
        }
    }
    Ok(())
}

fn read_binary(
    body: &[u8],
    header: &Header,
    vertex_idx: usize,
    rows: &mut Vec<Vec<f64>>,
) -> Result<(), FormatError> {
    let mut pos = 0usize;
    let take = |pos: &mut usize, n: usize| -> Result<&[u8], FormatError> {
        let end = pos.checked_add(n).filter(|&e| e <= body.len()).ok_or_else(|| {
            FormatError::parse(Location::Byte(header.body_offset + *pos), "unexpected end of data")
        })?;
        let s = &body[*pos..end];
        *pos = end;
        Ok(s)
    };
    for (ei, el) in header.elements.iter().enumerate() {
        if el.props.is_empty() {
            continue;
        }
        if ei == vertex_idx {
            let row_size: usize = el
                .props
                .iter()
                .map(|p| match p {
                    Property::Scalar { ty, .. } => ty.size(),
                    Property::List { .. } => usize::MAX,
                })
                .fold(0usize, |a, b| a.saturating_add(b));
            // guard against absurd counts before allocating
            if row_size != usize::MAX
                && el.count.saturating_mul(row_size) > body.len().saturating_sub(pos)
            {
                return Err(FormatError::parse(
                    Location::Byte(header.body_offset + pos),
                    "vertex data shorter than declared count",
                ));
            }
            rows.reserve(el.count.min(body.len()));
        }
        for _ in 0..el.count {
            let mut row = Vec::new();
            for p in &el.props {
                match p {
                    Property::Scalar { ty, .. } => {
                        let b = take(&mut pos, ty.size())?;
                        row.push(ty.read_le(b));
                    }
                    Property::List { count, item } => {
                        let at = pos;
                        let n = count.read_le(take(&mut pos, count.size())?);
                        if !(n >= 0.0 && n.fract() == 0.0) {
                            return Err(FormatError::parse(
                                Location::Byte(header.body_offset + at),
                                "invalid list length",
                            ));
                        }
                        let len = (n as usize).checked_mul(item.size()).ok_or_else(|| {
                            FormatError::parse(
                                Location::Byte(header.body_offset + at),
                                "list too long",
                            )
                        })?;
                        take(&mut pos, len)?;
                        row.push(f64::NAN);
                    }
                }
            }
            if ei == vertex_idx {
                rows.push(row);
            }
        }
    }
    Ok(())
}

fn assemble(rows: Vec<Vec<f64>>, layout: &VertexLayout) -> LoadedCloud {
    let mut cloud = PointCloud::default();
    let mut intensity = layout.intensity.map(|_| Vec::with_capacity(rows.len()));
    let mut color = layout.rgb.map(|_| Vec::with_capacity(rows.len()));
    let mut label = layout.label.map(|_| Vec::with_capacity(rows.len()));
    let mut dropped = 0;
    for row in rows {
        let [x, y, z] = layout.xyz.map(|i| row[i]);
        if !(x.is_finite() && y.is_finite() && z.is_finite()) {
            dropped += 1;
            continue;
        }
        cloud.points.push(Point3::new(x, y, z));
        if let (Some(v), Some(i)) = (intensity.as_mut(), layout.intensity) {
            v.push(row[i] as f32);
        }
        if let (Some(v), Some(idx)) = (color.as_mut(), layout.rgb) {
            v.push(idx.map(|i| row[i].clamp(0.0, 255.0) as u8));
        }
        if let (Some(v), Some(i)) = (label.as_mut(), layout.label) {
            v.push(row[i].clamp(0.0, 255.0) as u8);
        }
    }
    cloud.intensity = intensity;
    cloud.color = color;
    cloud.label = label;
    LoadedCloud { cloud, dropped }
}

/// Serializes a cloud; coordinates as `double`, intensity as `float`,
/// colors and labels as `uchar`.
pub fn write_ply(cloud: &PointCloud, encoding: PlyEncoding) -> Vec<u8> {
    let mut header = String::from("ply\n");
    header.push_str(match encoding {
        PlyEncoding::Ascii => "format ascii 1.0\n",
        PlyEncoding::BinaryLittleEndian => "format binary_little_endian 1.0\n",
    });
    let _ = writeln!(header, "element vertex {}", cloud.len());
    header.push_str("property double x\nproperty double y\nproperty double z\n");
    if cloud.intensity.is_some() {
        header.push_str("property float intensity\n");
    }
    if cloud.color.is_some() {
        header.push_str("property uchar red\nproperty uchar green\nproperty uchar blue\n");
    }
    if cloud.label.is_some() {
        header.push_str("property uchar label\n");
    }
    header.push_str("end_header\n");
    let mut out = header.into_bytes();
    for (i, p) in cloud.points.iter().enumerate() {
        match encoding {
            PlyEncoding::Ascii => {
                let mut line = format!("{} {} {}", p.x, p.y, p.z);
                if let Some(v) = &cloud.intensity {
                    let _ = write!(line, " {}", v[i]);
                }
                if let Some(v) = &cloud.color {
                    let _ = write!(line, " {} {} {}", v[i][0], v[i][1], v[i][2]);
                }
                if let Some(v) = &cloud.label {
                    let _ = write!(line, " {}", v[i]);
                }
                line.push('\n');
                out.extend_from_slice(line.as_bytes());
            }
            PlyEncoding::BinaryLittleEndian => {
                for c in [p.x, p.y, p.z] {
                    out.extend_from_slice(&c.to_le_bytes());
                }
                if let Some(v) = &cloud.intensity {
                    out.extend_from_slice(&v[i].to_le_bytes());
                }
                if let Some(v) = &cloud.color {
                    out.extend_from_slice(&v[i]);
                }
                if let Some(v) = &cloud.label {
                    out.push(v[i]);
                }
            }
        }
    }
    out
}
