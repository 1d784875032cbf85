//! PLY point clouds: ASCII and binary little-endian.
//!
//! Vertex properties `x y z` (float or double) are required; `red green blue`
//! (uchar) and `nx ny nz` (float or double) are optional. Other scalar vertex
//! properties are kept as raw values; other elements are skipped.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use nalgebra::Vector3;

use super::IoError;
use crate::types::PointCloud;

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
    fn parse(s: &str) -> Option<Self> {
        Some(match s {
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

    fn is_float(self) -> bool {
        matches!(self, Scalar::F32 | Scalar::F64)
    }

    fn decode(self, b: &[u8]) -> f64 {
        match self {
            Scalar::I8 => b[0] as i8 as f64,
            Scalar::U8 => b[0] as f64,
            Scalar::I16 => i16::from_le_bytes([b[0], b[1]]) as f64,
            Scalar::U16 => u16::from_le_bytes([b[0], b[1]]) as f64,
            Scalar::I32 => i32::from_le_bytes(b[..4].try_into().unwrap()) as f64,
            Scalar::U32 => u32::from_le_bytes(b[..4].try_into().unwrap()) as f64,
            Scalar::F32 => f32::from_le_bytes(b[..4].try_into().unwrap()) as f64,
            Scalar::F64 => f64::from_le_bytes(b[..8].try_into().unwrap()),
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
pub enum PlyEncoding {
    Ascii,
    BinaryLittleEndian,
}

/// A parsed cloud plus any extra scalar vertex properties, in file order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PlyCloud {
    pub cloud: PointCloud,
    pub extra: BTreeMap<String, Vec<f64>>,
}

struct Header {
    encoding: PlyEncoding,
    elements: Vec<Element>,
    /// Byte offset of the payload.
    body: usize,
    /// 1-based line number of the first payload line.
    body_line: usize,
}

fn header_error(line: usize, reason: impl Into<String>) -> IoError {
    IoError::MalformedHeader {
        line,
        reason: reason.into(),
    }
}

fn parse_header(bytes: &[u8]) -> Result<Header, IoError> {
    let mut pos = 0;
    let mut line_no = 0;
    let mut encoding = None;
    let mut elements: Vec<Element> = Vec::new();
    loop {
        let Some(len) = bytes[pos..].iter().position(|&b| b == b'\n') else {
            return Err(header_error(line_no + 1, "missing end_header"));
        };
        let raw = &bytes[pos..pos + len];
        pos += len + 1;
        line_no += 1;
        let line = std::str::from_utf8(raw)
            .map_err(|_| header_error(line_no, "header is not text"))?
            .trim_end_matches('\r');
        let mut words = line.split_whitespace();
        let keyword = words.next().unwrap_or("");
        if line_no == 1 {
            if line != "ply" {
                return Err(header_error(1, "first line must be `ply`"));
            }
            continue;
        }
        match keyword {
            "" | "comment" | "obj_info" => {}
            "format" => {
                encoding = Some(match words.next() {
                    Some("ascii") => PlyEncoding::Ascii,
                    Some("binary_little_endian") => PlyEncoding::BinaryLittleEndian,
                    Some(other) => {
                        return Err(IoError::UnsupportedFormat {
                            line: line_no,
                            format: other.to_string(),
                        })
                    }
                    None => return Err(header_error(line_no, "format without a value")),
                });
            }
            "element" => {
                let name = words.next().ok_or_else(|| header_error(line_no, "element without a name"))?;
                let count = words
                    .next()
                    .and_then(|c| c.parse().ok())
                    .ok_or_else(|| header_error(line_no, "element count is not a number"))?;
                elements.push(Element {
                    name: name.to_string(),
                    count,
                    props: Vec::new(),
                });
            }
            "property" => {
                let element = elements
                    .last_mut()
                    .ok_or_else(|| header_error(line_no, "property before any element"))?;
                let parts: Vec<&str> = words.collect();
                let unsupported = |ty: &str, name: &str| IoError::UnsupportedProperty {
                    line: line_no,
                    name: name.to_string(),
                    ty: ty.to_string(),
                };
                let prop = match parts.as_slice() {
                    ["list", count, item, name] => {
                        let c = Scalar::parse(count).ok_or_else(|| unsupported(count, name))?;
                        let i = Scalar::parse(item).ok_or_else(|| unsupported(item, name))?;
                        if c.is_float() {
                            return Err(unsupported(count, name));
                        }
                        if element.name == "vertex" {
                            return Err(unsupported("list", name));
                        }
                        Property::List { count: c, item: i }
                    }
                    [ty, name] => Property::Scalar {
                        name: name.to_string(),
                        ty: Scalar::parse(ty).ok_or_else(|| unsupported(ty, name))?,
                    },
                    _ => return Err(header_error(line_no, "malformed property line")),
                };
                element.props.push(prop);
            }
            "end_header" => break,
            other => return Err(header_error(line_no, format!("unknown keyword `{other}`"))),
        }
    }
    let encoding = encoding.ok_or_else(|| header_error(line_no, "missing format line"))?;
    Ok(Header {
        encoding,
        elements,
        body: pos,
        body_line: line_no + 1,
    })
}

/// Column roles inside the vertex element.
struct Layout {
    xyz: [usize; 3],
    rgb: Option<[usize; 3]>,
    normal: Option<[usize; 3]>,
    extra: Vec<(String, usize)>,
}

fn vertex_layout(vertex: &Element, header_line: usize) -> Result<Layout, IoError> {
    let find = |name: &str| {
        vertex.props.iter().position(|p| matches!(p, Property::Scalar { name: n, .. } if n == name))
    };
    let ty_of = |i: usize| match &vertex.props[i] {
        Property::Scalar { ty, .. } => *ty,
        Property::List { .. } => unreachable!(),
    };
    let unsupported = |name: &str, ty: Scalar| IoError::UnsupportedProperty {
        line: header_line,
        name: name.to_string(),
        ty: format!("{ty:?}").to_lowercase(),
    };
    let triple = |names: [&str; 3], float: bool| -> Result<Option<[usize; 3]>, IoError> {
        let found = names.map(find);
        if found.iter().all(|f| f.is_none()) {
            return Ok(None);
        }
        let mut out = [0; 3];
        for (k, name) in names.iter().enumerate() {
            let i = found[k].ok_or_else(|| header_error(header_line, format!("property {name} is missing")))?;
            let ty = ty_of(i);
            if float != ty.is_float() || (!float && ty != Scalar::U8) {
                return Err(unsupported(name, ty));
            }
            out[k] = i;
        }
        Ok(Some(out))
    };
    let xyz = triple(["x", "y", "z"], true)?
        .ok_or_else(|| header_error(header_line, "vertex element has no x/y/z"))?;
    let rgb = triple(["red", "green", "blue"], false)?;
    let normal = triple(["nx", "ny", "nz"], true)?;
    let used: Vec<usize> = xyz
        .iter()
        .chain(rgb.iter().flatten())
        .chain(normal.iter().flatten())
        .copied()
        .collect();
    let extra = vertex
        .props
        .iter()
        .enumerate()
        .filter(|(i, _)| !used.contains(i))
        .filter_map(|(i, p)| match p {
            Property::Scalar { name, .. } => Some((name.clone(), i)),
            Property::List { .. } => None,
        })
        .collect();
    Ok(Layout {
        xyz,
        rgb,
        normal,
        extra,
    })
}

struct Sink {
    layout: Layout,
    out: PlyCloud,
}

impl Sink {
    fn new(layout: Layout, n: usize) -> Self {
        let out = PlyCloud {
            cloud: PointCloud {
                positions: Vec::with_capacity(n),
                colors: layout.rgb.map(|_| Vec::with_capacity(n)),
                normals: layout.normal.map(|_| Vec::with_capacity(n)),
                covariances: None,
            },
            extra: layout
                .extra
                .iter()
                .map(|(name, _)| (name.clone(), Vec::with_capacity(n)))
                .collect(),
        };
        Self { layout, out }
    }

    fn push(&mut self, values: &[f64]) {
        let v = |idx: [usize; 3]| Vector3::new(values[idx[0]], values[idx[1]], values[idx[2]]);
        self.out.cloud.positions.push(v(self.layout.xyz));
        if let (Some(idx), Some(c)) = (self.layout.rgb, self.out.cloud.colors.as_mut()) {
            c.push(v(idx) / 255.0);
        }
        if let (Some(idx), Some(n)) = (self.layout.normal, self.out.cloud.normals.as_mut()) {
            n.push(v(idx));
        }
        for (name, i) in &self.layout.extra {
            self.out.extra.get_mut(name).expect("registered").push(values[*i]);
        }
    }
}

/// Parses a whole PLY stream.
pub fn read_ply<R: Read>(mut reader: R) -> Result<PlyCloud, IoError> {
    let mut bytes = Vec::new();
    reader.read_to_end(&mut bytes)?;
    parse_ply(&bytes)
}

pub fn parse_ply(bytes: &[u8]) -> Result<PlyCloud, IoError> {
    let header = parse_header(bytes)?;
    let vertex_at = header
        .elements
        .iter()
        .position(|e| e.name == "vertex")
        .ok_or_else(|| header_error(header.body_line - 1, "no vertex element"))?;
    let vertex = &header.elements[vertex_at];
    let mut sink = Sink::new(vertex_layout(vertex, header.body_line - 1)?, vertex.count);
    match header.encoding {
        PlyEncoding::Ascii => read_ascii(bytes, &header, vertex_at, &mut sink)?,
        PlyEncoding::BinaryLittleEndian => read_binary(bytes, &header, vertex_at, &mut sink)?,
    }
    Ok(sink.out)
}

fn read_ascii(bytes: &[u8], header: &Header, vertex_at: usize, sink: &mut Sink) -> Result<(), IoError> {
    let mut pos = header.body;
    let mut line_no = header.body_line - 1;
    let mut values = Vec::new();
    for element in &header.elements[..=vertex_at] {
        for _ in 0..element.count {
            let line = loop {
                if pos >= bytes.len() {
                    return Err(IoError::Truncated { offset: pos as u64 });
                }
                let len = bytes[pos..].iter().position(|&b| b == b'\n').unwrap_or(bytes.len() - pos);
                let raw = &bytes[pos..pos + len];
                pos += len + 1;
                line_no += 1;
                let text = std::str::from_utf8(raw).map_err(|_| IoError::BadRecord {
                    line: line_no,
                    reason: "not text".into(),
                })?;
                if !text.trim().is_empty() {
                    break text;
                }
            };
            if element.name != "vertex" {
                continue;
            }
            let bad = |reason: String| IoError::BadRecord { line: line_no, reason };
            values.clear();
            for token in line.split_whitespace() {
                values.push(token.parse::<f64>().map_err(|_| bad(format!("`{token}` is not a number")))?);
            }
            if values.len() != element.props.len() {
                return Err(bad(format!(
                    "expected {} values, found {}",
                    element.props.len(),
                    values.len()
                )));
            }
            sink.push(&values);
        }
    }
    Ok(())
}

fn read_binary(bytes: &[u8], header: &Header, vertex_at: usize, sink: &mut Sink) -> Result<(), IoError> {
    let mut pos = header.body;
    let take = |pos: &mut usize, n: usize| -> Result<&[u8], IoError> {
        let end = *pos + n;
        if end > bytes.len() {
            return Err(IoError::Truncated { offset: *pos as u64 });
        }
        let out = &bytes[*pos..end];
        *pos = end;
        Ok(out)
    };
    let mut values = Vec::new();
    for element in &header.elements[..=vertex_at] {
        let is_vertex = element.name == "vertex";
        for _ in 0..element.count {
            values.clear();
            for prop in &element.props {
                match prop {
                    Property::Scalar { ty, .. } => {
                        let v = ty.decode(take(&mut pos, ty.size())?);
                        if is_vertex {
                            values.push(v);
                        }
                    }
                    Property::List { count, item } => {
                        let n = count.decode(take(&mut pos, count.size())?);
                        take(&mut pos, n as usize * item.size())?;
                    }
                }
            }
            if is_vertex {
                sink.push(&values);
            }
        }
    }
    Ok(())
}

/// Writes `x y z` as doubles, then colors (uchar) and normals (double) when
/// present, then an optional per-vertex uchar flag.
pub fn write_ply<W: Write>(
    mut w: W,
    cloud: &PointCloud,
    encoding: PlyEncoding,
    flag: Option<(&str, &[bool])>,
) -> Result<(), IoError> {
    let n = cloud.len();
    if cloud.colors.as_ref().is_some_and(|c| c.len() != n)
        || cloud.normals.as_ref().is_some_and(|c| c.len() != n)
        || flag.is_some_and(|(_, f)| f.len() != n)
    {
        return Err(IoError::Inconsistent("per-point attribute length differs from the point count"));
    }
    let format = match encoding {
        PlyEncoding::Ascii => "ascii",
        PlyEncoding::BinaryLittleEndian => "binary_little_endian",
    };
    writeln!(w, "ply\nformat {format} 1.0\nelement vertex {n}")?;
    writeln!(w, "property double x\nproperty double y\nproperty double z")?;
    if cloud.colors.is_some() {
        writeln!(w, "property uchar red\nproperty uchar green\nproperty uchar blue")?;
    }
    if cloud.normals.is_some() {
        writeln!(w, "property double nx\nproperty double ny\nproperty double nz")?;
    }
    if let Some((name, _)) = flag {
        writeln!(w, "property uchar {name}")?;
    }
    writeln!(w, "end_header")?;
    let to_u8 = |c: f64| (c * 255.0).round().clamp(0.0, 255.0) as u8;
    for i in 0..n {
        let p = cloud.positions[i];
        let rgb = cloud.colors.as_ref().map(|c| c[i].map(to_u8));
        let normal = cloud.normals.as_ref().map(|c| c[i]);
        let f = flag.map(|(_, f)| f[i] as u8);
        match encoding {
            PlyEncoding::Ascii => {
                write!(w, "{} {} {}", p.x, p.y, p.z)?;
                if let Some(c) = rgb {
                    write!(w, " {} {} {}", c.x, c.y, c.z)?;
                }
                if let Some(v) = normal {
                    write!(w, " {} {} {}", v.x, v.y, v.z)?;
                }
                if let Some(f) = f {
                    write!(w, " {f}")?;
                }
                writeln!(w)?;
            }
            PlyEncoding::BinaryLittleEndian => {
                for c in p.iter() {
                    w.write_all(&c.to_le_bytes())?;
                }
                if let Some(c) = rgb {
                    w.write_all(&[c.x, c.y, c.z])?;
                }
                if let Some(v) = normal {
                    for c in v.iter() {
                        w.write_all(&c.to_le_bytes())?;
                    }
                }
                if let Some(f) = f {
                    w.write_all(&[f])?;
                }
            }
        }
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    const TRIANGLE: &str = "ply\nformat ascii 1.0\ncomment three points\nelement vertex 3\n\
        property float x\nproperty float y\nproperty float z\nend_header\n\
        0 0 0\n1 0 0\n0 1 0.5\n";

    #[test]
    fn ascii_vertices_in_file_order() {
        let p = parse_ply(TRIANGLE.as_bytes()).unwrap();
        assert_eq!(p.cloud.positions.len(), 3);
        assert_eq!(p.cloud.positions[1], Vector3::new(1.0, 0.0, 0.0));
        assert_eq!(p.cloud.positions[2], Vector3::new(0.0, 1.0, 0.5));
        assert!(p.cloud.colors.is_none());
    }

    #[test]
    fn colors_normals_and_unknown_properties() {
        let text = "ply\nformat ascii 1.0\nelement vertex 2\nproperty double x\nproperty double y\n\
            property double z\nproperty float confidence\nproperty uchar red\nproperty uchar green\n\
            property uchar blue\nproperty float nx\nproperty float ny\nproperty float nz\n\
            element face 1\nproperty list uchar int vertex_indices\nend_header\n\
            1 2 3 0.5 255 0 51 0 0 1\n4 5 6 0.25 0 255 0 1 0 0\n3 0 1 1\n";
        let p = parse_ply(text.as_bytes()).unwrap();
        let colors = p.cloud.colors.unwrap();
        assert_eq!(colors[0], Vector3::new(1.0, 0.0, 0.2));
        assert_eq!(p.cloud.normals.unwrap()[1], Vector3::new(1.0, 0.0, 0.0));
        assert_eq!(p.extra["confidence"], vec![0.5, 0.25]);
    }

    #[test]
    fn binary_skips_leading_elements_with_lists() {
        let mut bytes = b"ply\nformat binary_little_endian 1.0\nelement camera 2\nproperty list uchar float k\n\
            element vertex 1\nproperty float x\nproperty float y\nproperty float z\nend_header\n"
            .to_vec();
        bytes.extend([2u8]);
        bytes.extend(1f32.to_le_bytes());
        bytes.extend(2f32.to_le_bytes());
        bytes.extend([0u8]);
        for c in [1.5f32, -2.0, 0.25] {
            bytes.extend(c.to_le_bytes());
        }
        let p = parse_ply(&bytes).unwrap();
        assert_eq!(p.cloud.positions, vec![Vector3::new(1.5, -2.0, 0.25)]);
    }

    #[test]
    fn errors_are_distinct_and_located() {
        let e = parse_ply(b"ply\nformat ascii 1.0\nelement vertex 1\nproperty float x\n").unwrap_err();
        assert!(matches!(e, IoError::MalformedHeader { .. }));

        let e = parse_ply(b"ply\nformat binary_big_endian 1.0\nend_header\n").unwrap_err();
        assert!(matches!(e, IoError::UnsupportedFormat { line: 2, .. }));

        let text = "ply\nformat ascii 1.0\nelement vertex 1\nproperty int x\nproperty int y\n\
            property int z\nend_header\n1 2 3\n";
        let e = parse_ply(text.as_bytes()).unwrap_err();
        assert!(matches!(e, IoError::UnsupportedProperty { ref name, .. } if name == "x"));

        let text = "ply\nformat ascii 1.0\nelement vertex 1\nproperty float x\nproperty float y\n\
            property float z\nproperty float16 w\nend_header\n";
        assert!(matches!(parse_ply(text.as_bytes()).unwrap_err(), IoError::UnsupportedProperty { line: 7, .. }));

        let e = parse_ply(TRIANGLE.replace("0 1 0.5\n", "").as_bytes()).unwrap_err();
        assert_eq!(e.to_string(), IoError::Truncated { offset: TRIANGLE.len() as u64 - 8 }.to_string());

        let e = parse_ply(TRIANGLE.replace("1 0 0", "1 zero 0").as_bytes()).unwrap_err();
        assert!(matches!(e, IoError::BadRecord { line: 10, .. }));

        let mut cut = Vec::new();
        write_ply(&mut cut, &PointCloud::from_positions(vec![Vector3::zeros(); 2]), PlyEncoding::BinaryLittleEndian, None)
            .unwrap();
        let header_len = cut.len() - 48;
        cut.truncate(cut.len() - 3);
        let e = parse_ply(&cut).unwrap_err();
        assert!(matches!(e, IoError::Truncated { offset } if offset == header_len as u64 + 40));
    }

    #[test]
    fn both_encodings_round_trip_exactly() {
        let positions = vec![
            Vector3::new(0.1, -1e-300, 3.0e12),
            Vector3::new(f64::MIN_POSITIVE, 1.0 / 3.0, -0.0),
        ];
        let cloud = PointCloud {
            colors: Some(vec![Vector3::new(1.0, 0.0, 128.0 / 255.0), Vector3::new(0.2, 0.4, 0.6)]),
            normals: Some(vec![Vector3::z(), Vector3::new(0.6, 0.8, 0.0)]),
            ..PointCloud::from_positions(positions)
        };
        for encoding in [PlyEncoding::Ascii, PlyEncoding::BinaryLittleEndian] {
            let mut buf = Vec::new();
            write_ply(&mut buf, &cloud, encoding, Some(("is_new", &[false, true]))).unwrap();
            let back = parse_ply(&buf).unwrap();
            assert_eq!(back.cloud, cloud);
            assert_eq!(back.extra["is_new"], vec![0.0, 1.0]);
        }
    }
}
