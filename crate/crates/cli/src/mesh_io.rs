//! PLY, STL and OBJ triangle mesh reading; binary PLY writing.

use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};

use fracmetrics_core::geom::{GeomError, Mesh, Point3};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum MeshError {
    #[error("{}: unsupported mesh format: {detail}", path.display())]
    UnsupportedFormat { path: PathBuf, detail: String },
    #[error("{}: malformed file at byte {offset}: {message}", path.display())]
    Malformed { path: PathBuf, offset: usize, message: String },
    #[error("{}: face {face} references vertex {index} but the mesh has {count} vertices", path.display())]
    IndexOutOfRange { path: PathBuf, face: usize, index: i64, count: usize },
    #[error("{}: invalid mesh: {source}", path.display())]
    Invalid { path: PathBuf, source: GeomError },
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
}

/// Format-specific failure before the path is attached.
#[derive(Debug)]
enum Fault {
    Unsupported(String),
    Malformed(usize, String),
    Index { face: usize, index: i64, count: usize },
}

impl Fault {
    fn at(self, path: &Path) -> MeshError {
        let path = path.to_path_buf();
        match self {
            Fault::Unsupported(detail) => MeshError::UnsupportedFormat { path, detail },
            Fault::Malformed(offset, message) => MeshError::Malformed { path, offset, message },
            Fault::Index { face, index, count } => MeshError::IndexOutOfRange { path, face, index, count },
        }
    }
}

fn malformed<T>(offset: usize, message: impl Into<String>) -> Result<T, Fault> {
    Err(Fault::Malformed(offset, message.into()))
}

type Parsed = (Vec<Point3>, Vec<[usize; 3]>);

/// Reads a mesh, choosing the parser by file extension.
pub fn load_mesh(path: &Path) -> Result<Mesh, MeshError> {
    let ext = path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase).unwrap_or_default();
    let parse: fn(&[u8]) -> Result<Parsed, Fault> = match ext.as_str() {
        "ply" => parse_ply,
        "stl" => parse_stl,
        "obj" => parse_obj,
        _ => {
            return Err(MeshError::UnsupportedFormat {
                path: path.to_path_buf(),
                detail: format!("unknown extension {ext:?} (expected ply, stl or obj)"),
            })
        }
    };
    let bytes = fs::read(path).map_err(|source| MeshError::Io { path: path.to_path_buf(), source })?;
    let (vertices, faces) = parse(&bytes).map_err(|f| f.at(path))?;
    Mesh::new(vertices, faces).map_err(|source| MeshError::Invalid { path: path.to_path_buf(), source })
}

/// Writes binary little-endian PLY with double coordinates, so a reload is exact.
pub fn write_ply(path: &Path, mesh: &Mesh) -> Result<(), MeshError> {
    fs::write(path, ply_bytes(mesh)).map_err(|source| MeshError::Io { path: path.to_path_buf(), source })
}

pub fn ply_bytes(mesh: &Mesh) -> Vec<u8> {
    let header = format!(
        "ply\nformat binary_little_endian 1.0\nelement vertex {}\nproperty double x\nproperty double y\nproperty double z\nelement face {}\nproperty list uchar uint vertex_indices\nend_header\n",
        mesh.vertices.len(),
        mesh.faces.len()
    );
    let mut out = header.into_bytes();
    out.reserve(mesh.vertices.len() * 24 + mesh.faces.len() * 13);
    for v in &mesh.vertices {
        for c in [v.x, v.y, v.z] {
            out.extend_from_slice(&c.to_le_bytes());
        }
    }
    for f in &mesh.faces {
        out.push(3);
        for &i in f {
            out.extend_from_slice(&(i as u32).to_le_bytes());
        }
    }
    out
}

/// Fan-triangulates one polygon, checking indices against `count`.
fn push_polygon(
    faces: &mut Vec<[usize; 3]>,
    face: usize,
    indices: &[i64],
    count: usize,
    offset: usize,
) -> Result<(), Fault> {
    if indices.len() < 3 {
        return malformed(offset, format!("face {face} has {} vertices", indices.len()));
    }
    for &index in indices {
        if index < 0 || index as u64 >= count as u64 {
            return Err(Fault::Index { face, index, count });
        }
    }
    let first = indices[0] as usize;
    for w in indices[1..].windows(2) {
        faces.push([first, w[0] as usize, w[1] as usize]);
    }
    Ok(())
}

// ---------------------------------------------------------------- PLY

#[derive(Debug, Clone, Copy, PartialEq)]
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

#[derive(Debug)]
enum Property {
    Scalar(String, Scalar),
    List(String, Scalar, Scalar),
}

#[derive(Debug)]
struct Element {
    name: String,
    count: usize,
    properties: Vec<Property>,
}

/// Line reader over a byte buffer that tracks offsets.
struct Lines<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Lines<'a> {
    fn next_line(&mut self) -> Option<(usize, &'a str)> {
        if self.pos >= self.bytes.len() {
            return None;
        }
        let start = self.pos;
        let end = self.bytes[start..].iter().position(|&b| b == b'\n').map_or(self.bytes.len(), |k| start + k);
        self.pos = (end + 1).min(self.bytes.len());
        let line = std::str::from_utf8(&self.bytes[start..end]).unwrap_or("\u{fffd}");
        Some((start, line.trim_end_matches('\r')))
    }
}

fn parse_ply(bytes: &[u8]) -> Result<Parsed, Fault> {
    let mut lines = Lines { bytes, pos: 0 };
    match lines.next_line() {
        Some((_, "ply")) => {}
        _ => return malformed(0, "missing 'ply' magic"),
    }
    let mut binary = None;
    let mut elements: Vec<Element> = Vec::new();
    loop {
        let Some((offset, line)) = lines.next_line() else {
            return malformed(bytes.len(), "header has no end_header");
        };
        let words: Vec<&str> = line.split_whitespace().collect();
        match words.as_slice() {
            ["end_header"] => break,
            ["format", "ascii", _] => binary = Some(false),
            ["format", "binary_little_endian", _] => binary = Some(true),
            ["format", other, _] => return Err(Fault::Unsupported(format!("PLY format {other}"))),
            ["comment", ..] | ["obj_info", ..] | [] => {}
            ["element", name, count] => {
                let count = count.parse().or_else(|_| malformed(offset, format!("bad element count {count:?}")))?;
                elements.push(Element { name: name.to_string(), count, properties: Vec::new() });
            }
            ["property", "list", ct, it, name] => {
                let (Some(ct), Some(it)) = (Scalar::parse(ct), Scalar::parse(it)) else {
                    return malformed(offset, format!("unknown list types in {line:?}"));
                };
                let Some(e) = elements.last_mut() else {
                    return malformed(offset, "property before any element");
                };
                e.properties.push(Property::List(name.to_string(), ct, it));
            }
            ["property", ty, name] => {
                let Some(ty) = Scalar::parse(ty) else {
                    return malformed(offset, format!("unknown property type {ty:?}"));
                };
                let Some(e) = elements.last_mut() else {
                    return malformed(offset, "property before any element");
                };
                e.properties.push(Property::Scalar(name.to_string(), ty));
            }
            _ => return malformed(offset, format!("unrecognized header line {line:?}")),
        }
    }
    let Some(binary) = binary else {
        return malformed(0, "header has no format line");
    };

    let vertex_count = elements.iter().find(|e| e.name == "vertex").map_or(0, |e| e.count);
    let mut vertices = Vec::with_capacity(vertex_count);
    let mut faces = Vec::new();
    let mut face_ordinal = 0;
    let mut pos = lines.pos;

    for element in &elements {
        let xyz: Vec<Option<usize>> = ["x", "y", "z"]
            .iter()
            .map(|want| element.properties.iter().position(|p| matches!(p, Property::Scalar(n, _) if n == want)))
            .collect();
        let is_vertex = element.name == "vertex";
        if is_vertex && xyz.iter().any(Option::is_none) {
            return malformed(pos, "vertex element lacks x, y or z");
        }
        let face_list = element
            .properties
            .iter()
            .position(|p| matches!(p, Property::List(n, _, _) if n == "vertex_indices" || n == "vertex_index"));
        let is_face = element.name == "face";
        if is_face && face_list.is_none() {
            return malformed(pos, "face element lacks vertex_indices");
        }

        for _ in 0..element.count {
            let record_start = pos;
            let mut scalars: Vec<f64> = Vec::with_capacity(element.properties.len());
            let mut list: Vec<i64> = Vec::new();
            if binary {
                for (k, prop) in element.properties.iter().enumerate() {
                    match prop {
                        Property::Scalar(_, ty) => {
                            let end = pos + ty.size();
                            if end > bytes.len() {
                                return malformed(pos, format!("truncated {} record", element.name));
                            }
                            scalars.push(ty.read_le(&bytes[pos..end]));
                            pos = end;
                        }
                        Property::List(_, ct, it) => {
                            if pos + ct.size() > bytes.len() {
                                return malformed(pos, format!("truncated {} record", element.name));
                            }
                            let n = ct.read_le(&bytes[pos..pos + ct.size()]);
                            if !(n >= 0.0) {
                                return malformed(pos, "negative list length");
                            }
                            pos += ct.size();
                            let n = n as usize;
                            let end = pos + n * it.size();
                            if end > bytes.len() {
                                return malformed(pos, format!("truncated {} record", element.name));
                            }
                            if Some(k) == face_list {
                                list = (0..n).map(|j| it.read_le(&bytes[pos + j * it.size()..]) as i64).collect();
                            }
                            pos = end;
                            scalars.push(f64::NAN);
                        }
                    }
                }
            } else {
                lines.pos = pos;
                let (offset, line) = loop {
                    match lines.next_line() {
                        Some((_, l)) if l.trim().is_empty() => continue,
                        Some(x) => break x,
                        None => return malformed(bytes.len(), format!("missing {} records", element.name)),
                    }
                };
                pos = lines.pos;
                let mut tokens = line.split_whitespace();
                let mut next = |what: &str| -> Result<f64, Fault> {
                    let t = tokens.next().ok_or_else(|| Fault::Malformed(offset, format!("missing {what}")))?;
                    t.parse::<f64>().map_err(|_| Fault::Malformed(offset, format!("bad number {t:?}")))
                };
                for (k, prop) in element.properties.iter().enumerate() {
                    match prop {
                        Property::Scalar(name, _) => scalars.push(next(name)?),
                        Property::List(name, _, _) => {
                            let n = next(name)?;
                            if !(n >= 0.0 && n.fract() == 0.0) {
                                return malformed(offset, format!("bad list length {n}"));
                            }
                            let items = (0..n as usize).map(|_| next(name)).collect::<Result<Vec<_>, _>>()?;
                            if Some(k) == face_list {
                                if items.iter().any(|v| v.fract() != 0.0) {
                                    return malformed(offset, "non-integer vertex index");
                                }
                                list = items.iter().map(|&v| v as i64).collect();
                            }
                            scalars.push(f64::NAN);
                        }
                    }
                }
            }
            if is_vertex {
                let c = |k: usize| scalars[xyz[k].unwrap_or(0)];
                vertices.push(Point3::xyz(c(0), c(1), c(2)));
            } else if is_face {
                push_polygon(&mut faces, face_ordinal, &list, vertex_count, record_start)?;
                face_ordinal += 1;
            }
        }
    }
    Ok((vertices, faces))
}

// ---------------------------------------------------------------- STL

/// Merges vertices with exactly equal coordinates (`-0.0` equals `0.0`).
struct Welder {
    index: HashMap<[u64; 3], usize>,
    vertices: Vec<Point3>,
}

impl Welder {
    fn new() -> Self {
        Self { index: HashMap::new(), vertices: Vec::new() }
    }

    fn add(&mut self, p: Point3) -> usize {
        let key = [p.x + 0.0, p.y + 0.0, p.z + 0.0].map(f64::to_bits);
        let next = self.vertices.len();
        *self.index.entry(key).or_insert_with(|| {
            self.vertices.push(p);
            next
        })
    }
}

fn parse_stl(bytes: &[u8]) -> Result<Parsed, Fault> {
    if bytes.len() >= 84 {
        let n = u32::from_le_bytes([bytes[80], bytes[81], bytes[82], bytes[83]]) as usize;
        if bytes.len() == 84 + 50 * n {
            return parse_stl_binary(bytes, n);
        }
    }
    let head = &bytes[..bytes.len().min(512)];
    let text = String::from_utf8_lossy(head);
    if text.trim_start().starts_with("solid") {
        return parse_stl_ascii(bytes);
    }
    if bytes.len() >= 84 {
        let n = u32::from_le_bytes([bytes[80], bytes[81], bytes[82], bytes[83]]) as usize;
        return malformed(84, format!("binary STL declares {n} facets but has {} bytes", bytes.len()));
    }
    malformed(0, "neither ASCII nor binary STL")
}

fn parse_stl_binary(bytes: &[u8], n: usize) -> Result<Parsed, Fault> {
    let mut welder = Welder::new();
    let mut faces = Vec::with_capacity(n);
    for f in 0..n {
        let base = 84 + 50 * f + 12;
        let mut tri = [0usize; 3];
        for (k, slot) in tri.iter_mut().enumerate() {
            let o = base + 12 * k;
            let c = |j: usize| Scalar::F32.read_le(&bytes[o + 4 * j..]);
            let p = Point3::xyz(c(0), c(1), c(2));
            if ![p.x, p.y, p.z].iter().all(|v| v.is_finite()) {
                return malformed(o, format!("non-finite coordinate in facet {f}"));
            }
            *slot = welder.add(p);
        }
        faces.push(tri);
    }
    Ok((welder.vertices, faces))
}

fn parse_stl_ascii(bytes: &[u8]) -> Result<Parsed, Fault> {
    let text = std::str::from_utf8(bytes).map_err(|e| Fault::Malformed(e.valid_up_to(), "invalid UTF-8".into()))?;
    let mut tokens =
        text.split_ascii_whitespace().map(|t| (t.as_ptr() as usize - text.as_ptr() as usize, t)).peekable();
    let mut welder = Welder::new();
    let mut faces = Vec::new();
    let mut corner: Vec<usize> = Vec::with_capacity(3);
    let mut in_facet = false;
    while let Some((offset, tok)) = tokens.next() {
        match tok {
            "vertex" => {
                if !in_facet {
                    return malformed(offset, "vertex outside facet");
                }
                let mut c = [0.0; 3];
                for slot in &mut c {
                    let Some((o, t)) = tokens.next() else {
                        return malformed(bytes.len(), "truncated vertex");
                    };
                    *slot = t.parse().or_else(|_| malformed(o, format!("bad number {t:?}")))?;
                }
                corner.push(welder.add(Point3::xyz(c[0], c[1], c[2])));
            }
            "facet" => {
                if in_facet {
                    return malformed(offset, "nested facet");
                }
                in_facet = true;
                corner.clear();
            }
            "endfacet" => {
                if corner.len() != 3 {
                    return malformed(offset, format!("facet {} has {} vertices", faces.len(), corner.len()));
                }
                faces.push([corner[0], corner[1], corner[2]]);
                in_facet = false;
            }
            "solid" | "endsolid" => {
                // the optional name runs to the end of the line
                let line_end = text[offset..].find('\n').map_or(text.len(), |k| offset + k);
                while tokens.peek().is_some_and(|&(o, _)| o < line_end) {
                    tokens.next();
                }
            }
            "normal" | "outer" | "loop" | "endloop" => {}
            t if t.parse::<f64>().is_ok() => {}
            other => return malformed(offset, format!("unexpected token {other:?}")),
        }
    }
    if in_facet {
        return malformed(bytes.len(), "unterminated facet");
    }
    Ok((welder.vertices, faces))
}

// ---------------------------------------------------------------- OBJ

fn parse_obj(bytes: &[u8]) -> Result<Parsed, Fault> {
    let mut lines = Lines { bytes, pos: 0 };
    let mut vertices = Vec::new();
    // faces are resolved after all vertices are known
    let mut polygons: Vec<(usize, Vec<i64>)> = Vec::new();
    while let Some((offset, line)) = lines.next_line() {
        let line = line.split('#').next().unwrap_or("");
        let mut words = line.split_whitespace();
        match words.next() {
            Some("v") => {
                let mut c = [0.0; 3];
                for slot in &mut c {
                    let t = words
                        .next()
                        .ok_or_else(|| Fault::Malformed(offset, "vertex has fewer than 3 coordinates".into()))?;
                    *slot = t.parse().or_else(|_| malformed(offset, format!("bad number {t:?}")))?;
                }
                vertices.push(Point3::xyz(c[0], c[1], c[2]));
            }
            Some("f") => {
                let mut idx = Vec::new();
                for w in words {
                    let head = w.split('/').next().unwrap_or("");
                    let i: i64 = head.parse().or_else(|_| malformed(offset, format!("bad face index {w:?}")))?;
                    let resolved = match i {
                        0 => return malformed(offset, "face index 0 (OBJ indices start at 1)"),
                        i if i > 0 => i - 1,
                        i => vertices.len() as i64 + i,
                    };
                    idx.push(resolved);
                }
                polygons.push((offset, idx));
            }
            _ => {}
        }
    }
    let mut faces = Vec::with_capacity(polygons.len());
    for (face, (offset, idx)) in polygons.iter().enumerate() {
        push_polygon(&mut faces, face, idx, vertices.len(), *offset)?;
    }
    Ok((vertices, faces))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ply_header_errors() {
        assert!(matches!(parse_ply(b"plx\n"), Err(Fault::Malformed(0, _))));
        assert!(matches!(parse_ply(b"ply\nformat binary_big_endian 1.0\nend_header\n"), Err(Fault::Unsupported(_))));
    }

    #[test]
    fn ascii_ply_with_extra_properties() {
        let text = b"ply\nformat ascii 1.0\nelement vertex 3\nproperty float x\nproperty float y\nproperty float z\nproperty uchar red\nelement face 1\nproperty list uchar int vertex_indices\nend_header\n0 0 0 255\n1 0 0 0\n0 1 0 9\n3 0 1 2\n";
        let (v, f) = parse_ply(text).unwrap();
        assert_eq!(v.len(), 3);
        assert_eq!(f, vec![[0, 1, 2]]);
    }

    #[test]
    fn obj_negative_and_slash_indices() {
        let (v, f) = parse_obj(b"v 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\nf 1/1/1 2//2 3 -1\n").unwrap();
        assert_eq!(v.len(), 4);
        assert_eq!(f, vec![[0, 1, 2], [0, 2, 3]]);
    }
}
