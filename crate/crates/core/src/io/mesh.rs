use std::fmt::Write as _;
use std::path::Path;

use nalgebra::Vector3;

use super::{read_bytes, write_bytes};
use crate::error::{Error, Result};
use crate::model::TriMesh;

/// Parses `v` and `f` records of ASCII OBJ (1-based or negative relative
/// indices, `v/vt/vn` tokens allowed). Polygons are fan-triangulated.
pub fn parse_obj(text: &str) -> Result<TriMesh> {
    let mut vertices = Vec::new();
    let mut trilist = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let bad = |msg: String| Error::format("OBJ", format!("line {}: {msg}", lineno + 1));
        let mut tokens = line.split_whitespace();
        match tokens.next() {
            Some("v") => {
                let xyz: Vec<f64> = tokens
                    .take(3)
                    .map(|t| t.parse::<f64>().map_err(|e| bad(format!("'{t}': {e}"))))
                    .collect::<Result<_>>()?;
                if xyz.len() != 3 {
                    return Err(bad("vertex needs three coordinates".into()));
                }
                vertices.push(Vector3::new(xyz[0], xyz[1], xyz[2]));
            }
            Some("f") => {
                let n = vertices.len() as i64;
                let ids: Vec<usize> = tokens
                    .map(|t| {
                        let head = t.split('/').next().unwrap_or("");
                        let i: i64 = head.parse().map_err(|e| bad(format!("'{t}': {e}")))?;
                        let idx = if i > 0 { i - 1 } else { n + i };
                        if i == 0 || idx < 0 || idx >= n {
                            return Err(bad(format!("index {i} out of range for {n} vertices")));
                        }
                        Ok(idx as usize)
                    })
                    .collect::<Result<_>>()?;
                if ids.len() < 3 {
                    return Err(bad("face needs at least three vertices".into()));
                }
                for k in 1..ids.len() - 1 {
                    trilist.push([ids[0], ids[k], ids[k + 1]]);
                }
            }
            _ => {}
        }
    }
    TriMesh::new(vertices, trilist)
}

pub fn read_obj(path: &Path) -> Result<TriMesh> {
    let bytes = read_bytes(path)?;
    let text = std::str::from_utf8(&bytes).map_err(|e| Error::format("OBJ", e.to_string()))?;
    parse_obj(text).map_err(|e| with_path(e, path))
}

pub fn write_obj(path: &Path, mesh: &TriMesh) -> Result<()> {
    let mut text = String::new();
    for v in mesh.vertices() {
        writeln!(text, "v {} {} {}", v.x, v.y, v.z).expect("writing to a String");
    }
    for t in mesh.trilist() {
        writeln!(text, "f {} {} {}", t[0] + 1, t[1] + 1, t[2] + 1).expect("writing to a String");
    }
    write_bytes(path, text.as_bytes())
}

#[derive(Debug, Clone, Copy)]
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
            "char" | "int8" => Self::I8,
            "uchar" | "uint8" => Self::U8,
            "short" | "int16" => Self::I16,
            "ushort" | "uint16" => Self::U16,
            "int" | "int32" => Self::I32,
            "uint" | "uint32" => Self::U32,
            "float" | "float32" => Self::F32,
            "double" | "float64" => Self::F64,
            _ => return None,
        })
    }

    fn size(self) -> usize {
        match self {
            Self::I8 | Self::U8 => 1,
            Self::I16 | Self::U16 => 2,
            Self::I32 | Self::U32 | Self::F32 => 4,
            Self::F64 => 8,
        }
    }

    fn read(self, b: &[u8]) -> f64 {
        match self {
            Self::I8 => f64::from(b[0] as i8),
            Self::U8 => f64::from(b[0]),
            Self::I16 => f64::from(i16::from_le_bytes([b[0], b[1]])),
            Self::U16 => f64::from(u16::from_le_bytes([b[0], b[1]])),
            Self::I32 => f64::from(i32::from_le_bytes(b[..4].try_into().unwrap())),
            Self::U32 => f64::from(u32::from_le_bytes(b[..4].try_into().unwrap())),
            Self::F32 => f64::from(f32::from_le_bytes(b[..4].try_into().unwrap())),
            Self::F64 => f64::from_le_bytes(b[..8].try_into().unwrap()),
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

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Cursor<'_> {
    fn take(&mut self, n: usize) -> Result<&[u8]> {
        let end = self.pos + n;
        let out = self
            .bytes
            .get(self.pos..end)
            .ok_or_else(|| Error::format("PLY", "file ends inside the element data"))?;
        self.pos = end;
        Ok(out)
    }

    fn scalar(&mut self, s: Scalar) -> Result<f64> {
        Ok(s.read(self.take(s.size())?))
    }
}

/// Parses binary little-endian PLY: `x y z` of the vertex element and the
/// `vertex_indices` (or `vertex_index`) list of the face element. Other
/// properties and elements are skipped.
pub fn parse_ply(bytes: &[u8]) -> Result<TriMesh> {
    let bad = |msg: String| Error::format("PLY", msg);
    const END: &[u8] = b"end_header";
    let end = bytes
        .windows(END.len())
        .position(|w| w == END)
        .ok_or_else(|| bad("missing end_header".into()))?;
    let mut body = end + END.len();
    if bytes.get(body) == Some(&b'\r') {
        body += 1;
    }
    if bytes.get(body) != Some(&b'\n') {
        return Err(bad("end_header must end its line".into()));
    }
    let header = std::str::from_utf8(&bytes[..end]).map_err(|e| bad(e.to_string()))?;
    let mut lines = header.lines().map(str::trim);
    if lines.next() != Some("ply") {
        return Err(bad("missing 'ply' magic".into()));
    }
    let mut elements: Vec<Element> = Vec::new();
    for line in lines {
        let words: Vec<&str> = line.split_whitespace().collect();
        match words.as_slice() {
            ["format", "binary_little_endian", _] => {}
            ["format", other, ..] => return Err(bad(format!("unsupported format '{other}'"))),
            ["comment", ..] | ["obj_info", ..] | [] => {}
            ["element", name, count] => elements.push(Element {
                name: name.to_string(),
                count: count.parse().map_err(|_| bad(format!("bad element count '{count}'")))?,
                properties: Vec::new(),
            }),
            ["property", "list", len, item, name] => {
                let (len, item) = Scalar::parse(len)
                    .zip(Scalar::parse(item))
                    .ok_or_else(|| bad(format!("bad list types in '{line}'")))?;
                elements
                    .last_mut()
                    .ok_or_else(|| bad("property before element".into()))?
                    .properties
                    .push(Property::List(name.to_string(), len, item));
            }
            ["property", ty, name] => {
                let ty = Scalar::parse(ty).ok_or_else(|| bad(format!("unknown type '{ty}'")))?;
                elements
                    .last_mut()
                    .ok_or_else(|| bad("property before element".into()))?
                    .properties
                    .push(Property::Scalar(name.to_string(), ty));
            }
            _ => return Err(bad(format!("unrecognised header line '{line}'"))),
        }
    }

    let mut cur = Cursor {
        bytes,
        pos: body + 1,
    };
    let mut vertices = Vec::new();
    let mut trilist = Vec::new();
    for el in &elements {
        for _ in 0..el.count {
            let mut xyz = [f64::NAN; 3];
            for prop in &el.properties {
                match prop {
                    Property::Scalar(name, ty) => {
                        let v = cur.scalar(*ty)?;
                        if el.name == "vertex" {
                            match name.as_str() {
                                "x" => xyz[0] = v,
                                "y" => xyz[1] = v,
                                "z" => xyz[2] = v,
                                _ => {}
                            }
                        }
                    }
                    Property::List(name, len, item) => {
                        let n = cur.scalar(*len)? as usize;
                        let mut ids = Vec::with_capacity(n);
                        for _ in 0..n {
                            let v = cur.scalar(*item)?;
                            if v < 0.0 {
                                return Err(bad(format!("negative vertex index {v}")));
                            }
                            ids.push(v as usize);
                        }
                        let is_face_list = name == "vertex_indices" || name == "vertex_index";
                        if el.name == "face" && is_face_list {
                            if n < 3 {
                                return Err(bad(format!("face with {n} vertices")));
                            }
                            for k in 1..n - 1 {
                                trilist.push([ids[0], ids[k], ids[k + 1]]);
                            }
                        }
                    }
                }
            }
            if el.name == "vertex" {
                if xyz.iter().any(|v| v.is_nan()) {
                    return Err(bad("vertex element lacks x, y or z".into()));
                }
                vertices.push(Vector3::from(xyz));
            }
        }
    }
    TriMesh::new(vertices, trilist)
}

pub fn read_ply(path: &Path) -> Result<TriMesh> {
    parse_ply(&read_bytes(path)?).map_err(|e| with_path(e, path))
}

pub fn write_ply(path: &Path, mesh: &TriMesh) -> Result<()> {
    let header = format!(
        "ply\nformat binary_little_endian 1.0\nelement vertex {}\nproperty double x\n\
         property double y\nproperty double z\nelement face {}\n\
         property list uchar int vertex_indices\nend_header\n",
        mesh.n_vertices(),
        mesh.n_triangles()
    );
    let mut bytes = header.into_bytes();
    for v in mesh.vertices() {
        for x in v.iter() {
            bytes.extend_from_slice(&x.to_le_bytes());
        }
    }
    for t in mesh.trilist() {
        bytes.push(3);
        for &i in t {
            let i = i32::try_from(i).map_err(|_| Error::invalid(format!("vertex index {i} exceeds PLY int range")))?;
            bytes.extend_from_slice(&i.to_le_bytes());
        }
    }
    write_bytes(path, &bytes)
}

/// Reads `.obj` or `.ply` by extension.
pub fn read_mesh(path: &Path) -> Result<TriMesh> {
    match extension(path).as_deref() {
        Some("obj") => read_obj(path),
        Some("ply") => read_ply(path),
        _ => Err(Error::invalid(format!(
            "{}: mesh files must end in .obj or .ply",
            path.display()
        ))),
    }
}

/// Writes `.obj` or `.ply` by extension.
pub fn write_mesh(path: &Path, mesh: &TriMesh) -> Result<()> {
    match extension(path).as_deref() {
        Some("obj") => write_obj(path, mesh),
        Some("ply") => write_ply(path, mesh),
        _ => Err(Error::invalid(format!(
            "{}: mesh files must end in .obj or .ply",
            path.display()
        ))),
    }
}

fn extension(path: &Path) -> Option<String> {
    path.extension().map(|e| e.to_string_lossy().to_ascii_lowercase())
}

fn with_path(e: Error, path: &Path) -> Error {
    match e {
        Error::Format { format, message } => Error::format(format, format!("{}: {message}", path.display())),
        other => other,
    }
}
