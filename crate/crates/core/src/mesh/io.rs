//! OBJ and PLY (ASCII, binary little/big endian) triangle mesh I/O.
//!
//! Parsers work on byte slices so they can be driven directly by fuzzers.
//! Vertex order is preserved exactly as stored in the file.

use std::io::Write;
use std::path::Path;

use super::Mesh;
use crate::{Error, Result};

pub fn load_mesh(path: impl AsRef<Path>) -> Result<Mesh> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.starts_with(b"ply") {
        parse_ply(&bytes)
    } else {
        parse_obj(&bytes)
    }
}

pub fn save_mesh(path: impl AsRef<Path>, mesh: &Mesh) -> Result<()> {
    let path = path.as_ref();
    let bytes = match path.extension().and_then(|e| e.to_str()) {
        Some(e) if e.eq_ignore_ascii_case("obj") => write_obj(mesh),
        Some(e) if e.eq_ignore_ascii_case("ply") => write_ply(mesh, PlyFormat::BinaryLittleEndian),
        _ => {
            return Err(Error::Config(format!(
                "unsupported mesh extension for {}",
                path.display()
            )))
        }
    };
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn finish(vertices: Vec<[f64; 3]>, faces: Vec<[usize; 3]>) -> Result<Mesh> {
    if vertices.is_empty() {
        return Err(Error::InvalidMesh("empty mesh".into()));
    }
    Mesh::new(vertices, faces)
}

pub fn parse_obj(bytes: &[u8]) -> Result<Mesh> {
    let text = std::str::from_utf8(bytes).map_err(|e| Error::parse("obj", e.to_string()))?;
    let mut vertices = Vec::new();
    let mut faces = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        let mut tok = line.split_ascii_whitespace();
        match tok.next() {
            Some("v") => {
                let mut p = [0.0; 3];
                for c in p.iter_mut() {
                    let s = tok
                        .next()
                        .ok_or_else(|| Error::parse("obj", format!("line {}: short vertex", lineno + 1)))?;
                    *c = s
                        .parse()
                        .map_err(|_| Error::parse("obj", format!("line {}: bad coordinate `{s}`", lineno + 1)))?;
                }
                vertices.push(p);
            }
            Some("f") => {
                let refs: Vec<&str> = tok.collect();
                if refs.len() != 3 {
                    return Err(Error::NonTriangularFace {
                        face: faces.len(),
                        arity: refs.len(),
                    });
                }
                let mut f = [0usize; 3];
                for (slot, r) in f.iter_mut().zip(&refs) {
                    *slot = obj_index(r, vertices.len())
                        .ok_or_else(|| Error::parse("obj", format!("line {}: bad face index `{r}`", lineno + 1)))?;
                }
                faces.push(f);
            }
            _ => {}
        }
    }
    finish(vertices, faces)
}

fn obj_index(token: &str, n: usize) -> Option<usize> {
    let head = token.split('/').next()?;
    let i: i64 = head.parse().ok()?;
    let idx = if i > 0 {
        i - 1
    } else if i < 0 {
        n as i64 + i
    } else {
        return None;
    };
    (idx >= 0 && (idx as usize) < n).then_some(idx as usize)
}

pub fn write_obj(mesh: &Mesh) -> Vec<u8> {
    let mut out = Vec::new();
    for v in &mesh.vertices {
        let _ = writeln!(out, "v {:?} {:?} {:?}", v[0], v[1], v[2]);
    }
    for f in &mesh.faces {
        let _ = writeln!(out, "f {} {} {}", f[0] + 1, f[1] + 1, f[2] + 1);
    }
    out
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PlyFormat {
    Ascii,
    BinaryLittleEndian,
    BinaryBigEndian,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
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
    fn from_name(s: &str) -> Option<Self> {
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
}

#[derive(Debug)]
enum Property {
    Scalar { name: String, ty: Scalar },
    List { name: String, count: Scalar, item: Scalar },
}

#[derive(Debug)]
struct Element {
    name: String,
    count: usize,
    props: Vec<Property>,
}

fn parse_ply_header(bytes: &[u8]) -> Result<(PlyFormat, Vec<Element>, usize)> {
    let end = find_subslice(bytes, b"end_header")
        .ok_or_else(|| Error::parse("ply", "missing end_header"))?;
    let mut body = end + b"end_header".len();
    if bytes.get(body) == Some(&b'\r') {
        body += 1;
    }
    if bytes.get(body) != Some(&b'\n') {
        return Err(Error::parse("ply", "end_header not followed by newline"));
    }
    body += 1;
    let header = std::str::from_utf8(&bytes[..end]).map_err(|e| Error::parse("ply", e.to_string()))?;
    let mut lines = header.lines().map(str::trim);
    if lines.next() != Some("ply") {
        return Err(Error::parse("ply", "missing magic"));
    }
    let mut format = None;
    let mut elements: Vec<Element> = Vec::new();
    for line in lines {
        let tok: Vec<&str> = line.split_ascii_whitespace().collect();
        match tok.as_slice() {
            [] | ["comment", ..] | ["obj_info", ..] => {}
            ["format", f, _version] => {
                format = Some(match *f {
                    "ascii" => PlyFormat::Ascii,
                    "binary_little_endian" => PlyFormat::BinaryLittleEndian,
                    "binary_big_endian" => PlyFormat::BinaryBigEndian,
                    other => return Err(Error::parse("ply", format!("unknown format `{other}`"))),
                });
            }
            ["element", name, count] => {
                let count = count
                    .parse()
                    .map_err(|_| Error::parse("ply", format!("bad element count `{count}`")))?;
                elements.push(Element {
                    name: name.to_string(),
                    count,
                    props: Vec::new(),
                });
            }
            ["property", "list", c, i, name] => {
                let el = elements
                    .last_mut()
                    .ok_or_else(|| Error::parse("ply", "property before element"))?;
                let count = Scalar::from_name(c).ok_or_else(|| Error::parse("ply", format!("bad type `{c}`")))?;
                let item = Scalar::from_name(i).ok_or_else(|| Error::parse("ply", format!("bad type `{i}`")))?;
                el.props.push(Property::List {
                    name: name.to_string(),
                    count,
                    item,
                });
            }
            ["property", ty, name] => {
                let el = elements
                    .last_mut()
                    .ok_or_else(|| Error::parse("ply", "property before element"))?;
                let ty = Scalar::from_name(ty).ok_or_else(|| Error::parse("ply", format!("bad type `{ty}`")))?;
                el.props.push(Property::Scalar {
                    name: name.to_string(),
                    ty,
                });
            }
            _ => return Err(Error::parse("ply", format!("unrecognised header line `{line}`"))),
        }
    }
    let format = format.ok_or_else(|| Error::parse("ply", "missing format line"))?;
    Ok((format, elements, body))
}

fn find_subslice(hay: &[u8], needle: &[u8]) -> Option<usize> {
    hay.windows(needle.len()).position(|w| w == needle)
}

/// Sequential reader over the PLY body in any of the three encodings.
struct BodyReader<'a> {
    format: PlyFormat,
    bytes: &'a [u8],
    pos: usize,
}

impl BodyReader<'_> {
    fn eof() -> Error {
        Error::parse("ply", "unexpected end of data")
    }

    fn read(&mut self, ty: Scalar) -> Result<f64> {
        match self.format {
            PlyFormat::Ascii => {
                let rest = &self.bytes[self.pos..];
                let start = rest
                    .iter()
                    .position(|b| !b.is_ascii_whitespace())
                    .ok_or_else(Self::eof)?;
                let len = rest[start..]
                    .iter()
                    .position(|b| b.is_ascii_whitespace())
                    .unwrap_or(rest.len() - start);
                let tok = std::str::from_utf8(&rest[start..start + len])
                    .map_err(|e| Error::parse("ply", e.to_string()))?;
                self.pos += start + len;
                tok.parse::<f64>()
                    .map_err(|_| Error::parse("ply", format!("bad ascii value `{tok}`")))
            }
            PlyFormat::BinaryLittleEndian | PlyFormat::BinaryBigEndian => {
                let n = ty.size();
                let raw = self.bytes.get(self.pos..self.pos + n).ok_or_else(Self::eof)?;
                self.pos += n;
                let le = self.format == PlyFormat::BinaryLittleEndian;
                let mut buf = [0u8; 8];
                buf[..n].copy_from_slice(raw);
                if !le {
                    buf[..n].reverse();
                }
                Ok(match ty {
                    Scalar::I8 => buf[0] as i8 as f64,
                    Scalar::U8 => buf[0] as f64,
                    Scalar::I16 => i16::from_le_bytes([buf[0], buf[1]]) as f64,
                    Scalar::U16 => u16::from_le_bytes([buf[0], buf[1]]) as f64,
                    Scalar::I32 => i32::from_le_bytes([buf[0], buf[1], buf[2], buf[3]]) as f64,
                    Scalar::U32 => u32::from_le_bytes([buf[0], buf[1], buf[2], buf[3]]) as f64,
                    Scalar::F32 => f32::from_le_bytes([buf[0], buf[1], buf[2], buf[3]]) as f64,
                    Scalar::F64 => f64::from_le_bytes(buf),
                })
            }
        }
    }

    fn remaining(&self) -> usize {
        self.bytes.len() - self.pos
    }
}

fn as_index(value: f64) -> Result<usize> {
    if value.fract() != 0.0 || value < 0.0 || value > u32::MAX as f64 {
        return Err(Error::parse("ply", format!("invalid index {value}")));
    }
    Ok(value as usize)
}

pub fn parse_ply(bytes: &[u8]) -> Result<Mesh> {
    let (format, elements, body) = parse_ply_header(bytes)?;
    let mut reader = BodyReader {
        format,
        bytes,
        pos: body,
    };
    let mut vertices: Vec<[f64; 3]> = Vec::new();
    let mut faces = Vec::new();
    let mut saw_vertex = false;
    for el in &elements {
        // Every record takes at least one byte, so a count beyond the remaining
        // data is malformed and must not drive an allocation.
        if el.count > reader.remaining() && !el.props.is_empty() {
            return Err(Error::parse("ply", format!("element `{}` count exceeds data", el.name)));
        }
        let is_vertex = el.name == "vertex";
        let is_face = el.name == "face";
        let slot = |n: &str| el.props.iter().position(|p| matches!(p, Property::Scalar { name, .. } if name == n));
        let xyz = if is_vertex {
            saw_vertex = true;
            match (slot("x"), slot("y"), slot("z")) {
                (Some(x), Some(y), Some(z)) => Some([x, y, z]),
                _ => return Err(Error::parse("ply", "vertex element lacks x/y/z")),
            }
        } else {
            None
        };
        if is_vertex {
            vertices.reserve(el.count);
        }
        let mut scalars = vec![0.0; el.props.len()];
        for _ in 0..el.count {
            for (pi, prop) in el.props.iter().enumerate() {
                match prop {
                    Property::Scalar { ty, .. } => scalars[pi] = reader.read(*ty)?,
                    Property::List { name, count, item } => {
                        let n = as_index(reader.read(*count)?)?;
                        let wanted = is_face && (name == "vertex_indices" || name == "vertex_index");
                        if wanted && n != 3 {
                            return Err(Error::NonTriangularFace {
                                face: faces.len(),
                                arity: n,
                            });
                        }
                        let mut f = [0usize; 3];
                        for k in 0..n {
                            let v = reader.read(*item)?;
                            if wanted {
                                f[k] = as_index(v)?;
                            }
                        }
                        if wanted {
                            faces.push(f);
                        }
                    }
                }
            }
            if let Some([x, y, z]) = xyz {
                vertices.push([scalars[x], scalars[y], scalars[z]]);
            }
        }
    }
    if !saw_vertex {
        return Err(Error::parse("ply", "no vertex element"));
    }
    finish(vertices, faces)
}

pub fn write_ply(mesh: &Mesh, format: PlyFormat) -> Vec<u8> {
    let fmt = match format {
        PlyFormat::Ascii => "ascii",
        PlyFormat::BinaryLittleEndian => "binary_little_endian",
        PlyFormat::BinaryBigEndian => "binary_big_endian",
    };
    let mut out = Vec::new();
    let _ = write!(
        out,
        "ply\nformat {fmt} 1.0\nelement vertex {}\nproperty double x\nproperty double y\nproperty double z\n\
         element face {}\nproperty list uchar int vertex_indices\nend_header\n",
        mesh.vertices.len(),
        mesh.faces.len()
    );
    match format {
        PlyFormat::Ascii => {
            for v in &mesh.vertices {
                let _ = writeln!(out, "{:?} {:?} {:?}", v[0], v[1], v[2]);
            }
            for f in &mesh.faces {
                let _ = writeln!(out, "3 {} {} {}", f[0], f[1], f[2]);
            }
        }
        PlyFormat::BinaryLittleEndian | PlyFormat::BinaryBigEndian => {
            let le = format == PlyFormat::BinaryLittleEndian;
            for v in &mesh.vertices {
                for c in v {
                    out.extend_from_slice(&if le { c.to_le_bytes() } else { c.to_be_bytes() });
                }
            }
            for f in &mesh.faces {
                out.push(3);
                for &i in f {
                    let i = i as i32;
                    out.extend_from_slice(&if le { i.to_le_bytes() } else { i.to_be_bytes() });
                }
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::primitives::icosphere;

    const TETRA_OBJ: &str = "# unit tetrahedron\nv 0 0 0\nv 1 0 0\nv 0 1 0\nv 0 0 1\n\
                             f 1 3 2\nf 1 2 4\nf 1 4 3\nf 2 3 4\n";

    #[test]
    fn tetrahedron_obj() {
        let m = parse_obj(TETRA_OBJ.as_bytes()).unwrap();
        assert_eq!(m.vertices.len(), 4);
        assert_eq!(m.faces.len(), 4);
        assert_eq!(m.faces[0], [0, 2, 1]);
        assert_eq!(m.vertices[1], [1.0, 0.0, 0.0]);
    }

    #[test]
    fn obj_slash_and_negative_indices() {
        let m = parse_obj(b"v 0 0 0\nv 1 0 0\nv 0 1 0\nvn 0 0 1\nf 1/1/1 2//1 -1\n").unwrap();
        assert_eq!(m.faces, vec![[0, 1, 2]]);
    }

    #[test]
    fn quad_face_rejected() {
        let err = parse_obj(b"v 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\nf 1 2 3 4\n").unwrap_err();
        assert!(matches!(err, Error::NonTriangularFace { arity: 4, .. }));
        assert!(err.to_string().contains("non-triangular face"));
    }

    #[test]
    fn empty_and_garbage_rejected() {
        assert!(parse_obj(b"# nothing\n").is_err());
        assert!(parse_obj(b"v 0 0\n").is_err());
        assert!(parse_obj(b"v 0 0 0\nf 1 2 3\n").is_err());
        assert!(parse_ply(b"ply\nformat ascii 1.0\nend_header\n").is_err());
        assert!(parse_ply(b"ply\nformat ascii 1.0\nelement vertex 2\nproperty float x\nend_header\n1 2\n").is_err());
    }

    #[test]
    fn icosphere_ply_counts_all_encodings() {
        let sphere = icosphere(2, 1.0);
        for fmt in [PlyFormat::Ascii, PlyFormat::BinaryLittleEndian, PlyFormat::BinaryBigEndian] {
            let m = parse_ply(&write_ply(&sphere, fmt)).unwrap();
            assert_eq!(m.vertex_count(), 162);
            assert_eq!(m.faces.len(), 320);
            assert_eq!(m, sphere);
        }
    }

    #[test]
    fn ply_float32_with_extra_properties() {
        let mut bytes = b"ply\r\nformat binary_little_endian 1.0\r\ncomment x\r\nelement vertex 3\r\n\
                          property float x\r\nproperty float y\r\nproperty float z\r\nproperty uchar red\r\n\
                          element face 1\r\nproperty list uchar uint vertex_index\r\nend_header\r\n"
            .to_vec();
        for v in [[0.0f32, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.5]] {
            for c in v {
                bytes.extend_from_slice(&c.to_le_bytes());
            }
            bytes.push(200);
        }
        bytes.push(3);
        for i in [0u32, 1, 2] {
            bytes.extend_from_slice(&i.to_le_bytes());
        }
        let m = parse_ply(&bytes).unwrap();
        assert_eq!(m.vertices[2], [0.0, 1.0, 0.5]);
        assert_eq!(m.faces, vec![[0, 1, 2]]);
    }

    #[test]
    fn ply_quad_rejected() {
        let text = "ply\nformat ascii 1.0\nelement vertex 4\nproperty float x\nproperty float y\nproperty float z\n\
                    element face 1\nproperty list uchar int vertex_indices\nend_header\n\
                    0 0 0\n1 0 0\n1 1 0\n0 1 0\n4 0 1 2 3\n";
        assert!(matches!(parse_ply(text.as_bytes()), Err(Error::NonTriangularFace { arity: 4, .. })));
    }

    #[test]
    fn huge_counts_do_not_allocate() {
        let text = "ply\nformat binary_little_endian 1.0\nelement vertex 4000000000\nproperty float x\n\
                    property float y\nproperty float z\nend_header\n";
        assert!(parse_ply(text.as_bytes()).is_err());
    }

    #[test]
    fn obj_roundtrip_preserves_order() {
        let sphere = icosphere(1, 2.5);
        let back = parse_obj(&write_obj(&sphere)).unwrap();
        assert_eq!(back, sphere);
    }
}
