//! Binary little-endian PLY for meshes and point clouds.
//!
//! The writer emits `vertex` (float x, y, z and optionally nx, ny, nz) and,
//! when triangles exist, `face` (list uchar int vertex_indices). The reader
//! accepts any scalar property types, ignores properties it does not know,
//! and requires faces to be triangles.

use std::path::Path;

use super::{read_bytes, write_bytes, ByteReader, FormatError};
use crate::mesh_extract::TriangleMesh;
use crate::transform::Point3;

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

    fn read(self, r: &mut ByteReader<'_>) -> Result<f64, FormatError> {
        let b = r.take(self.size())?;
        Ok(match self {
            Scalar::I8 => b[0] as i8 as f64,
            Scalar::U8 => b[0] as f64,
            Scalar::I16 => i16::from_le_bytes([b[0], b[1]]) as f64,
            Scalar::U16 => u16::from_le_bytes([b[0], b[1]]) as f64,
            Scalar::I32 => i32::from_le_bytes(b.try_into().expect("4 bytes")) as f64,
            Scalar::U32 => u32::from_le_bytes(b.try_into().expect("4 bytes")) as f64,
            Scalar::F32 => f32::from_le_bytes(b.try_into().expect("4 bytes")) as f64,
            Scalar::F64 => f64::from_le_bytes(b.try_into().expect("8 bytes")),
        })
    }
}

#[derive(Debug, Clone)]
enum Property {
    Scalar(String, Scalar),
    List(String, Scalar, Scalar),
}

#[derive(Debug, Clone)]
struct Element {
    name: String,
    count: u64,
    properties: Vec<Property>,
}

pub fn encode_ply(mesh: &TriangleMesh) -> Vec<u8> {
    let normals = mesh
        .normals
        .as_ref()
        .filter(|n| n.len() == mesh.vertices.len());
    let mut header = String::from("ply\nformat binary_little_endian 1.0\n");
    header.push_str(&format!("element vertex {}\n", mesh.vertices.len()));
    header.push_str("property float x\nproperty float y\nproperty float z\n");
    if normals.is_some() {
        header.push_str("property float nx\nproperty float ny\nproperty float nz\n");
    }
    if !mesh.triangles.is_empty() {
        header.push_str(&format!("element face {}\n", mesh.triangles.len()));
        header.push_str("property list uchar int vertex_indices\n");
    }
    header.push_str("end_header\n");
    let mut out = header.into_bytes();
    for (i, v) in mesh.vertices.iter().enumerate() {
        for c in v.iter() {
            out.extend_from_slice(&(*c as f32).to_le_bytes());
        }
        if let Some(ns) = normals {
            for c in ns[i].iter() {
                out.extend_from_slice(&(*c as f32).to_le_bytes());
            }
        }
    }
    for t in &mesh.triangles {
        out.push(3);
        for &i in t {
            out.extend_from_slice(&(i as i32).to_le_bytes());
        }
    }
    out
}

/// PLY holding only points.
pub fn encode_point_cloud_ply(points: &[Point3]) -> Vec<u8> {
    encode_ply(&TriangleMesh {
        vertices: points.to_vec(),
        normals: None,
        triangles: Vec::new(),
    })
}

fn parse_header(bytes: &[u8]) -> Result<(Vec<Element>, usize), FormatError> {
    const END: &[u8] = b"end_header\n";
    let end = bytes
        .windows(END.len())
        .position(|w| w == END)
        .ok_or_else(|| FormatError::at(0, "missing end_header"))?;
    let body = end + END.len();
    let text = std::str::from_utf8(&bytes[..end])
        .map_err(|e| FormatError::at(e.valid_up_to(), "header is not UTF-8"))?;
    if !text.starts_with("ply\n") {
        return Err(FormatError::MagicMismatch {
            expected: "ply".into(),
            found: String::from_utf8_lossy(&bytes[..bytes.len().min(3)]).into_owned(),
        });
    }
    let mut elements: Vec<Element> = Vec::new();
    let mut offset = 0usize;
    for (n, line) in text.split('\n').enumerate() {
        let line_offset = offset;
        offset += line.len() + 1;
        let err = |m: String| FormatError::Parse {
            line: n + 1,
            offset: line_offset as u64,
            message: m,
        };
        let tok: Vec<&str> = line.split_ascii_whitespace().collect();
        match tok.as_slice() {
            [] | ["ply"] | ["comment", ..] | ["obj_info", ..] => {}
            ["format", fmt, version] => {
                if *fmt != "binary_little_endian" || *version != "1.0" {
                    return Err(FormatError::Unsupported(format!(
                        "PLY format {fmt} {version}"
                    )));
                }
            }
            ["element", name, count] => elements.push(Element {
                name: name.to_string(),
                count: count
                    .parse()
                    .map_err(|e| err(format!("element count: {e}")))?,
                properties: Vec::new(),
            }),
            ["property", "list", count_ty, item_ty, name] => {
                let (Some(c), Some(i)) = (Scalar::parse(count_ty), Scalar::parse(item_ty)) else {
                    return Err(err(format!("unknown list types {count_ty} {item_ty}")));
                };
                elements
                    .last_mut()
                    .ok_or_else(|| err("property before element".into()))?
                    .properties
                    .push(Property::List(name.to_string(), c, i));
            }
            ["property", ty, name] => {
                let s = Scalar::parse(ty).ok_or_else(|| err(format!("unknown type {ty}")))?;
                elements
                    .last_mut()
                    .ok_or_else(|| err("property before element".into()))?
                    .properties
                    .push(Property::Scalar(name.to_string(), s));
            }
            _ => return Err(err(format!("unrecognized header line {line:?}"))),
        }
    }
    Ok((elements, body))
}

pub fn decode_ply(bytes: &[u8]) -> Result<TriangleMesh, FormatError> {
    let (elements, body) = parse_header(bytes)?;
    let mut r = ByteReader::new(bytes);
    r.take(body)?;
    let mut mesh = TriangleMesh::default();
    let mut normals = Vec::new();
    let mut has_normals = false;
    for el in &elements {
        match el.name.as_str() {
            "vertex" => {
                let slot = |name: &str| {
                    el.properties
                        .iter()
                        .position(|p| matches!(p, Property::Scalar(n, _) if n == name))
                };
                let xyz = [slot("x"), slot("y"), slot("z")];
                let nxyz = [slot("nx"), slot("ny"), slot("nz")];
                if xyz.iter().any(Option::is_none) {
                    return Err(FormatError::at(0, "vertex element lacks x, y or z"));
                }
                has_normals = nxyz.iter().all(Option::is_some);
                let fixed: Option<u64> = el
                    .properties
                    .iter()
                    .map(|p| match p {
                        Property::Scalar(_, s) => Some(s.size() as u64),
                        Property::List(..) => None,
                    })
                    .sum();
                if let Some(stride) = fixed {
                    r.require(stride.saturating_mul(el.count))?;
                }
                let mut values = vec![0.0; el.properties.len()];
                for _ in 0..el.count {
                    for (k, p) in el.properties.iter().enumerate() {
                        let at = r.position();
                        values[k] = match p {
                            Property::Scalar(_, s) => s.read(&mut r)?,
                            Property::List(..) => {
                                return Err(FormatError::Unsupported(
                                    "list property on vertex".into(),
                                ))
                            }
                        };
                        if !values[k].is_finite() {
                            return Err(FormatError::NonFinite { offset: at as u64 });
                        }
                    }
                    let get = |idx: [Option<usize>; 3]| {
                        Point3::from_fn(|i, _| values[idx[i].unwrap_or(0)])
                    };
                    mesh.vertices.push(get(xyz));
                    if has_normals {
                        normals.push(get(nxyz));
                    }
                }
            }
            "face" => {
                for _ in 0..el.count {
                    for p in &el.properties {
                        match p {
                            Property::List(name, count_ty, item_ty)
                                if name == "vertex_indices" || name == "vertex_index" =>
                            {
                                let at = r.position();
                                let count = count_ty.read(&mut r)?;
                                if count != 3.0 {
                                    return Err(FormatError::Unsupported(format!(
                                        "face with {count} vertices at byte offset {at}"
                                    )));
                                }
                                let mut tri = [0u32; 3];
                                for t in &mut tri {
                                    let at = r.position();
                                    let i = item_ty.read(&mut r)?;
                                    if i < 0.0 || i >= mesh.vertices.len() as f64 {
                                        return Err(FormatError::at(
                                            at,
                                            format!("vertex index {i} out of range"),
                                        ));
                                    }
                                    *t = i as u32;
                                }
                                mesh.triangles.push(tri);
                            }
                            Property::List(_, count_ty, item_ty) => {
                                let n = count_ty.read(&mut r)? as usize;
                                r.take(n.saturating_mul(item_ty.size()))?;
                            }
                            Property::Scalar(_, s) => {
                                r.take(s.size())?;
                            }
                        }
                    }
                }
            }
            _ => {
                for _ in 0..el.count {
                    for p in &el.properties {
                        match p {
                            Property::Scalar(_, s) => {
                                r.take(s.size())?;
                            }
                            Property::List(_, c, i) => {
                                let n = c.read(&mut r)? as usize;
                                r.take(n.saturating_mul(i.size()))?;
                            }
                        }
                    }
                }
            }
        }
    }
    r.expect_end()?;
    if has_normals {
        mesh.normals = Some(normals);
    }
    Ok(mesh)
}

pub fn read_ply(path: &Path) -> crate::Result<TriangleMesh> {
    Ok(decode_ply(&read_bytes(path)?)?)
}

pub fn write_ply(path: &Path, mesh: &TriangleMesh) -> crate::Result<()> {
    write_bytes(path, &encode_ply(mesh))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn tetra() -> TriangleMesh {
        let vertices = vec![
            Point3::new(0.0, 0.0, 0.0),
            Point3::new(1.0, 0.0, 0.0),
            Point3::new(0.0, 1.0, 0.0),
            Point3::new(0.0, 0.0, 1.0),
        ];
        let normals = vertices
            .iter()
            .map(|v: &Point3| (v - Point3::repeat(0.25)).normalize())
            .collect();
        TriangleMesh {
            vertices,
            normals: Some(normals),
            triangles: vec![[0, 2, 1], [0, 1, 3], [0, 3, 2], [1, 2, 3]],
        }
    }

    #[test]
    fn mesh_round_trip() {
        let mut mesh = tetra();
        // Values representable in f32 survive exactly.
        for n in mesh.normals.as_mut().unwrap() {
            *n = n.map(|c| c as f32 as f64);
        }
        let bytes = encode_ply(&mesh);
        let back = decode_ply(&bytes).unwrap();
        assert_eq!(back, mesh);
        assert_eq!(encode_ply(&back), bytes);
    }

    #[test]
    fn point_cloud_has_no_faces() {
        let pts = vec![Point3::new(1.0, 2.0, 3.0), Point3::new(-1.0, 0.5, 0.25)];
        let bytes = encode_point_cloud_ply(&pts);
        assert!(!String::from_utf8_lossy(&bytes).contains("element face"));
        let back = decode_ply(&bytes).unwrap();
        assert_eq!(back.vertices, pts);
        assert!(back.triangles.is_empty() && back.normals.is_none());
    }

    #[test]
    fn truncation_and_bad_indices() {
        let bytes = encode_ply(&tetra());
        assert!(matches!(
            decode_ply(&bytes[..bytes.len() - 2]),
            Err(FormatError::TruncatedPayload { .. })
        ));
        let mut bad = bytes.clone();
        let n = bad.len();
        bad[n - 4..].copy_from_slice(&9i32.to_le_bytes());
        assert!(matches!(decode_ply(&bad), Err(FormatError::Parse { .. })));
        assert!(matches!(
            decode_ply(b"plx\nend_header\n"),
            Err(FormatError::MagicMismatch { .. })
        ));
    }

    proptest! {
        #[test]
        fn arbitrary_payload_never_panics(tail in proptest::collection::vec(any::<u8>(), 0..200)) {
            let mut bytes = b"ply\nformat binary_little_endian 1.0\nelement vertex 3\nproperty float x\nproperty float y\nproperty float z\nelement face 2\nproperty list uchar int vertex_indices\nend_header\n".to_vec();
            bytes.extend_from_slice(&tail);
            let _ = decode_ply(&bytes);
        }
    }
}
