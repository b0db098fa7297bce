use std::fmt::Write as _;
use std::path::Path;

use super::{read_bytes, write_bytes, Bytes};
use crate::camera::Vec3;
use crate::error::{Error, Result};
use crate::gaussians::{Gaussian3D, GaussianCloud};
use crate::recon::TriMesh;

const GAUSSIAN_FIELDS: [&str; 14] = [
    "x", "y", "z", "red", "green", "blue", "opacity", "scale_0", "scale_1", "scale_2", "rot_0", "rot_1", "rot_2", "rot_3",
];

/// Binary little-endian PLY, one float32 vertex record per Gaussian:
/// position, color in [0, 1], activated opacity, world scales and the
/// unit quaternion (w, x, y, z).
pub fn write_gaussian_ply(path: &Path, cloud: &GaussianCloud) -> Result<()> {
    let mut header = format!("ply\nformat binary_little_endian 1.0\nelement vertex {}\n", cloud.len());
    for f in GAUSSIAN_FIELDS {
        let _ = writeln!(header, "property float {f}");
    }
    header.push_str("end_header\n");
    let mut out = header.into_bytes();
    for g in &cloud.gaussians {
        let vals = [
            g.center.x, g.center.y, g.center.z, g.color.x, g.color.y, g.color.z, g.opacity, g.scale.x, g.scale.y,
            g.scale.z, g.rotation[0], g.rotation[1], g.rotation[2], g.rotation[3],
        ];
        for v in vals {
            out.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
    write_bytes(path, &out)
}

pub fn read_gaussian_ply(path: &Path) -> Result<GaussianCloud> {
    let ply = Ply::read(path)?;
    let vertex = ply.element(path, "vertex")?;
    let cols: Vec<usize> = GAUSSIAN_FIELDS
        .iter()
        .map(|f| vertex.column(path, f))
        .collect::<Result<_>>()?;
    let gaussians = vertex
        .rows
        .iter()
        .map(|r| {
            let v = |k: usize| r[cols[k]][0];
            Gaussian3D {
                center: Vec3::new(v(0), v(1), v(2)),
                color: Vec3::new(v(3), v(4), v(5)),
                opacity: v(6),
                scale: Vec3::new(v(7), v(8), v(9)),
                rotation: [v(10), v(11), v(12), v(13)],
            }
        })
        .collect();
    Ok(GaussianCloud {
        gaussians,
        source: Vec::new(),
    })
}

fn color_byte(x: f64) -> u8 {
    (x.clamp(0.0, 1.0) * 255.0).round() as u8
}

/// Binary little-endian PLY: float32 positions, uchar colors, uchar/int
/// face lists.
pub fn write_mesh_ply(path: &Path, mesh: &TriMesh) -> Result<()> {
    mesh.validate()?;
    let header = format!(
        "ply\nformat binary_little_endian 1.0\nelement vertex {}\nproperty float x\nproperty float y\nproperty float z\nproperty uchar red\nproperty uchar green\nproperty uchar blue\nelement face {}\nproperty list uchar int vertex_indices\nend_header\n",
        mesh.vertices.len(),
        mesh.faces.len()
    );
    let mut out = header.into_bytes();
    for (i, v) in mesh.vertices.iter().enumerate() {
        for c in 0..3 {
            out.extend_from_slice(&(v[c] as f32).to_le_bytes());
        }
        let col = mesh.vertex_colors.get(i).copied().unwrap_or_else(|| Vec3::new(1.0, 1.0, 1.0));
        out.extend_from_slice(&[color_byte(col.x), color_byte(col.y), color_byte(col.z)]);
    }
    for f in &mesh.faces {
        out.push(3);
        for &i in f {
            out.extend_from_slice(&(i as i32).to_le_bytes());
        }
    }
    write_bytes(path, &out)
}

pub fn read_mesh_ply(path: &Path) -> Result<TriMesh> {
    let ply = Ply::read(path)?;
    let vertex = ply.element(path, "vertex")?;
    let (x, y, z) = (vertex.column(path, "x")?, vertex.column(path, "y")?, vertex.column(path, "z")?);
    let color_cols = ["red", "green", "blue"].map(|c| vertex.find(c));
    let vertices: Vec<Vec3> = vertex.rows.iter().map(|r| Vec3::new(r[x][0], r[y][0], r[z][0])).collect();
    let vertex_colors = match color_cols {
        [Some(r), Some(g), Some(b)] => {
            let scale = if vertex.props[r].1 == "uchar" || vertex.props[r].1 == "uint8" { 255.0 } else { 1.0 };
            vertex.rows.iter().map(|row| Vec3::new(row[r][0], row[g][0], row[b][0]) / scale).collect()
        }
        _ => vec![Vec3::new(1.0, 1.0, 1.0); vertices.len()],
    };
    let mut faces = Vec::new();
    if let Ok(face) = ply.element(path, "face") {
        let col = face.find("vertex_indices").or_else(|| face.find("vertex_index")).ok_or_else(|| {
            Error::format(path, "face element has no vertex_indices property")
        })?;
        for row in &face.rows {
            polygon_to_triangles(path, &row[col], vertices.len(), &mut faces)?;
        }
    }
    let mesh = TriMesh {
        vertices,
        faces,
        vertex_colors,
    };
    mesh.validate().map_err(|e| Error::format(path, e.to_string()))?;
    Ok(mesh)
}

fn polygon_to_triangles(path: &Path, idx: &[f64], n: usize, out: &mut Vec<[u32; 3]>) -> Result<()> {
    if idx.len() < 3 {
        return Err(Error::format(path, format!("face with {} vertices", idx.len())));
    }
    let ids: Vec<u32> = idx
        .iter()
        .map(|&i| {
            if i < 0.0 || i as usize >= n || i.fract() != 0.0 {
                Err(Error::format(path, format!("face index {i} outside 0..{n}")))
            } else {
                Ok(i as u32)
            }
        })
        .collect::<Result<_>>()?;
    for k in 1..ids.len() - 1 {
        let f = [ids[0], ids[k], ids[k + 1]];
        if f[0] != f[1] && f[1] != f[2] && f[0] != f[2] {
            out.push(f);
        }
    }
    Ok(())
}

/// OBJ with `v x y z r g b` vertex lines and 1-based triangle faces.
pub fn write_obj(path: &Path, mesh: &TriMesh) -> Result<()> {
    mesh.validate()?;
    let mut s = String::with_capacity(48 * (mesh.vertices.len() + mesh.faces.len()));
    for (i, v) in mesh.vertices.iter().enumerate() {
        let c = mesh.vertex_colors.get(i).copied().unwrap_or_else(|| Vec3::new(1.0, 1.0, 1.0));
        let _ = writeln!(s, "v {} {} {} {} {} {}", v.x, v.y, v.z, c.x, c.y, c.z);
    }
    for f in &mesh.faces {
        let _ = writeln!(s, "f {} {} {}", f[0] + 1, f[1] + 1, f[2] + 1);
    }
    write_bytes(path, s.as_bytes())
}

pub fn read_obj(path: &Path) -> Result<TriMesh> {
    let bytes = read_bytes(path)?;
    let text = std::str::from_utf8(&bytes).map_err(|_| Error::format(path, "not UTF-8 text"))?;
    let mut vertices = Vec::new();
    let mut colors = Vec::new();
    let mut polys: Vec<(usize, Vec<i64>)> = Vec::new();
    for (ln, line) in text.lines().enumerate() {
        let mut it = line.split_whitespace();
        match it.next() {
            Some("v") => {
                let vals: Vec<f64> = it
                    .map(|t| t.parse().map_err(|_| Error::format(path, format!("line {}: bad number '{t}'", ln + 1))))
                    .collect::<Result<_>>()?;
                if vals.len() != 3 && vals.len() != 6 {
                    return Err(Error::format(path, format!("line {}: vertex needs 3 or 6 values", ln + 1)));
                }
                vertices.push(Vec3::new(vals[0], vals[1], vals[2]));
                colors.push(if vals.len() == 6 { Vec3::new(vals[3], vals[4], vals[5]) } else { Vec3::new(1.0, 1.0, 1.0) });
            }
            Some("f") => {
                let ids: Vec<i64> = it
                    .map(|t| {
                        t.split('/')
                            .next()
                            .and_then(|s| s.parse().ok())
                            .ok_or_else(|| Error::format(path, format!("line {}: bad face index '{t}'", ln + 1)))
                    })
                    .collect::<Result<_>>()?;
                polys.push((vertices.len(), ids));
            }
            _ => {}
        }
    }
    let n = vertices.len();
    let mut faces = Vec::new();
    for (seen, ids) in polys {
        let resolved: Vec<f64> = ids
            .iter()
            .map(|&i| if i < 0 { seen as f64 + i as f64 } else { i as f64 - 1.0 })
            .collect();
        polygon_to_triangles(path, &resolved, n, &mut faces)?;
    }
    Ok(TriMesh {
        vertices,
        faces,
        vertex_colors: colors,
    })
}

fn extension(path: &Path) -> String {
    path.extension().and_then(|e| e.to_str()).unwrap_or("").to_ascii_lowercase()
}

/// Mesh reader dispatching on the `.ply` / `.obj` extension.
pub fn read_mesh(path: &Path) -> Result<TriMesh> {
    match extension(path).as_str() {
        "ply" => read_mesh_ply(path),
        "obj" => read_obj(path),
        other => Err(Error::format(path, format!("unsupported mesh extension '{other}' (expected ply or obj)"))),
    }
}

pub fn write_mesh(path: &Path, mesh: &TriMesh) -> Result<()> {
    match extension(path).as_str() {
        "ply" => write_mesh_ply(path, mesh),
        "obj" => write_obj(path, mesh),
        other => Err(Error::format(path, format!("unsupported mesh extension '{other}' (expected ply or obj)"))),
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Format {
    Ascii,
    BinaryLe,
    BinaryBe,
}

#[derive(Debug, Clone)]
struct Element {
    name: String,
    count: usize,
    /// (name, scalar type, list count type)
    props: Vec<(String, String, Option<String>)>,
    rows: Vec<Vec<Vec<f64>>>,
}

impl Element {
    fn find(&self, name: &str) -> Option<usize> {
        self.props.iter().position(|p| p.0 == name)
    }

    fn column(&self, path: &Path, name: &str) -> Result<usize> {
        self.find(name)
            .ok_or_else(|| Error::format(path, format!("element '{}' lacks property '{name}'", self.name)))
    }
}

struct Ply {
    elements: Vec<Element>,
}

fn type_size(t: &str) -> Option<usize> {
    Some(match t {
        "char" | "uchar" | "int8" | "uint8" => 1,
        "short" | "ushort" | "int16" | "uint16" => 2,
        "int" | "uint" | "float" | "int32" | "uint32" | "float32" => 4,
        "double" | "float64" => 8,
        _ => return None,
    })
}

fn read_scalar(cur: &mut Bytes, t: &str, format: Format) -> Option<f64> {
    let b = cur.take(type_size(t)?)?;
    let le = format == Format::BinaryLe;
    macro_rules! num {
        ($ty:ty) => {{
            let arr = b.try_into().ok()?;
            (if le { <$ty>::from_le_bytes(arr) } else { <$ty>::from_be_bytes(arr) }) as f64
        }};
    }
    Some(match t {
        "char" | "int8" => b[0] as i8 as f64,
        "uchar" | "uint8" => b[0] as f64,
        "short" | "int16" => num!(i16),
        "ushort" | "uint16" => num!(u16),
        "int" | "int32" => num!(i32),
        "uint" | "uint32" => num!(u32),
        "float" | "float32" => num!(f32),
        _ => num!(f64),
    })
}

impl Ply {
    fn read(path: &Path) -> Result<Ply> {
        let bytes = read_bytes(path)?;
        let bad = |msg: String| Error::format(path, msg);
        let mut cur = Bytes::new(&bytes);
        if cur.line() != Some("ply") {
            return Err(bad("missing 'ply' magic".into()));
        }
        let mut format = None;
        let mut elements: Vec<Element> = Vec::new();
        loop {
            let line = cur.line().ok_or_else(|| bad("header ends before end_header".into()))?;
            let tok: Vec<&str> = line.split_whitespace().collect();
            match tok.first().copied() {
                Some("format") => {
                    format = Some(match tok.get(1).copied() {
                        Some("ascii") => Format::Ascii,
                        Some("binary_little_endian") => Format::BinaryLe,
                        Some("binary_big_endian") => Format::BinaryBe,
                        other => return Err(bad(format!("unknown format {other:?}"))),
                    })
                }
                Some("element") => {
                    let (Some(name), Some(count)) = (tok.get(1), tok.get(2).and_then(|c| c.parse().ok())) else {
                        return Err(bad(format!("malformed element line '{line}'")));
                    };
                    elements.push(Element {
                        name: name.to_string(),
                        count,
                        props: Vec::new(),
                        rows: Vec::new(),
                    });
                }
                Some("property") => {
                    let el = elements.last_mut().ok_or_else(|| bad("property before any element".into()))?;
                    let prop = if tok.get(1) == Some(&"list") {
                        match tok[..] {
                            [_, _, count, item, name] if type_size(count).is_some() && type_size(item).is_some() => {
                                (name.to_string(), item.to_string(), Some(count.to_string()))
                            }
                            _ => return Err(bad(format!("malformed list property '{line}'"))),
                        }
                    } else {
                        match tok[..] {
                            [_, ty, name] if type_size(ty).is_some() => (name.to_string(), ty.to_string(), None),
                            _ => return Err(bad(format!("malformed property '{line}'"))),
                        }
                    };
                    el.props.push(prop);
                }
                Some("end_header") => break,
                Some("comment") | Some("obj_info") | None => {}
                Some(other) => return Err(bad(format!("unexpected header keyword '{other}'"))),
            }
        }
        let format = format.ok_or_else(|| bad("missing format line".into()))?;
        let truncated = |el: &str| Error::format(path, format!("data for element '{el}' is truncated"));
        if format == Format::Ascii {
            let rest = std::str::from_utf8(&bytes[cur.pos..]).map_err(|_| bad("ASCII body is not UTF-8".into()))?;
            let mut tokens = rest.split_whitespace();
            for el in &mut elements {
                for _ in 0..el.count {
                    let mut row = Vec::with_capacity(el.props.len());
                    for (_, _, list) in &el.props {
                        let mut next = || -> Result<f64> {
                            tokens
                                .next()
                                .and_then(|t| t.parse().ok())
                                .ok_or_else(|| truncated(&el.name))
                        };
                        let n = if list.is_some() { next()? as usize } else { 1 };
                        row.push((0..n).map(|_| next()).collect::<Result<Vec<_>>>()?);
                    }
                    el.rows.push(row);
                }
            }
        } else {
            for el in &mut elements {
                el.rows.reserve(el.count);
                for _ in 0..el.count {
                    let mut row = Vec::with_capacity(el.props.len());
                    for (_, ty, list) in &el.props {
                        let n = match list {
                            Some(ct) => read_scalar(&mut cur, ct, format).ok_or_else(|| truncated(&el.name))? as usize,
                            None => 1,
                        };
                        let vals = (0..n)
                            .map(|_| read_scalar(&mut cur, ty, format).ok_or_else(|| truncated(&el.name)))
                            .collect::<Result<Vec<_>>>()?;
                        row.push(vals);
                    }
                    el.rows.push(row);
                }
            }
        }
        Ok(Ply { elements })
    }

    fn element(&self, path: &Path, name: &str) -> Result<&Element> {
        self.elements
            .iter()
            .find(|e| e.name == name)
            .ok_or_else(|| Error::format(path, format!("no '{name}' element")))
    }
}
