use std::fmt::Write as _;
use std::path::Path;

use super::{Face, GeometryError, Result, SurfaceMesh, TargetShape, Vec3};

/// Raw records of an OBJ-style text file.
struct Records {
    vertices: Vec<Vec3>,
    faces: Vec<Vec<usize>>,
    bare_points: Vec<Vec3>,
}

fn parse_coord(tok: Option<&str>, line: usize) -> Result<f64> {
    let tok = tok.ok_or_else(|| GeometryError::Parse {
        line,
        message: "expected three coordinates".into(),
    })?;
    let v: f64 = tok.parse().map_err(|_| GeometryError::Parse {
        line,
        message: format!("invalid number {tok:?}"),
    })?;
    if !v.is_finite() {
        return Err(GeometryError::Parse {
            line,
            message: format!("non-finite coordinate {tok:?}"),
        });
    }
    Ok(v)
}

fn parse_records(text: &str) -> Result<Records> {
    let mut rec = Records {
        vertices: Vec::new(),
        faces: Vec::new(),
        bare_points: Vec::new(),
    };
    for (ln, raw) in text.lines().enumerate() {
        let line = ln + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let mut toks = content.split_whitespace();
        let head = toks.next().unwrap();
        match head {
            "v" => {
                let x = parse_coord(toks.next(), line)?;
                let y = parse_coord(toks.next(), line)?;
                let z = parse_coord(toks.next(), line)?;
                rec.vertices.push(Vec3::new(x, y, z));
            }
            "f" => {
                let mut face = Vec::new();
                for tok in toks {
                    let first = tok.split('/').next().unwrap_or("");
                    let idx: i64 = first.parse().map_err(|_| GeometryError::Parse {
                        line,
                        message: format!("invalid face index {tok:?}"),
                    })?;
                    if idx < 1 {
                        return Err(GeometryError::Parse {
                            line,
                            message: format!("face indices are 1-based, got {idx}"),
                        });
                    }
                    face.push(idx as usize - 1);
                }
                if face.len() < 3 {
                    return Err(GeometryError::Parse {
                        line,
                        message: "face needs at least 3 indices".into(),
                    });
                }
                rec.faces.push(face);
            }
            "vn" | "vt" | "vp" | "o" | "g" | "s" | "usemtl" | "mtllib" | "l" => {}
            _ if head.parse::<f64>().is_ok() => {
                let x = parse_coord(Some(head), line)?;
                let y = parse_coord(toks.next(), line)?;
                let z = parse_coord(toks.next(), line)?;
                rec.bare_points.push(Vec3::new(x, y, z));
            }
            other => {
                return Err(GeometryError::Parse {
                    line,
                    message: format!("unknown record {other:?}"),
                })
            }
        }
    }
    if !rec.bare_points.is_empty() && (!rec.vertices.is_empty() || !rec.faces.is_empty()) {
        return Err(GeometryError::Parse {
            line: 0,
            message: "mixing bare `x y z` lines with `v`/`f` records".into(),
        });
    }
    Ok(rec)
}

fn build_faces(raw: Vec<Vec<usize>>) -> Result<Vec<Face>> {
    raw.into_iter()
        .enumerate()
        .map(|(fi, f)| match f.len() {
            3 => Ok(Face::Tri([f[0], f[1], f[2]])),
            4 => Ok(Face::Quad([f[0], f[1], f[2], f[3]])),
            arity => Err(GeometryError::FaceArity { face: fi, arity }),
        })
        .collect()
}

/// Parse `v x y z` / `f i j k [l]` text (1-based indices) into a mesh.
pub fn parse_mesh(text: &str) -> Result<SurfaceMesh> {
    let rec = parse_records(text)?;
    if !rec.bare_points.is_empty() {
        return Err(GeometryError::Parse {
            line: 0,
            message: "file contains bare points, not a mesh".into(),
        });
    }
    if rec.vertices.is_empty() {
        return Err(GeometryError::Empty);
    }
    SurfaceMesh::new(rec.vertices, build_faces(rec.faces)?)
}

/// Parse any supported target representation.
///
/// Files without faces become point clouds. Files whose faces never share a
/// vertex are kept as polygon soups; everything else is a mesh.
pub fn parse_target(text: &str, dense_samples: usize) -> Result<TargetShape> {
    let rec = parse_records(text)?;
    if !rec.bare_points.is_empty() {
        return TargetShape::point_cloud(rec.bare_points);
    }
    if rec.vertices.is_empty() {
        return Err(GeometryError::Empty);
    }
    if rec.faces.is_empty() {
        return TargetShape::point_cloud(rec.vertices);
    }
    let faces = build_faces(rec.faces)?;
    let mut uses = vec![0usize; rec.vertices.len()];
    for f in &faces {
        for &i in f.indices() {
            if i >= uses.len() {
                // let the mesh constructor report it
                break;
            }
            uses[i] += 1;
        }
    }
    let mesh = SurfaceMesh::new(rec.vertices, faces)?;
    if uses.iter().all(|&u| u <= 1) {
        let tris = mesh
            .triangles()
            .iter()
            .map(|t| [mesh.vertices()[t[0]], mesh.vertices()[t[1]], mesh.vertices()[t[2]]])
            .collect();
        TargetShape::polygon_soup(tris, dense_samples)
    } else {
        TargetShape::mesh(mesh, dense_samples)
    }
}

fn read(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|source| GeometryError::Io {
        path: path.display().to_string(),
        source,
    })
}

pub fn load_mesh(path: impl AsRef<Path>) -> Result<SurfaceMesh> {
    parse_mesh(&read(path.as_ref())?)
}

pub fn load_target(path: impl AsRef<Path>, dense_samples: usize) -> Result<TargetShape> {
    parse_target(&read(path.as_ref())?, dense_samples)
}

/// Serialize a mesh as OBJ text. Coordinates use the shortest exact decimal
/// form, so writing is deterministic and lossless.
pub fn write_obj_string(mesh: &SurfaceMesh) -> String {
    let mut s = String::with_capacity(mesh.vertex_count() * 48 + mesh.faces().len() * 24);
    for v in mesh.vertices() {
        let _ = writeln!(s, "v {} {} {}", v.x, v.y, v.z);
    }
    for f in mesh.faces() {
        s.push('f');
        for &i in f.indices() {
            let _ = write!(s, " {}", i + 1);
        }
        s.push('\n');
    }
    s
}

pub fn write_mesh(path: impl AsRef<Path>, mesh: &SurfaceMesh) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, write_obj_string(mesh)).map_err(|source| GeometryError::Io {
        path: path.display().to_string(),
        source,
    })
}
