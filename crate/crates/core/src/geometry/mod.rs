//! Mesh and point-cloud representation, file I/O, unit-cube normalization,
//! area-weighted sampling, nearest-point queries and the per-element
//! quantities (angles, areas, face quality, Dirichlet distortion) consumed by
//! the losses and the evaluation metrics.

mod io;
mod measures;
mod normalize;
mod sampling;
mod target;

pub use io::{load_mesh, load_target, parse_mesh, parse_target, write_mesh, write_obj_string};
pub use measures::{
    corner_angles, dirichlet_distortion, dirichlet_energy, face_quality, local_area_distribution,
    triangle_area, CornerAngles, LocalAreaDistribution,
};
pub use normalize::{normalize_points, NormalizationTransform};
pub use sampling::{sample_surface, SamplePlan, SurfaceSample, TriangleSampler};
pub use target::{PointIndex, TargetKind, TargetShape, DEFAULT_DENSE_SAMPLES};

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// 3D position or direction in double precision.
pub type Vec3 = Vector3<f64>;

#[derive(Debug, Error)]
pub enum GeometryError {
    #[error("failed to read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("parse error on line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("face {face} has {arity} vertices; only triangles and quads are supported")]
    FaceArity { face: usize, arity: usize },
    #[error("face {face} references vertex {index} but the mesh has {vertex_count} vertices")]
    IndexOutOfRange {
        face: usize,
        index: usize,
        vertex_count: usize,
    },
    #[error("face {face} repeats a vertex index")]
    RepeatedIndex { face: usize },
    #[error("geometry is empty")]
    Empty,
    #[error("non-finite coordinate at point {0}")]
    NonFinite(usize),
    #[error("bounding box is degenerate: all points coincide")]
    DegenerateBounds,
    #[error("surface has zero total area")]
    ZeroArea,
    #[error("connectivity mismatch: {0}")]
    ConnectivityMismatch(String),
    #[error("source face {0} is degenerate")]
    DegenerateFace(usize),
}

pub type Result<T> = std::result::Result<T, GeometryError>;

/// A polygonal face: triangle or quad, indices into the vertex list.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Face {
    Tri([usize; 3]),
    Quad([usize; 4]),
}

impl Face {
    pub fn indices(&self) -> &[usize] {
        match self {
            Face::Tri(v) => v,
            Face::Quad(v) => v,
        }
    }

    /// Split into triangles. Quads are cut along the diagonal that starts at
    /// their lowest-index vertex.
    pub fn split(&self) -> ([usize; 3], Option<[usize; 3]>) {
        match *self {
            Face::Tri(t) => (t, None),
            Face::Quad(q) => {
                let k = (0..4).min_by_key(|&i| q[i]).unwrap();
                let (a, b, c, d) = (q[k], q[(k + 1) % 4], q[(k + 2) % 4], q[(k + 3) % 4]);
                ([a, b, c], Some([a, c, d]))
            }
        }
    }
}

/// Indexed polygon mesh (triangles and quads). Manifoldness is not assumed.
///
/// The triangulated view is derived once at construction; all per-element
/// quantities work on it while `faces` is kept untouched for output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "MeshData", into = "MeshData")]
pub struct SurfaceMesh {
    vertices: Vec<Vec3>,
    faces: Vec<Face>,
    triangles: Vec<[usize; 3]>,
    triangle_face: Vec<usize>,
}

#[derive(Serialize, Deserialize)]
struct MeshData {
    vertices: Vec<[f64; 3]>,
    faces: Vec<Face>,
}

impl TryFrom<MeshData> for SurfaceMesh {
    type Error = GeometryError;
    fn try_from(d: MeshData) -> Result<Self> {
        SurfaceMesh::new(d.vertices.into_iter().map(Vec3::from).collect(), d.faces)
    }
}

impl From<SurfaceMesh> for MeshData {
    fn from(m: SurfaceMesh) -> Self {
        MeshData {
            vertices: m.vertices.iter().map(|v| [v.x, v.y, v.z]).collect(),
            faces: m.faces,
        }
    }
}

impl SurfaceMesh {
    pub fn new(vertices: Vec<Vec3>, faces: Vec<Face>) -> Result<Self> {
        let n = vertices.len();
        if let Some(i) = vertices.iter().position(|v| !v.iter().all(|c| c.is_finite())) {
            return Err(GeometryError::NonFinite(i));
        }
        for (fi, f) in faces.iter().enumerate() {
            let idx = f.indices();
            for &i in idx {
                if i >= n {
                    return Err(GeometryError::IndexOutOfRange {
                        face: fi,
                        index: i,
                        vertex_count: n,
                    });
                }
            }
            for a in 0..idx.len() {
                for b in a + 1..idx.len() {
                    if idx[a] == idx[b] {
                        return Err(GeometryError::RepeatedIndex { face: fi });
                    }
                }
            }
        }
        let mut triangles = Vec::with_capacity(faces.len() * 2);
        let mut triangle_face = Vec::with_capacity(faces.len() * 2);
        for (fi, f) in faces.iter().enumerate() {
            let (first, second) = f.split();
            for t in std::iter::once(first).chain(second) {
                triangles.push(t);
                triangle_face.push(fi);
            }
        }
        Ok(Self {
            vertices,
            faces,
            triangles,
            triangle_face,
        })
    }

    pub fn from_triangles(vertices: Vec<Vec3>, tris: &[[usize; 3]]) -> Result<Self> {
        Self::new(vertices, tris.iter().map(|&t| Face::Tri(t)).collect())
    }

    pub fn vertices(&self) -> &[Vec3] {
        &self.vertices
    }

    pub fn faces(&self) -> &[Face] {
        &self.faces
    }

    pub fn vertex_count(&self) -> usize {
        self.vertices.len()
    }

    /// Triangulated view of the faces.
    pub fn triangles(&self) -> &[[usize; 3]] {
        &self.triangles
    }

    /// Index of the polygon each triangle of the triangulated view came from.
    pub fn triangle_face(&self) -> &[usize] {
        &self.triangle_face
    }

    /// Same connectivity, new vertex positions.
    pub fn with_vertices(&self, vertices: Vec<Vec3>) -> Result<Self> {
        if vertices.len() != self.vertices.len() {
            return Err(GeometryError::ConnectivityMismatch(format!(
                "expected {} vertices, got {}",
                self.vertices.len(),
                vertices.len()
            )));
        }
        if let Some(i) = vertices.iter().position(|v| !v.iter().all(|c| c.is_finite())) {
            return Err(GeometryError::NonFinite(i));
        }
        Ok(Self {
            vertices,
            faces: self.faces.clone(),
            triangles: self.triangles.clone(),
            triangle_face: self.triangle_face.clone(),
        })
    }

    pub fn same_connectivity(&self, other: &SurfaceMesh) -> bool {
        self.vertices.len() == other.vertices.len() && self.faces == other.faces
    }

    pub fn total_area(&self) -> f64 {
        self.triangles
            .iter()
            .map(|t| triangle_area(&self.vertices[t[0]], &self.vertices[t[1]], &self.vertices[t[2]]))
            .sum()
    }

    /// For every vertex, whether at least one face references it.
    pub fn referenced_vertices(&self) -> Vec<bool> {
        let mut used = vec![false; self.vertices.len()];
        for t in &self.triangles {
            for &i in t {
                used[i] = true;
            }
        }
        used
    }

    /// Connected components over the face graph. Unreferenced vertices get
    /// `None`.
    pub fn components(&self) -> Vec<Option<usize>> {
        let n = self.vertices.len();
        let mut parent: Vec<usize> = (0..n).collect();
        fn find(p: &mut [usize], mut x: usize) -> usize {
            while p[x] != x {
                p[x] = p[p[x]];
                x = p[x];
            }
            x
        }
        for t in &self.triangles {
            for k in 1..3 {
                let a = find(&mut parent, t[0]);
                let b = find(&mut parent, t[k]);
                if a != b {
                    parent[a.max(b)] = a.min(b);
                }
            }
        }
        let used = self.referenced_vertices();
        let mut label = vec![None; n];
        let mut ids = std::collections::HashMap::new();
        for i in 0..n {
            if used[i] {
                let r = find(&mut parent, i);
                let next = ids.len();
                label[i] = Some(*ids.entry(r).or_insert(next));
            }
        }
        label
    }

    pub fn transformed(&self, f: impl Fn(&Vec3) -> Vec3) -> SurfaceMesh {
        let vertices = self.vertices.iter().map(f).collect();
        Self {
            vertices,
            faces: self.faces.clone(),
            triangles: self.triangles.clone(),
            triangle_face: self.triangle_face.clone(),
        }
    }
}

/// Carrier for sampled points, optionally tagged with the triangle they were
/// drawn from.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PointSet {
    pub points: Vec<Vec3>,
    pub face_ids: Option<Vec<usize>>,
}

impl PointSet {
    pub fn new(points: Vec<Vec3>) -> Result<Self> {
        if let Some(i) = points.iter().position(|v| !v.iter().all(|c| c.is_finite())) {
            return Err(GeometryError::NonFinite(i));
        }
        Ok(Self {
            points,
            face_ids: None,
        })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quad_splits_on_lowest_index_diagonal() {
        assert_eq!(Face::Quad([0, 1, 2, 3]).split(), ([0, 1, 2], Some([0, 2, 3])));
        assert_eq!(Face::Quad([5, 7, 2, 9]).split(), ([2, 9, 5], Some([2, 5, 7])));
    }

    #[test]
    fn rejects_out_of_range_and_repeated() {
        let v = vec![Vec3::zeros(), Vec3::x(), Vec3::y()];
        assert!(matches!(
            SurfaceMesh::from_triangles(v.clone(), &[[0, 1, 9]]),
            Err(GeometryError::IndexOutOfRange { index: 9, .. })
        ));
        assert!(matches!(
            SurfaceMesh::from_triangles(v, &[[0, 1, 1]]),
            Err(GeometryError::RepeatedIndex { face: 0 })
        ));
    }

    #[test]
    fn components_skip_unreferenced() {
        let v = vec![Vec3::zeros(); 7];
        let m = SurfaceMesh::from_triangles(v, &[[0, 1, 2], [3, 4, 5]]).unwrap();
        let c = m.components();
        assert_eq!(c[0], c[2]);
        assert_ne!(c[0], c[3]);
        assert_eq!(c[6], None);
    }

    #[test]
    fn serde_round_trip_keeps_quads() {
        let v = vec![Vec3::zeros(), Vec3::x(), Vec3::new(1.0, 1.0, 0.0), Vec3::y()];
        let m = SurfaceMesh::new(v, vec![Face::Quad([0, 1, 2, 3])]).unwrap();
        let s = serde_json::to_string(&m).unwrap();
        let back: SurfaceMesh = serde_json::from_str(&s).unwrap();
        assert_eq!(back, m);
        assert_eq!(back.triangles().len(), 2);
    }
}
