use nalgebra::Matrix2;

use super::{GeometryError, Result, SurfaceMesh, Vec3};

pub fn triangle_area(a: &Vec3, b: &Vec3, c: &Vec3) -> f64 {
    0.5 * (b - a).cross(&(c - a)).norm()
}

/// Interior angle at `a` in the triangle (a, b, c).
pub(crate) fn angle_at(a: &Vec3, b: &Vec3, c: &Vec3) -> f64 {
    let u = b - a;
    let v = c - a;
    u.cross(&v).norm().atan2(u.dot(&v))
}

/// Per-corner angles of the triangulated view. `angles[t][k]` is the angle at
/// corner `k` of triangle `t`, so two meshes with the same connectivity have
/// corresponding tables.
#[derive(Debug, Clone, PartialEq)]
pub struct CornerAngles {
    pub angles: Vec<[f64; 3]>,
    /// Triangles with a zero-length edge; their angles are meaningless.
    pub degenerate: Vec<usize>,
}

pub fn corner_angles(mesh: &SurfaceMesh) -> CornerAngles {
    let v = mesh.vertices();
    let mut angles = Vec::with_capacity(mesh.triangles().len());
    let mut degenerate = Vec::new();
    for (ti, t) in mesh.triangles().iter().enumerate() {
        let p = [v[t[0]], v[t[1]], v[t[2]]];
        let shortest = (0..3).map(|k| (p[(k + 1) % 3] - p[k]).norm()).fold(f64::INFINITY, f64::min);
        if shortest == 0.0 {
            degenerate.push(ti);
        }
        angles.push([
            angle_at(&p[0], &p[1], &p[2]),
            angle_at(&p[1], &p[2], &p[0]),
            angle_at(&p[2], &p[0], &p[1]),
        ]);
    }
    CornerAngles { angles, degenerate }
}

/// For every vertex, the areas of its incident triangles normalized to sum 1,
/// stored in compressed rows.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalAreaDistribution {
    offsets: Vec<usize>,
    triangles: Vec<usize>,
    probs: Vec<f64>,
    /// Vertices whose incident triangles all have zero area. Their row is
    /// filled uniformly.
    pub degenerate: Vec<usize>,
}

impl LocalAreaDistribution {
    pub fn vertex_count(&self) -> usize {
        self.offsets.len() - 1
    }

    /// Incident triangle ids and their normalized areas for vertex `i`.
    pub fn ring(&self, i: usize) -> (&[usize], &[f64]) {
        let r = self.offsets[i]..self.offsets[i + 1];
        (&self.triangles[r.clone()], &self.probs[r])
    }
}

/// Incident triangles per vertex, in compressed rows ordered by triangle id.
pub(crate) fn vertex_triangles(mesh: &SurfaceMesh) -> (Vec<usize>, Vec<usize>) {
    let n = mesh.vertex_count();
    let mut counts = vec![0usize; n + 1];
    for t in mesh.triangles() {
        for &i in t {
            counts[i + 1] += 1;
        }
    }
    for i in 0..n {
        counts[i + 1] += counts[i];
    }
    let offsets = counts.clone();
    let mut fill = counts;
    let mut tris = vec![0usize; offsets[n]];
    for (ti, t) in mesh.triangles().iter().enumerate() {
        for &i in t {
            tris[fill[i]] = ti;
            fill[i] += 1;
        }
    }
    (offsets, tris)
}

pub fn local_area_distribution(mesh: &SurfaceMesh) -> LocalAreaDistribution {
    let v = mesh.vertices();
    let areas: Vec<f64> = mesh
        .triangles()
        .iter()
        .map(|t| triangle_area(&v[t[0]], &v[t[1]], &v[t[2]]))
        .collect();
    let (offsets, triangles) = vertex_triangles(mesh);
    let mut probs = vec![0.0; triangles.len()];
    let mut degenerate = Vec::new();
    for i in 0..mesh.vertex_count() {
        let r = offsets[i]..offsets[i + 1];
        if r.is_empty() {
            continue;
        }
        let total: f64 = triangles[r.clone()].iter().map(|&t| areas[t]).sum();
        if total > 0.0 {
            for k in r {
                probs[k] = areas[triangles[k]] / total;
            }
        } else {
            degenerate.push(i);
            let u = 1.0 / r.len() as f64;
            for k in r {
                probs[k] = u;
            }
        }
    }
    LocalAreaDistribution {
        offsets,
        triangles,
        probs,
        degenerate,
    }
}

/// Triangle shape quality `4√3·A / (|e1|² + |e2|² + |e3|²)`: 1 for an
/// equilateral triangle, 0 for a degenerate one.
pub fn face_quality(a: &Vec3, b: &Vec3, c: &Vec3) -> f64 {
    let e = (b - a).norm_squared() + (c - b).norm_squared() + (a - c).norm_squared();
    if e == 0.0 {
        return 0.0;
    }
    (4.0 * 3f64.sqrt() * triangle_area(a, b, c) / e).clamp(0.0, 1.0)
}

fn gram(a: &Vec3, b: &Vec3, c: &Vec3) -> Matrix2<f64> {
    let e1 = b - a;
    let e2 = c - a;
    let off = e1.dot(&e2);
    Matrix2::new(e1.dot(&e1), off, off, e2.dot(&e2))
}

/// Per-triangle squared Frobenius norm of the map's Jacobian and source area.
///
/// With `G` the Gram matrix of a triangle's edge vectors,
/// `|J|²_F = tr(G_deformed · G_source⁻¹)`, independent of the local frames.
fn jacobian_terms(source: &SurfaceMesh, deformed: &SurfaceMesh) -> Result<Vec<(f64, f64)>> {
    if !source.same_connectivity(deformed) {
        return Err(GeometryError::ConnectivityMismatch(format!(
            "source has {} vertices / {} faces, deformed has {} / {}",
            source.vertex_count(),
            source.faces().len(),
            deformed.vertex_count(),
            deformed.faces().len()
        )));
    }
    let (sv, dv) = (source.vertices(), deformed.vertices());
    source
        .triangles()
        .iter()
        .enumerate()
        .map(|(ti, t)| {
            let gs = gram(&sv[t[0]], &sv[t[1]], &sv[t[2]]);
            let det = gs.determinant();
            if !(det > 1e-24 * gs[(0, 0)] * gs[(1, 1)]) {
                return Err(GeometryError::DegenerateFace(source.triangle_face()[ti]));
            }
            let gd = gram(&dv[t[0]], &dv[t[1]], &dv[t[2]]);
            let inv = Matrix2::new(gs[(1, 1)], -gs[(0, 1)], -gs[(1, 0)], gs[(0, 0)]) / det;
            let fro2 = (gd * inv).trace();
            Ok((fro2, 0.5 * det.sqrt()))
        })
        .collect()
}

/// Raw discrete Dirichlet energy `½ Σ_f |J_f|²_F a_f`.
pub fn dirichlet_energy(source: &SurfaceMesh, deformed: &SurfaceMesh) -> Result<f64> {
    Ok(0.5 * jacobian_terms(source, deformed)?.iter().map(|(j, a)| j * a).sum::<f64>())
}

/// Area-normalized Dirichlet distortion: `Σ|J|²a / (2 Σa) − 1`, zero for
/// any rigid motion. Shrinking maps can score below zero (down to −1).
pub fn dirichlet_distortion(source: &SurfaceMesh, deformed: &SurfaceMesh) -> Result<f64> {
    let terms = jacobian_terms(source, deformed)?;
    let total_area: f64 = terms.iter().map(|t| t.1).sum();
    let energy: f64 = terms.iter().map(|(j, a)| j * a).sum();
    Ok(energy / (2.0 * total_area) - 1.0)
}
