use nalgebra_sparse::{CooMatrix, CscMatrix};

use super::{DeformError, Result};
use crate::geometry::SurfaceMesh;

const COT_LIMIT: f64 = 1e4;

/// Positive semi-definite cotangent Laplacian: `L_ij = -(cot α + cot β)/2`
/// on edges, `L_ii = -Σ_j L_ij`. Cotangents are clamped to `±1e4`; a face
/// with zero area is rejected.
pub fn cotangent_laplacian(mesh: &SurfaceMesh) -> Result<CscMatrix<f64>> {
    let n = mesh.vertex_count();
    let mut coo = CooMatrix::new(n, n);
    for (w, [i, j]) in edge_weights(mesh)? {
        coo.push(i, j, -w);
        coo.push(j, i, -w);
        coo.push(i, i, w);
        coo.push(j, j, w);
    }
    Ok(CscMatrix::from(&coo))
}

/// Per-triangle half-cotangent weights for the three edges, opposite each
/// corner: entry `k` belongs to edge `(t[k+1], t[k+2])`.
pub(crate) fn triangle_cot_weights(mesh: &SurfaceMesh) -> Result<Vec<[f64; 3]>> {
    let v = mesh.vertices();
    let faces = mesh.triangle_face();
    mesh.triangles()
        .iter()
        .enumerate()
        .map(|(t, tri)| {
            let p = [v[tri[0]], v[tri[1]], v[tri[2]]];
            let double_area = (p[1] - p[0]).cross(&(p[2] - p[0])).norm();
            let scale = (0..3).map(|k| (p[(k + 1) % 3] - p[k]).norm_squared()).fold(0.0, f64::max);
            if !(double_area > f64::EPSILON * scale) {
                return Err(DeformError::DegenerateFace(faces[t]));
            }
            let mut w = [0.0; 3];
            for k in 0..3 {
                let a = p[(k + 1) % 3] - p[k];
                let b = p[(k + 2) % 3] - p[k];
                let cot = (a.dot(&b) / double_area).clamp(-COT_LIMIT, COT_LIMIT);
                w[k] = 0.5 * cot;
            }
            Ok(w)
        })
        .collect()
}

fn edge_weights(mesh: &SurfaceMesh) -> Result<Vec<(f64, [usize; 2])>> {
    let w = triangle_cot_weights(mesh)?;
    Ok(mesh
        .triangles()
        .iter()
        .zip(w)
        .flat_map(|(t, w)| (0..3).map(move |k| (w[k], [t[(k + 1) % 3], t[(k + 2) % 3]])))
        .collect())
}
