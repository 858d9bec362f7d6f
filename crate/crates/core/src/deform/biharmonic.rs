use nalgebra::DMatrix;

use super::{
    cotangent_laplacian, estimate_global_affine, pinned_vertices, Correspondence, CorrespondenceSet,
    Result, SparseSystem,
};
use crate::geometry::{SurfaceMesh, Vec3};

/// Deform `mesh` so every handle vertex lands on its target and the
/// displacement field is biharmonic elsewhere. When `prealigned` is false the
/// global affine fit of the handles is applied first.
pub fn biharmonic_deform(mesh: &SurfaceMesh, handles: &CorrespondenceSet, prealigned: bool) -> Result<SurfaceMesh> {
    handles.validate(mesh.vertex_count())?;
    if handles.is_empty() {
        return Err(super::DeformError::NoHandles("biharmonic deformation"));
    }
    let rest = if prealigned {
        mesh.clone()
    } else {
        let pairs: Vec<(Vec3, Vec3)> = handles
            .pairs()
            .iter()
            .map(|c| (mesh.vertices()[c.source_vertex], c.target_point))
            .collect();
        let (affine, _) = estimate_global_affine(&pairs);
        mesh.transformed(|p| affine.apply(p))
    };
    let positions = solve_displacements(&rest, handles.pairs())?;
    Ok(rest
        .with_vertices(positions)
        .expect("same vertex count"))
}

/// Solve `L² d = 0` on free vertices with `d = u - rest` at handles and
/// `d = 0` at unreferenced vertices; returns `rest + d`.
pub(crate) fn solve_displacements(rest: &SurfaceMesh, pairs: &[Correspondence]) -> Result<Vec<Vec3>> {
    let handle_ids: Vec<usize> = pairs.iter().map(|c| c.source_vertex).collect();
    let fixed = pinned_vertices(rest, &handle_ids)?;
    let l = cotangent_laplacian(rest)?;
    let bilaplacian = &l * &l;
    let system = SparseSystem::new(&bilaplacian, &fixed)?;

    let n = rest.vertex_count();
    let v = rest.vertices();
    let mut values = DMatrix::zeros(fixed.len(), 3);
    for (r, c) in pairs.iter().enumerate() {
        let d = c.target_point - v[c.source_vertex];
        values.row_mut(r).copy_from(&d.transpose());
    }
    let d = system.solve(&DMatrix::zeros(n, 3), &values);
    let mut out: Vec<Vec3> = (0..n).map(|i| v[i] + Vec3::new(d[(i, 0)], d[(i, 1)], d[(i, 2)])).collect();
    for c in pairs {
        out[c.source_vertex] = c.target_point;
    }
    Ok(out)
}
