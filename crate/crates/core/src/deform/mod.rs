//! Initial deformation from user correspondences: global affine alignment,
//! biharmonic handle deformation over all pairs, and an as-rigid-as-possible
//! refinement pinned at the rigid pairs.

mod affine;
mod arap;
mod biharmonic;
mod correspondence;
mod laplacian;
mod sparse;

pub use affine::{estimate_global_affine, Affine3, AffineModel};
pub use arap::{arap_deform, arap_energy, ArapOutcome, ArapSolver, DEFAULT_ARAP_ITERATIONS};
pub use biharmonic::biharmonic_deform;
pub use correspondence::{parse_correspondences, Correspondence, CorrespondenceSet, PairKind};
pub use laplacian::cotangent_laplacian;
pub use sparse::SparseSystem;

use thiserror::Error;

use crate::geometry::{SurfaceMesh, Vec3};

#[derive(Debug, Error)]
pub enum DeformError {
    #[error("correspondence references vertex {index} but the mesh has {vertex_count} vertices")]
    InvalidVertex { index: usize, vertex_count: usize },
    #[error("vertex {0} appears in more than one correspondence")]
    DuplicateVertex(usize),
    #[error("correspondence target for vertex {0} is not finite")]
    NonFiniteTarget(usize),
    #[error("correspondence parse error on line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("face {0} is degenerate")]
    DegenerateFace(usize),
    #[error("connected component {component} (containing vertex {vertex}) has no handle; the system is singular")]
    UnconstrainedComponent { component: usize, vertex: usize },
    #[error("sparse factorization failed: {0}")]
    Factorization(String),
    #[error("{0} needs at least one handle")]
    NoHandles(&'static str),
    #[error("iteration count must be at least 1")]
    ZeroIterations,
}

pub type Result<T> = std::result::Result<T, DeformError>;

/// Handle vertices followed by unreferenced vertices. Fails when a connected
/// component carries no handle.
pub(crate) fn pinned_vertices(mesh: &SurfaceMesh, handles: &[usize]) -> Result<Vec<usize>> {
    let components = mesh.components();
    let count = components.iter().flatten().max().map_or(0, |c| c + 1);
    let mut anchored = vec![false; count];
    for &h in handles {
        if let Some(c) = components[h] {
            anchored[c] = true;
        }
    }
    if let Some(component) = anchored.iter().position(|a| !a) {
        let vertex = components.iter().position(|c| *c == Some(component)).unwrap();
        return Err(DeformError::UnconstrainedComponent { component, vertex });
    }
    let mut fixed = handles.to_vec();
    fixed.extend((0..mesh.vertex_count()).filter(|&i| components[i].is_none() && !handles.contains(&i)));
    Ok(fixed)
}

/// Output of [`initial_deformation`].
#[derive(Debug, Clone)]
pub struct InitialDeformation {
    pub affine: Affine3,
    pub model: AffineModel,
    pub positions: Vec<Vec3>,
}

/// Affine alignment, then biharmonic deformation on every pair, then ARAP on
/// the rigid pairs. Stages without pairs are skipped, so an empty set yields
/// the source positions unchanged.
pub fn initial_deformation(
    mesh: &SurfaceMesh,
    corr: &CorrespondenceSet,
    arap_iterations: usize,
) -> Result<InitialDeformation> {
    corr.validate(mesh.vertex_count())?;
    let pairs: Vec<(Vec3, Vec3)> = corr
        .pairs()
        .iter()
        .map(|c| (mesh.vertices()[c.source_vertex], c.target_point))
        .collect();
    let (affine, model) = estimate_global_affine(&pairs);
    if corr.is_empty() {
        return Ok(InitialDeformation {
            affine,
            model,
            positions: mesh.vertices().to_vec(),
        });
    }
    let rest = mesh.transformed(|p| affine.apply(p));
    let mut positions = biharmonic::solve_displacements(&rest, corr.pairs())?;
    let rigid: Vec<&Correspondence> = corr.pairs().iter().filter(|c| c.kind == PairKind::Rigid).collect();
    if !rigid.is_empty() {
        let ids: Vec<usize> = rigid.iter().map(|c| c.source_vertex).collect();
        let targets: Vec<Vec3> = rigid.iter().map(|c| c.target_point).collect();
        let solver = ArapSolver::new(&rest, &ids)?;
        positions = solver.solve(&positions, &targets, arap_iterations)?.positions;
    }
    Ok(InitialDeformation {
        affine,
        model,
        positions,
    })
}
