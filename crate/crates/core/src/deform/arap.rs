use nalgebra::{DMatrix, Matrix3};

use super::{
    biharmonic, cotangent_laplacian, estimate_global_affine, laplacian::triangle_cot_weights, pinned_vertices,
    CorrespondenceSet, DeformError, Result, SparseSystem,
};
use crate::geometry::{SurfaceMesh, Vec3};

pub const DEFAULT_ARAP_ITERATIONS: usize = 20;

#[derive(Debug, Clone)]
pub struct ArapOutcome {
    pub positions: Vec<Vec3>,
    /// Energy after the initial rotation fit and after every iteration.
    pub energies: Vec<f64>,
}

/// Local-global as-rigid-as-possible solver with a fixed rest shape and
/// handle set. The global system is factored once.
#[derive(Debug)]
pub struct ArapSolver {
    rest: Vec<Vec3>,
    /// Undirected edges `(i, j, w_ij)` with cotangent weights.
    edges: Vec<(usize, usize, f64)>,
    handles: Vec<usize>,
    pinned: Vec<usize>,
    system: SparseSystem,
}

impl ArapSolver {
    pub fn new(rest: &SurfaceMesh, handles: &[usize]) -> Result<Self> {
        if handles.is_empty() {
            return Err(DeformError::NoHandles("as-rigid-as-possible deformation"));
        }
        let pinned = pinned_vertices(rest, handles)?;
        let laplacian = cotangent_laplacian(rest)?;
        let system = SparseSystem::new(&laplacian, &pinned)?;
        Ok(Self {
            rest: rest.vertices().to_vec(),
            edges: edge_list(rest)?,
            handles: handles.to_vec(),
            pinned,
            system,
        })
    }

    /// Run `iterations` local-global rounds from `initial`, holding the
    /// handles at `targets` (same order as the handle ids) and unreferenced
    /// vertices where `initial` puts them.
    pub fn solve(&self, initial: &[Vec3], targets: &[Vec3], iterations: usize) -> Result<ArapOutcome> {
        if iterations == 0 {
            return Err(DeformError::ZeroIterations);
        }
        let n = self.rest.len();
        let mut fixed_values = DMatrix::zeros(self.pinned.len(), 3);
        for (r, &i) in self.pinned.iter().enumerate() {
            let p = targets.get(r).copied().unwrap_or(initial[i]);
            fixed_values.row_mut(r).copy_from(&p.transpose());
        }
        let mut positions = initial.to_vec();
        for (k, &h) in self.handles.iter().enumerate() {
            positions[h] = targets[k];
        }
        let (mut rotations, energy) = fit_rotations(&self.rest, &self.edges, &positions);
        let mut energies = vec![energy];
        for _ in 0..iterations {
            let mut rhs = DMatrix::zeros(n, 3);
            for &(i, j, w) in &self.edges {
                let e = self.rest[i] - self.rest[j];
                let b = (rotations[i] + rotations[j]) * e * (0.5 * w);
                for c in 0..3 {
                    rhs[(i, c)] += b[c];
                    rhs[(j, c)] -= b[c];
                }
            }
            let x = self.system.solve(&rhs, &fixed_values);
            for (i, p) in positions.iter_mut().enumerate() {
                *p = Vec3::new(x[(i, 0)], x[(i, 1)], x[(i, 2)]);
            }
            let (r, energy) = fit_rotations(&self.rest, &self.edges, &positions);
            rotations = r;
            energies.push(energy);
        }
        Ok(ArapOutcome { positions, energies })
    }
}

/// Best-fit rotation per vertex cell and the resulting energy.
fn fit_rotations(rest: &[Vec3], edges: &[(usize, usize, f64)], deformed: &[Vec3]) -> (Vec<Matrix3<f64>>, f64) {
    let mut cov = vec![Matrix3::zeros(); rest.len()];
    for &(i, j, w) in edges {
        let outer = (rest[i] - rest[j]) * (deformed[i] - deformed[j]).transpose() * w;
        cov[i] += outer;
        cov[j] += outer;
    }
    let rotations: Vec<Matrix3<f64>> = cov.iter().map(best_rotation).collect();
    let energy = edges
        .iter()
        .map(|&(i, j, w)| {
            let e = rest[i] - rest[j];
            let d = deformed[i] - deformed[j];
            w * ((d - rotations[i] * e).norm_squared() + (d - rotations[j] * e).norm_squared())
        })
        .sum();
    (rotations, energy)
}

/// Rotation `R` maximizing `tr(R·S)` for a covariance `S = Σ w e e'ᵀ`.
fn best_rotation(s: &Matrix3<f64>) -> Matrix3<f64> {
    let svd = s.svd(true, true);
    let mut u = svd.u.unwrap();
    let v = svd.v_t.unwrap().transpose();
    let r = v * u.transpose();
    if r.determinant() >= 0.0 {
        return r;
    }
    let smallest = svd.singular_values.imin();
    u.column_mut(smallest).neg_mut();
    v * u.transpose()
}

fn edge_list(mesh: &SurfaceMesh) -> Result<Vec<(usize, usize, f64)>> {
    let weights = triangle_cot_weights(mesh)?;
    let mut map = std::collections::BTreeMap::new();
    for (t, w) in mesh.triangles().iter().zip(weights) {
        for k in 0..3 {
            let (a, b) = (t[(k + 1) % 3], t[(k + 2) % 3]);
            *map.entry((a.min(b), a.max(b))).or_insert(0.0) += w[k];
        }
    }
    Ok(map.into_iter().map(|((i, j), w)| (i, j, w)).collect())
}

/// ARAP energy of `deformed` relative to `rest` with optimal rotations.
pub fn arap_energy(rest: &SurfaceMesh, deformed: &[Vec3]) -> Result<f64> {
    Ok(fit_rotations(rest.vertices(), &edge_list(rest)?, deformed).1)
}

/// Standalone ARAP deformation of `mesh` towards the rigid handles, started
/// from the affine + biharmonic solution for the same handles.
pub fn arap_deform(mesh: &SurfaceMesh, rigid_handles: &CorrespondenceSet, iterations: usize) -> Result<SurfaceMesh> {
    rigid_handles.validate(mesh.vertex_count())?;
    if iterations == 0 {
        return Err(DeformError::ZeroIterations);
    }
    let solver = ArapSolver::new(
        mesh,
        &rigid_handles.pairs().iter().map(|c| c.source_vertex).collect::<Vec<_>>(),
    )?;
    let pairs: Vec<(Vec3, Vec3)> = rigid_handles
        .pairs()
        .iter()
        .map(|c| (mesh.vertices()[c.source_vertex], c.target_point))
        .collect();
    let (affine, _) = estimate_global_affine(&pairs);
    let aligned = mesh.transformed(|p| affine.apply(p));
    let initial = biharmonic::solve_displacements(&aligned, rigid_handles.pairs())?;
    let targets: Vec<Vec3> = rigid_handles.pairs().iter().map(|c| c.target_point).collect();
    let out = solver.solve(&initial, &targets, iterations)?;
    Ok(mesh.with_vertices(out.positions).expect("same vertex count"))
}
