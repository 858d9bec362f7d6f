//! Loss terms over vertex positions. Each `*_grad` function returns the
//! term value and adds `scale · ∂term/∂x` into `grad` when one is given.

use crate::deform::CorrespondenceSet;
use crate::geometry::{
    corner_angles, local_area_distribution, GeometryError, LocalAreaDistribution, PointIndex,
    SamplePlan, SurfaceMesh, Vec3,
};

const EDGE_FLOOR: f64 = 1e-9;
/// Floor on entries of the deformed area distribution.
pub const KL_FLOOR: f64 = 1e-12;

/// Symmetric Chamfer distance: mean squared nearest-neighbour distance from
/// `a` to `b` plus the same from `b` to `a`.
pub fn chamfer(a: &[Vec3], b: &[Vec3]) -> Result<f64, GeometryError> {
    let ia = PointIndex::new(a)?;
    let ib = PointIndex::new(b)?;
    let ab: f64 = a.iter().map(|p| ib.nearest(p).1).sum::<f64>() / a.len() as f64;
    let ba: f64 = b.iter().map(|p| ia.nearest(p).1).sum::<f64>() / b.len() as f64;
    Ok(ab + ba)
}

/// Chamfer distance between `plan` evaluated on `positions` and the fixed
/// `target` points, with gradients flowing through the barycentric samples.
pub(crate) fn chamfer_grad(
    triangles: &[[usize; 3]],
    positions: &[Vec3],
    plan: &SamplePlan,
    target: &[Vec3],
    target_index: &PointIndex,
    scale: f64,
    mut grad: Option<&mut [Vec3]>,
) -> Result<f64, GeometryError> {
    let samples = plan.positions(triangles, positions);
    let own_index = PointIndex::new(&samples)?;
    let mut sample_grad = vec![Vec3::zeros(); samples.len()];
    let inv_s = 1.0 / samples.len() as f64;
    let inv_t = 1.0 / target.len() as f64;
    let mut forward = 0.0;
    for (s, p) in samples.iter().enumerate() {
        let (j, d2) = target_index.nearest(p);
        forward += d2;
        sample_grad[s] += (p - target[j]) * (2.0 * inv_s);
    }
    let mut backward = 0.0;
    for q in target {
        let (s, d2) = own_index.nearest(q);
        backward += d2;
        sample_grad[s] += (samples[s] - q) * (2.0 * inv_t);
    }
    if let Some(g) = grad.as_deref_mut() {
        for (sample, sg) in plan.samples.iter().zip(&sample_grad) {
            let t = triangles[sample.triangle];
            for k in 0..3 {
                g[t[k]] += sg * (sample.bary[k] * scale);
            }
        }
    }
    Ok(forward * inv_s + backward * inv_t)
}

/// `Σ ‖x_v − u‖²` over every pair.
pub fn correspondence_term(positions: &[Vec3], corr: &CorrespondenceSet) -> f64 {
    correspondence_grad(positions, corr, 0.0, None)
}

pub(crate) fn correspondence_grad(
    positions: &[Vec3],
    corr: &CorrespondenceSet,
    scale: f64,
    mut grad: Option<&mut [Vec3]>,
) -> f64 {
    let mut total = 0.0;
    for c in corr.pairs() {
        let d = positions[c.source_vertex] - c.target_point;
        total += d.norm_squared();
        if let Some(g) = grad.as_deref_mut() {
            g[c.source_vertex] += d * (2.0 * scale);
        }
    }
    total
}

/// Fixed quantities of the source mesh that the structural terms compare
/// against.
#[derive(Debug, Clone)]
pub struct StructuralReference {
    triangles: Vec<[usize; 3]>,
    angles: Vec<[f64; 3]>,
    areas: LocalAreaDistribution,
    /// Vertices referenced by at least one triangle.
    active: usize,
}

impl StructuralReference {
    pub fn new(source: &SurfaceMesh) -> Self {
        Self {
            triangles: source.triangles().to_vec(),
            angles: corner_angles(source).angles,
            areas: local_area_distribution(source),
            active: source.referenced_vertices().iter().filter(|u| **u).count().max(1),
        }
    }

    pub fn triangles(&self) -> &[[usize; 3]] {
        &self.triangles
    }

    /// `(1/N) Σ_i Σ_{corners of triangles around i} (α̂ − α)²`. Each
    /// triangle appears in the rings of its three vertices. Also returns the
    /// number of corners whose edges fell below the length floor.
    pub fn angle_grad(&self, positions: &[Vec3], scale: f64, mut grad: Option<&mut [Vec3]>) -> (f64, usize) {
        let weight = 3.0 / self.active as f64;
        let mut total = 0.0;
        let mut degenerate = 0;
        for (t, rest) in self.triangles.iter().zip(&self.angles) {
            for k in 0..3 {
                let (a, b, c) = (t[k], t[(k + 1) % 3], t[(k + 2) % 3]);
                let u = positions[b] - positions[a];
                let v = positions[c] - positions[a];
                let cross = u.cross(&v);
                let s = cross.norm();
                let cs = u.dot(&v);
                let alpha = s.atan2(cs);
                let diff = alpha - rest[k];
                total += diff * diff;
                if u.norm() < EDGE_FLOOR || v.norm() < EDGE_FLOOR || s == 0.0 {
                    degenerate += 1;
                    continue;
                }
                if let Some(g) = grad.as_deref_mut() {
                    let n = cross / s;
                    let denom = s * s + cs * cs;
                    let du = (v.cross(&n) * cs - v * s) / denom;
                    let dv = (n.cross(&u) * cs - u * s) / denom;
                    let f = 2.0 * diff * weight * scale;
                    g[b] += du * f;
                    g[c] += dv * f;
                    g[a] -= (du + dv) * f;
                }
            }
        }
        (total * weight, degenerate)
    }

    /// `(1/N) Σ_i KL(P_i ‖ Q_i)` with `Q_i` the deformed ring areas,
    /// normalized and floored at [`KL_FLOOR`].
    pub fn area_kl_grad(&self, positions: &[Vec3], scale: f64, mut grad: Option<&mut [Vec3]>) -> f64 {
        let tri_areas: Vec<(f64, Vec3)> = self
            .triangles
            .iter()
            .map(|t| {
                let cross = (positions[t[1]] - positions[t[0]]).cross(&(positions[t[2]] - positions[t[0]]));
                let norm = cross.norm();
                let unit = if norm > 0.0 { cross / norm } else { Vec3::zeros() };
                (0.5 * norm, unit)
            })
            .collect();
        let inv_n = 1.0 / self.active as f64;
        let mut total = 0.0;
        let mut area_grad = vec![0.0; self.triangles.len()];
        for i in 0..self.areas.vertex_count() {
            let (tris, probs) = self.areas.ring(i);
            if tris.is_empty() {
                continue;
            }
            let sum: f64 = tris.iter().map(|&t| tri_areas[t].0).sum();
            let mut live_mass = 0.0;
            for (&t, &p) in tris.iter().zip(probs) {
                let q_raw = if sum > 0.0 { tri_areas[t].0 / sum } else { 0.0 };
                let q = q_raw.max(KL_FLOOR);
                if p > 0.0 {
                    total += p * (p / q).ln();
                }
                if q_raw > KL_FLOOR {
                    live_mass += p;
                    area_grad[t] -= p / tri_areas[t].0 * inv_n * scale;
                }
            }
            if sum > 0.0 && live_mass > 0.0 {
                for &t in tris {
                    area_grad[t] += live_mass / sum * inv_n * scale;
                }
            }
        }
        if let Some(g) = grad.as_deref_mut() {
            for ((t, dg), (_, n)) in self.triangles.iter().zip(&area_grad).zip(&tri_areas) {
                if *dg != 0.0 && n.norm_squared() > 0.0 {
                    add_area_gradient(g, t, positions, n, *dg);
                }
            }
        }
        total * inv_n
    }
}

/// Adds `factor · ∂A/∂x` for triangle `t` with unit normal `n`.
fn add_area_gradient(g: &mut [Vec3], t: &[usize; 3], x: &[Vec3], n: &Vec3, factor: f64) {
    let (a, b, c) = (x[t[0]], x[t[1]], x[t[2]]);
    let db = (c - a).cross(n) * 0.5;
    let dc = n.cross(&(b - a)) * 0.5;
    g[t[1]] += db * factor;
    g[t[2]] += dc * factor;
    g[t[0]] -= (db + dc) * factor;
}

/// `Σ (1 − Q_f)` over triangles with quality below `threshold`.
pub(crate) fn quality_grad(
    triangles: &[[usize; 3]],
    positions: &[Vec3],
    threshold: f64,
    scale: f64,
    mut grad: Option<&mut [Vec3]>,
) -> f64 {
    let k = 4.0 * 3f64.sqrt();
    let mut total = 0.0;
    for t in triangles {
        let (a, b, c) = (positions[t[0]], positions[t[1]], positions[t[2]]);
        let e = (b - a).norm_squared() + (c - b).norm_squared() + (a - c).norm_squared();
        let cross = (b - a).cross(&(c - a));
        let area = 0.5 * cross.norm();
        let q = if e > 0.0 { (k * area / e).clamp(0.0, 1.0) } else { 0.0 };
        if q >= threshold {
            continue;
        }
        total += 1.0 - q;
        let Some(g) = grad.as_deref_mut() else { continue };
        if e == 0.0 {
            continue;
        }
        // ∂(1 − kA/E) = −k(E·∂A − A·∂E)/E²
        let f = -k * scale / (e * e);
        if area > 0.0 {
            add_area_gradient(g, t, positions, &(cross / (2.0 * area)), f * e);
        }
        let de = [(a * 2.0 - b - c) * 2.0, (b * 2.0 - a - c) * 2.0, (c * 2.0 - a - b) * 2.0];
        for m in 0..3 {
            g[t[m]] -= de[m] * (f * area);
        }
    }
    total
}

/// Angle distortion of `deformed` relative to `source`.
pub fn angle_term(source: &SurfaceMesh, deformed: &SurfaceMesh) -> Result<f64, GeometryError> {
    check_connectivity(source, deformed)?;
    Ok(StructuralReference::new(source).angle_grad(deformed.vertices(), 0.0, None).0)
}

/// Local area KL divergence of `deformed` relative to `source`.
pub fn area_kl_term(source: &SurfaceMesh, deformed: &SurfaceMesh) -> Result<f64, GeometryError> {
    check_connectivity(source, deformed)?;
    Ok(StructuralReference::new(source).area_kl_grad(deformed.vertices(), 0.0, None))
}

pub fn quality_penalty(mesh: &SurfaceMesh, threshold: f64) -> f64 {
    quality_grad(mesh.triangles(), mesh.vertices(), threshold, 0.0, None)
}

fn check_connectivity(a: &SurfaceMesh, b: &SurfaceMesh) -> Result<(), GeometryError> {
    if a.same_connectivity(b) {
        Ok(())
    } else {
        Err(GeometryError::ConnectivityMismatch(
            "source and deformed meshes differ in connectivity".into(),
        ))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::deform::Correspondence;
    use crate::geometry::face_quality;
    use nalgebra::Rotation3;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn brute_chamfer(a: &[Vec3], b: &[Vec3]) -> f64 {
        let one = |x: &[Vec3], y: &[Vec3]| {
            x.iter()
                .map(|p| y.iter().map(|q| (p - q).norm_squared()).fold(f64::INFINITY, f64::min))
                .sum::<f64>()
                / x.len() as f64
        };
        one(a, b) + one(b, a)
    }

    #[test]
    fn chamfer_examples() {
        let o = Vec3::zeros();
        assert_eq!(chamfer(&[o], &[o]).unwrap(), 0.0);
        assert!((chamfer(&[o], &[Vec3::x()]).unwrap() - 2.0).abs() < 1e-15);
        assert!((chamfer(&[o, Vec3::x() * 2.0], &[o]).unwrap() - 2.0).abs() < 1e-15);
        assert!(chamfer(&[], &[o]).is_err());
    }

    /// 4×5 grid with random heights: 20 vertices, 24 triangles.
    fn grid(rng: &mut ChaCha8Rng) -> SurfaceMesh {
        let (w, h) = (5, 4);
        let verts: Vec<Vec3> = (0..w * h)
            .map(|k| {
                Vec3::new(
                    (k % w) as f64 + rng.random_range(-0.2..0.2),
                    (k / w) as f64 + rng.random_range(-0.2..0.2),
                    rng.random_range(-0.3..0.3),
                )
            })
            .collect();
        let mut tris = Vec::new();
        for y in 0..h - 1 {
            for x in 0..w - 1 {
                let a = y * w + x;
                tris.push([a, a + 1, a + w + 1]);
                tris.push([a, a + w + 1, a + w]);
            }
        }
        SurfaceMesh::from_triangles(verts, &tris).unwrap()
    }

    fn jitter(p: &[Vec3], amount: f64, rng: &mut ChaCha8Rng) -> Vec<Vec3> {
        p.iter()
            .map(|v| v + Vec3::new(rng.random_range(-amount..amount), rng.random_range(-amount..amount), rng.random_range(-amount..amount)))
            .collect()
    }

    /// Central differences with `h = 1e-4`; the error is measured relative
    /// to the largest gradient component.
    fn check_fd(positions: &[Vec3], f: impl Fn(&[Vec3], Option<&mut [Vec3]>) -> f64) {
        let mut grad = vec![Vec3::zeros(); positions.len()];
        f(positions, Some(&mut grad));
        let h = 1e-4;
        let mut x = positions.to_vec();
        let mut fd = vec![Vec3::zeros(); x.len()];
        for i in 0..x.len() {
            for c in 0..3 {
                let orig = x[i][c];
                x[i][c] = orig + h;
                let fp = f(&x, None);
                x[i][c] = orig - h;
                let fm = f(&x, None);
                x[i][c] = orig;
                fd[i][c] = (fp - fm) / (2.0 * h);
            }
        }
        let scale = fd.iter().map(|g| g.amax()).fold(0.0, f64::max);
        assert!(scale > 0.0);
        for (i, (g, d)) in grad.iter().zip(&fd).enumerate() {
            let err = (g - d).amax() / scale;
            assert!(err <= 1e-4, "vertex {i}: analytic {g:?} vs fd {d:?}");
        }
    }

    #[test]
    fn angle_gradient_matches_fd() {
        for seed in 0..10 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let m = grid(&mut rng);
            let r = StructuralReference::new(&m);
            let x = jitter(m.vertices(), 0.25, &mut rng);
            check_fd(&x, |p, g| r.angle_grad(p, 1.0, g).0);
        }
    }

    #[test]
    fn area_kl_gradient_matches_fd() {
        for seed in 0..10 {
            let mut rng = ChaCha8Rng::seed_from_u64(100 + seed);
            let m = grid(&mut rng);
            let r = StructuralReference::new(&m);
            let x = jitter(m.vertices(), 0.25, &mut rng);
            check_fd(&x, |p, g| r.area_kl_grad(p, 1.0, g));
        }
    }

    #[test]
    fn quality_gradient_matches_fd() {
        for seed in 0..10 {
            let mut rng = ChaCha8Rng::seed_from_u64(200 + seed);
            let m = grid(&mut rng);
            let x = jitter(m.vertices(), 0.4, &mut rng);
            // every face below the threshold so each contributes a gradient
            check_fd(&x, |p, g| quality_grad(m.triangles(), p, 1.01, 1.0, g));
        }
    }

    #[test]
    fn chamfer_gradient_matches_fd() {
        for seed in 0..10 {
            let mut rng = ChaCha8Rng::seed_from_u64(300 + seed);
            let m = grid(&mut rng);
            let plan = SamplePlan::for_mesh(&m, m.vertices(), 40, &mut rng).unwrap();
            let x = jitter(m.vertices(), 0.1, &mut rng);
            let target: Vec<Vec3> = jitter(&plan.positions(m.triangles(), &x), 0.002, &mut rng);
            let index = PointIndex::new(&target).unwrap();
            check_fd(&x, |p, g| chamfer_grad(m.triangles(), p, &plan, &target, &index, 1.0, g).unwrap());
        }
    }

    #[test]
    fn correspondence_gradient_matches_fd() {
        for seed in 0..10 {
            let mut rng = ChaCha8Rng::seed_from_u64(400 + seed);
            let m = grid(&mut rng);
            let corr = CorrespondenceSet::new(
                [0usize, 7, 19]
                    .iter()
                    .map(|&i| Correspondence::soft(i, Vec3::new(rng.random(), rng.random(), rng.random())))
                    .collect(),
            )
            .unwrap();
            check_fd(m.vertices(), |p, g| correspondence_grad(p, &corr, 1.0, g));
        }
    }

    #[test]
    fn chamfer_value_matches_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let m = grid(&mut rng);
        let plan = SamplePlan::for_mesh(&m, m.vertices(), 50, &mut rng).unwrap();
        let target = jitter(&plan.positions(m.triangles(), m.vertices()), 1.0, &mut rng);
        let index = PointIndex::new(&target).unwrap();
        let v = chamfer_grad(m.triangles(), m.vertices(), &plan, &target, &index, 1.0, None).unwrap();
        let expect = brute_chamfer(&plan.positions(m.triangles(), m.vertices()), &target);
        assert!((v - expect).abs() < 1e-12);
    }

    #[test]
    fn correspondence_offset_adds_square() {
        let corr = CorrespondenceSet::new(vec![Correspondence::soft(0, Vec3::new(0.3, 0.0, 0.0))]).unwrap();
        assert!((correspondence_term(&[Vec3::zeros()], &corr) - 0.09).abs() < 1e-15);
    }

    #[test]
    fn equilateral_to_right_isoceles_angle() {
        let eq = SurfaceMesh::from_triangles(
            vec![Vec3::zeros(), Vec3::x(), Vec3::new(0.5, 3f64.sqrt() / 2.0, 0.0)],
            &[[0, 1, 2]],
        )
        .unwrap();
        let right = eq.with_vertices(vec![Vec3::zeros(), Vec3::x(), Vec3::y()]).unwrap();
        let expect = (PI / 6.0).powi(2) + 2.0 * (PI / 12.0).powi(2);
        assert!((angle_term(&eq, &right).unwrap() - expect).abs() < 1e-12);
        assert!((expect - 0.4112).abs() < 1e-4);
    }

    #[test]
    fn kl_single_vertex_example() {
        // vertex 0 has two incident triangles of equal rest area; deformed
        // areas 0.9 : 0.1
        let rest = SurfaceMesh::from_triangles(
            vec![Vec3::zeros(), Vec3::x(), Vec3::y(), -Vec3::x()],
            &[[0, 1, 2], [0, 2, 3]],
        )
        .unwrap();
        let def = rest
            .with_vertices(vec![Vec3::zeros(), Vec3::x() * 1.8, Vec3::y(), -Vec3::x() * 0.2])
            .unwrap();
        let r = StructuralReference::new(&rest);
        let v0 = 0.5 * (0.5f64 / 0.9).ln() + 0.5 * (0.5f64 / 0.1).ln();
        assert!((v0 - 0.5108).abs() < 1e-4);
        // vertex 2 shares both triangles with vertex 0; vertices 1 and 3 have
        // single-triangle rings with KL 0; N = 4
        let got = r.area_kl_grad(def.vertices(), 0.0, None);
        assert!((got - 2.0 * v0 / 4.0).abs() < 1e-12);
    }

    #[test]
    fn quality_examples() {
        let eq = [Vec3::zeros(), Vec3::x(), Vec3::new(0.5, 3f64.sqrt() / 2.0, 0.0)];
        assert_eq!(quality_grad(&[[0, 1, 2]], &eq, 0.1, 1.0, None), 0.0);
        let flat = [Vec3::zeros(), Vec3::x(), Vec3::x() * 2.0];
        assert_eq!(quality_grad(&[[0, 1, 2]], &flat, 0.1, 1.0, None), 1.0);
        // pick the apex height so that Q = 0.05
        let target = 0.05;
        let h = {
            // Q(h) = 4√3·(h/2) / (1 + 2(0.25 + h²)) for apex (0.5, h)
            let (mut lo, mut hi) = (0.0, 0.2);
            for _ in 0..100 {
                let mid = 0.5 * (lo + hi);
                let q = face_quality(&Vec3::zeros(), &Vec3::x(), &Vec3::new(0.5, mid, 0.0));
                if q < target { lo = mid } else { hi = mid }
            }
            0.5 * (lo + hi)
        };
        let p = [Vec3::zeros(), Vec3::x(), Vec3::new(0.5, h, 0.0)];
        assert!((quality_grad(&[[0, 1, 2]], &p, 0.1, 1.0, None) - 0.95).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn structural_terms_rigid_and_scale_invariant(seed in 0u64..1000, ax in -3.0f64..3.0, ay in -3.0f64..3.0, s in 0.2f64..5.0) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let m = grid(&mut rng);
            let r = StructuralReference::new(&m);
            let x = jitter(m.vertices(), 0.2, &mut rng);
            let rot = Rotation3::from_euler_angles(ax, ay, 0.3);
            let moved: Vec<Vec3> = x.iter().map(|p| rot * p + Vec3::new(1.0, 2.0, 3.0)).collect();
            let scaled: Vec<Vec3> = x.iter().map(|p| p * s).collect();
            let a0 = r.angle_grad(&x, 1.0, None).0;
            let k0 = r.area_kl_grad(&x, 1.0, None);
            prop_assert!((r.angle_grad(&moved, 1.0, None).0 - a0).abs() < 1e-9);
            prop_assert!((r.area_kl_grad(&moved, 1.0, None) - k0).abs() < 1e-9);
            prop_assert!((r.area_kl_grad(&scaled, 1.0, None) - k0).abs() < 1e-9);
            prop_assert!(a0 >= 0.0 && k0 >= -1e-15);
            prop_assert_eq!(r.angle_grad(m.vertices(), 1.0, None).0, 0.0);
            prop_assert!(r.area_kl_grad(m.vertices(), 1.0, None).abs() < 1e-15);
        }

        #[test]
        fn chamfer_symmetric_and_rigid_invariant(seed in 0u64..1000, ax in -3.0f64..3.0) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let a: Vec<Vec3> = (0..30).map(|_| Vec3::new(rng.random(), rng.random(), rng.random())).collect();
            let b: Vec<Vec3> = (0..17).map(|_| Vec3::new(rng.random(), rng.random(), rng.random())).collect();
            let rot = Rotation3::from_euler_angles(ax, 0.4, -1.0);
            let ma: Vec<Vec3> = a.iter().map(|p| rot * p + Vec3::x()).collect();
            let mb: Vec<Vec3> = b.iter().map(|p| rot * p + Vec3::x()).collect();
            let c = chamfer(&a, &b).unwrap();
            prop_assert!((c - chamfer(&b, &a).unwrap()).abs() < 1e-12);
            prop_assert!((c - chamfer(&ma, &mb).unwrap()).abs() < 1e-9);
            prop_assert!((c - brute_chamfer(&a, &b)).abs() < 1e-12);
        }
    }
}
