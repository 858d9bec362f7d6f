use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{weighted::WeightedIndex, Distribution};

use super::{triangle_area, GeometryError, PointSet, Result, SurfaceMesh, Vec3};

/// A point on a triangle given by barycentric weights.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SurfaceSample {
    pub triangle: usize,
    pub bary: [f64; 3],
}

/// Triangle choices and barycentric placements, independent of the vertex
/// positions they are later evaluated at.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SamplePlan {
    pub samples: Vec<SurfaceSample>,
}

fn uniform_bary<R: Rng + ?Sized>(rng: &mut R) -> [f64; 3] {
    let r1: f64 = rng.random();
    let r2: f64 = rng.random();
    let s = r1.sqrt();
    [1.0 - s, s * (1.0 - r2), s * r2]
}

impl SamplePlan {
    /// Draw `n` samples with triangle probability proportional to `areas`.
    pub fn draw<R: Rng + ?Sized>(areas: &[f64], n: usize, rng: &mut R) -> Result<Self> {
        let dist = WeightedIndex::new(areas).map_err(|_| GeometryError::ZeroArea)?;
        let samples = (0..n)
            .map(|_| {
                let triangle = dist.sample(rng);
                SurfaceSample {
                    triangle,
                    bary: uniform_bary(rng),
                }
            })
            .collect();
        Ok(Self { samples })
    }

    /// Draw on the triangulated view of `mesh` with vertex positions
    /// `positions` (which may differ from the mesh's own).
    pub fn for_mesh<R: Rng + ?Sized>(
        mesh: &SurfaceMesh,
        positions: &[Vec3],
        n: usize,
        rng: &mut R,
    ) -> Result<Self> {
        let areas: Vec<f64> = mesh
            .triangles()
            .iter()
            .map(|t| triangle_area(&positions[t[0]], &positions[t[1]], &positions[t[2]]))
            .collect();
        Self::draw(&areas, n, rng)
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn samples(&self) -> &[SurfaceSample] {
        &self.samples
    }

    /// Evaluate the plan on an indexed triangle list.
    pub fn positions(&self, triangles: &[[usize; 3]], positions: &[Vec3]) -> Vec<Vec3> {
        self.samples
            .iter()
            .map(|s| {
                let t = triangles[s.triangle];
                positions[t[0]] * s.bary[0] + positions[t[1]] * s.bary[1] + positions[t[2]] * s.bary[2]
            })
            .collect()
    }
}

/// Area-weighted sampler over a fixed list of triangles (mesh or soup).
#[derive(Debug, Clone)]
pub struct TriangleSampler {
    triangles: Vec<[Vec3; 3]>,
    dist: WeightedIndex<f64>,
    total_area: f64,
}

impl TriangleSampler {
    pub fn new(triangles: Vec<[Vec3; 3]>) -> Result<Self> {
        let areas: Vec<f64> = triangles.iter().map(|t| triangle_area(&t[0], &t[1], &t[2])).collect();
        let total_area = areas.iter().sum();
        let dist = WeightedIndex::new(&areas).map_err(|_| GeometryError::ZeroArea)?;
        Ok(Self {
            triangles,
            dist,
            total_area,
        })
    }

    pub fn from_mesh(mesh: &SurfaceMesh) -> Result<Self> {
        let v = mesh.vertices();
        Self::new(mesh.triangles().iter().map(|t| [v[t[0]], v[t[1]], v[t[2]]]).collect())
    }

    pub fn triangles(&self) -> &[[Vec3; 3]] {
        &self.triangles
    }

    pub fn total_area(&self) -> f64 {
        self.total_area
    }

    pub fn sample<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> PointSet {
        let mut points = Vec::with_capacity(n);
        let mut ids = Vec::with_capacity(n);
        for _ in 0..n {
            let f = self.dist.sample(rng);
            let b = uniform_bary(rng);
            let [p0, p1, p2] = &self.triangles[f];
            points.push(p0 * b[0] + p1 * b[1] + p2 * b[2]);
            ids.push(f);
        }
        PointSet {
            points,
            face_ids: Some(ids),
        }
    }
}

/// `n` area-uniform points on the triangulated surface, reproducible for a
/// given seed. Face ids refer to the triangulated view.
pub fn sample_surface(mesh: &SurfaceMesh, n: usize, seed: u64) -> Result<PointSet> {
    let sampler = TriangleSampler::from_mesh(mesh)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(sampler.sample(n, &mut rng))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_triangles() -> SurfaceMesh {
        // areas 1 and 3
        let v = vec![
            Vec3::new(0.0, 0.0, 0.0),
            Vec3::new(2.0, 0.0, 0.0),
            Vec3::new(0.0, 1.0, 0.0),
            Vec3::new(10.0, 0.0, 0.0),
            Vec3::new(13.0, 0.0, 0.0),
            Vec3::new(10.0, 2.0, 0.0),
        ];
        SurfaceMesh::from_triangles(v, &[[0, 1, 2], [3, 4, 5]]).unwrap()
    }

    #[test]
    fn single_triangle_samples_are_inside() {
        let a = Vec3::new(0.3, -1.0, 2.0);
        let b = Vec3::new(1.5, 0.2, 2.5);
        let c = Vec3::new(-0.4, 0.9, 1.0);
        let m = SurfaceMesh::from_triangles(vec![a, b, c], &[[0, 1, 2]]).unwrap();
        let ps = sample_surface(&m, 1000, 7).unwrap();
        assert_eq!(ps.len(), 1000);
        // solve for barycentrics in the triangle plane
        let e1 = b - a;
        let e2 = c - a;
        let (d11, d12, d22) = (e1.dot(&e1), e1.dot(&e2), e2.dot(&e2));
        let den = d11 * d22 - d12 * d12;
        for p in &ps.points {
            let w = p - a;
            let (d1, d2) = (w.dot(&e1), w.dot(&e2));
            let v = (d22 * d1 - d12 * d2) / den;
            let u = (d11 * d2 - d12 * d1) / den;
            assert!(v >= -1e-12 && u >= -1e-12 && u + v <= 1.0 + 1e-12);
            assert!((a + e1 * v + e2 * u - p).norm() < 1e-9);
        }
    }

    #[test]
    fn face_frequency_tracks_area() {
        let m = two_triangles();
        let ps = sample_surface(&m, 40_000, 3).unwrap();
        let big = ps.face_ids.unwrap().iter().filter(|&&f| f == 1).count();
        let frac = big as f64 / 40_000.0;
        assert!((frac - 0.75).abs() < 0.02, "fraction {frac}");
    }

    #[test]
    fn chi_square_at_one_percent() {
        // Five triangles with areas 1..5; chi-square critical value for
        // 4 degrees of freedom at significance 0.01 is 13.277.
        let mut v = Vec::new();
        let mut tris = Vec::new();
        for k in 0..5 {
            let base = v.len();
            let off = Vec3::new(10.0 * k as f64, 0.0, 0.0);
            v.push(off);
            v.push(off + Vec3::new((k + 1) as f64 * 2.0, 0.0, 0.0));
            v.push(off + Vec3::new(0.0, 1.0, 0.0));
            tris.push([base, base + 1, base + 2]);
        }
        let m = SurfaceMesh::from_triangles(v, &tris).unwrap();
        let n = 40_000;
        let ps = sample_surface(&m, n, 11).unwrap();
        let mut counts = [0usize; 5];
        for f in ps.face_ids.unwrap() {
            counts[f] += 1;
        }
        let chi2: f64 = counts
            .iter()
            .enumerate()
            .map(|(k, &c)| {
                let e = n as f64 * (k + 1) as f64 / 15.0;
                (c as f64 - e).powi(2) / e
            })
            .sum();
        assert!(chi2 < 13.277, "chi2 {chi2}");
    }

    #[test]
    fn deterministic_for_seed() {
        let m = two_triangles();
        assert_eq!(sample_surface(&m, 500, 42).unwrap(), sample_surface(&m, 500, 42).unwrap());
        assert_ne!(sample_surface(&m, 500, 42).unwrap(), sample_surface(&m, 500, 43).unwrap());
    }

    #[test]
    fn zero_area_is_an_error() {
        let v = vec![Vec3::zeros(), Vec3::x(), Vec3::x() * 2.0];
        let m = SurfaceMesh::from_triangles(v, &[[0, 1, 2]]).unwrap();
        assert!(matches!(sample_surface(&m, 10, 0), Err(GeometryError::ZeroArea)));
    }

    #[test]
    fn plan_matches_direct_positions() {
        let m = two_triangles();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let plan = SamplePlan::for_mesh(&m, m.vertices(), 100, &mut rng).unwrap();
        let pts = plan.positions(m.triangles(), m.vertices());
        for (s, p) in plan.samples.iter().zip(&pts) {
            assert!((s.bary.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            let in_second = p.x >= 10.0;
            assert_eq!(in_second, s.triangle == 1);
        }
    }
}
