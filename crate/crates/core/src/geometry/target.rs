use kiddo::{ImmutableKdTree, SquaredEuclidean};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{
    GeometryError, NormalizationTransform, PointSet, Result, SurfaceMesh, TriangleSampler, Vec3,
};

/// Dense surface samples used as the nearest-point proxy for mesh and soup
/// targets.
pub const DEFAULT_DENSE_SAMPLES: usize = 100_000;

const DENSE_SEED: u64 = 0x5eed_d3a5;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", content = "data", rename_all = "snake_case")]
pub enum TargetKind {
    Mesh(SurfaceMesh),
    PolygonSoup(Vec<[Vec3; 3]>),
    PointCloud(Vec<Vec3>),
}

/// Exact nearest-neighbour index over a fixed point set.
pub struct PointIndex {
    tree: ImmutableKdTree<f64, 3>,
}

impl std::fmt::Debug for PointIndex {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("PointIndex").field("size", &self.tree.size()).finish()
    }
}

impl PointIndex {
    pub fn new(points: &[Vec3]) -> Result<Self> {
        if points.is_empty() {
            return Err(GeometryError::Empty);
        }
        let raw: Vec<[f64; 3]> = points.iter().map(|p| [p.x, p.y, p.z]).collect();
        let tree = ImmutableKdTree::new_from_slice(&raw).map_err(|_| GeometryError::Empty)?;
        Ok(Self { tree })
    }

    /// Index of the nearest point and the squared distance to it.
    pub fn nearest(&self, q: &Vec3) -> (usize, f64) {
        let nn = self
            .tree
            .query(&[q.x, q.y, q.z])
            .nearest_one::<SquaredEuclidean<f64>>()
            .execute();
        (nn.item as usize, nn.distance)
    }
}

/// The shape being draped onto, with a canonical point set and a spatial
/// index over it. Mesh and soup targets use dense surface samples plus
/// their vertices; clouds use their own points.
#[derive(Debug)]
pub struct TargetShape {
    kind: TargetKind,
    canonical: Vec<Vec3>,
    sampler: Option<TriangleSampler>,
    index: PointIndex,
    dense_samples: usize,
}

impl TargetShape {
    pub fn mesh(mesh: SurfaceMesh, dense_samples: usize) -> Result<Self> {
        let sampler = TriangleSampler::from_mesh(&mesh)?;
        let mut canonical = mesh.vertices().to_vec();
        Self::densify(&sampler, dense_samples, &mut canonical);
        Self::build(TargetKind::Mesh(mesh), canonical, Some(sampler), dense_samples)
    }

    pub fn polygon_soup(triangles: Vec<[Vec3; 3]>, dense_samples: usize) -> Result<Self> {
        if triangles.is_empty() {
            return Err(GeometryError::Empty);
        }
        if triangles.iter().flatten().any(|p| !p.iter().all(|c| c.is_finite())) {
            return Err(GeometryError::NonFinite(0));
        }
        let sampler = TriangleSampler::new(triangles.clone())?;
        let mut canonical: Vec<Vec3> = triangles.iter().flatten().copied().collect();
        Self::densify(&sampler, dense_samples, &mut canonical);
        Self::build(TargetKind::PolygonSoup(triangles), canonical, Some(sampler), dense_samples)
    }

    pub fn point_cloud(points: Vec<Vec3>) -> Result<Self> {
        if points.is_empty() {
            return Err(GeometryError::Empty);
        }
        if let Some(i) = points.iter().position(|p| !p.iter().all(|c| c.is_finite())) {
            return Err(GeometryError::NonFinite(i));
        }
        let canonical = points.clone();
        let n = canonical.len();
        Self::build(TargetKind::PointCloud(points), canonical, None, n)
    }

    /// Rebuild a target from its defining geometry.
    pub fn from_kind(kind: TargetKind, dense_samples: usize) -> Result<Self> {
        match kind {
            TargetKind::Mesh(m) => Self::mesh(m, dense_samples),
            TargetKind::PolygonSoup(t) => Self::polygon_soup(t, dense_samples),
            TargetKind::PointCloud(p) => Self::point_cloud(p),
        }
    }

    fn densify(sampler: &TriangleSampler, n: usize, out: &mut Vec<Vec3>) {
        let mut rng = ChaCha8Rng::seed_from_u64(DENSE_SEED);
        out.extend(sampler.sample(n, &mut rng).points);
    }

    fn build(
        kind: TargetKind,
        canonical: Vec<Vec3>,
        sampler: Option<TriangleSampler>,
        dense_samples: usize,
    ) -> Result<Self> {
        let index = PointIndex::new(&canonical)?;
        Ok(Self {
            kind,
            canonical,
            sampler,
            index,
            dense_samples,
        })
    }

    pub fn kind(&self) -> &TargetKind {
        &self.kind
    }

    pub fn canonical_points(&self) -> &[Vec3] {
        &self.canonical
    }

    /// Points defining the bounding box: vertices for meshes and soups,
    /// members for clouds.
    pub fn defining_points(&self) -> Vec<Vec3> {
        match &self.kind {
            TargetKind::Mesh(m) => m.vertices().to_vec(),
            TargetKind::PolygonSoup(t) => t.iter().flatten().copied().collect(),
            TargetKind::PointCloud(p) => p.clone(),
        }
    }

    pub fn is_point_cloud(&self) -> bool {
        matches!(self.kind, TargetKind::PointCloud(_))
    }

    /// Nearest canonical point to `q` and the (unsquared) distance to it.
    pub fn nearest_point(&self, q: &Vec3) -> (Vec3, f64) {
        let (i, d2) = self.index.nearest(q);
        (self.canonical[i], d2.sqrt())
    }

    pub fn nearest_sq_distance(&self, q: &Vec3) -> f64 {
        self.index.nearest(q).1
    }

    /// `n` points representing the target: area-uniform surface samples for
    /// meshes and soups; the whole cloud (when it has at most `n` points) or
    /// a random subset of it otherwise.
    pub fn sample<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> PointSet {
        match (&self.kind, &self.sampler) {
            (TargetKind::PointCloud(p), _) => {
                if p.len() <= n {
                    PointSet {
                        points: p.clone(),
                        face_ids: None,
                    }
                } else {
                    let idx = rand::seq::index::sample(rng, p.len(), n);
                    PointSet {
                        points: idx.iter().map(|i| p[i]).collect(),
                        face_ids: None,
                    }
                }
            }
            (_, Some(s)) => s.sample(n, rng),
            (_, None) => unreachable!("surface targets always carry a sampler"),
        }
    }

    /// The same shape under a similarity transform. Dense samples are mapped
    /// rather than redrawn, so nearest-point answers transform exactly.
    pub fn transformed(&self, tf: &NormalizationTransform) -> Result<Self> {
        let map = |p: &Vec3| tf.apply(p);
        let (kind, sampler) = match &self.kind {
            TargetKind::Mesh(m) => {
                let m2 = m.transformed(map);
                let s = TriangleSampler::from_mesh(&m2)?;
                (TargetKind::Mesh(m2), Some(s))
            }
            TargetKind::PolygonSoup(t) => {
                let t2: Vec<[Vec3; 3]> = t.iter().map(|tri| tri.map(|p| map(&p))).collect();
                let s = TriangleSampler::new(t2.clone())?;
                (TargetKind::PolygonSoup(t2), Some(s))
            }
            TargetKind::PointCloud(p) => (TargetKind::PointCloud(p.iter().map(map).collect()), None),
        };
        let canonical: Vec<Vec3> = self.canonical.iter().map(map).collect();
        Self::build(kind, canonical, sampler, self.dense_samples)
    }

    /// Normalize into the unit cube using this shape's own bounding box.
    pub fn normalized(&self) -> Result<(Self, NormalizationTransform)> {
        let tf = NormalizationTransform::fit(&self.defining_points())?;
        Ok((self.transformed(&tf)?, tf))
    }

    pub fn dense_samples(&self) -> usize {
        self.dense_samples
    }
}
