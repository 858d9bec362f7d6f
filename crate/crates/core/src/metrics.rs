//! Transfer quality metrics: Chamfer and Hausdorff distances to the target,
//! Dirichlet distortion against the source, and the composite score
//! `Q = 1 − exp(−τ / |F_d + F_a|)`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{
    dirichlet_distortion, dirichlet_energy, GeometryError, NormalizationTransform, PointIndex, SamplePlan,
    SurfaceMesh, TargetShape, Vec3, DEFAULT_DENSE_SAMPLES,
};

#[derive(Debug, Error)]
pub enum MetricError {
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error("invalid metric input: {0}")]
    InvalidInput(String),
}

pub type Result<T> = std::result::Result<T, MetricError>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MetricConfig {
    pub tau: f64,
    pub w_a: f64,
    /// Surface samples drawn per shape for Chamfer and Hausdorff.
    pub samples: usize,
    /// Dense reference samples per surface for nearest-point queries.
    pub dense_samples: usize,
    pub seed: u64,
}

impl Default for MetricConfig {
    fn default() -> Self {
        Self {
            tau: 5.0,
            w_a: 100.0,
            samples: 10_000,
            dense_samples: DEFAULT_DENSE_SAMPLES,
            seed: 0,
        }
    }
}

impl MetricConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tau > 0.0 && self.tau.is_finite()) {
            return Err(MetricError::InvalidInput(format!("metrics.tau must be positive, got {}", self.tau)));
        }
        if !(self.w_a > 0.0 && self.w_a.is_finite()) {
            return Err(MetricError::InvalidInput(format!("metrics.w_a must be positive, got {}", self.w_a)));
        }
        if self.samples == 0 {
            return Err(MetricError::InvalidInput("metrics.samples must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransferReport {
    pub chamfer: f64,
    pub hausdorff: f64,
    /// Area-normalized distortion `F_d`.
    pub dirichlet: f64,
    /// Raw energy `½ Σ |J|² a`.
    pub dirichlet_energy: f64,
    pub f_a: f64,
    pub q_transfer: f64,
    pub tau: f64,
    pub w_a: f64,
    pub seed: u64,
}

/// Symmetric Hausdorff distance between point sets (unsquared).
pub fn hausdorff(a: &[Vec3], b: &[Vec3]) -> Result<f64> {
    let ia = PointIndex::new(a)?;
    let ib = PointIndex::new(b)?;
    Ok(directed(a, &ib).max(directed(b, &ia)))
}

fn directed(from: &[Vec3], to: &PointIndex) -> f64 {
    from.iter().map(|p| to.nearest(p).1).fold(0.0, f64::max).sqrt()
}

/// `1 − exp(−τ / |F_d + F_a|)`, with the limit 1 for a vanishing sum.
///
/// `F_d` may be negative down to −1 for maps that shrink the surface; `F_a`
/// must be non-negative.
pub fn q_transfer(f_d: f64, f_a: f64, tau: f64) -> Result<f64> {
    if !f_d.is_finite() || !f_a.is_finite() || !tau.is_finite() {
        return Err(MetricError::InvalidInput("non-finite score component".into()));
    }
    if f_a < 0.0 || f_d < -1.0 - 1e-12 || tau <= 0.0 {
        return Err(MetricError::InvalidInput(format!(
            "out-of-range score components F_d={f_d}, F_a={f_a}, tau={tau}"
        )));
    }
    let sum = (f_d + f_a).abs();
    if sum < 1e-12 {
        return Ok(1.0);
    }
    Ok(1.0 - (-tau / sum).exp())
}

/// Point sets used to compare a result with a target: a sparse sample for
/// each side and a dense reference set for nearest-point queries.
struct Comparison {
    sparse: Vec<Vec3>,
    dense: PointIndex,
}

impl Comparison {
    fn of_mesh(mesh: &SurfaceMesh, cfg: &MetricConfig, rng: &mut ChaCha8Rng) -> Result<Self> {
        let plan = SamplePlan::for_mesh(mesh, mesh.vertices(), cfg.samples, rng)?;
        let mut sparse = plan.positions(mesh.triangles(), mesh.vertices());
        sparse.extend_from_slice(mesh.vertices());
        let shape = TargetShape::mesh(mesh.clone(), cfg.dense_samples)?;
        Ok(Self {
            sparse,
            dense: PointIndex::new(shape.canonical_points())?,
        })
    }

    fn of_target(target: &TargetShape, cfg: &MetricConfig, rng: &mut ChaCha8Rng) -> Result<Self> {
        Ok(Self {
            sparse: target.sample(cfg.samples, rng).points,
            dense: PointIndex::new(target.canonical_points())?,
        })
    }
}

/// `w_a` times the Hausdorff distance between `result` and `target`, both
/// already in the unit cube.
pub fn alignment_measure(target: &TargetShape, result: &SurfaceMesh, cfg: &MetricConfig) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let t = Comparison::of_target(target, cfg, &mut rng)?;
    let r = Comparison::of_mesh(result, cfg, &mut rng)?;
    Ok(cfg.w_a * directed(&t.sparse, &r.dense).max(directed(&r.sparse, &t.dense)))
}

/// Score `result` as a transfer of `source` onto `target`.
///
/// `source` and `target` are each normalized to the unit cube. `result`
/// lives in the target's frame: Dirichlet distortion maps it with the
/// target's transform, while distances to the target use its own unit-cube
/// fit.
pub fn evaluate_transfer(
    source: &SurfaceMesh,
    result: &SurfaceMesh,
    target: &TargetShape,
    cfg: &MetricConfig,
) -> Result<TransferReport> {
    cfg.validate()?;
    if !source.same_connectivity(result) {
        return Err(GeometryError::ConnectivityMismatch(format!(
            "source has {} vertices / {} faces, result has {} / {}",
            source.vertex_count(),
            source.faces().len(),
            result.vertex_count(),
            result.faces().len()
        ))
        .into());
    }
    let source_tf = NormalizationTransform::fit(source.vertices())?;
    let (target_n, target_tf) = target.normalized()?;
    let source_n = source.transformed(|p| source_tf.apply(p));
    let result_in_target = result.transformed(|p| target_tf.apply(p));
    let own_tf = NormalizationTransform::fit(result.vertices())?;
    let result_n = result.transformed(|p| own_tf.apply(p));

    let f_d = dirichlet_distortion(&source_n, &result_in_target)?;
    let energy = dirichlet_energy(&source_n, &result_in_target)?;

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let t = Comparison::of_target(&target_n, cfg, &mut rng)?;
    let r = Comparison::of_mesh(&result_n, cfg, &mut rng)?;
    let mean_sq = |from: &[Vec3], to: &PointIndex| from.iter().map(|p| to.nearest(p).1).sum::<f64>() / from.len() as f64;
    let chamfer = mean_sq(&r.sparse, &t.dense) + mean_sq(&t.sparse, &r.dense);
    let hausdorff = directed(&t.sparse, &r.dense).max(directed(&r.sparse, &t.dense));
    let f_a = cfg.w_a * hausdorff;
    Ok(TransferReport {
        chamfer,
        hausdorff,
        dirichlet: f_d,
        dirichlet_energy: energy,
        f_a,
        q_transfer: q_transfer(f_d, f_a, cfg.tau)?,
        tau: cfg.tau,
        w_a: cfg.w_a,
        seed: cfg.seed,
    })
}
