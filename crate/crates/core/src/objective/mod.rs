//! Training objective: a distance loss (sampled Chamfer plus correspondence
//! pull) alternated with a weighted structural loss (angle distortion, local
//! area KL and a face-quality penalty).

mod terms;

pub use terms::{
    angle_term, area_kl_term, chamfer, correspondence_term, quality_penalty, StructuralReference, KL_FLOOR,
};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::deform::CorrespondenceSet;
use crate::geometry::{GeometryError, PointIndex, SamplePlan, SurfaceMesh, TargetShape, Vec3};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LossConfig {
    pub chamfer: bool,
    pub correspondence: bool,
    pub angle: bool,
    pub area_kl: bool,
    pub quality: bool,
    /// Samples drawn per side for each Chamfer evaluation.
    pub chamfer_samples: usize,
    pub quality_threshold: f64,
    pub lambda_before: f64,
    pub lambda_after: f64,
    pub lambda_switch_iter: usize,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self {
            chamfer: true,
            correspondence: true,
            angle: true,
            area_kl: true,
            quality: true,
            chamfer_samples: 5000,
            quality_threshold: 0.1,
            lambda_before: 1.0,
            lambda_after: 0.2,
            lambda_switch_iter: 1000,
        }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<(), String> {
        if self.chamfer_samples == 0 {
            return Err("loss.chamfer_samples must be at least 1".into());
        }
        for (name, v) in [("loss.lambda_before", self.lambda_before), ("loss.lambda_after", self.lambda_after)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(format!("{name} must be positive, got {v}"));
            }
        }
        if !(0.0..=1.0).contains(&self.quality_threshold) {
            return Err(format!("loss.quality_threshold must lie in [0, 1], got {}", self.quality_threshold));
        }
        Ok(())
    }

    pub fn lambda(&self, t: usize) -> f64 {
        if t < self.lambda_switch_iter {
            self.lambda_before
        } else {
            self.lambda_after
        }
    }
}

/// Which loss an iteration backpropagates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum StepLoss {
    Distance,
    Structural { lambda: f64 },
}

/// Even iterations fit the target; odd ones preserve structure.
pub fn select_step_loss(t: usize, cfg: &LossConfig) -> StepLoss {
    if t % 2 == 0 {
        StepLoss::Distance
    } else {
        StepLoss::Structural { lambda: cfg.lambda(t) }
    }
}

/// Term values of one evaluation. Terms that were not evaluated are `None`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LossReport {
    pub iteration: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub chamfer: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub correspondence: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub angle: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub area_kl: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub quality: Option<f64>,
    /// Weight applied to the structural terms (1 on distance steps).
    pub weight: f64,
    pub total: f64,
    #[serde(default, skip_serializing_if = "is_zero")]
    pub degenerate_corners: usize,
}

fn is_zero(v: &usize) -> bool {
    *v == 0
}

#[derive(Debug, Clone)]
pub struct LossEvaluation {
    pub report: LossReport,
    /// Gradient of `report.total` with respect to each vertex position.
    pub gradient: Vec<Vec3>,
}

/// Loss evaluator bound to one source mesh.
#[derive(Debug, Clone)]
pub struct Objective {
    config: LossConfig,
    reference: StructuralReference,
}

impl Objective {
    pub fn new(source: &SurfaceMesh, config: LossConfig) -> Self {
        Self {
            config,
            reference: StructuralReference::new(source),
        }
    }

    pub fn config(&self) -> &LossConfig {
        &self.config
    }

    pub fn triangles(&self) -> &[[usize; 3]] {
        self.reference.triangles()
    }

    /// Evaluate whichever loss `select_step_loss` picks for iteration `t`.
    pub fn step<R: Rng + ?Sized>(
        &self,
        t: usize,
        positions: &[Vec3],
        target: &TargetShape,
        corr: &CorrespondenceSet,
        rng: &mut R,
    ) -> Result<LossEvaluation, GeometryError> {
        let mut eval = match select_step_loss(t, &self.config) {
            StepLoss::Distance => self.distance(positions, target, corr, rng)?,
            StepLoss::Structural { lambda } => self.structural(positions, lambda),
        };
        eval.report.iteration = t;
        Ok(eval)
    }

    /// Sampled Chamfer distance to the target plus the correspondence term.
    pub fn distance<R: Rng + ?Sized>(
        &self,
        positions: &[Vec3],
        target: &TargetShape,
        corr: &CorrespondenceSet,
        rng: &mut R,
    ) -> Result<LossEvaluation, GeometryError> {
        self.freeze_distance(positions, target, corr, rng)?.evaluate(positions)
    }

    /// Draw the Chamfer samples for `positions` once. The returned loss is a
    /// deterministic function of vertex positions, which is what
    /// [`distance`](Self::distance) differentiates.
    pub fn freeze_distance<'a, R: Rng + ?Sized>(
        &'a self,
        positions: &[Vec3],
        target: &TargetShape,
        corr: &'a CorrespondenceSet,
        rng: &mut R,
    ) -> Result<FrozenDistance<'a>, GeometryError> {
        if !self.config.chamfer {
            return Ok(FrozenDistance {
                objective: self,
                corr,
                chamfer: None,
            });
        }
        let n = self.config.chamfer_samples;
        let areas: Vec<f64> = self
            .triangles()
            .iter()
            .map(|t| crate::geometry::triangle_area(&positions[t[0]], &positions[t[1]], &positions[t[2]]))
            .collect();
        let plan = SamplePlan::draw(&areas, n, rng)?;
        let target_points = target.sample(n, rng).points;
        self.freeze_distance_with(plan, target_points, corr)
    }

    /// [`freeze_distance`](Self::freeze_distance) with explicit source
    /// samples and target points.
    pub fn freeze_distance_with<'a>(
        &'a self,
        plan: SamplePlan,
        target_points: Vec<Vec3>,
        corr: &'a CorrespondenceSet,
    ) -> Result<FrozenDistance<'a>, GeometryError> {
        let index = PointIndex::new(&target_points)?;
        Ok(FrozenDistance {
            objective: self,
            corr,
            chamfer: self.config.chamfer.then_some((plan, target_points, index)),
        })
    }

    /// `lambda · (angle + area KL + quality)` over the enabled terms.
    pub fn structural(&self, positions: &[Vec3], lambda: f64) -> LossEvaluation {
        let mut gradient = vec![Vec3::zeros(); positions.len()];
        let mut report = LossReport {
            weight: lambda,
            ..LossReport::default()
        };
        if self.config.angle {
            let (v, degenerate) = self.reference.angle_grad(positions, lambda, Some(&mut gradient));
            report.angle = Some(v);
            report.degenerate_corners = degenerate;
        }
        if self.config.area_kl {
            report.area_kl = Some(self.reference.area_kl_grad(positions, lambda, Some(&mut gradient)));
        }
        if self.config.quality {
            report.quality = Some(terms::quality_grad(
                self.triangles(),
                positions,
                self.config.quality_threshold,
                lambda,
                Some(&mut gradient),
            ));
        }
        report.total =
            lambda * (report.angle.unwrap_or(0.0) + report.area_kl.unwrap_or(0.0) + report.quality.unwrap_or(0.0));
        LossEvaluation { report, gradient }
    }
}

/// The distance loss with its surface samples fixed.
#[derive(Debug)]
pub struct FrozenDistance<'a> {
    objective: &'a Objective,
    corr: &'a CorrespondenceSet,
    chamfer: Option<(SamplePlan, Vec<Vec3>, PointIndex)>,
}

impl FrozenDistance<'_> {
    pub fn evaluate(&self, positions: &[Vec3]) -> Result<LossEvaluation, GeometryError> {
        let mut gradient = vec![Vec3::zeros(); positions.len()];
        let mut report = LossReport {
            weight: 1.0,
            ..LossReport::default()
        };
        if let Some((plan, target_points, index)) = &self.chamfer {
            let tris = self.objective.triangles();
            let c = terms::chamfer_grad(tris, positions, plan, target_points, index, 1.0, Some(&mut gradient))?;
            report.chamfer = Some(c);
        }
        if self.objective.config.correspondence {
            report.correspondence = Some(terms::correspondence_grad(positions, self.corr, 1.0, Some(&mut gradient)));
        }
        report.total = report.chamfer.unwrap_or(0.0) + report.correspondence.unwrap_or(0.0);
        Ok(LossEvaluation { report, gradient })
    }
}

/// Distance loss of `deformed` against `target` with fresh samples from
/// `rng`.
pub fn distance_loss<R: Rng + ?Sized>(
    deformed: &SurfaceMesh,
    target: &TargetShape,
    corr: &CorrespondenceSet,
    config: &LossConfig,
    rng: &mut R,
) -> Result<f64, GeometryError> {
    let objective = Objective::new(deformed, config.clone());
    Ok(objective.distance(deformed.vertices(), target, corr, rng)?.report.total)
}

/// Unweighted structural loss of `deformed` relative to `source`, honouring
/// the term toggles in `config`.
pub fn structural_loss(source: &SurfaceMesh, deformed: &SurfaceMesh, config: &LossConfig) -> Result<f64, GeometryError> {
    if !source.same_connectivity(deformed) {
        return Err(GeometryError::ConnectivityMismatch(
            "source and deformed meshes differ in connectivity".into(),
        ));
    }
    Ok(Objective::new(source, config.clone())
        .structural(deformed.vertices(), 1.0)
        .report
        .total)
}
