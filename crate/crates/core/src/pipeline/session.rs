use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{DrapeConfig, PipelineError, Result};
use crate::deform::{initial_deformation, CorrespondenceSet};
use crate::geometry::{NormalizationTransform, SurfaceMesh, TargetKind, TargetShape, Vec3};
use crate::metrics::{evaluate_transfer, TransferReport};
use crate::neural::{Adam, EncodedBasis, Mlp, NeuralError};
use crate::objective::{angle_term, LossReport, Objective};

/// Stream id reserved for network initialization; iteration `t` uses
/// stream `t`.
const INIT_STREAM: u64 = u64::MAX;
const EVAL_STREAM: u64 = u64::MAX - 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SessionStatus {
    Idle,
    Running,
    Paused,
    Done,
    Cancelled,
    Failed,
}

impl std::fmt::Display for SessionStatus {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Idle => "idle",
            Self::Running => "running",
            Self::Paused => "paused",
            Self::Done => "done",
            Self::Cancelled => "cancelled",
            Self::Failed => "failed",
        })
    }
}

/// Vertex positions at some iteration, in the target's original frame.
#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub iteration: usize,
    pub positions: Vec<Vec3>,
    pub loss: Option<LossReport>,
}

#[derive(Debug, Clone)]
pub struct StepOutcome {
    pub report: LossReport,
    /// Present every `snapshot.stride` iterations and at the last one.
    pub snapshot: Option<Snapshot>,
}

/// Both losses evaluated at the same parameters, with the structural weight
/// of the current iteration. `angle` is computed even when the angle term is
/// disabled in training.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossSummary {
    pub distance: f64,
    pub structural: f64,
    pub lambda: f64,
    pub total: f64,
    pub angle: f64,
}

#[derive(Debug, Clone)]
pub struct DrapeResult {
    /// Source connectivity with optimized positions, in the target's frame.
    pub mesh: SurfaceMesh,
    pub report: TransferReport,
    /// True when extracted from a paused, unfinished run.
    pub partial: bool,
    pub iteration: usize,
}

/// Serializable session state. Restoring rebuilds derived data (normalized
/// shapes, encodings, spatial indices) deterministically.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SessionCheckpoint {
    pub config: DrapeConfig,
    pub source: SurfaceMesh,
    pub target: TargetKind,
    /// Pairs in the normalized target frame, already snapped.
    pub correspondences: CorrespondenceSet,
    pub initial: Vec<Vec3>,
    pub network: Mlp<f32>,
    pub optimizer: Adam<f32>,
    pub iteration: usize,
    pub status: SessionStatus,
    pub history: Vec<LossReport>,
    pub error: Option<String>,
}

/// One draping optimization.
#[derive(Debug)]
pub struct DrapeSession {
    config: DrapeConfig,
    source: SurfaceMesh,
    source_normalized: SurfaceMesh,
    target: TargetShape,
    target_normalized: TargetShape,
    target_tf: NormalizationTransform,
    corr: CorrespondenceSet,
    initial: Vec<Vec3>,
    objective: Objective,
    basis: EncodedBasis<f32>,
    net: Mlp<f32>,
    adam: Adam<f32>,
    t: usize,
    status: SessionStatus,
    history: Vec<LossReport>,
    error: Option<String>,
}

struct Frames {
    source_normalized: SurfaceMesh,
    target_normalized: TargetShape,
    target_tf: NormalizationTransform,
}

fn frames(source: &SurfaceMesh, target: &TargetShape) -> Result<Frames> {
    let source_tf = NormalizationTransform::fit(source.vertices())?;
    let (target_normalized, target_tf) = target.normalized()?;
    Ok(Frames {
        source_normalized: source.transformed(|p| source_tf.apply(p)),
        target_normalized,
        target_tf,
    })
}

impl DrapeSession {
    /// Normalize both shapes, move `corr` (given in the target's frame) into
    /// the normalized frame and snap it onto the target, then compute the
    /// initial deformation and a zero-offset network.
    pub fn create(source: SurfaceMesh, target: TargetShape, corr: CorrespondenceSet, config: DrapeConfig) -> Result<Self> {
        config.validate()?;
        corr.validate(source.vertex_count())?;
        let f = frames(&source, &target)?;
        let corr = corr
            .map_targets(|p| f.target_tf.apply(p))
            .snapped(&f.target_normalized);
        let init = initial_deformation(&f.source_normalized, &corr, config.arap.iterations)?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        rng.set_stream(INIT_STREAM);
        let net = Mlp::new(config.encoder.width(), config.net.width, config.net.layers, 3, &mut rng);
        let adam = Adam::new(&net, config.optimizer);
        Ok(Self {
            objective: Objective::new(&f.source_normalized, config.loss.clone()),
            basis: config.encoder.basis(&init.positions),
            initial: init.positions,
            source,
            source_normalized: f.source_normalized,
            target,
            target_normalized: f.target_normalized,
            target_tf: f.target_tf,
            corr,
            net,
            adam,
            t: 0,
            status: SessionStatus::Idle,
            history: Vec::new(),
            error: None,
            config,
        })
    }

    pub fn config(&self) -> &DrapeConfig {
        &self.config
    }

    pub fn status(&self) -> SessionStatus {
        self.status
    }

    pub fn iteration(&self) -> usize {
        self.t
    }

    pub fn history(&self) -> &[LossReport] {
        &self.history
    }

    pub fn error(&self) -> Option<&str> {
        self.error.as_deref()
    }

    pub fn source(&self) -> &SurfaceMesh {
        &self.source
    }

    pub fn target(&self) -> &TargetShape {
        &self.target
    }

    pub fn target_transform(&self) -> &NormalizationTransform {
        &self.target_tf
    }

    /// Correspondences in the target's original frame, after snapping.
    pub fn correspondences(&self) -> CorrespondenceSet {
        self.corr.map_targets(|p| self.target_tf.invert(p))
    }

    /// Initial deformation in the target's original frame.
    pub fn initial_positions(&self) -> Vec<Vec3> {
        self.initial.iter().map(|p| self.target_tf.invert(p)).collect()
    }

    fn transition(&mut self, operation: &'static str, from: &[SessionStatus], to: SessionStatus) -> Result<()> {
        if from.contains(&self.status) {
            self.status = to;
            Ok(())
        } else {
            Err(PipelineError::InvalidState {
                operation,
                status: self.status,
            })
        }
    }

    pub fn start(&mut self) -> Result<()> {
        self.transition("start", &[SessionStatus::Idle], SessionStatus::Running)
    }

    pub fn pause(&mut self) -> Result<()> {
        self.transition("pause", &[SessionStatus::Running], SessionStatus::Paused)
    }

    pub fn resume(&mut self) -> Result<()> {
        self.transition("resume", &[SessionStatus::Paused], SessionStatus::Running)
    }

    /// Stop for good. The current mesh stays extractable as a partial result.
    pub fn cancel(&mut self) -> Result<()> {
        self.transition(
            "cancel",
            &[SessionStatus::Idle, SessionStatus::Running, SessionStatus::Paused],
            SessionStatus::Cancelled,
        )
    }

    /// Replace the correspondences of an idle session and recompute the
    /// initial deformation from them.
    pub fn reinitialize(&mut self, corr: CorrespondenceSet) -> Result<()> {
        if self.status != SessionStatus::Idle || self.t != 0 {
            return Err(PipelineError::InvalidState {
                operation: "reinitialize",
                status: self.status,
            });
        }
        corr.validate(self.source.vertex_count())?;
        let corr = corr
            .map_targets(|p| self.target_tf.apply(p))
            .snapped(&self.target_normalized);
        let init = initial_deformation(&self.source_normalized, &corr, self.config.arap.iterations)?;
        self.basis = self.config.encoder.basis(&init.positions);
        self.initial = init.positions;
        self.corr = corr;
        Ok(())
    }

    /// Replace the correspondence set (given in the target's frame) while
    /// paused. The network and optimizer state are kept.
    pub fn update_correspondences(&mut self, corr: CorrespondenceSet) -> Result<()> {
        if self.status != SessionStatus::Paused {
            return Err(PipelineError::InvalidState {
                operation: "edit correspondences of",
                status: self.status,
            });
        }
        corr.validate(self.source.vertex_count())?;
        self.corr = corr
            .map_targets(|p| self.target_tf.apply(p))
            .snapped(&self.target_normalized);
        Ok(())
    }

    fn features(&self, t: usize) -> Array2<f32> {
        self.basis.features(&self.config.encoder.masks(t))
    }

    fn offsets_to_positions(&self, offsets: &Array2<f32>) -> Vec<Vec3> {
        self.initial
            .iter()
            .zip(offsets.rows())
            .map(|(p, o)| p + Vec3::new(o[0] as f64, o[1] as f64, o[2] as f64))
            .collect()
    }

    /// Positions for the current parameters, in the normalized target frame.
    pub fn normalized_positions(&self) -> Result<Vec<Vec3>> {
        let offsets = self.net.forward(&self.features(self.t))?;
        Ok(self.offsets_to_positions(&offsets))
    }

    /// Positions for the current parameters, in the target's original frame.
    pub fn current_positions(&self) -> Result<Vec<Vec3>> {
        Ok(self
            .normalized_positions()?
            .iter()
            .map(|p| self.target_tf.invert(p))
            .collect())
    }

    pub fn snapshot(&self) -> Result<Snapshot> {
        Ok(Snapshot {
            iteration: self.t,
            positions: self.current_positions()?,
            loss: self.history.last().cloned(),
        })
    }

    /// One forward pass, loss, backward pass and optimizer update.
    pub fn step(&mut self) -> Result<StepOutcome> {
        if !matches!(self.status, SessionStatus::Idle | SessionStatus::Running | SessionStatus::Paused)
            || self.t >= self.config.iterations
        {
            return Err(PipelineError::InvalidState {
                operation: "step",
                status: self.status,
            });
        }
        let t = self.t;
        let (offsets, cache) = match self.net.forward_cached(&self.features(t)) {
            Ok(out) => out,
            Err(NeuralError::NonFiniteInput | NeuralError::NonFiniteParameters) => return Err(self.fail(t)),
            Err(e) => return Err(e.into()),
        };
        let positions = self.offsets_to_positions(&offsets);
        let mut rng = ChaCha8Rng::seed_from_u64(self.config.seed);
        rng.set_stream(t as u64);
        let eval = self
            .objective
            .step(t, &positions, &self.target_normalized, &self.corr, &mut rng)?;
        let finite = eval.report.total.is_finite() && eval.gradient.iter().all(|g| g.iter().all(|c| c.is_finite()));
        if !finite {
            return Err(self.fail(t));
        }
        let upstream = Array2::from_shape_fn((positions.len(), 3), |(i, c)| eval.gradient[i][c] as f32);
        let grads = self.net.backward(&cache, &upstream);
        if self.adam.step(&mut self.net, &grads).is_err() {
            return Err(self.fail(t));
        }
        self.t += 1;
        self.history.push(eval.report.clone());
        if self.t == self.config.iterations {
            self.status = SessionStatus::Done;
        }
        let snapshot = if self.t % self.config.snapshot.stride == 0 || self.status == SessionStatus::Done {
            Some(self.snapshot()?)
        } else {
            None
        };
        Ok(StepOutcome {
            report: eval.report,
            snapshot,
        })
    }

    fn fail(&mut self, iteration: usize) -> PipelineError {
        self.status = SessionStatus::Failed;
        let err = PipelineError::NonFinite { iteration };
        self.error = Some(err.to_string());
        err
    }

    /// Step until the iteration budget is spent.
    pub fn run_to_end(&mut self) -> Result<()> {
        while self.t < self.config.iterations {
            self.step()?;
        }
        Ok(())
    }

    /// Evaluate the objective at the current parameters with a fixed sample
    /// stream, so summaries of different sessions are comparable.
    pub fn loss_summary(&self) -> Result<LossSummary> {
        let positions = self.normalized_positions()?;
        let mut rng = ChaCha8Rng::seed_from_u64(self.config.seed);
        rng.set_stream(EVAL_STREAM);
        let distance = self
            .objective
            .distance(&positions, &self.target_normalized, &self.corr, &mut rng)?
            .report
            .total;
        let lambda = self.config.loss.lambda(self.t);
        let structural = self.objective.structural(&positions, lambda).report.total;
        let deformed = self.source_normalized.with_vertices(positions)?;
        Ok(LossSummary {
            distance,
            structural,
            lambda,
            total: distance + structural,
            angle: angle_term(&self.source_normalized, &deformed)?,
        })
    }

    /// The draped mesh in the target's original frame and its metrics.
    pub fn extract_result(&self) -> Result<DrapeResult> {
        let partial = match self.status {
            SessionStatus::Done => false,
            SessionStatus::Paused | SessionStatus::Cancelled => true,
            status => {
                return Err(PipelineError::InvalidState {
                    operation: "extract a result from",
                    status,
                })
            }
        };
        let normalized = self.normalized_positions()?;
        let result_n = self.source_normalized.with_vertices(normalized.clone())?;
        let report = evaluate_transfer(&self.source_normalized, &result_n, &self.target_normalized, &self.config.metrics)?;
        let mesh = self
            .source
            .with_vertices(normalized.iter().map(|p| self.target_tf.invert(p)).collect())?;
        Ok(DrapeResult {
            mesh,
            report,
            partial,
            iteration: self.t,
        })
    }

    pub fn checkpoint(&self) -> SessionCheckpoint {
        SessionCheckpoint {
            config: self.config.clone(),
            source: self.source.clone(),
            target: self.target.kind().clone(),
            correspondences: self.corr.clone(),
            initial: self.initial.clone(),
            network: self.net.clone(),
            optimizer: self.adam.clone(),
            iteration: self.t,
            status: self.status,
            history: self.history.clone(),
            error: self.error.clone(),
        }
    }

    /// Rebuild a session. A checkpoint taken while running comes back
    /// paused.
    pub fn restore(cp: SessionCheckpoint) -> Result<Self> {
        cp.config.validate()?;
        let target = TargetShape::from_kind(cp.target, cp.config.target.dense_samples)?;
        let f = frames(&cp.source, &target)?;
        let n = cp.source.vertex_count();
        if cp.initial.len() != n || cp.iteration > cp.config.iterations {
            return Err(PipelineError::Checkpoint("inconsistent checkpoint".into()));
        }
        cp.correspondences.validate(n)?;
        if cp.network.input_width() != cp.config.encoder.width() {
            return Err(PipelineError::Checkpoint("network does not match encoder width".into()));
        }
        let status = match cp.status {
            SessionStatus::Running => SessionStatus::Paused,
            s => s,
        };
        Ok(Self {
            objective: Objective::new(&f.source_normalized, cp.config.loss.clone()),
            basis: cp.config.encoder.basis(&cp.initial),
            initial: cp.initial,
            source: cp.source,
            source_normalized: f.source_normalized,
            target,
            target_normalized: f.target_normalized,
            target_tf: f.target_tf,
            corr: cp.correspondences,
            net: cp.network,
            adam: cp.optimizer,
            t: cp.iteration,
            status,
            history: cp.history,
            error: cp.error,
            config: cp.config,
        })
    }
}
