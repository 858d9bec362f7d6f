//! Draping sessions: normalization, initial deformation, the alternating
//! optimization loop with pause and correspondence edits, checkpoints, and
//! result extraction.

mod config;
mod session;

pub use config::{ArapConfig, DrapeConfig, NetConfig, SnapshotConfig, TargetConfig};
pub use session::{DrapeResult, DrapeSession, LossSummary, SessionCheckpoint, SessionStatus, Snapshot, StepOutcome};

use thiserror::Error;

use crate::deform::DeformError;
use crate::geometry::GeometryError;
use crate::metrics::MetricError;
use crate::neural::NeuralError;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Deform(#[from] DeformError),
    #[error(transparent)]
    Neural(#[from] NeuralError),
    #[error(transparent)]
    Metric(#[from] MetricError),
    #[error("cannot {operation} a session that is {status}")]
    InvalidState {
        operation: &'static str,
        status: SessionStatus,
    },
    #[error("non-finite loss or gradient at iteration {iteration}")]
    NonFinite { iteration: usize },
    #[error("checkpoint error: {0}")]
    Checkpoint(String),
}

pub type Result<T> = std::result::Result<T, PipelineError>;

/// Run a full transfer and return the result.
pub fn drape(
    source: crate::geometry::SurfaceMesh,
    target: crate::geometry::TargetShape,
    corr: crate::deform::CorrespondenceSet,
    config: DrapeConfig,
) -> Result<DrapeResult> {
    let mut session = DrapeSession::create(source, target, corr, config)?;
    session.start()?;
    session.run_to_end()?;
    session.extract_result()
}
