//! HTTP and WebSocket front end for draping sessions.
//!
//! | method | path | purpose |
//! |---|---|---|
//! | `GET` | `/healthz` | liveness |
//! | `POST` | `/sessions` | upload source and target, create an idle session |
//! | `GET` | `/sessions/{id}` | status |
//! | `PUT` | `/sessions/{id}/correspondences` | set pairs, get the deformation preview |
//! | `POST` | `/sessions/{id}/control` | `start`, `pause`, `resume`, `cancel` |
//! | `GET` | `/sessions/{id}/stream` | WebSocket snapshot stream |
//! | `GET` | `/sessions/{id}/result` | draped mesh and metric report |
//!
//! Each session runs its optimization on a dedicated thread. Control requests
//! take the session lock, so they land between two iterations.

mod api;
mod error;
mod frames;
mod registry;

use std::future::Future;
use std::path::PathBuf;
use std::sync::Arc;

use tokio::net::TcpListener;

pub use api::{
    ControlAction, ControlRequest, CorrespondenceResponse, CreateSessionRequest, ResultResponse, SessionView,
};
pub use error::{ApiError, ServiceError};
pub use frames::{decode_vertices, encode_vertices, StreamMessage};
pub use registry::Registry;

pub const DEFAULT_PORT: u16 = 8080;
pub const DEFAULT_MAX_UPLOAD_MB: usize = 64;

#[derive(Debug, Clone)]
pub struct ServiceConfig {
    pub max_upload_bytes: usize,
    /// Where session checkpoints are written on pause and shutdown. `None`
    /// disables persistence.
    pub checkpoint_dir: Option<PathBuf>,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        Self {
            max_upload_bytes: DEFAULT_MAX_UPLOAD_MB << 20,
            checkpoint_dir: None,
        }
    }
}

impl ServiceConfig {
    /// Read `DRAPE_MAX_UPLOAD_MB` and `DRAPE_CHECKPOINT_DIR`.
    pub fn from_env() -> Result<Self, ServiceError> {
        let mut cfg = Self::default();
        if let Ok(mb) = std::env::var("DRAPE_MAX_UPLOAD_MB") {
            let mb: usize = mb
                .trim()
                .parse()
                .map_err(|_| ServiceError::Env(format!("DRAPE_MAX_UPLOAD_MB={mb:?} is not a whole number")))?;
            cfg.max_upload_bytes = mb << 20;
        }
        if let Ok(dir) = std::env::var("DRAPE_CHECKPOINT_DIR") {
            cfg.checkpoint_dir = Some(dir.into());
        }
        Ok(cfg)
    }
}

/// `DRAPE_PORT` or the default port.
pub fn port_from_env() -> Result<u16, ServiceError> {
    match std::env::var("DRAPE_PORT") {
        Ok(p) => p
            .trim()
            .parse()
            .map_err(|_| ServiceError::Env(format!("DRAPE_PORT={p:?} is not a port number"))),
        Err(_) => Ok(DEFAULT_PORT),
    }
}

pub fn router(registry: Arc<Registry>) -> axum::Router {
    api::router(registry)
}

/// Serve until `shutdown` resolves, then checkpoint every session.
pub async fn serve(
    listener: TcpListener,
    config: ServiceConfig,
    shutdown: impl Future<Output = ()> + Send + 'static,
) -> Result<(), ServiceError> {
    let registry = Arc::new(Registry::open(config)?);
    let app = router(registry.clone());
    axum::serve(listener, app)
        .with_graceful_shutdown(shutdown)
        .await
        .map_err(ServiceError::Io)?;
    let reg = registry.clone();
    tokio::task::spawn_blocking(move || reg.shutdown())
        .await
        .map_err(|e| ServiceError::Io(std::io::Error::other(e)))?;
    Ok(())
}
