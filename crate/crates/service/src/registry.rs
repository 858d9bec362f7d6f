use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::time::{SystemTime, UNIX_EPOCH};

use drape_core::geometry::write_obj_string;
use drape_core::pipeline::{DrapeResult, DrapeSession, PipelineError, SessionCheckpoint, SessionStatus};
use parking_lot::{Condvar, Mutex, MutexGuard};
use serde::{Deserialize, Serialize};
use tokio::sync::broadcast;

use crate::frames::{encode_vertices, StreamMessage};
use crate::{ServiceConfig, ServiceError};

const STREAM_CAPACITY: usize = 4096;

/// One event on a session's stream. Snapshots carry their vertex frame.
#[derive(Debug, Clone)]
pub(crate) struct StreamEvent {
    pub message: StreamMessage,
    pub vertices: Option<Vec<u8>>,
}

impl StreamEvent {
    pub fn is_final(&self) -> bool {
        !matches!(self.message, StreamMessage::Snapshot { .. })
    }
}

/// Extracted result, cached per iteration.
#[derive(Debug)]
pub(crate) struct StoredResult {
    pub result: DrapeResult,
    pub obj: String,
}

pub(crate) struct SessionHandle {
    pub id: String,
    pub created: u64,
    pub session: Mutex<DrapeSession>,
    wake: Condvar,
    pub events: broadcast::Sender<Arc<StreamEvent>>,
    result: Mutex<Option<Arc<StoredResult>>>,
    stop: AtomicBool,
}

impl SessionHandle {
    fn new(id: String, created: u64, session: DrapeSession) -> Arc<Self> {
        let (events, _) = broadcast::channel(STREAM_CAPACITY);
        Arc::new(Self {
            id,
            created,
            session: Mutex::new(session),
            wake: Condvar::new(),
            events,
            result: Mutex::new(None),
            stop: AtomicBool::new(false),
        })
    }

    pub fn notify(&self) {
        self.wake.notify_all();
    }

    fn publish(&self, message: StreamMessage, vertices: Option<Vec<u8>>) {
        // no subscribers is fine
        let _ = self.events.send(Arc::new(StreamEvent { message, vertices }));
    }

    /// Result at the session's current iteration, computed at most once.
    pub fn result(&self, session: &DrapeSession) -> Result<Arc<StoredResult>, PipelineError> {
        let mut slot = self.result.lock();
        if let Some(r) = slot.as_ref() {
            if r.result.iteration == session.iteration() && r.result.partial == (session.status() != SessionStatus::Done) {
                return Ok(r.clone());
            }
        }
        let result = session.extract_result()?;
        let stored = Arc::new(StoredResult {
            obj: write_obj_string(&result.mesh),
            result,
        });
        *slot = Some(stored.clone());
        Ok(stored)
    }

    /// Publish the final stream message for a finished or cancelled session.
    pub fn publish_result(&self, session: &DrapeSession) {
        match self.result(session) {
            Ok(r) => self.publish(
                StreamMessage::Done {
                    iteration: r.result.iteration,
                    partial: r.result.partial,
                    report: r.result.report.clone(),
                },
                None,
            ),
            Err(e) => self.publish(StreamMessage::Error { message: e.to_string() }, None),
        }
    }

    /// The message a late subscriber gets for a session that already ended.
    pub fn terminal_message(&self, session: &DrapeSession) -> Option<StreamMessage> {
        match session.status() {
            SessionStatus::Done | SessionStatus::Cancelled => Some(match self.result(session) {
                Ok(r) => StreamMessage::Done {
                    iteration: r.result.iteration,
                    partial: r.result.partial,
                    report: r.result.report.clone(),
                },
                Err(e) => StreamMessage::Error { message: e.to_string() },
            }),
            SessionStatus::Failed => Some(StreamMessage::Error {
                message: session.error().unwrap_or("optimization failed").to_string(),
            }),
            _ => None,
        }
    }

    fn run(self: Arc<Self>) {
        loop {
            let mut s = self.session.lock();
            loop {
                if self.stop.load(Ordering::Acquire) {
                    return;
                }
                match s.status() {
                    SessionStatus::Running => break,
                    SessionStatus::Idle | SessionStatus::Paused => self.wake.wait(&mut s),
                    _ => return,
                }
            }
            match s.step() {
                Ok(outcome) => {
                    if let Some(snap) = outcome.snapshot {
                        self.publish(
                            StreamMessage::Snapshot {
                                iteration: snap.iteration,
                                iterations: s.config().iterations,
                                status: s.status(),
                                vertex_count: snap.positions.len(),
                                loss: snap.loss,
                            },
                            Some(encode_vertices(&snap.positions)),
                        );
                    }
                    if s.status() == SessionStatus::Done {
                        self.publish_result(&s);
                        return;
                    }
                }
                Err(e) => {
                    tracing::warn!(session = %self.id, error = %e, "optimization stopped");
                    self.publish(StreamMessage::Error { message: e.to_string() }, None);
                    return;
                }
            }
            // hand the lock to a waiting control request, if any
            MutexGuard::unlock_fair(s);
        }
    }
}

#[derive(Serialize, Deserialize)]
struct CheckpointFile {
    id: String,
    created: u64,
    session: SessionCheckpoint,
}

/// All live sessions, keyed by id.
pub struct Registry {
    config: ServiceConfig,
    sessions: Mutex<HashMap<String, Arc<SessionHandle>>>,
}

fn now() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0)
}

impl Registry {
    /// Create a registry and reload any checkpoints found in the configured
    /// directory.
    pub fn open(config: ServiceConfig) -> Result<Self, ServiceError> {
        let reg = Self {
            config,
            sessions: Mutex::new(HashMap::new()),
        };
        if let Some(dir) = reg.config.checkpoint_dir.clone() {
            std::fs::create_dir_all(&dir)?;
            let mut paths: Vec<PathBuf> = std::fs::read_dir(&dir)?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|p| p.extension().is_some_and(|x| x == "json"))
                .collect();
            paths.sort();
            for path in paths {
                let file = load_checkpoint(&path)?;
                let session = DrapeSession::restore(file.session).map_err(|e| ServiceError::Checkpoint {
                    path: path.display().to_string(),
                    message: e.to_string(),
                })?;
                tracing::info!(session = %file.id, "restored from checkpoint");
                reg.insert(SessionHandle::new(file.id, file.created, session));
            }
        }
        Ok(reg)
    }

    pub fn config(&self) -> &ServiceConfig {
        &self.config
    }

    fn insert(&self, handle: Arc<SessionHandle>) {
        let worker = handle.clone();
        std::thread::Builder::new()
            .name(format!("drape-{}", &handle.id[..8.min(handle.id.len())]))
            .spawn(move || worker.run())
            .expect("spawn session thread");
        self.sessions.lock().insert(handle.id.clone(), handle);
    }

    pub(crate) fn add(&self, session: DrapeSession) -> Arc<SessionHandle> {
        let handle = SessionHandle::new(uuid::Uuid::new_v4().simple().to_string(), now(), session);
        self.insert(handle.clone());
        handle
    }

    pub(crate) fn get(&self, id: &str) -> Option<Arc<SessionHandle>> {
        self.sessions.lock().get(id).cloned()
    }

    pub fn len(&self) -> usize {
        self.sessions.lock().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Write the session's checkpoint if persistence is enabled.
    pub(crate) fn persist(&self, handle: &SessionHandle, session: &DrapeSession) -> Result<(), ServiceError> {
        let Some(dir) = &self.config.checkpoint_dir else {
            return Ok(());
        };
        let file = CheckpointFile {
            id: handle.id.clone(),
            created: handle.created,
            session: session.checkpoint(),
        };
        let path = dir.join(format!("{}.json", handle.id));
        let tmp = dir.join(format!(".{}.tmp", handle.id));
        let json = serde_json::to_vec(&file).map_err(|e| ServiceError::Checkpoint {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        std::fs::write(&tmp, json)?;
        std::fs::rename(&tmp, &path)?;
        Ok(())
    }

    /// Stop every session loop at its next iteration boundary and write
    /// checkpoints.
    pub fn shutdown(&self) {
        let handles: Vec<Arc<SessionHandle>> = self.sessions.lock().values().cloned().collect();
        for h in handles {
            h.stop.store(true, Ordering::Release);
            h.notify();
            let s = h.session.lock();
            if let Err(e) = self.persist(&h, &s) {
                tracing::warn!(session = %h.id, error = %e, "checkpoint failed");
            }
        }
    }
}

fn load_checkpoint(path: &Path) -> Result<CheckpointFile, ServiceError> {
    let bytes = std::fs::read(path)?;
    serde_json::from_slice(&bytes).map_err(|e| ServiceError::Checkpoint {
        path: path.display().to_string(),
        message: e.to_string(),
    })
}
