use drape_core::geometry::Vec3;
use drape_core::metrics::TransferReport;
use drape_core::objective::LossReport;
use drape_core::pipeline::SessionStatus;
use serde::{Deserialize, Serialize};

/// Text frames of the snapshot stream. Every `Snapshot` is followed by one
/// binary frame holding its vertex buffer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum StreamMessage {
    Snapshot {
        iteration: usize,
        iterations: usize,
        status: SessionStatus,
        vertex_count: usize,
        loss: Option<LossReport>,
    },
    Done {
        iteration: usize,
        partial: bool,
        report: TransferReport,
    },
    Error {
        message: String,
    },
}

/// `[u32 count][count × (f32 x, f32 y, f32 z)]`, little-endian.
pub fn encode_vertices(positions: &[Vec3]) -> Vec<u8> {
    let mut out = Vec::with_capacity(4 + 12 * positions.len());
    out.extend_from_slice(&(positions.len() as u32).to_le_bytes());
    for p in positions {
        for c in p.iter() {
            out.extend_from_slice(&(*c as f32).to_le_bytes());
        }
    }
    out
}

/// Inverse of [`encode_vertices`]; `None` when the length does not match
/// the count prefix.
pub fn decode_vertices(bytes: &[u8]) -> Option<Vec<[f32; 3]>> {
    let count = u32::from_le_bytes(bytes.get(..4)?.try_into().ok()?) as usize;
    let body = &bytes[4..];
    if body.len() != count.checked_mul(12)? {
        return None;
    }
    Some(
        body.chunks_exact(12)
            .map(|c| {
                let f = |k: usize| f32::from_le_bytes(c[4 * k..4 * k + 4].try_into().unwrap());
                [f(0), f(1), f(2)]
            })
            .collect(),
    )
}
