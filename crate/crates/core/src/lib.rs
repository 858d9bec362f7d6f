//! Transfer the tessellation of a source mesh onto a target shape (mesh,
//! polygon soup or point cloud).
//!
//! The pipeline aligns the source to the target from a handful of
//! correspondence pairs, deforms it with biharmonic and as-rigid-as-possible
//! solves, then refines vertex positions with a small coordinate network fed
//! by a progressively revealed positional encoding. The [`metrics`] module
//! scores the result.

pub mod geometry;
pub mod metrics;
pub mod neural;
pub mod objective;
pub mod pipeline;
pub mod deform;
pub mod shapes;
