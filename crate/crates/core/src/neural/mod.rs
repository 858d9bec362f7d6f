//! Coordinate network: positional encoder, ReLU MLP with reverse-mode
//! gradients, and an Adam optimizer. Generic over `f32`/`f64`.

mod adam;
mod encoder;
mod mlp;

pub use adam::{Adam, AdamConfig};
pub use encoder::{EncodedBasis, Encoder, EncoderMode};
pub use mlp::{Dense, ForwardCache, Gradients, Mlp};

use ndarray::NdFloat;
use num_traits::FromPrimitive;
use serde::{de::DeserializeOwned, Serialize};
use thiserror::Error;

/// Scalar type usable by the network.
pub trait Float: NdFloat + FromPrimitive + Serialize + DeserializeOwned {}

impl<T: NdFloat + FromPrimitive + Serialize + DeserializeOwned> Float for T {}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum NeuralError {
    #[error("feature width {found} does not match network input width {expected}")]
    FeatureWidth { expected: usize, found: usize },
    #[error("network input contains a non-finite value")]
    NonFiniteInput,
    #[error("network parameters contain a non-finite value")]
    NonFiniteParameters,
    #[error("gradient contains a non-finite value")]
    NonFiniteGradient,
    #[error("gradient shapes do not match the network")]
    ShapeMismatch,
}
