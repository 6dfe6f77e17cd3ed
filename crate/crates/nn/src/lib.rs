//! Trainable building blocks with hand-written backward passes and the
//! two-stream spatio-temporal model built from them.
//!
//! Batches are stored column-wise: a layer maps `in × B` to `out × B`, and a
//! sequence is a slice of such matrices, one per step.

pub mod activation;
pub mod adam;
pub mod attention;
pub mod checkpoint;
pub mod dense;
pub mod error;
pub mod gradcheck;
pub mod loss;
pub mod lstm;
pub mod model;
pub mod norm;
pub mod param;

pub use activation::Activation;
pub use adam::Adam;
pub use attention::{Attention, AttentionMode};
pub use checkpoint::Checkpoint;
pub use dense::Dense;
pub use error::{Error, Result};
pub use loss::{LossKind, OutputActivation, OutputHead};
pub use lstm::Lstm;
pub use norm::{BatchNorm, Dropout};
pub use param::{clip_grad_norm, Module, Param};
