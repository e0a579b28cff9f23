//! Desk-scale question-answering-driven information extraction.
//!
//! The crate is organized around four areas:
//!
//! - [`tensor`], [`graph`], [`optim`], [`gradcheck`], [`checkpoint`]: a dense
//!   f64 autodiff engine with AdaDelta and a binary checkpoint container.
//! - [`model`]: the QA network — char-CNN + word embeddings, highway layer,
//!   BiLSTM encoders, attention flow, self-matching, and a pointer-network
//!   sequence decoder with confidence scores.
//! - [`corpus`]: benchmark construction — clipping, span/sequence answer
//!   assignment, distillation, bucketing and splitting, plus a synthetic
//!   corpus generator with known ground truth.
//! - [`eval`]: EM/F1 metrics, neighboring-query expansion, and
//!   precision-recall threshold sweeps over confidence scores.

pub mod checkpoint;
pub mod config;
pub mod corpus;
pub mod eval;
pub mod gradcheck;
pub mod graph;
pub mod model;
pub mod optim;
pub mod tensor;
pub mod vocab;

pub use config::{ModelConfig, TrainConfig};
pub use graph::{Graph, NodeId};
pub use tensor::{Tensor, TensorError};
