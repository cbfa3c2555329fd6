//! Disentangled-context transformer for non-autoregressive sequence
//! transduction: the model, its training objectives, iterative parallel
//! decoders, synthetic tasks and evaluation tooling.

pub mod config;
pub mod context;
pub mod data;
pub mod diagnostics;
pub mod eval;
pub mod error;
pub mod inference;
pub mod model;
pub mod numerics;
pub mod pipeline;
pub mod train;

pub use error::{Error, Result};
