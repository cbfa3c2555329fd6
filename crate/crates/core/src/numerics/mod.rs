//! Dense matrix arithmetic with reverse-mode differentiation.

mod gradcheck;
mod graph;
pub(crate) mod kernels;
mod params;
mod real;
mod rng;
mod tensor;

pub use gradcheck::{grad_check, relative_error, GradCheckReport, REL_ERROR_FLOOR};
pub use graph::{AttnBlock, Graph, Var};
pub use params::{ParamId, ParamStore};
pub use real::{DType, Real};
pub use rng::RngStream;
pub use tensor::Tensor;
