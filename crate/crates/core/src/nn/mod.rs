//! Minimal differentiable-computation substrate: tensors, a reverse-mode tape
//! with the layers the models need, losses, optimizers, finite-difference
//! gradient checks and parameter files.

mod gradcheck;
mod graph;
pub mod layers;
mod loss;
mod optim;
mod scalar;
mod serialize;
mod tensor;

pub use gradcheck::{grad_check, GradCheckReport};
pub use graph::{Gradients, Graph, Var, LOG_CLAMP};
pub use loss::{convex_combination, loss_annr, loss_ce, loss_mse, shuffle_permutation};
pub use optim::{clip_grad_norm, Optimizer, OptimizerKind};
pub use scalar::{DType, Scalar};
pub use serialize::{load_params, read_params, save_params, write_params, MAGIC};
pub use tensor::{ParamStore, Parameter, Tensor};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum NnError {
    #[error("{op}: shape mismatch ({detail})")]
    Shape { op: &'static str, detail: String },
    #[error("duplicate parameter name {0:?}")]
    DuplicateParam(String),
    #[error("unknown parameter {0:?}")]
    UnknownParam(String),
    #[error("{0}: empty input")]
    Empty(&'static str),
    #[error("batch of {0} is too small, at least 2 items are needed")]
    BatchTooSmall(usize),
    #[error("parameter file: {0}")]
    Format(String),
    #[error("parameter {name:?} stored as {found:?}, expected {expected:?}")]
    DtypeMismatch {
        name: String,
        found: DType,
        expected: DType,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl NnError {
    pub fn shape(op: &'static str, detail: String) -> Self {
        NnError::Shape { op, detail }
    }
}
