//! Dense tensors, reverse-mode differentiation and the Adam optimizer.

mod adam;
mod gradcheck;
mod graph;
pub mod io;
mod params;
mod tensor;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use gradcheck::{
    adaptive_finite_difference_gradient, finite_difference_gradient, max_relative_error, DEFAULT_FD_EPS,
};
pub use graph::{log_sigmoid, sigmoid, Gradients, Graph, NodeId, LEAKY_SLOPE};
pub use params::{ParamId, ParamStore};
pub use tensor::{gemm, Tensor};

#[derive(Debug, thiserror::Error)]
pub enum KernelError {
    #[error("{op}: incompatible shapes {left:?} and {right:?}")]
    ShapeMismatch {
        op: &'static str,
        left: Vec<usize>,
        right: Vec<usize>,
    },
    #[error("shape {shape:?} does not describe {len} values")]
    BadShape { shape: Vec<usize>, len: usize },
    #[error("{op}: axis {axis} invalid for shape {shape:?}")]
    BadAxis {
        op: &'static str,
        axis: usize,
        shape: Vec<usize>,
    },
    #[error("concat of zero tensors")]
    EmptyConcat,
    #[error("{op} produced a non-finite value")]
    NonFinite { op: &'static str },
    #[error("backward needs a scalar output, got shape {shape:?}")]
    NonScalarOutput { shape: Vec<usize> },
    #[error("node does not belong to this graph or has not been computed")]
    ForeignNode,
    #[error("non-finite gradient for parameter {param}")]
    NonFiniteGradient { param: String },
    #[error("{0}")]
    InvalidArgument(String),
}
