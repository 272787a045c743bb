//! Dense rank-4 tensor kernels and a minimal tape-based reverse-mode
//! differentiation engine.
//!
//! Everything upstream (attention blocks, the encoder-decoder network, the
//! training loop) is built exclusively from the operations in this crate.
//! Tensors use a fixed batch-channel-row-col layout, row-major. All kernels
//! are pure functions: identical inputs produce bit-identical outputs, and
//! internal parallelism only ever writes disjoint output regions so results
//! do not depend on thread scheduling.

mod error;
mod gradcheck;
mod params;
mod scalar;
mod tape;
mod tensor;

pub mod fft;
pub mod ops;

pub use error::TensorError;
pub use gradcheck::{gradcheck, gradcheck_strided, BuildFn};
pub use params::{Gradients, ParamStore, ParamTensor};
pub use scalar::Scalar;
pub use tape::{BackwardArgs, BackwardResult, GatherPlan, GradFn, Tape, Var};
pub use tensor::{ComplexTensor4, Dims4, Tensor4};

pub type Result<T> = std::result::Result<T, TensorError>;
