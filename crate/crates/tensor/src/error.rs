use thiserror::Error;

/// Errors raised by tensor constructors, kernels and the tape.
#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum TensorError {
    /// Operand shapes are inconsistent for the named operation.
    #[error("{op}: shape error: {detail}")]
    Shape { op: &'static str, detail: String },

    /// An argument is outside the operation's domain.
    #[error("{op}: invalid argument: {detail}")]
    InvalidArg { op: &'static str, detail: String },

    /// `backward` was requested from a node that is not a scalar.
    #[error("backward: loss must be a scalar, got {numel} elements")]
    NonScalarLoss { numel: usize },

    /// A computation produced NaN or infinity.
    #[error("{op}: non-finite value encountered")]
    NonFinite { op: &'static str },
}

impl TensorError {
    pub fn shape(op: &'static str, detail: impl Into<String>) -> Self {
        TensorError::Shape {
            op,
            detail: detail.into(),
        }
    }

    pub fn invalid(op: &'static str, detail: impl Into<String>) -> Self {
        TensorError::InvalidArg {
            op,
            detail: detail.into(),
        }
    }
}
