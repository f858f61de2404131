//! Self-contained ONNX codec for the operator subset BNNs need.
//!
//! Supported operators (default domain, opset 13): `Conv`, `Sign`,
//! `MaxPool`, `BatchNormalization`, `Gemm`, `MatMul`, `Flatten`, `Reshape`.
//! Field numbers and layout conventions are listed in `docs/onnx-subset.md`.

mod model;
pub mod proto;
pub mod wire;

use thiserror::Error;

use crate::bnn::BnnError;

pub use model::{parse_model, serialize_model, OPSET_VERSION};
pub use wire::{decode_varint, encode_varint, WireField, WireType};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OnnxError {
    #[error("truncated {what} at byte offset {offset}")]
    Truncated { offset: usize, what: &'static str },
    #[error("malformed protobuf at byte offset {offset}: {reason}")]
    Malformed { offset: usize, reason: String },
    #[error("unsupported operator {0}")]
    UnsupportedOp(String),
    #[error("unsupported opset {found} (only opset {OPSET_VERSION} of the default domain is accepted)")]
    UnsupportedOpset { found: String },
    #[error("dangling reference to '{0}'")]
    Dangling(String),
    #[error("tensor '{tensor}' entry {index} is {value}, expected -1 or +1")]
    NonBinaryWeight {
        tensor: String,
        index: usize,
        value: f64,
    },
    #[error("unsupported graph structure: {0}")]
    Structure(String),
    #[error(transparent)]
    Model(#[from] BnnError),
}

impl OnnxError {
    /// Re-bases a slice-relative offset onto the enclosing buffer.
    pub(crate) fn shifted(self, base: usize) -> Self {
        match self {
            OnnxError::Truncated { offset, what } => OnnxError::Truncated {
                offset: offset + base,
                what,
            },
            OnnxError::Malformed { offset, reason } => OnnxError::Malformed {
                offset: offset + base,
                reason,
            },
            other => other,
        }
    }

    /// Byte offset for wire-level failures.
    pub fn offset(&self) -> Option<usize> {
        match self {
            OnnxError::Truncated { offset, .. } | OnnxError::Malformed { offset, .. } => {
                Some(*offset)
            }
            _ => None,
        }
    }
}
