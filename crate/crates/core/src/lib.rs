//! Local-robustness verification for binarized neural networks.

// `!(x >= 0.0)` is used on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bench;
pub mod bnn;
pub mod cli;
pub mod falsifier;
pub mod onnx;
pub mod synth;
pub mod tensor;
pub mod verifier;
pub mod vnnlib;

pub use bnn::{Label, Layer, Network};
pub use tensor::Tensor;
