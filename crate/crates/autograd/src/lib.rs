//! Reverse-mode automatic differentiation over dense `[C, H, W]` tensors.
//!
//! The tape supports exactly the operator set needed by encoder/decoder
//! image generators and convolutional discriminators: strided convolutions,
//! transposed convolutions, reflection padding, instance normalization,
//! pointwise activations and the reductions used by L1 / least-squares
//! objectives. Everything runs single-threaded and in a fixed order, so a
//! given graph always produces bit-identical values and gradients.

mod conv;
mod error;
mod graph;
mod optim;
mod scalar;
mod tensor;

pub use conv::{col2im, conv_output_size, conv_transpose_output_size, im2col};
pub use error::{Result, TensorError};
pub use graph::{Gradients, Graph, Var};
pub use optim::{Adam, AdamConfig};
pub use scalar::{DType, Scalar};
pub use tensor::Tensor;
