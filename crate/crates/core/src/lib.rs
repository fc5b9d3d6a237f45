//! Matched filtering and a minimal convolutional network built on it.
//!
//! The convolution, ReLU, global max pooling and argmax chain of a CNN is a
//! bank of matched filters followed by a best-match decision. This crate
//! implements both views from scratch:
//!
//! - [`tensor`]: dense row-major `f64` grids.
//! - [`filtering`]: cross-correlation, convolution, filter banks, detection
//!   and synthetic noisy scenes.
//! - [`nn`]: strided convolution layers, ReLU, global max pooling, a softmax
//!   training head, hand-written backpropagation and plain SGD.
//! - [`templates`]: class-mean and patch-mean kernel construction.
//! - [`data`]: MNIST IDX files and directories of colour images.
//! - [`experiments`]: configurable runs with confusion matrices, logs and
//!   kernel montages.

pub mod data;
pub mod error;
pub mod experiments;
pub mod filtering;
pub mod netpbm;
pub mod nn;
pub mod templates;
pub mod tensor;

pub use error::{Error, Result};
pub use filtering::{Detection, FilterBank};
pub use tensor::Tensor;
