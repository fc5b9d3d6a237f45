//! A minimal CNN: strided convolution, ReLU, global max pooling and a
//! one-hot decision, trained with hand-written gradients and plain SGD.
//!
//! Inference follows the matched-filter chain exactly: each output map is a
//! kernel's response, the pool keeps its best match and the prediction is
//! the class with the strongest best match. Training needs a differentiable
//! surrogate for the argmax, so the pooled scores feed a softmax
//! cross-entropy loss.

pub mod checkpoint;
mod layers;
mod network;
mod train;

pub use layers::{
    conv_backward, conv_forward, global_max_pool, global_max_pool_backward, predict_one_hot,
    relu_backward, relu_forward, softmax_cross_entropy, ConvGrad, ConvLayer,
};
pub use network::{backward, sgd_step, sgd_update, Gradients, Layer, Network, Trace};
pub use train::{evaluate, train, EpochRecord, Evaluation, TrainConfig, TrainLog};
